"""Finite-dimensional null-controllability / observability duality.

System: x' = -A x + B u on [0, T], states measured in the max-norm, controls
in the sup-over-time-and-coordinates norm.  Controls are piecewise constant
on the uniform grid t_i = i dt, i = 0 .. N-1, so the final state is

    x(T) = S_T x0 + G u,   G u = dt * sum_i S_{T - t_i} B u_i.

The observability side uses the exact adjoint of that discrete input map:
the density t_i -> B^T S_{T - t_i}^T y, whose semivariation (the dt-weighted
sum of l1 norms) is the dual norm of G^T y.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InfeasibleError
from .parallel import parallel_map
from .simplex import linprog

# Pade(13) coefficients and scaling threshold (Higham 2005)
_PADE13 = (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
           1187353796428800.0, 129060195264000.0, 10559470521600.0,
           670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
           960960.0, 16380.0, 182.0, 1.0)
_THETA13 = 5.371920351148152


def expm(X: np.ndarray) -> np.ndarray:
    """exp(X) by scaling and squaring with the [13/13] Pade approximant."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    norm = np.linalg.norm(X, 1)
    if norm == 0:
        return np.eye(n)
    s = max(0, int(math.ceil(math.log2(norm / _THETA13))))
    X = X / 2.0 ** s
    b = _PADE13
    I = np.eye(n)
    X2 = X @ X
    X4 = X2 @ X2
    X6 = X4 @ X2
    U = X @ (X6 @ (b[13] * X6 + b[11] * X4 + b[9] * X2)
             + b[7] * X6 + b[5] * X4 + b[3] * X2 + b[1] * I)
    V = X6 @ (b[12] * X6 + b[10] * X4 + b[8] * X2) + b[6] * X6 + b[4] * X4 + b[2] * X2 + b[0] * I
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    return R


def matrix_exponential(A: np.ndarray, t: float) -> np.ndarray:
    """The propagator S_t = exp(-t A)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    return expm(-t * A)


@dataclass(frozen=True, eq=False)
class ControlSystem:
    A: np.ndarray
    B: np.ndarray
    T: float
    n_steps: int = 64
    propagators: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise ValueError("A must be n x n and B must be n x m")
        if self.T <= 0 or self.n_steps < 1:
            raise ValueError("need T > 0 and at least one time step")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        dt = self.T / self.n_steps
        props = np.stack([matrix_exponential(A, k * dt) for k in range(self.n_steps + 1)])
        object.__setattr__(self, "propagators", props)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def final_propagator(self) -> np.ndarray:
        return self.propagators[-1]

    def input_map(self) -> np.ndarray:
        """G with x(T) = S_T x0 + G @ u.ravel(), u of shape (N, m) row-major."""
        N = self.n_steps
        blocks = [self.dt * self.propagators[N - i] @ self.B for i in range(N)]
        return np.hstack(blocks)

    def dual_density(self, y: np.ndarray) -> np.ndarray:
        """Rows g_i = B^T S_{T - t_i}^T y, i = 0 .. N-1."""
        N = self.n_steps
        S = self.propagators[N - np.arange(N)]            # (N, n, n)
        return np.einsum("kj,ij->ik", self.B.T, np.einsum("iab,a->ib", S, y))

    def to_json(self) -> str:
        return json.dumps({"A": self.A.tolist(), "B": self.B.tolist(),
                           "T": self.T, "N_t": self.n_steps}, sort_keys=True)

    @classmethod
    def from_dict(cls, spec: dict) -> "ControlSystem":
        return cls(np.array(spec["A"], dtype=float), np.array(spec["B"], dtype=float),
                   float(spec["T"]), int(spec.get("N_t", 64)))

    @classmethod
    def from_json(cls, text: str) -> "ControlSystem":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class ControlSignal:
    values: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if not np.all(np.isfinite(v)):
            raise ValueError("control values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.values), initial=0.0))


def duhamel(sys: ControlSystem, x0, u: ControlSignal) -> np.ndarray:
    """Left-endpoint Duhamel sum for x(T)."""
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != sys.n:
        raise ValueError(f"initial state must have {sys.n} entries")
    if u.values.shape != (sys.n_steps, sys.m):
        raise ValueError(f"control must have shape {(sys.n_steps, sys.m)}")
    return sys.final_propagator @ x0 + sys.input_map() @ u.values.ravel()


@dataclass
class ControlSolution:
    signal: ControlSignal
    cost: float
    final_state: np.ndarray
    lp: object = None


def min_norm_control(sys: ControlSystem, x0, eps: float) -> ControlSolution:
    """Smallest sup-norm control steering x0 into the max-norm eps-ball around 0.

    LP in (w, c) >= 0 with u = w - c:  w - 2c <= 0 and |S_T x0 + G u| <= eps.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != sys.n:
        raise ValueError(f"initial state must have {sys.n} entries")
    G = sys.input_map()
    z = sys.final_propagator @ x0
    k = G.shape[1]
    g1 = G.sum(axis=1)
    A_ub = np.zeros((k + 2 * sys.n, k + 1))
    A_ub[:k, :k] = np.eye(k)
    A_ub[:k, k] = -2.0
    A_ub[k:k + sys.n, :k] = G
    A_ub[k:k + sys.n, k] = -g1
    A_ub[k + sys.n:, :k] = -G
    A_ub[k + sys.n:, k] = g1
    b_ub = np.concatenate([np.zeros(k), eps - z, eps + z])
    cost = np.zeros(k + 1)
    cost[k] = 1.0
    try:
        res = linprog(cost, A_ub, b_ub)
    except InfeasibleError:
        raise InfeasibleError("target ball unreachable with this discretization") from None
    c = res.x[k]
    u = ControlSignal((res.x[:k] - c).reshape(sys.n_steps, sys.m))
    return ControlSolution(u, float(c), z + G @ u.values.ravel(), res)


def sign_vertices(n: int) -> list:
    """All points of {-1, 1}^n with first coordinate +1 (the rest follow by symmetry)."""
    if n > 10:
        raise ValueError("vertex enumeration is limited to n <= 10")
    return [np.array((1.0,) + v) for v in itertools.product((1.0, -1.0), repeat=n - 1)]


def initial_state_samples(n: int, sample_count: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    extra = rng.uniform(-1.0, 1.0, size=(sample_count, n))
    extra /= np.max(np.abs(extra), axis=1, keepdims=True)
    return sign_vertices(n) + list(extra)


def control_costs(sys: ControlSystem, eps: float, sample_count: int = 0, seed: int = 0) -> list:
    """(x0, cost) for every sampled unit-max-norm initial state."""
    xs = initial_state_samples(sys.n, sample_count, seed)
    costs = parallel_map(lambda x: min_norm_control(sys, x, eps).cost, xs)
    return list(zip(xs, costs))


def control_cost_constant(sys: ControlSystem, eps: float, sample_count: int = 0, seed: int = 0) -> float:
    """Largest minimal control cost over sampled unit initial states (a lower bound)."""
    return max(c for _, c in control_costs(sys, eps, sample_count, seed))


def semivariation_norm(density, dt: float) -> float:
    """dt * sum_i ||g(t_i)||_1 for a density sampled on the control grid."""
    g = np.atleast_2d(np.asarray(density, dtype=float))
    return float(dt * np.sum(np.abs(g)))


def observability_ratio(sys: ControlSystem, y) -> float:
    """||S_T^T y||_1 / semivariation of t -> B^T S_{T-t}^T y; inf when unobserved."""
    y = np.asarray(y, dtype=float)
    num = float(np.sum(np.abs(sys.final_propagator.T @ y)))
    den = semivariation_norm(sys.dual_density(y), sys.dt)
    if den <= 1e-14 * max(1.0, float(np.sum(np.abs(y)))):
        return math.inf if num > 0 else 0.0
    return num / den


def _refine(sys, y, ratio, step=0.25, min_step=1e-7, rng=None):
    """Pattern search on the l1 sphere: coordinate moves plus random directions."""
    n = y.size
    best_y, best = y / np.sum(np.abs(y)), ratio
    while step > min_step:
        improved = False
        dirs = list(np.eye(n)) + list(-np.eye(n))
        if rng is not None:
            dirs += list(rng.standard_normal((2 * n, n)))
        for d in dirs:
            cand = best_y + step * d / np.sum(np.abs(d))
            if not np.any(cand):
                continue
            cand /= np.sum(np.abs(cand))
            r = observability_ratio(sys, cand)
            if r > best:
                best_y, best, improved = cand, r, True
        if not improved:
            step /= 2
    return best_y, best


# cap on the number of (n-1)-subsets of hyperplanes enumerated exactly
ARRANGEMENT_LIMIT = 200_000


def arrangement_rays(sys: ControlSystem) -> np.ndarray:
    """Extreme rays of the cones on which both norms in the ratio are linear.

    ``||S_T^T y||_1`` and ``||G^T y||_1`` are linear on every cell of the
    hyperplane arrangement with normals the columns of S_T and G, so their
    ratio peaks on a ray where n-1 of those hyperplanes meet.  Returns the
    rays as rows (empty when there are more than ARRANGEMENT_LIMIT subsets).
    """
    n = sys.n
    if n == 1:
        return np.ones((1, 1))
    normals = np.vstack([sys.final_propagator.T, sys.input_map().T])
    normals = normals[np.linalg.norm(normals, axis=1) > 0]
    K = normals.shape[0]
    if math.comb(K, n - 1) > ARRANGEMENT_LIMIT:
        return np.zeros((0, n))
    if n == 2:
        rays = np.column_stack([-normals[:, 1], normals[:, 0]])
    elif n == 3:
        i, j = np.triu_indices(K, k=1)
        rays = np.cross(normals[i], normals[j])
    else:
        rays = []
        for idx in itertools.combinations(range(K), n - 1):
            _, sv, vt = np.linalg.svd(normals[list(idx)])
            if sv[-1] > 1e-12 * sv[0]:
                rays.append(vt[-1])
        rays = np.array(rays).reshape(-1, n)
    size = np.sum(np.abs(rays), axis=1)
    rays = rays[size > 1e-12 * np.max(size, initial=0.0)]
    return rays / np.sum(np.abs(rays), axis=1, keepdims=True)


def _ratios(sys: ControlSystem, Y: np.ndarray) -> np.ndarray:
    num = np.sum(np.abs(Y @ sys.final_propagator), axis=1)
    den = np.sum(np.abs(Y @ sys.input_map()), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)


def observability_search(sys: ControlSystem, sample_count: int = 200, seed: int = 0,
                         refine_top: int = 5) -> tuple:
    """Brute-force lower bound for the observability constant.

    Candidates are the l1-sphere vertices, seeded random directions and, for
    small n, every extreme ray of the arrangement (which makes the maximum
    exact); the best few are then refined by pattern search.  Returns
    ``(value, witness)``; value is inf when some direction is invisible to
    the observation.
    """
    G = sys.input_map()
    if np.linalg.matrix_rank(G) < sys.n:
        u, _, _ = np.linalg.svd(G)
        y = u[:, -1] / np.sum(np.abs(u[:, -1]))
        return math.inf, y
    rng = np.random.default_rng(seed)
    rand = rng.standard_normal((sample_count, sys.n))
    Y = np.vstack([np.eye(sys.n), -np.eye(sys.n),
                   rand / np.sum(np.abs(rand), axis=1, keepdims=True),
                   arrangement_rays(sys)])
    ratios = _ratios(sys, Y)
    order = np.argsort(ratios, kind="stable")[::-1][:refine_top]
    best_y, best = Y[order[0]], float(ratios[order[0]])
    for idx in order:
        y, r = _refine(sys, Y[idx], float(ratios[idx]), rng=rng)
        if r > best:
            best_y, best = y, r
    return best, best_y


def observability_constant(sys: ControlSystem, sample_count: int = 200, seed: int = 0) -> float:
    return observability_search(sys, sample_count, seed)[0]


def extrapolate_to_zero(eps: Sequence[float], values: Sequence[float]) -> float:
    """Linear (Richardson) extrapolation through the two smallest eps."""
    pairs = sorted(zip(eps, values))
    if len(pairs) == 1:
        return float(pairs[0][1])
    (e1, v1), (e2, v2) = pairs[0], pairs[1]
    return float(v1 + (v1 - v2) * e1 / (e2 - e1))


@dataclass
class DualityReport:
    c_control: float
    c_obs: float
    gap: float
    passed: bool
    tol: float
    eps: list
    c_control_by_eps: list
    per_x0_costs: list
    witness: list
    observable: bool = True

    def to_dict(self) -> dict:
        def num(v):
            return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")
        return {
            "c_control": num(self.c_control),
            "c_obs": num(self.c_obs),
            "gap": num(self.gap),
            "passed": self.passed,
            "tol": self.tol,
            "eps": self.eps,
            "c_control_by_eps": self.c_control_by_eps,
            "per_x0_costs": self.per_x0_costs,
            "witness": self.witness,
            "observable": self.observable,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def check_duality(sys: ControlSystem, eps_sequence: Sequence[float], tol: float,
                  sample_count: int = 0, obs_samples: int = 200, seed: int = 0) -> DualityReport:
    """Compare the extrapolated control-cost constant with the observability constant."""
    if sys.n > 5 or sys.m > 3 or sys.n_steps > 64:
        raise ValueError("check_duality is sized for n <= 5, m <= 3, N_t <= 64")
    eps_sequence = sorted(float(e) for e in eps_sequence)
    c_obs, witness = observability_search(sys, obs_samples, seed)
    if math.isinf(c_obs):
        return DualityReport(math.inf, math.inf, math.inf, False, tol, eps_sequence, [], [],
                             [float(v) for v in witness], observable=False)
    by_eps, per_x0 = [], []
    for eps in eps_sequence:
        costs = control_costs(sys, eps, sample_count, seed)
        by_eps.append(max(c for _, c in costs))
        per_x0.append([{"x0": [float(v) for v in x], "cost": c} for x, c in costs])
    c_control = extrapolate_to_zero(eps_sequence, by_eps)
    gap = abs(c_control - c_obs) / max(abs(c_control), abs(c_obs), 1e-300)
    return DualityReport(c_control, c_obs, gap, gap <= tol, tol, eps_sequence, by_eps,
                         per_x0[0], [float(v) for v in witness])


def random_system(rng: np.random.Generator, max_n: int = 3, max_m: int = 2, T: float = 1.0,
                  n_steps: int = 64, eig_range=(0.2, 2.0)) -> ControlSystem:
    """Diagonalizable A = Q diag(ev) Q^{-1} with a well-conditioned Q and Gaussian B."""
    n = int(rng.integers(1, max_n + 1))
    m = int(rng.integers(1, max_m + 1))
    Q = rng.standard_normal((n, n)) + 3.0 * np.eye(n)
    ev = rng.uniform(eig_range[0], eig_range[1], n)
    A = Q @ np.diag(ev) @ np.linalg.inv(Q)
    B = rng.standard_normal((n, m))
    return ControlSystem(A, B, T, n_steps)


def scalar_benchmark_value(a: float = 1.0, T: float = 1.0) -> float:
    """Both optimal constants for x' = -a x + u in closed form."""
    return math.exp(-a * T) / ((1.0 - math.exp(-a * T)) / a)
