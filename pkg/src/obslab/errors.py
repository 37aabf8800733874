class NumericalGuardError(RuntimeError):
    """A discretization guard refused to produce an untrustworthy number."""


class InfeasibleError(RuntimeError):
    """A linear program has no feasible point."""


class UnboundedError(RuntimeError):
    """A linear program is unbounded below."""
