"""Exception types raised across the solver stack."""


class NEPvError(Exception):
    """Base class for all solver errors."""


class InvalidProblem(NEPvError, ValueError):
    """Problem data violates a structural invariant (named in the message)."""


class PencilSingular(NEPvError):
    """The shifted matrix lambda*E - A0 is singular or nearly singular."""

    def __init__(self, lam, detail=""):
        self.lam = lam
        msg = f"pencil lambda*E - A0 singular at lambda={lam!r}"
        super().__init__(msg + (f": {detail}" if detail else ""))


class ProblemTooLarge(NEPvError):
    """Refused because the operator-determinant dimension would be excessive."""


class Mu2RecoveryUndefined(NEPvError):
    """Off-diagonal H entry vanishes; the companion variable cannot be recovered."""


class SingularJacobian(NEPvError):
    """Jacobian of the polynomial system is numerically singular at an iterate."""


class NoConvergence(NEPvError):
    """Iteration exhausted its budget without meeting the tolerance."""

    def __init__(self, msg, last_lambda=None, last_relres=None):
        super().__init__(msg)
        self.last_lambda = last_lambda
        self.last_relres = last_relres


class SpuriousRootRejected(NoConvergence):
    """Converged to an eigenvalue of the transformed problem that fails the
    eigenvector-nonlinear certificate (the dropped consistency row does not
    hold there).  Carries the rejected pair so callers can deflate it."""

    def __init__(self, msg, pair=None, last_lambda=None, last_relres=None):
        super().__init__(msg, last_lambda=last_lambda, last_relres=last_relres)
        self.pair = pair


class NoRealBranch(NEPvError):
    """No real solution of the polynomial system passed the filters at this lambda."""

    def __init__(self, lam):
        self.lam = lam
        super().__init__(f"no real mu-branch at lambda={lam!r}")


class BranchJumpDetected(NEPvError):
    """Finite-difference stencil points landed on different mu-branches."""

    def __init__(self, lam, detail=""):
        self.lam = lam
        super().__init__(f"branch jump in derivative stencil at lambda={lam!r} {detail}".rstrip())


class CapacitanceSingular(NEPvError):
    """The m x m capacitance matrix of the low-rank update solve is singular."""


class LinearSolveFailed(NEPvError):
    """An inner linear solve failed irrecoverably."""


class AllDeltasIllConditioned(NEPvError):
    """Every Delta-matrix condition estimate exceeded the usable threshold."""


class LambdaHitsDeflated(NEPvError):
    """Evaluation point coincides with an already deflated eigenvalue."""

    def __init__(self, lam, hit):
        self.lam = lam
        self.hit = hit
        super().__init__(f"lambda={lam!r} within guard distance of deflated eigenvalue {hit!r}")


class SchurComplementSingular(NEPvError):
    """The p x p Schur complement of the bordered deflated solve is singular."""


class MinimalityLost(NEPvError):
    """Expanding the invariant pair would destroy minimality (rank deficiency)."""


class WindowContainsBranchJump(NEPvError):
    """Singularity-exponent fit window is contaminated by a branch switch."""
