"""mu_1^2(lambda) ... mu_m^2(lambda) as callable functions.

The polynomial system can have several real solutions at one lambda, so the
functions are branches of an algebraic curve.  A MuEvaluator enumerates all
real branches at each requested lambda (analytic backend for m <= 2, the MEP
route otherwise), caches them by exact lambda bits, and selects one branch
according to a policy.  Derivatives are second-order central differences with
the stencil locked to the center branch, since differentiating across a
branch switch is meaningless.

Tracking a branch along a lambda path does not require re-enumerating all
branches at every point: when a previous solution is available (continuity
policy, or the center of a derivative stencil), Newton refinement of that
solution at the new lambda lands on the continuation branch at a fraction of
the cost of the full enumeration, and the result is verified against the
residual of the true system.  Refinement that fails, or lands farther from
the tracking target than the jump tolerance, falls back to full enumeration
plus policy selection.

Branch labels across disconnected intervals are heuristic: existence and
uniqueness are only local, so a sweep through a singularity may permute
labels.  The continuity policy minimizes the jump in mu^2 step to step.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .coefficient_eval import GHCache, GHPair, cache_get_or_eval
from .errors import BranchJumpDetected, NoRealBranch
from .linalg import FactorizationCache, SolveCounter, lambda_key
from .mep_solver import build_mep, extract_mu, solve_mep
from .polysys import (
    MuSolution,
    PolySystem,
    default_retained,
    refine_candidate,
    solve_m1_direct,
    solve_m2_analytic,
)
from .problem_model import NEPvProblem


@dataclass(frozen=True)
class BranchPolicy:
    """Branch selection rule; exactly one mode is active.

    closest_to_target: minimizes || mu^2 - target ||, where the target is
    either an explicit mu^2 vector or the branch found at an anchor lambda.
    continuity: minimizes the distance to the previously selected branch.
    smallest_residual: picks the best-converged branch.
    """

    mode: str = "continuity"
    target_mu_sq: np.ndarray | None = None
    target_lambda: float | None = None
    previous: MuSolution | None = None

    def __post_init__(self):
        if self.mode not in ("closest_to_target", "continuity", "smallest_residual"):
            raise ValueError(f"unknown branch policy mode {self.mode!r}")
        if self.mode == "closest_to_target":
            if (self.target_mu_sq is None) == (self.target_lambda is None):
                raise ValueError("closest_to_target needs exactly one of "
                                 "target_mu_sq / target_lambda")

    @classmethod
    def closest_to(cls, target_mu_sq=None, target_lambda=None) -> "BranchPolicy":
        t = None if target_mu_sq is None else np.asarray(target_mu_sq, dtype=float)
        return cls(mode="closest_to_target", target_mu_sq=t, target_lambda=target_lambda)

    @classmethod
    def continuity(cls, previous: MuSolution | None = None) -> "BranchPolicy":
        return cls(mode="continuity", previous=previous)

    @classmethod
    def smallest_residual(cls) -> "BranchPolicy":
        return cls(mode="smallest_residual")


def _selection_key(sol: MuSolution, target: np.ndarray | None):
    """Deterministic ordering: distance to target, then residual, then mu."""
    dist = 0.0 if target is None else float(np.linalg.norm(sol.mu_sq - target))
    return (dist, sol.residual, tuple(sol.mu))


class MuEvaluator:
    """Branch-selected evaluation of mu^2(lambda) with caching and state.

    Holds mutable caches and the continuity state: single writer; concurrent
    readers should use independent instances (or clone()).
    """

    def __init__(self, problem: NEPvProblem, policy: BranchPolicy | None = None,
                 retained: tuple | None = None, backend: str | None = None,
                 fd_rel: float = 1e-6, jump_tol: float = 0.25,
                 accept_tol: float = 1e-10, imag_tol: float = 1e-8,
                 track_by_refinement: bool = True,
                 counter: SolveCounter | None = None,
                 gh_override=None):
        self.problem = problem
        self.policy = policy if policy is not None else BranchPolicy.continuity()
        self.retained = tuple(retained) if retained is not None \
            else default_retained(problem.m)
        if backend is None:
            backend = "analytic" if problem.m <= 2 else "mep"
        if backend == "analytic" and problem.m > 2:
            raise ValueError("analytic backend only covers m <= 2")
        self.backend = backend
        self.fd_rel = fd_rel
        self.jump_tol = jump_tol
        self.accept_tol = accept_tol
        self.imag_tol = imag_tol
        self.track_by_refinement = track_by_refinement
        self.counter = counter if counter is not None else SolveCounter()
        self.fact_cache = FactorizationCache(problem.A0, problem.E, self.counter)
        self.gh_cache = GHCache()
        self._mu_cache: dict[bytes, tuple] = {}
        self._gh_override = gh_override
        self._previous: MuSolution | None = self.policy.previous
        self._resolved_target: MuSolution | None = None
        self._speculative = False

    def clone(self) -> "MuEvaluator":
        """Independent evaluator sharing nothing mutable (fresh caches)."""
        return MuEvaluator(self.problem, policy=self.policy, retained=self.retained,
                           backend=self.backend, fd_rel=self.fd_rel,
                           jump_tol=self.jump_tol, accept_tol=self.accept_tol,
                           imag_tol=self.imag_tol,
                           track_by_refinement=self.track_by_refinement,
                           gh_override=self._gh_override)

    def reset_state(self, previous: MuSolution | None = None) -> None:
        self._previous = previous

    @contextmanager
    def speculative(self):
        """Within this context, selection at an uncached lambda with an
        expensive backend refuses to run the full enumeration: line-search
        trial points should not pay for (or cache) far-field MEP solves."""
        saved = self._speculative
        self._speculative = True
        try:
            yield
        finally:
            self._speculative = saved

    # -- branch enumeration ------------------------------------------------
    def gh(self, lam: float) -> GHPair:
        if self._gh_override is not None:
            return self._gh_override(lam)
        return cache_get_or_eval(self.gh_cache, self.problem, lam,
                                 fact_cache=self.fact_cache, counter=self.counter)

    def solutions(self, lam: float) -> tuple:
        """All real branches at lambda (cached; possibly empty)."""
        key = lambda_key(lam)
        if key in self._mu_cache:
            return self._mu_cache[key]
        gh = self.gh(lam)
        if self.problem.m == 1:
            sols = solve_m1_direct(gh, refine_tol=self.accept_tol)
        elif self.backend == "analytic":
            sols = solve_m2_analytic(gh, retained=self.retained,
                                     refine_tol=self.accept_tol)
        else:
            mep = build_mep(gh, retained=self.retained)
            wlist = solve_mep(mep, imag_tol=self.imag_tol)
            sols = extract_mu(wlist, gh, retained=self.retained,
                              accept_tol=self.accept_tol)
        sols = tuple(sols)
        self._mu_cache[key] = sols
        return sols

    # -- branch tracking fast path ------------------------------------------
    def _refine_from(self, lam: float, warm: MuSolution) -> MuSolution | None:
        """Continuation: refine a nearby solution at the new lambda, verified
        against the true residual and the jump tolerance."""
        gh = self.gh(lam)
        sys = PolySystem(gh=gh, retained=self.retained)
        sol = refine_candidate(sys, warm.mu, self.accept_tol)
        if sol is None or sol.residual > self.accept_tol:
            return None
        if np.linalg.norm(sol.mu_sq - warm.mu_sq) > \
                self.jump_tol * (1.0 + np.linalg.norm(warm.mu_sq)):
            return None
        return sol

    # -- policy selection --------------------------------------------------
    def _tracking_solution(self) -> MuSolution | None:
        """The solution the active policy tracks, if it has one."""
        mode = self.policy.mode
        if mode == "continuity":
            return self._previous
        if mode == "closest_to_target" and self.policy.target_lambda is not None:
            if self._resolved_target is None:
                anchor = self.policy.target_lambda
                sols = self.solutions(anchor)
                if not sols:
                    raise NoRealBranch(anchor)
                self._resolved_target = min(sols, key=lambda s: _selection_key(s, None))
            return self._resolved_target
        return None

    def _target_for_selection(self) -> np.ndarray | None:
        if self.policy.mode == "closest_to_target" and self.policy.target_mu_sq is not None:
            return self.policy.target_mu_sq
        tracked = self._tracking_solution()
        return None if tracked is None else tracked.mu_sq

    def select(self, lam: float, target: np.ndarray | None = None,
               update_state: bool = True, warm: MuSolution | None = None) -> MuSolution:
        """Policy-selected branch at lambda.

        target overrides the policy's own target (as a mu^2 vector); warm
        supplies a solution for the refinement fast path.
        """
        key = lambda_key(lam)
        enumerated = self._mu_cache.get(key)
        if enumerated is None and self.track_by_refinement:
            if warm is None and target is None:
                warm = self._tracking_solution()
            if warm is not None:
                sol = self._refine_from(lam, warm)
                if sol is not None:
                    if update_state:
                        self._previous = sol
                    return sol
        sols = enumerated if enumerated is not None else self.solutions(lam)
        if not sols:
            raise NoRealBranch(lam)
        if target is None:
            target = self._target_for_selection()
        best = min(sols, key=lambda s: _selection_key(s, target))
        if update_state:
            self._previous = best
        return best

    # -- public operations ---------------------------------------------------
    def mu_solution(self, lam: float) -> MuSolution:
        return self.select(lam)

    def mu_sq(self, lam: float) -> np.ndarray:
        """mu^2(lambda) of the policy-selected branch."""
        return self.select(lam).mu_sq

    def mu_sq_derivative(self, lam: float) -> np.ndarray:
        """Central difference with the stencil locked to the center branch."""
        center = self.select(lam)
        delta = self.fd_rel * (1.0 + abs(lam))
        plus = self.select(lam + delta, target=center.mu_sq, update_state=False,
                           warm=center)
        minus = self.select(lam - delta, target=center.mu_sq, update_state=False,
                            warm=center)
        gap = np.linalg.norm(plus.mu_sq - minus.mu_sq)
        if gap > self.jump_tol * (1.0 + np.linalg.norm(center.mu_sq)):
            raise BranchJumpDetected(lam, f"stencil gap {gap:.2e}")
        return (plus.mu_sq - minus.mu_sq) / (2.0 * delta)


@dataclass(frozen=True)
class CurveSample:
    lam: float
    mu_sq: np.ndarray
    branch_count: int
    residual: float


@dataclass
class CurveTable:
    """All real branches per sampled lambda, plus per-point errors."""

    m: int
    rows: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            head = ",".join(["lambda"] + [f"mu2_{i + 1}" for i in range(self.m)]
                            + ["branches", "residual"])
            fh.write(head + "\n")
            for row in self.rows:
                mu2 = ",".join("%.17g" % x for x in row.mu_sq) if row.branch_count \
                    else ",".join(["nan"] * self.m)
                fh.write("%.17g,%s,%d,%s\n"
                         % (row.lam, mu2, row.branch_count,
                            "%.17g" % row.residual if row.branch_count else "nan"))


def sample_curves(ev: MuEvaluator, lambda_grid) -> CurveTable:
    """Record every real branch at each grid point; errors are recorded, not thrown."""
    table = CurveTable(m=ev.problem.m)
    for lam in np.asarray(lambda_grid, dtype=float):
        try:
            sols = ev.solutions(lam)
        except Exception as exc:  # per-point record, keep sweeping
            table.errors.append((float(lam), repr(exc)))
            continue
        if not sols:
            table.rows.append(CurveSample(float(lam), np.full(ev.problem.m, np.nan),
                                          0, np.nan))
            continue
        for s in sols:
            table.rows.append(CurveSample(float(lam), s.mu_sq, len(sols), s.residual))
    return table


def recover_eigenvector(p: NEPvProblem, lam: float, mu: MuSolution,
                        fact_cache: FactorizationCache | None = None,
                        counter: SolveCounter | None = None) -> np.ndarray:
    """v = sum_i mu_i^3 (lambda*E - A0)^{-1} a_i, via the cached factorization.

    B-normalized up to the polynomial-system residual of mu.
    """
    if fact_cache is not None:
        fact = fact_cache.get(lam)
        counter = fact_cache.counter
    else:
        from .linalg import PencilFactorization

        fact = PencilFactorization(p.A0, p.E, lam, counter)
    Y = fact.solve(np.asarray(p.Am))
    if Y.ndim == 1:
        Y = Y[:, None]
    if counter is not None:
        counter.eigvec_recoveries += 1
    return Y @ mu.w
