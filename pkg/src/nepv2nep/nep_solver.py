"""The transformed eigenvalue-nonlinear problem and its Newton solver.

The operator is

    M(lambda) = A0 - lambda*E + mu_1^2(lambda) a_1 a_1^T + ... ,

applied matrix-free, with solves through the low-rank update identity

    (K + U U^T)^{-1} = K^{-1} - K^{-1} U (I + U^T K^{-1} U)^{-1} U^T K^{-1},

K = A0 - lambda*E, U = [mu_1 a_1, ..., mu_m a_m]: one factorization per
lambda and m+1 triangular-solve applications per right-hand side.  The
factorization of (lambda*E - A0) is shared with the coefficient evaluation
at the same lambda through the evaluator's factorization cache.

The eigenvalue iteration is an augmented Newton method on the extended
system [M(lambda) v; c^H v - 1] = 0, reorganized to operate on length-n
vectors:

    M(lambda_k) u = M'(lambda_k) v_k,
    lambda_{k+1} = lambda_k - 1/(c^H u),
    v_{k+1} = u / (c^H u),

with M'(lambda) = -E + sum_i (mu_i^2)'(lambda) a_i a_i^T using the branch-
locked finite-difference derivatives.  A backtracking (Armijo) step on the
relative residual ||M(lambda)v|| / ||v|| guards steps that leave the local
convergence basin.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BranchJumpDetected,
    CapacitanceSingular,
    LambdaHitsDeflated,
    LinearSolveFailed,
    NoConvergence,
    NoRealBranch,
    PencilSingular,
)
from .linalg import matvec, to_dense
from .mu_functions import MuEvaluator
from .problem_model import Eigenpair, NEPvProblem, nepv_relative_residual


@dataclass(frozen=True)
class ArmijoSettings:
    beta: float = 0.5
    c_dec: float = 1e-4
    max_backtracks: int = 30


@dataclass(frozen=True)
class NewtonSettings:
    """Stopping, steplength, and normalization-vector policy.

    c_vector "current_iterate" re-centers c on v_k each step (parameter-free
    and deterministic); "fixed_random_seeded" draws one unit vector from the
    seed and keeps it for the whole solve.
    """

    tol_relres: float = 5e-12
    maxit: int = 100
    armijo: ArmijoSettings = ArmijoSettings()
    c_vector: str = "current_iterate"
    seed: int = 0
    # give up early when the residual has not dropped below 0.8x its best
    # for this many consecutive iterations (0 disables the guard)
    stall_window: int = 15
    # equivalence certificate: a converged pair whose eigenvector-nonlinear
    # residual exceeds this multiple of tol_relres is spurious (the reduced
    # system's dropped row does not hold there) and is rejected
    certificate_factor: float = 10.0

    def __post_init__(self):
        if not (0.0 < self.armijo.beta < 1.0):
            raise ValueError("armijo beta must be in (0, 1)")
        if self.tol_relres <= 0:
            raise ValueError("tolerance must be positive")
        if self.c_vector not in ("current_iterate", "fixed_random_seeded"):
            raise ValueError(f"unknown c_vector policy {self.c_vector!r}")


@dataclass
class SolveReport:
    """Per-eigenvalue work metrics (one row of the performance table)."""

    lam: float = np.nan
    converged: bool = False
    iterations: int = 0
    armijo_backtracks: int = 0
    smw_solves: int = 0
    gh_evaluations: int = 0
    eigvec_recoveries: int = 0
    total_linear_solves: int = 0
    relres_nep_history: list = field(default_factory=list)
    relres_nepv_final: float = np.nan
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["relres_nep_history"] = [float(x) for x in self.relres_nep_history]
        for k in ("lam", "relres_nepv_final", "wall_time"):
            d[k] = float(d[k])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def format_report_table(reports) -> str:
    """Aligned text table: one column per eigenvalue, metric rows."""
    cols = [f"lam_{i + 1}" for i in range(len(reports))]
    rows = [
        ("eigenvalue", ["%.6g" % r.lam for r in reports]),
        ("iterations", [str(r.iterations) for r in reports]),
        ("CPU time [s]", ["%.2f" % r.wall_time for r in reports]),
        ("SMW solves", [str(r.smw_solves) for r in reports]),
        ("G/H evals", [str(r.gh_evaluations) for r in reports]),
        ("total solves", [str(r.total_linear_solves) for r in reports]),
    ]
    width = max([12] + [len(c) for c in cols]
                + [len(x) for _, xs in rows for x in xs])
    head = "metric".ljust(16) + "".join(c.rjust(width + 2) for c in cols)
    lines = [head, "-" * len(head)]
    for name, xs in rows:
        lines.append(name.ljust(16) + "".join(x.rjust(width + 2) for x in xs))
    return "\n".join(lines)


class NEPOperator:
    """M(lambda) with matrix-free apply and low-rank-update solve."""

    def __init__(self, problem: NEPvProblem, evaluator: MuEvaluator):
        self.problem = problem
        self.ev = evaluator

    @property
    def dim(self) -> int:
        return self.problem.n

    def guard(self, lam: float) -> None:
        """Base operator admits any lambda (the pencil itself may object)."""

    def anchor(self, lam: float) -> None:
        """Update the evaluator's continuity state at an accepted iterate."""
        self.ev.select(lam, update_state=True)

    def mu_at(self, lam: float):
        return self.ev.select(lam, update_state=False)

    def apply(self, lam: float, x: np.ndarray) -> np.ndarray:
        """(A0 - lambda E) x + sum_i mu_i^2 (a_i^T x) a_i, no rank-one matrices."""
        p = self.problem
        musq = self.mu_at(lam).mu_sq
        return matvec(p.A0, x) - lam * matvec(p.E, x) + p.Am @ (musq * (p.Am.T @ x))

    def apply_derivative(self, lam: float, x: np.ndarray) -> np.ndarray:
        """M'(lambda) x = -E x + sum_i (mu_i^2)'(lambda) (a_i^T x) a_i."""
        p = self.problem
        musq_d = self.ev.mu_sq_derivative(lam)
        return -matvec(p.E, x) + p.Am @ (musq_d * (p.Am.T @ x))

    def solve(self, lam: float, rhs: np.ndarray) -> np.ndarray:
        """M(lambda)^{-1} rhs via the low-rank update identity."""
        p = self.problem
        mu = self.mu_at(lam).mu
        fact = self.ev.fact_cache.get(lam)  # factorization of lambda*E - A0 = -K
        rhs = np.asarray(rhs)
        single = rhs.ndim == 1
        R = rhs[:, None] if single else rhs
        U = p.Am * mu[None, :]
        nrhs = R.shape[1]
        try:
            KiR = -fact.solve(R)            # K^{-1} rhs
            KiU = -fact.solve(np.asarray(U))
        except PencilSingular:
            raise
        if KiR.ndim == 1:
            KiR = KiR[:, None]
        C = np.eye(p.m) + U.T @ KiU
        cond = np.linalg.cond(C)
        if not np.isfinite(cond) or cond > 1e14:
            raise CapacitanceSingular(f"capacitance matrix cond {cond:.2e} at lambda={lam}")
        Y = KiR - KiU @ np.linalg.solve(C, U.T @ KiR)
        self.ev.counter.smw_solves += nrhs
        return Y[:, 0] if single else Y

    def relres(self, lam: float, x: np.ndarray) -> float:
        return float(np.linalg.norm(self.apply(lam, x)) / np.linalg.norm(x))

    def convergence_residual(self, lam: float, x: np.ndarray) -> float:
        """Residual the stopping test applies to (the problem's own relres)."""
        return self.relres(lam, x)

    def finalize(self, lam: float, x: np.ndarray) -> Eigenpair:
        """B-normalize and package the converged pair with both residuals."""
        p = self.problem
        v = x / np.sqrt(v_inner(p, x))
        return Eigenpair(
            lam=float(lam),
            v=v,
            mu=p.Am.T @ v,
            residual_nepv=nepv_relative_residual(p, lam, v),
            residual_nep=self.relres(lam, v),
        )


def v_inner(p: NEPvProblem, v: np.ndarray) -> float:
    return float(v @ matvec(p.B, v))


def apply_M(opr: NEPOperator, lam: float, x: np.ndarray) -> np.ndarray:
    return opr.apply(lam, x)


def solve_M(opr: NEPOperator, lam: float, rhs: np.ndarray) -> np.ndarray:
    return opr.solve(lam, rhs)


def relres_nep(opr: NEPOperator, pair: Eigenpair) -> float:
    return opr.relres(pair.lam, pair.v)


def dense_M(p: NEPvProblem, musq: np.ndarray, lam: float) -> np.ndarray:
    """Explicitly assembled M(lambda) for small-n oracles and certificates."""
    return (to_dense(p.A0) - lam * to_dense(p.E)
            + (p.Am * np.asarray(musq)[None, :]) @ p.Am.T)


def augmented_newton(opr, lam0: float, v0: np.ndarray,
                     settings: NewtonSettings | None = None):
    """Run the augmented Newton iteration from (lam0, v0).

    Returns (Eigenpair, SolveReport).  Raises NoConvergence after maxit,
    LinearSolveFailed when an inner solve breaks down, and surfaces
    BranchJumpDetected with the last good iterate recorded on the exception.
    Works on any operator exposing dim/apply/apply_derivative/solve/guard/
    finalize (the base operator or a deflated one).
    """
    settings = settings or NewtonSettings()
    counter = opr.ev.counter
    t_start = time.perf_counter()
    base = counter.snapshot()
    report = SolveReport()

    x = np.asarray(v0, dtype=float).copy()
    if np.linalg.norm(x) == 0.0:
        raise ValueError("v0 must be nonzero")
    rng = np.random.default_rng(settings.seed)
    if settings.c_vector == "fixed_random_seeded":
        c = rng.standard_normal(opr.dim)
        c /= np.linalg.norm(c)
    else:
        c = x / (x @ x)
    if abs(c @ x) < 1e-14 * np.linalg.norm(x):
        raise ValueError("c^H v0 vanishes; choose a different start")
    x = x / (c @ x)
    lam = float(lam0)

    def merit(lam_t, x_t) -> float:
        return float(np.linalg.norm(opr.apply(lam_t, x_t)) / np.linalg.norm(x_t))

    def fill(report, lam, converged):
        snap = counter.snapshot()
        report.lam = float(lam)
        report.converged = converged
        report.total_linear_solves = snap[0] - base[0]
        report.smw_solves = snap[1] - base[1]
        report.gh_evaluations = snap[2] - base[2]
        report.eigvec_recoveries = snap[3] - base[3]
        report.wall_time = time.perf_counter() - t_start

    last_good = (lam, x)
    best_r, best_k = np.inf, 0
    try:
        for k in range(settings.maxit):
            opr.guard(lam)
            opr.anchor(lam)
            r_conv = opr.convergence_residual(lam, x)
            report.relres_nep_history.append(r_conv)
            report.iterations = k
            if r_conv <= settings.tol_relres:
                pair = opr.finalize(lam, x)
                if pair.residual_nepv > settings.certificate_factor * settings.tol_relres:
                    fill(report, lam, False)
                    raise NoConvergence(
                        f"converged to a spurious root of the transformed problem at "
                        f"lambda={lam:.12g}: eigenvalue-nonlinear residual "
                        f"{r_conv:.2e} but eigenvector-nonlinear residual "
                        f"{pair.residual_nepv:.2e}",
                        last_lambda=lam, last_relres=pair.residual_nepv)
                fill(report, lam, True)
                return pair, report
            if r_conv < 0.8 * best_r:
                best_r, best_k = r_conv, k
            elif settings.stall_window and k - best_k >= settings.stall_window:
                fill(report, lam, False)
                raise NoConvergence(
                    f"augmented Newton stalled: no residual progress over "
                    f"{settings.stall_window} iterations (best {best_r:.2e})",
                    last_lambda=lam, last_relres=r_conv)
            r = merit(lam, x)
            last_good = (lam, x)
            if settings.c_vector == "current_iterate":
                c = x / (x @ x)
            rhs = opr.apply_derivative(lam, x)
            try:
                u = opr.solve(lam, rhs)
            except (PencilSingular, CapacitanceSingular) as exc:
                raise LinearSolveFailed(str(exc))
            cu = c @ u
            if cu == 0.0 or not np.isfinite(cu):
                raise LinearSolveFailed(f"c^H u = {cu!r} at lambda={lam}")
            dlam = -1.0 / cu
            xn = u / cu
            # full step unless it increases the merit; then Armijo backtracking
            t, accepted = 1.0, False
            for _ in range(settings.armijo.max_backtracks + 1):
                lam_t = lam + t * dlam
                x_t = x + t * (xn - x)
                try:
                    opr.guard(lam_t)
                    r_t = merit(lam_t, x_t)
                except (NoRealBranch, PencilSingular, LambdaHitsDeflated):
                    r_t = np.inf  # inadmissible trial point, shrink the step
                if r_t <= (1.0 - settings.armijo.c_dec * t) * r:
                    accepted = True
                    break
                t *= settings.armijo.beta
                report.armijo_backtracks += 1
            if not accepted:
                t = 1.0  # flat region: trust the Newton model
            lam = lam + t * dlam
            x = x + t * (xn - x)
    except BranchJumpDetected as exc:
        exc.last_lambda, exc.last_x = last_good
        fill(report, last_good[0], False)
        raise
    fill(report, lam, False)
    raise NoConvergence(
        f"augmented Newton: {settings.maxit} iterations without reaching "
        f"{settings.tol_relres:.1e}",
        last_lambda=lam,
        last_relres=report.relres_nep_history[-1] if report.relres_nep_history else None,
    )
