"""Independent oracles used to validate the main solution path.

The oracles never go through the transformed problem: the eigenpair oracle
runs multi-start damped Newton directly on the full system

    F(v, lambda) = [A(v) v - lambda E v;  v^T B v - 1] = 0

at desk scale, and the remaining checks are finite differences, least-squares
fits, and set comparisons.  Determinism under a fixed seed is part of the
contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import WindowContainsBranchJump
from .linalg import matvec, to_dense
from .mu_functions import MuEvaluator
from .polysys import PolySystem, jacobian, residual
from .problem_model import Eigenpair, NEPvProblem, nepv_relative_residual


def _full_system(p: NEPvProblem, v: np.ndarray, lam: float) -> np.ndarray:
    mu = p.Am.T @ v
    top = matvec(p.A0, v) + p.Am @ (mu**3) - lam * matvec(p.E, v)
    return np.concatenate([top, [v @ matvec(p.B, v) - 1.0]])


def _full_jacobian(p: NEPvProblem, v: np.ndarray, lam: float) -> np.ndarray:
    mu = p.Am.T @ v
    Jvv = to_dense(p.A0) + (p.Am * (3.0 * mu**2)[None, :]) @ p.Am.T - lam * to_dense(p.E)
    Jvl = -matvec(p.E, v)
    J = np.zeros((p.n + 1, p.n + 1))
    J[: p.n, : p.n] = Jvv
    J[: p.n, p.n] = Jvl
    J[p.n, : p.n] = 2.0 * matvec(p.B, v)
    return J


def brute_force_nepv(p: NEPvProblem, n_starts: int = 200, tol: float = 1e-10,
                     seed: int = 0, maxit: int = 100) -> list[Eigenpair]:
    """Multi-start damped Newton on the full system; best effort, deduplicated.

    Seeds: v drawn B-normalized on the unit sphere; lambda from the
    Gershgorin interval of (A0, E) inflated by the nonlinearity strength
    sum_i ||a_i||^4.
    """
    if p.n > 50:
        raise ValueError("brute-force oracle is limited to n <= 50")
    rng = np.random.default_rng(seed)
    A0d, Ed, Bd = to_dense(p.A0), to_dense(p.E), to_dense(p.B)
    # Gershgorin interval of the pencil, inflated
    radii = np.sum(np.abs(A0d), axis=1)
    escale = np.diag(Ed).min()
    lam_lo = (-radii.max()) / escale - 1.0
    lam_hi = radii.max() / escale + float(np.sum(np.linalg.norm(p.Am, axis=0) ** 4)) + 1.0
    found: list[tuple[float, np.ndarray]] = []
    for _ in range(n_starts):
        v = rng.standard_normal(p.n)
        v = v / np.sqrt(v @ Bd @ v)
        lam = rng.uniform(lam_lo, lam_hi)
        converged = False
        for _ in range(maxit):
            F = _full_system(p, v, lam)
            fn = np.linalg.norm(F)
            if fn < tol:
                converged = True
                break
            try:
                step = np.linalg.solve(_full_jacobian(p, v, lam), -F)
            except np.linalg.LinAlgError:
                break
            t = 1.0
            while t >= 2.0**-30:
                v_t = v + t * step[: p.n]
                l_t = lam + t * step[p.n]
                if np.linalg.norm(_full_system(p, v_t, l_t)) < (1.0 - 1e-4 * t) * fn:
                    break
                t *= 0.5
            v = v + t * step[: p.n]
            lam = lam + t * step[p.n]
        if converged:
            found.append((lam, v))
    found.sort(key=lambda fv: fv[0])
    out: list[Eigenpair] = []
    for lam, v in found:
        dup = any(
            abs(lam - e.lam) < 1e-6 * (1.0 + abs(lam))
            and min(np.linalg.norm(v - e.v), np.linalg.norm(v + e.v)) < 1e-5
            for e in out
        )
        if dup:
            continue
        mu = p.Am.T @ v
        out.append(Eigenpair(lam=float(lam), v=v, mu=mu,
                             residual_nepv=nepv_relative_residual(p, lam, v),
                             residual_nep=np.nan))
    return out


@dataclass
class EquivalenceReport:
    matched: list = field(default_factory=list)
    missing_from_nep: list = field(default_factory=list)
    extra_in_nep: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.missing_from_nep and not self.extra_in_nep

    def to_dict(self) -> dict:
        return {
            "matched": [[float(a), float(b)] for a, b in self.matched],
            "missing_from_nep": [float(x) for x in self.missing_from_nep],
            "extra_in_nep": [float(x) for x in self.extra_in_nep],
            "ok": self.ok,
        }


def check_equivalence(p: NEPvProblem, nep_pairs, oracle_pairs,
                      tol: float = 1e-6) -> EquivalenceReport:
    """One-to-one matching of the two eigenvalue sets within tol."""
    nep_lams = sorted(e.lam for e in nep_pairs)
    ora_lams = sorted(e.lam for e in oracle_pairs)
    report = EquivalenceReport()
    used = [False] * len(nep_lams)
    for ol in ora_lams:
        best, best_j = None, None
        for j, nl in enumerate(nep_lams):
            if used[j]:
                continue
            d = abs(nl - ol)
            if best is None or d < best:
                best, best_j = d, j
        if best is not None and best <= tol * (1.0 + abs(ol)):
            used[best_j] = True
            report.matched.append((ol, nep_lams[best_j]))
        else:
            report.missing_from_nep.append(ol)
    report.extra_in_nep = [nl for j, nl in enumerate(nep_lams) if not used[j]]
    return report


def locate_mu_zero(ev: MuEvaluator, lo: float, hi: float, comp: int,
                   tol: float = 1e-12, maxit: int = 200) -> float:
    """Bisection for lambda* where component comp of the tracked branch
    crosses zero.  The branch is tracked with the evaluator's policy; the
    bracket must have opposite signs of mu_comp at its ends."""
    def mu_comp(lam):
        return ev.select(lam, update_state=True).mu[comp]

    ev.reset_state()
    f_lo = mu_comp(lo)
    f_hi = mu_comp(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise ValueError(f"no sign change of mu[{comp}] on [{lo}, {hi}]")
    for _ in range(maxit):
        mid = 0.5 * (lo + hi)
        f_mid = mu_comp(mid)
        if f_mid == 0.0 or hi - lo < tol * (1.0 + abs(mid)):
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return 0.5 * (lo + hi)


@dataclass
class SingularityFit:
    lambda_star: float
    slope: float
    mu1_sq_limit: float
    inv_h11: float
    window: tuple
    n_points: int

    @property
    def lemma_gap(self) -> float:
        return abs(self.mu1_sq_limit - self.inv_h11)


def singularity_fit(ev: MuEvaluator, lambda_star: float, side: int = 1,
                    window: tuple = (1e-6, 1e-3), n_points: int = 12,
                    comp: int = 1) -> SingularityFit:
    """Least-squares slope of log mu_comp^2 vs log |lambda - lambda*|.

    side = +1 fits to the right of lambda*, -1 to the left.  Also evaluates
    the analytic-component limit mu_{r}^2(lambda*) -> 1/h_rr(lambda*), where
    r is the other component (index 0 by convention here).
    """
    dists = np.geomspace(window[0], window[1], n_points)
    scale = 1.0 + abs(lambda_star)
    logs_d, logs_mu = [], []
    ev.reset_state()
    # walk inward from the window edge so the continuity policy tracks one branch
    for d in sorted(dists, reverse=True):
        lam = lambda_star + side * d * scale
        sol = ev.select(lam, update_state=True)
        m2 = sol.mu_sq[comp]
        if m2 <= 0.0:
            continue
        logs_d.append(np.log(d * scale))
        logs_mu.append(np.log(m2))
    if len(logs_d) < max(4, n_points // 2):
        raise WindowContainsBranchJump("too few usable points in the fit window")
    logs_d, logs_mu = np.asarray(logs_d), np.asarray(logs_mu)
    slope, intercept = np.polyfit(logs_d, logs_mu, 1)
    fitted = slope * logs_d + intercept
    if np.max(np.abs(fitted - logs_mu)) > 0.75:
        raise WindowContainsBranchJump(
            f"log-log fit deviation {np.max(np.abs(fitted - logs_mu)):.2f} "
            "suggests a branch switch inside the window")
    # analytic component limit, from the nearest fit point
    lam_near = lambda_star + side * dists[0] * scale
    sol_near = ev.select(lam_near, update_state=False)
    other = 0 if comp != 0 else 1
    gh = ev.gh(lambda_star)
    inv_h = 1.0 / gh.H[other, other]
    return SingularityFit(lambda_star=lambda_star, slope=float(slope),
                          mu1_sq_limit=float(sol_near.mu_sq[other]),
                          inv_h11=float(inv_h), window=window,
                          n_points=len(logs_d))


@dataclass
class JacobianCheck:
    label: str
    max_rel_err: float
    n_points: int

    @property
    def ok(self) -> bool:
        return self.max_rel_err <= 1e-6


def fd_jacobian_check(sys: PolySystem, mu_points, label: str = "") -> JacobianCheck:
    """Central-difference validation of the analytic Jacobian."""
    worst = 0.0
    for mu in mu_points:
        mu = np.asarray(mu, dtype=float)
        J = jacobian(sys, mu)
        step = 1e-6 * (1.0 + np.linalg.norm(mu))
        J_fd = np.empty_like(J)
        for j in range(len(mu)):
            e = np.zeros(len(mu))
            e[j] = step
            J_fd[:, j] = (residual(sys, mu + e) - residual(sys, mu - e)) / (2 * step)
        denom = max(np.linalg.norm(J), 1e-300)
        worst = max(worst, float(np.linalg.norm(J - J_fd) / denom))
    return JacobianCheck(label=label, max_rel_err=worst, n_points=len(mu_points))


def fd_jacobian_suite(instances) -> list[JacobianCheck]:
    """instances: iterable of (label, PolySystem, mu_points)."""
    return [fd_jacobian_check(sys, pts, label) for label, sys, pts in instances]


def report_to_json(obj) -> str:
    if hasattr(obj, "to_dict"):
        return json.dumps(obj.to_dict(), indent=2)
    if hasattr(obj, "__dict__"):
        return json.dumps({k: (v if not isinstance(v, np.ndarray) else v.tolist())
                           for k, v in obj.__dict__.items()}, indent=2, default=float)
    return json.dumps(obj, indent=2, default=float)
