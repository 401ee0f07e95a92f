"""The reduced polynomial system in (mu, lambda) and its solvers.

For fixed lambda, the unknown mu in R^m satisfies

    (mu^3)^T G(lambda) mu^3 - 1 = 0,
    row_k of  H(lambda) mu^3 - mu = 0   for the m-1 retained rows,

where mu^3 is elementwise.  One row of the second block is dropped (the last,
by default; the retained index set is configurable).  Solutions come in +-
pairs; the sign convention fixes the first nonzero component nonnegative.

For m = 2 the system collapses to a cubic in gamma = mu_r^2 (r the retained
row index), solved here via companion-matrix roots plus a Newton polish.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .coefficient_eval import GHPair
from .errors import Mu2RecoveryUndefined, NoConvergence, SingularJacobian
from .linalg import real_cbrt

_COND_LIMIT = 1.0 / np.sqrt(np.finfo(float).eps)


class Provenance(enum.Enum):
    ANALYTIC_CUBIC = "analytic-cubic"
    MEP = "MEP"
    REFINED = "refined"


def default_retained(m: int) -> tuple:
    """Drop the last row of H mu^3 - mu: retain rows 0..m-2."""
    return tuple(range(m - 1))


@dataclass(frozen=True)
class PolySystem:
    """Coefficients plus the retained-row convention."""

    gh: GHPair
    retained: tuple

    def __post_init__(self):
        m = self.gh.m
        if len(self.retained) != m - 1:
            raise ValueError(f"retained row count {len(self.retained)} != m-1 = {m - 1}")
        if any(not 0 <= r < m for r in self.retained):
            raise ValueError(f"retained rows {self.retained} out of range for m={m}")

    @classmethod
    def from_gh(cls, gh: GHPair, retained: tuple | None = None) -> "PolySystem":
        return cls(gh=gh, retained=tuple(retained) if retained is not None
                   else default_retained(gh.m))


@dataclass(frozen=True)
class MuSolution:
    """One real solution branch at a fixed lambda."""

    mu: np.ndarray
    residual: float
    provenance: Provenance

    @property
    def mu_sq(self) -> np.ndarray:
        return self.mu**2

    @property
    def w(self) -> np.ndarray:
        return self.mu**3


def normalize_sign(mu: np.ndarray) -> np.ndarray:
    """Flip the +- pair so the first nonzero component is nonnegative."""
    for x in mu:
        if x != 0.0:
            return -mu if x < 0 else mu
    return mu


def residual(sys: PolySystem, mu: np.ndarray) -> np.ndarray:
    """[normalization residual; retained rows of H mu^3 - mu], length m."""
    mu = np.asarray(mu, dtype=float)
    w = mu**3
    G, H = sys.gh.G, sys.gh.H
    out = np.empty(len(mu))
    out[0] = w @ G @ w - 1.0
    if len(mu) > 1:
        out[1:] = (H @ w - mu)[list(sys.retained)]
    return out


def jacobian(sys: PolySystem, mu: np.ndarray) -> np.ndarray:
    """d residual / d mu: row 0 is 6 (mu^3)^T G diag(mu^2), the rest
    are retained rows of 3 H diag(mu^2) - I."""
    mu = np.asarray(mu, dtype=float)
    m = len(mu)
    G, H = sys.gh.G, sys.gh.H
    J = np.empty((m, m))
    J[0, :] = 6.0 * ((mu**3) @ G) * mu**2
    if m > 1:
        full = 3.0 * H * (mu**2)[None, :] - np.eye(m)
        J[1:, :] = full[list(sys.retained), :]
    return J


def newton_refine(sys: PolySystem, mu0: np.ndarray, tol: float = 1e-12,
                  maxit: int = 30) -> MuSolution:
    """Damped Newton on residual(). Raises SingularJacobian or NoConvergence."""
    mu = np.asarray(mu0, dtype=float).copy()
    r = residual(sys, mu)
    rn = np.max(np.abs(r))
    for _ in range(maxit):
        if rn <= tol:
            return MuSolution(mu=mu, residual=float(rn), provenance=Provenance.REFINED)
        J = jacobian(sys, mu)
        if not np.all(np.isfinite(J)) or np.linalg.cond(J) > _COND_LIMIT:
            raise SingularJacobian(f"cond(J) beyond {_COND_LIMIT:.1e} at mu={mu}")
        step = np.linalg.solve(J, -r)
        t = 1.0
        while t >= 2.0**-20:
            trial = mu + t * step
            rt = residual(sys, trial)
            rtn = np.max(np.abs(rt))
            if rtn < rn:
                mu, r, rn = trial, rt, rtn
                break
            t *= 0.5
        else:
            raise NoConvergence("newton_refine stalled (no decreasing step)",
                                last_relres=float(rn))
    if rn <= tol:
        return MuSolution(mu=mu, residual=float(rn), provenance=Provenance.REFINED)
    raise NoConvergence(f"newton_refine: {maxit} iterations, residual {rn:.2e} > {tol:.1e}",
                        last_relres=float(rn))


def refine_candidate(sys: PolySystem, mu0: np.ndarray,
                     accept_tol: float) -> MuSolution | None:
    """Polish a candidate; None when it cannot be brought under accept_tol."""
    try:
        return newton_refine(sys, mu0, tol=1e-13, maxit=12)
    except SingularJacobian:
        return None
    except NoConvergence as exc:
        if exc.last_relres is None or exc.last_relres > accept_tol:
            return None
    try:
        return newton_refine(sys, mu0, tol=accept_tol, maxit=12)
    except (SingularJacobian, NoConvergence):
        return None


def _cubic_roots(c3: float, c2: float, c1: float, c0: float) -> np.ndarray:
    """Roots of c3 x^3 + c2 x^2 + c1 x + c0 via companion-matrix eigenvalues,
    each polished with one scalar Newton step.  Degrades gracefully when the
    leading coefficients (numerically) vanish."""
    coeffs = np.array([c3, c2, c1, c0], dtype=float)
    scale = np.max(np.abs(coeffs))
    if scale == 0.0:
        return np.array([])
    keep = np.abs(coeffs) > 1e-14 * scale
    first = int(np.argmax(keep))
    trimmed = coeffs[first:]
    if len(trimmed) <= 1:
        return np.array([])
    roots = np.roots(trimmed)
    poly = np.polynomial.Polynomial(coeffs[::-1])
    dpoly = poly.deriv()
    polished = []
    for r in roots:
        d = dpoly(r)
        polished.append(r - poly(r) / d if d != 0 else r)
    return np.array(polished)


def solve_m2_analytic(gh: GHPair, retained: tuple | None = None,
                      refine_tol: float = 1e-10) -> list[MuSolution]:
    """All real solutions for m = 2 from the closed-form cubic.

    With r the retained row and o the other index, gamma = mu_r^2 satisfies

      gamma^3 [h_ro^2 g_rr - 2 h_ro h_rr g_ro + h_rr^2 g_oo]
      + gamma^2 [2 h_ro g_ro - 2 h_rr g_oo] + gamma g_oo - h_ro^2 = 0,

    and mu_o = cbrt((mu_r - h_rr mu_r^3) / h_ro).  Each real root gamma >= 0
    is polished on the full system; solutions are sign-normalized and sorted.
    """
    if gh.m != 2:
        raise ValueError(f"analytic path requires m=2, got m={gh.m}")
    sys = PolySystem.from_gh(gh, retained)
    r = sys.retained[0]
    o = 1 - r
    G, H = gh.G, gh.H
    hrr, hro = H[r, r], H[r, o]
    grr, gro, goo = G[r, r], G[r, o], G[o, o]
    if hro == 0.0:
        raise Mu2RecoveryUndefined(f"H[{r},{o}] = 0: companion component unrecoverable")
    roots = _cubic_roots(
        hro**2 * grr - 2.0 * hro * hrr * gro + hrr**2 * goo,
        2.0 * hro * gro - 2.0 * hrr * goo,
        goo,
        -(hro**2),
    )
    out: list[MuSolution] = []
    for g in roots:
        if abs(g.imag) > 1e-10 * (1.0 + abs(g.real)) or g.real < 0.0:
            continue
        mu = np.zeros(2)
        mu[r] = np.sqrt(g.real)
        mu[o] = real_cbrt((mu[r] - hrr * mu[r] ** 3) / hro)
        sol = refine_candidate(sys, mu, refine_tol)
        if sol is None or sol.residual > refine_tol:
            continue
        cand = normalize_sign(sol.mu)
        if any(np.allclose(cand, s.mu, rtol=0.0, atol=1e-10 * (1 + np.abs(cand).max()))
               for s in out):
            continue
        out.append(MuSolution(mu=cand, residual=sol.residual,
                              provenance=Provenance.ANALYTIC_CUBIC))
    out.sort(key=lambda s: tuple(s.mu))
    return out


def solve_m1_direct(gh: GHPair, refine_tol: float = 1e-10) -> list[MuSolution]:
    """m = 1: mu^6 = 1/g11; one sign-normalized solution when g11 > 0."""
    if gh.m != 1:
        raise ValueError(f"direct path requires m=1, got m={gh.m}")
    g11 = gh.G[0, 0]
    if g11 <= 0.0:
        return []
    mu = np.array([(1.0 / g11) ** (1.0 / 6.0)])
    sys = PolySystem.from_gh(gh)
    res = float(np.max(np.abs(residual(sys, mu))))
    if res > refine_tol:
        sol = refine_candidate(sys, mu, refine_tol)
        if sol is None or sol.residual > refine_tol:
            return []
        mu, res = sol.mu, sol.residual
    return [MuSolution(mu=normalize_sign(mu), residual=res,
                       provenance=Provenance.ANALYTIC_CUBIC)]
