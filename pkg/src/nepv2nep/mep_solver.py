"""General-m solution of the polynomial system through a multiparameter
eigenvalue problem.

The change of variables w = mu^3 (elementwise) turns the reduced system into

    w^T G w = 1,
    (h_k^T w)^3 = w_k   for each retained row k,

whose solutions contain those of the original system (cubing both sides of a
real equation adds only complex artifacts).  Each equation is companion-
linearized so w enters the coefficient matrices linearly:

  normalization,  x0 = [1, w]:
      [[-1, (Gw)^T], [w, -I]] x0 = 0                       (size m+1)
  retained row k, x_k = [1, h_k^T w, (h_k^T w)^2]:
      [[-w_k, 0, h_k^T w], [h_k^T w, -1, 0], [0, h_k^T w, -1]] x_k = 0

Together these form an m-parameter MEP (A_{i,0} + sum_j w_j A_{i,j}) x_i = 0.
The associated operator-determinant matrices

    Delta_0 = sum_{sigma} sgn(sigma) A_{1,sigma(1)} x ... x A_{m,sigma(m)},
    Delta_k = the same expansion with -A_{i,0} substituted where sigma(i) = k,

(Kronecker products) satisfy w_k Delta_0 z = Delta_k z with z the decomposable
tensor of the x_i.  One dense GEP (chosen by Delta condition estimate) yields
one component of every solution; the rest follow from Rayleigh quotients.
Real candidates are cube-rooted back to mu and filtered by the residual of
the ORIGINAL system, which removes the cube-root-of-unity artifacts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .coefficient_eval import GHPair
from .errors import AllDeltasIllConditioned, ProblemTooLarge
from .linalg import cond1_estimate, real_cbrt
from .polysys import (
    MuSolution,
    PolySystem,
    Provenance,
    default_retained,
    normalize_sign,
    refine_candidate,
)

# operator-determinant dimension for m parameters
def delta_dimension(m: int) -> int:
    return (m + 1) * 3 ** (m - 1)


_MAX_M = 7  # d(8) would exceed 13122


@dataclass(frozen=True)
class MEPSystem:
    """Companion-linearized blocks A_{i,j}: blocks[i][j], i < m, 0 <= j <= m."""

    m: int
    blocks: tuple
    gh: GHPair
    retained: tuple

    @property
    def d(self) -> int:
        return delta_dimension(self.m)


@dataclass(frozen=True)
class DeltaSet:
    """Delta_0 .. Delta_m plus 1-norm condition estimates."""

    deltas: tuple
    d: int
    cond_estimates: tuple


def build_mep(gh: GHPair, retained: tuple | None = None) -> MEPSystem:
    """Assemble the MEP coefficient blocks from G(lambda), H(lambda)."""
    m = gh.m
    if m < 2:
        raise ValueError(f"MEP route requires m >= 2, got m={m}")
    retained = tuple(retained) if retained is not None else default_retained(m)
    if len(retained) != m - 1:
        raise ValueError(f"retained row count {len(retained)} != m-1")
    G, H = gh.G, gh.H
    rows = []
    # block-row 1: bordered normalization of size (m+1) x (m+1)
    A10 = np.zeros((m + 1, m + 1))
    A10[0, 0] = -1.0
    A10[1:, 1:] = -np.eye(m)
    row = [A10]
    for j in range(m):
        Aj = np.zeros((m + 1, m + 1))
        Aj[0, 1:] = G[:, j]
        Aj[1 + j, 0] = 1.0
        row.append(Aj)
    rows.append(tuple(row))
    # block-rows 2..m: cubed retained equations, size 3 x 3
    for k in retained:
        Ak0 = np.zeros((3, 3))
        Ak0[1, 1] = -1.0
        Ak0[2, 2] = -1.0
        row = [Ak0]
        for j in range(m):
            Aj = np.zeros((3, 3))
            if j == k:
                Aj[0, 0] = -1.0
            Aj[0, 2] = H[k, j]
            Aj[1, 0] = H[k, j]
            Aj[2, 1] = H[k, j]
            row.append(Aj)
        rows.append(tuple(row))
    return MEPSystem(m=m, blocks=tuple(rows), gh=gh, retained=retained)


def _operator_determinant(blocks, m: int, col_replace: int | None) -> np.ndarray:
    """Signed Kronecker expansion, memoized over (row index, column subset).

    Expanding block-row by block-row shares the sub-determinants of common
    column subsets, which reduces the cost from m! full Kronecker chains to a
    number polynomial in m.
    """
    memo: dict = {}

    def block(i: int, j: int) -> np.ndarray:
        if col_replace is not None and j == col_replace:
            return -blocks[i][0]
        return blocks[i][j]

    def rec(i: int, cols: tuple):
        if i == m:
            return None  # scalar 1 sentinel
        key = (i, cols)
        if key in memo:
            return memo[key]
        acc = None
        for idx, j in enumerate(cols):
            Mij = block(i, j)
            sub = rec(i + 1, cols[:idx] + cols[idx + 1:])
            term = Mij if sub is None else np.kron(Mij, sub)
            if idx % 2 == 1:
                term = -term
            acc = term if acc is None else acc + term
        memo[key] = acc
        return acc

    return rec(0, tuple(range(1, m + 1)))


def build_deltas(mep: MEPSystem) -> DeltaSet:
    """Delta_0 .. Delta_m; refuses m > 7 (dimension beyond 13122)."""
    m = mep.m
    if m > _MAX_M:
        raise ProblemTooLarge(
            f"m={m} gives Delta dimension {delta_dimension(m)} > {delta_dimension(_MAX_M)}")
    deltas = [_operator_determinant(mep.blocks, m, None)]
    for k in range(1, m + 1):
        deltas.append(_operator_determinant(mep.blocks, m, k))
    conds = tuple(cond1_estimate(D) for D in deltas)
    return DeltaSet(deltas=tuple(deltas), d=mep.d, cond_estimates=conds)


def solve_mep(mep: MEPSystem, imag_tol: float = 1e-8,
              cond_limit: float = 1e12) -> list[tuple[np.ndarray, float]]:
    """All real parameter vectors w of the MEP with their w-system residuals.

    Solves the single GEP w_i* Delta_0 x = Delta_i* x for the Delta_i* with
    the smallest condition estimate, then recovers the remaining components
    with one-sided Rayleigh quotients on the right eigenvectors.
    """
    ds = build_deltas(mep)
    D0 = ds.deltas[0]
    conds = ds.cond_estimates[1:]
    if min(conds) > cond_limit:
        raise AllDeltasIllConditioned(
            f"all Delta condition estimates exceed {cond_limit:.1e}: {conds}")
    istar = int(np.argmin(conds))
    evals, evecs = sla.eig(ds.deltas[istar + 1], D0)
    finite = np.isfinite(evals)
    evals, evecs = evals[finite], evecs[:, finite]
    # quadratic forms x^T Delta_j x for all eigenvectors at once
    d0_forms = np.einsum("ij,ij->j", evecs, D0 @ evecs)
    forms = [np.einsum("ij,ij->j", evecs, ds.deltas[j + 1] @ evecs) for j in range(mep.m)]
    out = []
    scale = np.abs(d0_forms).max() if len(d0_forms) else 1.0
    for t in range(evecs.shape[1]):
        if abs(d0_forms[t]) <= 1e-12 * max(scale, 1.0):
            continue
        w = np.array([evals[t] if j == istar else forms[j][t] / d0_forms[t]
                      for j in range(mep.m)])
        if np.any(np.abs(w.imag) > imag_tol * (1.0 + np.abs(w.real))):
            continue
        w = w.real
        out.append((w, _w_residual(mep, w)))
    out.sort(key=lambda pair: tuple(pair[0]))
    return out


def _w_residual(mep: MEPSystem, w: np.ndarray) -> float:
    """Infinity-norm residual of the cubed (w) system."""
    G, H = mep.gh.G, mep.gh.H
    r = [w @ G @ w - 1.0]
    for k in mep.retained:
        hk = H[k, :] @ w
        r.append(hk**3 - w[k])
    return float(np.max(np.abs(r)))


def extract_mu(w_list, gh: GHPair, retained: tuple | None = None,
               accept_tol: float = 1e-10) -> list[MuSolution]:
    """Back-substitute mu = cbrt(w), refine on the ORIGINAL system, filter.

    Candidates whose refined residual exceeds accept_tol are spurious (for
    example cube-root-of-unity artifacts of the w-system) and are dropped.
    The accepted set is sign-normalized, deduplicated, and sorted.
    """
    sys = PolySystem.from_gh(gh, retained)
    out: list[MuSolution] = []
    for item in w_list:
        w = item[0] if isinstance(item, tuple) else item
        mu0 = real_cbrt(w)
        sol = refine_candidate(sys, mu0, accept_tol)
        if sol is None or sol.residual > accept_tol:
            continue
        mu = normalize_sign(sol.mu)
        if any(np.linalg.norm(mu - s.mu) <= 1e-8 * (1.0 + np.linalg.norm(mu))
               for s in out):
            continue
        out.append(MuSolution(mu=mu, residual=sol.residual, provenance=Provenance.MEP))
    out.sort(key=lambda s: tuple(s.mu))
    return out
