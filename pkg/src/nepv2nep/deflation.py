"""Index-one invariant-pair deflation.

A pair (X, S), X in R^{n x p} with orthonormal columns and S upper
triangular, encodes p already-accepted eigenpairs: the eigenvalues of S are
the accepted lambdas.  Further eigenpairs are computed from the bordered
extended problem

    [[M(lambda), U(lambda)], [X^H, 0]] [v; u] = 0,
    U(lambda) = M(lambda) X (lambda I - S)^{-1},

whose solutions exclude the deflated eigenvalues: the X^H v = 0 row forbids
reconvergence.  U(lambda) is evaluated through the spectral decomposition of
S (simple eigenvalues assumed; clusters raise a warning), and bordered solves
use the base low-rank update solve plus a p x p Schur complement.

Accepting a new (lambda, v, u) expands the pair to ([X v], [[S u],[0 lambda]])
followed by a QR re-orthonormalization; the similarity by the triangular R
keeps S upper triangular with the accepted lambdas on the diagonal.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import (
    LambdaHitsDeflated,
    MinimalityLost,
    NoConvergence,
    NEPvError,
    SchurComplementSingular,
)
from .nep_solver import NEPOperator, NewtonSettings, SolveReport, augmented_newton
from .problem_model import Eigenpair

_MINIMALITY_TOL = 1e-8
_GUARD_REL = 1e-10


@dataclass(frozen=True)
class InvariantPair:
    """(X, S) with X orthonormal columns and S upper triangular."""

    X: np.ndarray
    S: np.ndarray

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.diag(self.S)

    @classmethod
    def empty(cls, n: int) -> "InvariantPair":
        return cls(X=np.zeros((n, 0)), S=np.zeros((0, 0)))


def expand_pair(pair: InvariantPair, lam: float, v: np.ndarray,
                u: np.ndarray | None = None) -> InvariantPair:
    """Append one accepted eigenpair; raises MinimalityLost on rank collapse."""
    v = np.asarray(v, dtype=float)
    scale = np.linalg.norm(v)
    if scale == 0.0:
        raise MinimalityLost("cannot expand with a zero vector")
    v = v / scale
    u = np.zeros(pair.p) if u is None else np.asarray(u, dtype=float) / scale
    Xh = np.column_stack([pair.X, v])
    smin = np.linalg.svd(Xh, compute_uv=False)[-1]
    if smin <= _MINIMALITY_TOL:
        raise MinimalityLost(f"sigma_min([X v]) = {smin:.2e} <= {_MINIMALITY_TOL:.0e}")
    pp = pair.p
    Sh = np.zeros((pp + 1, pp + 1))
    Sh[:pp, :pp] = pair.S
    Sh[:pp, pp] = u
    Sh[pp, pp] = lam
    Q, R = np.linalg.qr(Xh)
    S_new = R @ Sh @ np.linalg.inv(R)
    S_new = np.triu(S_new)  # similarity by triangular R is triangular; drop fuzz
    eigs = np.diag(S_new)
    gaps = np.abs(eigs[:, None] - eigs[None, :])[np.triu_indices(pp + 1, k=1)]
    if gaps.size and gaps.min() < 1e-8 * (1.0 + np.abs(eigs).max()):
        warnings.warn("clustered eigenvalues in deflation pair; "
                      "spectral evaluation of U(lambda) may lose accuracy")
    return InvariantPair(X=Q, S=S_new)


class DeflatedOperator:
    """Bordered extended operator of dimension n + p over a base NEPOperator."""

    def __init__(self, base: NEPOperator, pair: InvariantPair):
        self.base = base
        self.pair = pair
        self.p = pair.p
        if self.p:
            lz, vz = np.linalg.eig(pair.S)
            if np.abs(lz.imag).max() > 1e-10 * (1.0 + np.abs(lz.real).max()):
                warnings.warn("deflation pair S has significantly complex eigenvalues")
            self._lz = lz.real
            self._vz = vz.real
            self._vzi = np.linalg.inv(self._vz)

    @property
    def ev(self):
        return self.base.ev

    @property
    def problem(self):
        return self.base.problem

    @property
    def dim(self) -> int:
        return self.base.dim + self.p

    def guard(self, lam: float) -> None:
        if self.p:
            gap = np.abs(lam - self._lz)
            j = int(np.argmin(gap))
            if gap[j] < _GUARD_REL * (1.0 + abs(lam)):
                raise LambdaHitsDeflated(lam, float(self._lz[j]))

    def anchor(self, lam: float) -> None:
        self.base.anchor(lam)

    def _resolvent_weights(self, lam: float, power: int = 1) -> np.ndarray:
        """X Z (lam I - Lambda)^{-power} Z^{-1}, the (lam I - S)^{-power} factor."""
        diag = (lam - self._lz) ** -power
        return self.pair.X @ (self._vz @ (diag[:, None] * self._vzi))

    def U_of(self, lam: float) -> np.ndarray:
        """U(lambda) = M(lambda) X (lambda I - S)^{-1} (n x p)."""
        W = self._resolvent_weights(lam, 1)
        return np.column_stack([self.base.apply(lam, W[:, j]) for j in range(self.p)])

    def U_prime(self, lam: float) -> np.ndarray:
        W = self._resolvent_weights(lam, 1)
        Wp = -self._resolvent_weights(lam, 2)
        cols = []
        for j in range(self.p):
            cols.append(self.base.apply_derivative(lam, W[:, j])
                        + self.base.apply(lam, Wp[:, j]))
        return np.column_stack(cols)

    def apply(self, lam: float, x: np.ndarray) -> np.ndarray:
        if not self.p:
            return self.base.apply(lam, x)
        self.guard(lam)
        n = self.base.dim
        v, u = x[:n], x[n:]
        top = self.base.apply(lam, v) + self.U_of(lam) @ u
        return np.concatenate([top, self.pair.X.T @ v])

    def apply_derivative(self, lam: float, x: np.ndarray) -> np.ndarray:
        if not self.p:
            return self.base.apply_derivative(lam, x)
        self.guard(lam)
        n = self.base.dim
        v, u = x[:n], x[n:]
        top = self.base.apply_derivative(lam, v) + self.U_prime(lam) @ u
        return np.concatenate([top, np.zeros(self.p)])

    def solve(self, lam: float, rhs: np.ndarray) -> np.ndarray:
        """Block elimination: base solves for [rhs_top, U], then the p x p
        Schur complement X^T M^{-1} U."""
        if not self.p:
            return self.base.solve(lam, rhs)
        self.guard(lam)
        n = self.base.dim
        r, s = rhs[:n], rhs[n:]
        U = self.U_of(lam)
        y0 = self.base.solve(lam, r)
        T = self.base.solve(lam, U)
        Sc = self.pair.X.T @ T
        try:
            z = np.linalg.solve(Sc, self.pair.X.T @ y0 - s)
        except np.linalg.LinAlgError as exc:
            raise SchurComplementSingular(str(exc))
        cond = np.linalg.cond(Sc)
        if not np.isfinite(cond) or cond > 1e14:
            raise SchurComplementSingular(f"Schur complement cond {cond:.2e}")
        return np.concatenate([y0 - T @ z, z])

    def recover(self, lam: float, x: np.ndarray) -> np.ndarray:
        """Eigenvector of the base problem from the extended solution:
        M(v + X(lam I - S)^{-1} u) = M v + U(lam) u = 0."""
        v, u = self.split(x)
        if self.p:
            v = v + self._resolvent_weights(lam, 1) @ u
        return v

    def convergence_residual(self, lam: float, x: np.ndarray) -> float:
        """Stopping is judged on the base problem's residual of the recovered
        eigenvector, so accepted pairs meet the tolerance on the original
        problem, not just the bordered one."""
        if not self.p:
            return self.base.convergence_residual(lam, x)
        self.guard(lam)
        return self.base.relres(lam, self.recover(lam, x))

    def finalize(self, lam: float, x: np.ndarray) -> Eigenpair:
        return self.base.finalize(lam, self.recover(lam, x))

    def split(self, x: np.ndarray):
        n = self.base.dim
        return x[:n], x[n:]


def build_deflated(opr: NEPOperator, pair: InvariantPair) -> DeflatedOperator:
    return DeflatedOperator(opr, pair)


def invariant_pair_residual(opr: NEPOperator, pair: InvariantPair,
                            mu_targets=None) -> float:
    """|| A0 X - E X S + sum_i a_i a_i^T X mu_i^2(S) ||_F.

    mu_i^2(S) is evaluated by diagonalizing S and applying the scalar
    functions to its eigenvalues.  mu_targets, when given, maps eigenvalues
    to target mu^2 vectors so branch selection matches the branch each
    accepted pair actually lives on (pass e.g. {e.lam: e.mu**2 for e in
    pairs}); otherwise the evaluator's default selection is used.
    """
    if pair.p == 0:
        return 0.0
    from .linalg import matvec

    p_ = opr.problem
    lz, vz = np.linalg.eig(pair.S)
    lz, vz = lz.real, vz.real
    vzi = np.linalg.inv(vz)

    def musq_of(lam):
        target = None
        if mu_targets:
            key = min(mu_targets, key=lambda t: abs(t - lam))
            if abs(key - lam) <= 1e-6 * (1.0 + abs(lam)):
                target = np.asarray(mu_targets[key], dtype=float)
        return opr.ev.select(lam, target=target, update_state=False).mu_sq

    musq_at = np.column_stack([musq_of(l) for l in lz])
    R = matvec(p_.A0, pair.X) - matvec(p_.E, pair.X) @ pair.S
    for i in range(p_.m):
        f_of_S = vz @ (musq_at[i, :][:, None] * vzi)  # mu_i^2(S)
        ai = p_.Am[:, i]
        R = R + np.outer(ai, ai @ (pair.X @ f_of_S))
    return float(np.linalg.norm(R))


@dataclass
class KEigenpairsResult:
    """Outcome of a deflated sweep: pairs sorted by eigenvalue, reports in
    computation order, failures as (index, repr) tuples."""

    pairs: list
    reports: list
    invariant_pair: InvariantPair
    failures: list = field(default_factory=list)


# start offsets tried after each accepted eigenvalue, relative to 1 + |lambda|;
# both directions, since remaining eigenvalues may lie below the last accepted one
DEFAULT_START_OFFSETS = (0.01, 0.03, 0.05, -0.05, 0.2, -0.2, 0.5, -0.5,
                         1.0, -1.0, 3.0, -3.0, 10.0, -10.0, 30.0, -30.0, 100.0)


def compute_k_eigenpairs(opr: NEPOperator, k: int,
                         settings: NewtonSettings | None = None,
                         lambda0: float = 0.0,
                         v0: np.ndarray | None = None,
                         ladder=None,
                         start_offsets=DEFAULT_START_OFFSETS) -> KEigenpairsResult:
    """Compute k eigenpairs sequentially with deflation.

    Starting points: the j-th solve starts from ladder[j] when a ladder of
    targets is supplied; otherwise from the last accepted eigenvalue plus an
    escalating offset (retrying the next offset on failure).  Per-pair
    failures are recorded and partial results returned.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    settings = settings or NewtonSettings()
    n = opr.problem.n
    if v0 is None:
        v0 = np.ones(n) / np.sqrt(n)
    pair = InvariantPair.empty(n)
    pairs: list[Eigenpair] = []
    reports: list[SolveReport] = []
    failures: list = []
    lam_prev = float(lambda0)
    for j in range(k):
        defl = DeflatedOperator(opr, pair)
        if ladder is not None and j < len(ladder):
            starts = [float(ladder[j])]
        elif j == 0:
            starts = [lam_prev] + [lam_prev + off * (1.0 + abs(lam_prev))
                                   for off in start_offsets]
        else:
            starts = [lam_prev + off * (1.0 + abs(lam_prev)) for off in start_offsets]
        got = None
        errors = []
        for start in starts:
            opr.ev.reset_state()
            x0 = np.concatenate([v0, np.zeros(pair.p)])
            try:
                got = augmented_newton(defl, start, x0, settings)
                break
            except NEPvError as exc:
                errors.append((start, repr(exc)))
        if got is None:
            failures.append((j, errors))
            break
        eigpair, report = got
        reports.append(report)
        pairs.append(eigpair)
        lam_prev = eigpair.lam
        # extended-problem components from the true eigenvector:
        # u = (lam I - S) X^T v and v_ext = (I - X X^T) v solve the
        # bordered system whenever (lam, v) solves the base problem
        coeffs = pair.X.T @ eigpair.v
        u_part = (eigpair.lam * np.eye(pair.p) - pair.S) @ coeffs
        v_ext = eigpair.v - pair.X @ coeffs
        if np.linalg.norm(v_ext) <= 1e-8 * np.linalg.norm(eigpair.v):
            failures.append((j, [(eigpair.lam, "eigenvector already in deflated span")]))
            break
        try:
            pair = expand_pair(pair, eigpair.lam, v_ext, u_part)
        except MinimalityLost as exc:
            failures.append((j, [(eigpair.lam, repr(exc))]))
            break
    pairs.sort(key=lambda e: e.lam)
    return KEigenpairsResult(pairs=pairs, reports=reports,
                             invariant_pair=pair, failures=failures)


def save_invariant_pair(pair: InvariantPair, prefix) -> None:
    """X as Matrix Market, S dense in a JSON sidecar."""
    from scipy.io import mmwrite

    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    mmwrite(str(prefix) + "_X.mtx", np.asarray(pair.X))
    with open(str(prefix) + "_S.json", "w") as fh:
        json.dump({"S": pair.S.tolist(), "eigenvalues": np.diag(pair.S).tolist()}, fh,
                  indent=2)


def load_invariant_pair(prefix) -> InvariantPair:
    from scipy.io import mmread

    prefix = Path(prefix)
    X = np.asarray(mmread(str(prefix) + "_X.mtx"))
    with open(str(prefix) + "_S.json") as fh:
        S = np.asarray(json.load(fh)["S"], dtype=float)
    return InvariantPair(X=X, S=S)
