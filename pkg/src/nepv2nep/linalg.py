"""Shared linear-algebra plumbing.

Matrices entering a problem may be dense ndarrays, scipy sparse matrices, or
:class:`ScaledIdentity` (for the c*I mass matrices of the grid benchmark,
which never deserve n x n storage).  Everything downstream goes through the
small dispatch helpers here, and all shifted solves go through
:class:`PencilFactorization` so that triangular-solve counts end up in one
:class:`SolveCounter`.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import cho_factor, lu_factor, lu_solve

from .errors import InvalidProblem, PencilSingular

# pivot ratio below which a shifted factorization is declared singular
PIVOT_RTOL = 1e-13


@dataclass(frozen=True)
class ScaledIdentity:
    """c * I without the storage. Supports the few ops the solvers need."""

    scale: float
    n: int

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def T(self):
        return self

    def __matmul__(self, x):
        return self.scale * x

    def toarray(self):
        return self.scale * np.eye(self.n)

    def diagonal(self):
        return np.full(self.n, self.scale)


def matvec(M, x):
    """M @ x for ndarray, sparse matrix, or ScaledIdentity."""
    if isinstance(M, ScaledIdentity):
        return M.scale * x
    return M @ x


def to_dense(M):
    if isinstance(M, ScaledIdentity):
        return M.toarray()
    if sp.issparse(M):
        return M.toarray()
    return np.asarray(M)


def to_sparse(M):
    if isinstance(M, ScaledIdentity):
        return M.scale * sp.identity(M.n, format="csc")
    if sp.issparse(M):
        return M.tocsc()
    return sp.csc_matrix(M)


def is_sparse_like(M):
    return sp.issparse(M) or isinstance(M, ScaledIdentity)


def sym_norm_defect(M):
    """|| M - M^T ||_F, cheap for all three representations."""
    if isinstance(M, ScaledIdentity):
        return 0.0
    if sp.issparse(M):
        return spla.norm(M - M.T) if M.nnz else 0.0
    M = np.asarray(M)
    return float(np.linalg.norm(M - M.T))


def frob_norm(M):
    if isinstance(M, ScaledIdentity):
        return abs(M.scale) * np.sqrt(M.n)
    if sp.issparse(M):
        return spla.norm(M)
    return float(np.linalg.norm(np.asarray(M)))


def assert_spd(M, name):
    """Raise InvalidProblem unless M is symmetric positive definite.

    Dense matrices get a Cholesky factorization; diagonal-structured input is
    checked directly; large general sparse input falls back to a smallest
    eigenvalue estimate.
    """
    n = M.shape[0]
    if sym_norm_defect(M) > 1e-12 * max(frob_norm(M), 1e-300):
        raise InvalidProblem(f"{name} is not symmetric")
    if isinstance(M, ScaledIdentity):
        if M.scale <= 0:
            raise InvalidProblem(f"{name} scaled identity has nonpositive scale")
        return
    if sp.issparse(M):
        offdiag = M - sp.diags(M.diagonal())
        if offdiag.nnz == 0:
            if np.any(M.diagonal() <= 0):
                raise InvalidProblem(f"{name} diagonal matrix has nonpositive entries")
            return
        if n <= 4096:
            M = M.toarray()
        else:
            try:
                smallest = spla.eigsh(M, k=1, which="SA", return_eigenvectors=False)[0]
            except Exception as exc:  # pragma: no cover - eigsh breakdown
                raise InvalidProblem(f"{name} SPD check failed to converge: {exc}")
            if smallest <= 0:
                raise InvalidProblem(f"{name} is not positive definite")
            return
    try:
        cho_factor(np.asarray(M))
    except np.linalg.LinAlgError:
        raise InvalidProblem(f"{name} is not positive definite")


@dataclass
class SolveCounter:
    """Tally of work units. total_solves counts single-RHS sparse/dense solves."""

    total_solves: int = 0
    smw_solves: int = 0
    gh_evaluations: int = 0
    eigvec_recoveries: int = 0

    def snapshot(self):
        return (self.total_solves, self.smw_solves, self.gh_evaluations,
                self.eigvec_recoveries)


class PencilFactorization:
    """Factorization of lambda*E - A0 with pivot diagnostics and solve counting."""

    def __init__(self, A0, E, lam, counter: SolveCounter | None = None):
        self.lam = float(lam)
        self.counter = counter
        n = A0.shape[0]
        if is_sparse_like(A0) or is_sparse_like(E):
            shifted = (self.lam * to_sparse(E) - to_sparse(A0)).tocsc()
            try:
                self._lu = spla.splu(shifted)
            except RuntimeError as exc:
                raise PencilSingular(self.lam, str(exc))
            diag = np.abs(self._lu.U.diagonal())
            self._dense = False
        else:
            shifted = self.lam * to_dense(E) - to_dense(A0)
            try:
                self._lu = lu_factor(shifted)
            except np.linalg.LinAlgError as exc:
                raise PencilSingular(self.lam, str(exc))
            diag = np.abs(np.diagonal(self._lu[0]))
            self._dense = True
        dmax = diag.max() if n else 1.0
        if dmax == 0.0 or diag.min() <= PIVOT_RTOL * dmax:
            raise PencilSingular(self.lam, f"pivot ratio {diag.min() / max(dmax, 1e-300):.2e}")

    def solve(self, rhs):
        """(lambda*E - A0)^{-1} rhs, counting one solve per RHS column."""
        rhs = np.asarray(rhs)
        ncols = 1 if rhs.ndim == 1 else rhs.shape[1]
        if self.counter is not None:
            self.counter.total_solves += ncols
        if self._dense:
            return lu_solve(self._lu, rhs)
        return self._lu.solve(rhs)


def lambda_key(lam) -> bytes:
    """Cache key: the exact bit pattern of lambda (no rounding)."""
    return np.float64(lam).tobytes()


class FactorizationCache:
    """Small LRU of PencilFactorization objects keyed by lambda bits.

    One factorization per lambda is shared between the coefficient
    evaluation, eigenvector recovery, and the low-rank update solves.
    Reads and inserts are serialized by a lock.
    """

    def __init__(self, A0, E, counter: SolveCounter, maxsize: int = 8):
        self._A0 = A0
        self._E = E
        self.counter = counter
        self.maxsize = maxsize
        self._store: dict[bytes, PencilFactorization] = {}
        self._order: list[bytes] = []
        self._lock = threading.Lock()

    def get(self, lam) -> PencilFactorization:
        key = lambda_key(lam)
        with self._lock:
            if key in self._store:
                self._order.remove(key)
                self._order.append(key)
                return self._store[key]
        fact = PencilFactorization(self._A0, self._E, lam, self.counter)
        with self._lock:
            if key not in self._store:
                self._store[key] = fact
                self._order.append(key)
                while len(self._order) > self.maxsize:
                    self._store.pop(self._order.pop(0), None)
            return self._store[key]


def cond1_estimate(A: np.ndarray) -> float:
    """1-norm condition estimate via LU and LAPACK gecon.

    Exactly singular input yields inf (no warning; singularity is an
    expected outcome for some operator-determinant matrices).
    """
    import warnings

    from scipy.linalg import get_lapack_funcs

    A = np.ascontiguousarray(A)
    anorm = np.linalg.norm(A, 1)
    if anorm == 0.0:
        return np.inf
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            lu, piv = lu_factor(A)
    except np.linalg.LinAlgError:
        return np.inf
    (gecon,) = get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0 or rcond <= 0.0:
        return np.inf
    return 1.0 / rcond


def real_cbrt(x):
    """Real cube root, sign(x) * |x|^(1/3), elementwise."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.abs(x) ** (1.0 / 3.0)
