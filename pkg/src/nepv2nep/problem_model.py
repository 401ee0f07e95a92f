"""Problem definition and construction.

The problem class is

    A(v) v = lambda * E v,    v^T B v = 1,
    A(v) = A0 + (a_1^T v)^2 a_1 a_1^T + ... + (a_m^T v)^2 a_m a_m^T,

with A0 symmetric, E and B symmetric positive definite, and the pencil
lambda*E - A0 regular.  Besides direct construction from matrices, this
module builds the two-dimensional grid benchmark: a Dirichlet Laplacian on
[-1,1]^2 with a harmonic + optical-lattice potential and Gaussian coupling
vectors, discretized by second-order finite differences.

Grid ordering is row-major with x fastest:
v = [u(x_1,y_1), ..., u(x_N,y_1), ..., u(x_1,y_N), ..., u(x_N,y_N)]^T.
The trapezoidal quadrature weights collapse to h^2 per interior point on a
Dirichlet-zero grid, so a_i = h^2 * [psi_i at interior grid points].
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InvalidProblem, PencilSingular
from .linalg import (
    PencilFactorization,
    ScaledIdentity,
    assert_spd,
    frob_norm,
    matvec,
    sym_norm_defect,
    to_dense,
)

# centers/amplitudes/widths of the five Gaussians and the potential weights
# used throughout the benchmark runs
DEFAULT_CENTERS = ((0.4, -0.6), (0.6, 0.3), (0.1, 0.6), (-0.5, 0.4), (-0.4, -0.4))
DEFAULT_AMPLITUDE = 45.0
DEFAULT_WIDTH = 6.0


@dataclass(frozen=True)
class GPEConfig:
    """Parameters of the grid benchmark on the square [-1,1]^2.

    N is the number of interior grid points per axis, so h = 2/(N+1) and
    n = N^2.  The potential is
    harmonic_factor*(gamma_x^2 x^2 + gamma_y^2 y^2)
    + lattice_factor*(sin(lattice_frequency x)^2 + sin(lattice_frequency y)^2).
    Width sigma_i = 0 degenerates the i-th Gaussian to the constant c_i.
    """

    N: int = 64
    centers: tuple = DEFAULT_CENTERS
    amplitudes: tuple = (DEFAULT_AMPLITUDE,) * 5
    widths: tuple = (DEFAULT_WIDTH,) * 5
    gamma_x: float = 1.0
    gamma_y: float = 2.0
    harmonic_factor: float = 16.0
    lattice_factor: float = 64.0
    lattice_frequency: float = 4.0 * np.pi

    def __post_init__(self):
        if self.N < 2:
            raise InvalidProblem("GPEConfig.N must be >= 2")
        m = len(self.centers)
        if not (len(self.amplitudes) == len(self.widths) == m) or m < 1:
            raise InvalidProblem("GPEConfig centers/amplitudes/widths lengths differ")
        for cx, cy in self.centers:
            if not (-1.0 < cx < 1.0 and -1.0 < cy < 1.0):
                raise InvalidProblem(f"GPEConfig center ({cx}, {cy}) outside (-1,1)^2")

    @property
    def h(self) -> float:
        return 2.0 / (self.N + 1)

    @property
    def m(self) -> int:
        return len(self.centers)

    def to_json(self) -> str:
        d = asdict(self)
        d["centers"] = [list(c) for c in self.centers]
        d["amplitudes"] = list(self.amplitudes)
        d["widths"] = list(self.widths)
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "GPEConfig":
        d = json.loads(text)
        d["centers"] = tuple(tuple(c) for c in d["centers"])
        d["amplitudes"] = tuple(d["amplitudes"])
        d["widths"] = tuple(d["widths"])
        return cls(**d)


@dataclass(frozen=True)
class NEPvProblem:
    """Validated immutable problem instance.

    Am stacks the nonlinearity vectors columnwise, Am = [a_1, ..., a_m].
    E and B may be dense, sparse, or ScaledIdentity.
    """

    A0: object
    E: object
    B: object
    Am: np.ndarray
    n: int
    m: int

    def a(self, i: int) -> np.ndarray:
        return self.Am[:, i]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.A0)


def _validate(A0, E, B, Am) -> NEPvProblem:
    n = A0.shape[0]
    if A0.shape != (n, n) or E.shape != (n, n) or B.shape != (n, n):
        raise InvalidProblem("A0, E, B must be square with equal dimension")
    Am = np.atleast_2d(np.asarray(Am, dtype=float))
    if Am.shape[0] != n:
        raise InvalidProblem(f"nonlinearity vectors have length {Am.shape[0]}, expected {n}")
    m = Am.shape[1]
    if not (1 <= m <= n):
        raise InvalidProblem(f"need 1 <= m <= n, got m={m}, n={n}")
    defect = sym_norm_defect(A0)
    if defect > 1e-14 * max(frob_norm(A0), 1e-300):
        raise InvalidProblem(f"A0 is not symmetric (defect {defect:.2e})")
    assert_spd(E, "E")
    assert_spd(B, "B")
    # regularity probe: one factorization at a random shift. Probabilistic:
    # a regular pencil is singular only at finitely many lambda values.
    lam0 = float(np.random.default_rng(0x9E3779B9).uniform(0.1, 1.9))
    try:
        PencilFactorization(A0, E, lam0)
    except PencilSingular:
        try:
            PencilFactorization(A0, E, lam0 * np.pi)
        except PencilSingular:
            raise InvalidProblem("pencil lambda*E - A0 appears singular (regularity probe)")
    Am = Am.copy()
    Am.setflags(write=False)
    return NEPvProblem(A0=A0, E=E, B=B, Am=Am, n=n, m=m)


def build_dense_problem(A0, E, B, vectors) -> NEPvProblem:
    """Problem from explicit matrices; vectors is a list of a_i or an n x m array."""
    A0 = np.asarray(A0, dtype=float)
    E = E if isinstance(E, ScaledIdentity) or sp.issparse(E) else np.asarray(E, dtype=float)
    B = B if isinstance(B, ScaledIdentity) or sp.issparse(B) else np.asarray(B, dtype=float)
    if isinstance(vectors, (list, tuple)):
        Am = np.column_stack([np.asarray(v, dtype=float) for v in vectors])
    else:
        Am = np.asarray(vectors, dtype=float)
        if Am.ndim == 1:
            Am = Am[:, None]
    return _validate(A0, E, B, Am)


def gpe_grid(cfg: GPEConfig):
    """Interior grid coordinates in the fixed x-fastest ordering."""
    h = cfg.h
    xs = -1.0 + h * np.arange(1, cfg.N + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    return X.ravel(), Y.ravel()


def build_gpe_problem(cfg: GPEConfig) -> NEPvProblem:
    """Assemble the grid benchmark: A0 = h^2(-L + V), E = B = h^2 I."""
    N, h = cfg.N, cfg.h
    x, y = gpe_grid(cfg)
    D2 = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(N, N)) / h**2
    eye = sp.identity(N)
    L = sp.kron(D2, eye) + sp.kron(eye, D2)
    pot = (
        cfg.harmonic_factor * (cfg.gamma_x**2 * x**2 + cfg.gamma_y**2 * y**2)
        + cfg.lattice_factor
        * (np.sin(cfg.lattice_frequency * x) ** 2 + np.sin(cfg.lattice_frequency * y) ** 2)
    )
    A0 = (h**2 * (-L + sp.diags(pot))).tocsc()
    A0 = ((A0 + A0.T) * 0.5).tocsc()  # kill assembly round-off asymmetry
    Am = np.column_stack(
        [
            h**2 * c * np.exp(-s * ((x - cx) ** 2 + (y - cy) ** 2))
            for (cx, cy), c, s in zip(cfg.centers, cfg.amplitudes, cfg.widths)
        ]
    )
    scaled = ScaledIdentity(h**2, N * N)
    return _validate(A0, scaled, scaled, Am)


@dataclass(frozen=True)
class Eigenpair:
    """One computed eigenpair with its measured mu values and residuals."""

    lam: float
    v: np.ndarray
    mu: np.ndarray
    residual_nepv: float
    residual_nep: float


def apply_A_of_v(p: NEPvProblem, v: np.ndarray) -> np.ndarray:
    """A(v) v without forming any rank-one term: A0 v + Am (mu^3), mu = Am^T v."""
    mu = p.Am.T @ v
    return matvec(p.A0, v) + p.Am @ (mu**3)


def nepv_residual(p: NEPvProblem, pair: Eigenpair) -> float:
    return nepv_relative_residual(p, pair.lam, pair.v)


def nepv_relative_residual(p: NEPvProblem, lam: float, v: np.ndarray) -> float:
    """|| A(v) v - lambda E v || / || v ||, matrix free."""
    nv = np.linalg.norm(v)
    if nv == 0.0:
        raise InvalidProblem("nepv residual undefined for v = 0")
    r = apply_A_of_v(p, v) - lam * matvec(p.E, v)
    return float(np.linalg.norm(r) / nv)


# ---------------------------------------------------------------------------
# serialization: JSON descriptor for GPEConfig, Matrix Market for custom data
# ---------------------------------------------------------------------------

def save_problem_matrix_market(p: NEPvProblem, directory) -> None:
    """Write A0.mtx, E.mtx, B.mtx and the n x m stacked-vectors Am.mtx."""
    from scipy.io import mmwrite

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, M in (("A0", p.A0), ("E", p.E), ("B", p.B)):
        if isinstance(M, ScaledIdentity):
            M = M.scale * sp.identity(M.n, format="coo")
        mmwrite(directory / f"{name}.mtx", sp.coo_matrix(M) if not sp.issparse(M) else M)
    mmwrite(directory / "Am.mtx", np.asarray(p.Am))


def load_problem_matrix_market(directory) -> NEPvProblem:
    from scipy.io import mmread

    directory = Path(directory)
    mats = {}
    for name in ("A0", "E", "B", "Am"):
        path = directory / f"{name}.mtx"
        if not path.exists():
            raise InvalidProblem(f"missing matrix file {path}")
        M = mmread(path)
        mats[name] = M.tocsc() if sp.issparse(M) else np.asarray(M, dtype=float)
    return _validate(mats["A0"], mats["E"], mats["B"], to_dense(mats["Am"]))


# builtin instances used in documentation, tests, and the command line
def paper_2x2_problem() -> NEPvProblem:
    """2x2 single-term instance with eigenvalues near 4.2175 and 174.5385."""
    A0 = np.array([[4.0, 1.0], [1.0, 6.0]])
    return build_dense_problem(A0, np.eye(2), np.eye(2), [np.array([3.0, 2.0])])


def paper_3x3_problem() -> NEPvProblem:
    """3x3 two-term instance with eigenvalues near -1.3447, 19.0165, 46.4337."""
    A0 = np.array([[6.0, 5.0, 4.0], [5.0, 16.0, 23.0], [4.0, 23.0, 20.0]])
    a1 = np.array([2.0, 0.0, 0.0])
    a2 = np.array([0.0, 2.0, 0.0])
    return build_dense_problem(A0, np.eye(3), np.eye(3), [a1, a2])
