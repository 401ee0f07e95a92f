import json

import numpy as np
import pytest
import scipy.sparse as sp

from nepv2nep import (
    Eigenpair,
    GPEConfig,
    InvalidProblem,
    ScaledIdentity,
    build_dense_problem,
    build_gpe_problem,
    load_problem_matrix_market,
    nepv_relative_residual,
    nepv_residual,
    paper_2x2_problem,
    paper_3x3_problem,
    save_problem_matrix_market,
)
from nepv2nep.linalg import to_dense
from nepv2nep.problem_model import apply_A_of_v, gpe_grid


def dense_A_of_v(p, v):
    A = to_dense(p.A0).copy()
    for i in range(p.m):
        a = p.Am[:, i]
        A += (a @ v) ** 2 * np.outer(a, a)
    return A


class TestBuildDense:
    def test_paper_2x2(self):
        p = paper_2x2_problem()
        assert p.n == 2 and p.m == 1
        assert np.allclose(to_dense(p.A0), [[4, 1], [1, 6]])
        assert np.allclose(p.Am[:, 0], [3, 2])

    def test_paper_3x3(self):
        p = paper_3x3_problem()
        assert p.n == 3 and p.m == 2
        assert np.allclose(to_dense(p.A0), [[6, 5, 4], [5, 16, 23], [4, 23, 20]])

    def test_rejects_non_spd_E(self):
        with pytest.raises(InvalidProblem, match="E"):
            build_dense_problem(np.eye(2), -np.eye(2), np.eye(2), [np.ones(2)])

    def test_rejects_asymmetric_A0(self):
        A0 = np.array([[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(InvalidProblem, match="symmetric"):
            build_dense_problem(A0, np.eye(2), np.eye(2), [np.ones(2)])

    def test_rejects_bad_m(self):
        with pytest.raises(InvalidProblem, match="m"):
            build_dense_problem(np.eye(2), np.eye(2), np.eye(2),
                                np.ones((2, 3)))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(InvalidProblem):
            build_dense_problem(np.eye(2), np.eye(3), np.eye(2), [np.ones(2)])


class TestGPEAssembly:
    def test_hand_built_n2(self):
        # N=2, zero potential, one constant coupling function of amplitude c:
        # A0 = -h^2 L with L having -4/h^2 on the diagonal and 1/h^2 on
        # neighbor links; a1 = h^2 c * ones.
        c = 1.7
        cfg = GPEConfig(N=2, centers=((0.0, 0.0),), amplitudes=(c,), widths=(0.0,),
                        harmonic_factor=0.0, lattice_factor=0.0)
        p = build_gpe_problem(cfg)
        h = 2.0 / 3.0
        expected = np.array([
            [4.0, -1.0, -1.0, 0.0],
            [-1.0, 4.0, 0.0, -1.0],
            [-1.0, 0.0, 4.0, -1.0],
            [0.0, -1.0, -1.0, 4.0],
        ])
        assert np.allclose(to_dense(p.A0), expected, atol=1e-14)
        assert isinstance(p.E, ScaledIdentity) and p.E.scale == pytest.approx(h**2)
        assert np.allclose(p.Am[:, 0], h**2 * c)

    def test_paper_scale_dimensions(self):
        p = build_gpe_problem(GPEConfig(N=256))
        assert p.n == 256**2 == 65536
        assert p.m == 5

    def test_A0_symmetric_and_laplacian_psd(self, gpe16):
        A0 = gpe16.A0
        assert (A0 - A0.T).nnz == 0 or abs(A0 - A0.T).max() < 1e-14
        # -L is diagonally dominant with positive diagonal (Gershgorin)
        cfg = GPEConfig(N=16, harmonic_factor=0.0, lattice_factor=0.0)
        pL = build_gpe_problem(cfg)
        L_only = to_dense(pL.A0)
        diag = np.diag(L_only)
        off = np.sum(np.abs(L_only), axis=1) - np.abs(diag)
        assert np.all(diag > 0)
        assert np.all(diag >= off - 1e-12)

    def test_gaussian_entries_positive(self, gpe16):
        assert np.all(gpe16.Am > 0)

    def test_grid_ordering_x_fastest(self):
        cfg = GPEConfig(N=3)
        x, y = gpe_grid(cfg)
        # x changes every entry, y every N entries
        assert np.allclose(x[:3], [-0.5, 0.0, 0.5])
        assert np.allclose(y[:3], [-0.5, -0.5, -0.5])
        assert y[3] == pytest.approx(0.0)

    def test_config_validation(self):
        with pytest.raises(InvalidProblem):
            GPEConfig(N=1)
        with pytest.raises(InvalidProblem):
            GPEConfig(centers=((1.5, 0.0),), amplitudes=(1.0,), widths=(1.0,))


class TestResidual:
    def test_linear_limit_is_zero(self):
        # Am -> 0 vectors: residual at a pencil eigenpair vanishes
        rng = np.random.default_rng(3)
        A0 = rng.standard_normal((5, 5))
        A0 = A0 + A0.T
        p = build_dense_problem(A0, np.eye(5), np.eye(5), [np.zeros(5)])
        lam, V = np.linalg.eigh(A0)
        pair = Eigenpair(lam=lam[2], v=V[:, 2], mu=np.zeros(1),
                         residual_nepv=np.nan, residual_nep=np.nan)
        assert nepv_residual(p, pair) < 1e-13

    def test_matches_dense_oracle(self, p3):
        rng = np.random.default_rng(7)
        for _ in range(10):
            v = rng.standard_normal(3)
            lam = rng.uniform(-10, 60)
            r_mf = nepv_relative_residual(p3, lam, v)
            r_dense = np.linalg.norm(dense_A_of_v(p3, v) @ v - lam * v) / np.linalg.norm(v)
            assert r_mf == pytest.approx(r_dense, abs=1e-14, rel=1e-12)

    def test_sign_symmetry(self, p3):
        rng = np.random.default_rng(11)
        v = rng.standard_normal(3)
        lam = 5.0
        assert nepv_relative_residual(p3, lam, v) == pytest.approx(
            nepv_relative_residual(p3, lam, -v), rel=1e-13)

    def test_apply_A_matches_dense(self, gpe16):
        rng = np.random.default_rng(2)
        v = rng.standard_normal(gpe16.n)
        assert np.allclose(apply_A_of_v(gpe16, v), dense_A_of_v(gpe16, v) @ v,
                           rtol=1e-12, atol=1e-12)


class TestSerialization:
    def test_gpe_config_json_roundtrip(self):
        cfg = GPEConfig(N=10)
        back = GPEConfig.from_json(cfg.to_json())
        assert back == cfg
        d = json.loads(cfg.to_json())
        assert d["N"] == 10 and len(d["centers"]) == 5

    def test_matrix_market_roundtrip(self, tmp_path, p3):
        save_problem_matrix_market(p3, tmp_path)
        q = load_problem_matrix_market(tmp_path)
        assert q.n == p3.n and q.m == p3.m
        assert np.allclose(to_dense(q.A0), to_dense(p3.A0))
        assert np.allclose(q.Am, p3.Am)

    def test_matrix_market_sparse_roundtrip(self, tmp_path, gpe16):
        save_problem_matrix_market(gpe16, tmp_path)
        q = load_problem_matrix_market(tmp_path)
        assert q.n == gpe16.n
        assert sp.issparse(q.A0)
        assert np.allclose(to_dense(q.A0), to_dense(gpe16.A0))

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(InvalidProblem, match="missing"):
            load_problem_matrix_market(tmp_path)
