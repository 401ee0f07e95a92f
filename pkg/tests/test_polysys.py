import numpy as np
import pytest

from nepv2nep import (
    Mu2RecoveryUndefined,
    MuSolution,
    NoConvergence,
    PolySystem,
    Provenance,
    SingularJacobian,
    eval_gh,
    jacobian,
    newton_refine,
    residual,
    solve_m1_direct,
    solve_m2_analytic,
)
from nepv2nep.coefficient_eval import GHPair
from nepv2nep.polysys import normalize_sign

from conftest import f_closed_form


def expanded_residual_m2(G, H, mu, retained_row):
    """Term-by-term expansion oracle for the m=2 system."""
    m1, m2 = mu
    r1 = (G[0, 0] * m1**6 + 2 * G[0, 1] * m1**3 * m2**3 + G[1, 1] * m2**6) - 1.0
    k = retained_row
    r2 = H[k, 0] * m1**3 + H[k, 1] * m2**3 - mu[k]
    return np.array([r1, r2])


class TestResidual:
    def test_2x2_closed_form_root(self, p2):
        gh = eval_gh(p2, 0.0)
        sys = PolySystem.from_gh(gh)
        mu1 = np.sqrt(f_closed_form(0.0))
        r = residual(sys, np.array([mu1]))
        assert np.max(np.abs(r)) <= 1e-12

    def test_mu_zero_gives_unit_normalization_defect(self, p3):
        sys = PolySystem.from_gh(eval_gh(p3, 3.0))
        r = residual(sys, np.zeros(2))
        assert r[0] == -1.0
        assert np.all(r[1:] == 0.0)

    def test_matches_expansion_oracle(self, p3):
        rng = np.random.default_rng(5)
        for _ in range(10):
            lam = rng.uniform(-5, 50)
            mu = rng.standard_normal(2)
            gh = eval_gh(p3, lam)
            sys = PolySystem.from_gh(gh)  # retains row 0
            expected = expanded_residual_m2(gh.G, gh.H, mu, 0)
            assert np.allclose(residual(sys, mu), expected, atol=1e-14, rtol=1e-12)

    def test_plus_minus_pairing(self, p3):
        rng = np.random.default_rng(6)
        sys = PolySystem.from_gh(eval_gh(p3, 12.0))
        for _ in range(5):
            mu = rng.standard_normal(2)
            r_pos = residual(sys, mu)
            r_neg = residual(sys, -mu)
            # normalisation row is even in mu, the H rows are odd
            assert r_pos[0] == pytest.approx(r_neg[0], rel=1e-13, abs=1e-15)
            assert np.allclose(r_pos[1:], -r_neg[1:], rtol=1e-13, atol=1e-15)


class TestJacobian:
    def test_finite_difference_agreement(self, p3):
        rng = np.random.default_rng(9)
        for _ in range(20):
            lam = rng.uniform(-5, 50)
            mu = rng.standard_normal(2) * rng.uniform(0.2, 2.0)
            gh = eval_gh(p3, lam)
            sys = PolySystem.from_gh(gh)
            J = jacobian(sys, mu)
            step = 1e-6 * (1.0 + np.linalg.norm(mu))
            J_fd = np.zeros_like(J)
            for j in range(2):
                e = np.zeros(2)
                e[j] = step
                J_fd[:, j] = (residual(sys, mu + e) - residual(sys, mu - e)) / (2 * step)
            assert np.linalg.norm(J - J_fd) <= 1e-6 * max(np.linalg.norm(J), 1.0)

    def test_m1_scalar_formula(self, p2):
        gh = eval_gh(p2, 1.0)
        sys = PolySystem.from_gh(gh)
        mu = np.array([0.7])
        J = jacobian(sys, mu)
        assert J.shape == (1, 1)
        assert J[0, 0] == pytest.approx(6.0 * 0.7**5 * gh.G[0, 0], rel=1e-13)

    def test_structure_at_mu_last_zero(self, p3):
        # with the last variable zero and the last row dropped, the last
        # Jacobian column vanishes entirely
        sys = PolySystem.from_gh(eval_gh(p3, 8.0))
        mu = np.array([1.3, 0.0])
        J = jacobian(sys, mu)
        assert np.allclose(J[:, 1], 0.0, atol=1e-15)
        assert np.linalg.matrix_rank(J) < 2


class TestSolveM2Analytic:
    def test_paper_eigenpair_branch(self, p3):
        # at lambda ~ 19.0165 one branch must match mu = Am^T v from the
        # second reference eigenvector (entries truncated to 4 decimals)
        gh = eval_gh(p3, 19.0165)
        sols = solve_m2_analytic(gh)
        target = np.array([2 * 0.9611, 2 * -0.1575])
        best = min(np.linalg.norm(s.mu - target) for s in sols)
        assert best <= 1e-3 * (1 + np.linalg.norm(target))

    def test_root_count_bounded_by_cubic_degree(self, p3):
        rng = np.random.default_rng(13)
        for lam in rng.uniform(-5, 50, size=25):
            try:
                sols = solve_m2_analytic(eval_gh(p3, lam))
            except Mu2RecoveryUndefined:
                continue
            assert len(sols) <= 3

    def test_all_solutions_meet_residual_bound(self, p3):
        rng = np.random.default_rng(14)
        sys_cache = {}
        for lam in rng.uniform(-5, 50, size=25):
            gh = eval_gh(p3, lam)
            for s in solve_m2_analytic(gh):
                r = residual(PolySystem.from_gh(gh), s.mu)
                assert np.max(np.abs(r)) <= 1e-10
                assert s.provenance is Provenance.ANALYTIC_CUBIC

    def test_h12_zero_raises(self):
        gh = GHPair(lam=0.0, G=np.eye(2), H=np.diag([2.0, 3.0]), solves_used=2)
        with pytest.raises(Mu2RecoveryUndefined):
            solve_m2_analytic(gh)

    def test_alternate_retained_row(self, p3):
        # dropping row 0 instead: solutions still satisfy that reduced system
        gh = eval_gh(p3, 19.0165)
        sols = solve_m2_analytic(gh, retained=(1,))
        assert sols
        sys = PolySystem.from_gh(gh, retained=(1,))
        for s in sols:
            assert np.max(np.abs(residual(sys, s.mu))) <= 1e-10

    def test_sign_normalization(self, p3):
        for s in solve_m2_analytic(eval_gh(p3, 19.0165)):
            nz = s.mu[s.mu != 0.0]
            assert nz[0] >= 0


class TestSolveM1Direct:
    def test_matches_closed_form(self, p2):
        for lam in (0.0, 2.0, 8.0):
            sols = solve_m1_direct(eval_gh(p2, lam))
            assert len(sols) == 1
            assert sols[0].mu_sq[0] == pytest.approx(f_closed_form(lam), rel=1e-10)


class TestNewtonRefine:
    def test_quadratic_reconvergence(self, p3):
        gh = eval_gh(p3, 19.0165)
        sys = PolySystem.from_gh(gh)
        exact = solve_m2_analytic(gh)[0].mu
        rng = np.random.default_rng(21)
        for _ in range(5):
            sol = newton_refine(sys, exact + 1e-3 * rng.standard_normal(2),
                                tol=1e-14, maxit=5)
            assert sol.residual <= 1e-14
            assert np.allclose(normalize_sign(sol.mu), exact, atol=1e-10)

    def test_fixed_point_stays_put(self, p3):
        gh = eval_gh(p3, 19.0165)
        sys = PolySystem.from_gh(gh)
        exact = solve_m2_analytic(gh)[0].mu
        sol = newton_refine(sys, exact, tol=1e-10, maxit=5)
        assert np.allclose(sol.mu, exact, atol=1e-15)

    def test_zero_start_never_false_success(self, p3):
        sys = PolySystem.from_gh(eval_gh(p3, 19.0165))
        with pytest.raises((SingularJacobian, NoConvergence)):
            newton_refine(sys, np.zeros(2), tol=1e-12, maxit=20)


class TestPolySystemValidation:
    def test_wrong_retained_count(self, p3):
        gh = eval_gh(p3, 1.0)
        with pytest.raises(ValueError):
            PolySystem(gh=gh, retained=(0, 1))

    def test_out_of_range_row(self, p3):
        gh = eval_gh(p3, 1.0)
        with pytest.raises(ValueError):
            PolySystem(gh=gh, retained=(5,))
