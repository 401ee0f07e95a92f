from fractions import Fraction

import numpy as np
import pytest

from nepv2nep import (
    GHCache,
    PencilSingular,
    build_dense_problem,
    cache_get_or_eval,
    eval_gh,
)
from nepv2nep.linalg import FactorizationCache, SolveCounter, to_dense


def dense_gh(p, lam):
    shifted = lam * to_dense(p.E) - to_dense(p.A0)
    Y = np.linalg.solve(shifted, p.Am)
    return Y.T @ to_dense(p.B) @ Y, p.Am.T @ Y


class TestEvalGH:
    def test_2x2_at_zero_exact_rationals(self, p2):
        gh = eval_gh(p2, 0.0)
        assert gh.H[0, 0] == pytest.approx(float(Fraction(-58, 23)), abs=1e-12)
        assert gh.G[0, 0] == pytest.approx(float(Fraction(281, 529)), abs=1e-12)
        assert gh.solves_used == 1

    def test_consistency_with_closed_form_cube(self, p2):
        # f(0)^3 = 1/G(0) with f from the closed form
        gh = eval_gh(p2, 0.0)
        f0 = (23.0**2 / 281.0) ** (1.0 / 3.0)
        assert f0**3 == pytest.approx(1.0 / gh.G[0, 0], rel=1e-12)

    def test_identity_shift_gives_G_equals_H_squared(self):
        # E = B = I, A0 = 0, lambda = 1: Y = Am, H = Am^T Am, G = H^2... G = Y^T Y
        rng = np.random.default_rng(0)
        Am = rng.standard_normal((6, 2))
        p = build_dense_problem(np.zeros((6, 6)), np.eye(6), np.eye(6), Am)
        gh = eval_gh(p, 1.0)
        assert np.allclose(gh.H, Am.T @ Am, atol=1e-13)
        assert np.allclose(gh.G, gh.H, atol=1e-13)  # G = Am^T Am = H here

    def test_symmetry_and_psd(self, p3):
        for lam in (-3.0, 7.7, 33.3):
            gh = eval_gh(p3, lam)
            assert np.linalg.norm(gh.G - gh.G.T) <= 1e-12 * max(np.linalg.norm(gh.G), 1e-300)
            assert np.linalg.norm(gh.H - gh.H.T) <= 1e-12 * max(np.linalg.norm(gh.H), 1e-300)
            assert np.linalg.eigvalsh(gh.G).min() >= -1e-12 * np.linalg.norm(gh.G)

    def test_h_entries_rational_in_lambda(self, p2):
        # h11(lambda) * det(lambda I - A0) is a polynomial: compare against
        # the dense oracle at random lambda
        rng = np.random.default_rng(1)
        for lam in rng.uniform(-5, 20, size=10):
            if abs(lam**2 - 10 * lam + 23) < 1e-3:
                continue
            gh = eval_gh(p2, lam)
            G_d, H_d = dense_gh(p2, lam)
            assert gh.H[0, 0] == pytest.approx(H_d[0, 0], rel=1e-12)
            assert gh.G[0, 0] == pytest.approx(G_d[0, 0], rel=1e-12)

    def test_solves_used_equals_m(self, p3, gpe16):
        assert eval_gh(p3, 5.0).solves_used == p3.m
        assert eval_gh(gpe16, 90.0).solves_used == gpe16.m

    def test_pencil_singular_raises(self, p2):
        # eigenvalues of A0 are 5 +- sqrt(2)
        lam_star = 5.0 + np.sqrt(2.0)
        with pytest.raises(PencilSingular):
            eval_gh(p2, lam_star)

    def test_sparse_matches_dense(self, gpe16):
        gh = eval_gh(gpe16, 90.0)
        G_d, H_d = dense_gh(gpe16, 90.0)
        assert np.allclose(gh.G, G_d, rtol=1e-10)
        assert np.allclose(gh.H, H_d, rtol=1e-10)


class TestCache:
    def test_second_call_does_zero_solves(self, p3):
        counter = SolveCounter()
        fc = FactorizationCache(p3.A0, p3.E, counter)
        cache = GHCache()
        cache_get_or_eval(cache, p3, 4.5, fact_cache=fc)
        solves_after_first = counter.total_solves
        pair = cache_get_or_eval(cache, p3, 4.5, fact_cache=fc)
        assert counter.total_solves == solves_after_first
        assert cache.hits == 1 and cache.misses == 1
        assert pair.lam == 4.5

    def test_sub_ulp_perturbation_same_key(self, p3):
        cache = GHCache()
        a = cache_get_or_eval(cache, p3, 4.5)
        b = cache_get_or_eval(cache, p3, 4.5 + 1e-18)  # below representable gap
        assert a is b
        assert cache.misses == 1

    def test_distinct_lambda_distinct_entries(self, p3):
        cache = GHCache()
        cache_get_or_eval(cache, p3, 4.5)
        cache_get_or_eval(cache, p3, 4.5 + 1e-6)
        assert len(cache) == 2
        assert cache.misses == 2

    def test_bit_identical_replay(self, p3):
        cache = GHCache()
        a = cache_get_or_eval(cache, p3, np.pi)
        b = cache_get_or_eval(cache, p3, np.pi)
        assert np.array_equal(a.G, b.G) and np.array_equal(a.H, b.H)
