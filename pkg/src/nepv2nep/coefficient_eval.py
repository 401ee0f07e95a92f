"""Evaluation of the lambda-parameterized m x m coefficient matrices.

With Y(lambda) = (lambda*E - A0)^{-1} Am, the polynomial system is built from

    H(lambda) = Am^T Y(lambda),
    G(lambda) = Y(lambda)^T B Y(lambda).

One shifted factorization and m triangular solves yield both matrices.  H is
symmetric because (lambda*E - A0)^{-1} is, and G is symmetric positive
semidefinite by its quadratic form.  Evaluations are cached per exact lambda
bit pattern; Newton iterates only repeat lambda across deliberate
re-evaluations, and finite-difference stencil points are distinct keys by
design.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .linalg import FactorizationCache, SolveCounter, lambda_key, matvec
from .problem_model import NEPvProblem


@dataclass(frozen=True)
class GHPair:
    """G(lambda), H(lambda) and the solve count spent producing them."""

    lam: float
    G: np.ndarray
    H: np.ndarray
    solves_used: int

    @property
    def m(self) -> int:
        return self.G.shape[0]


def eval_gh(p: NEPvProblem, lam: float, fact_cache: FactorizationCache | None = None,
            counter: SolveCounter | None = None) -> GHPair:
    """Evaluate G(lambda) and H(lambda) with m linear solves.

    Raises PencilSingular when the shifted factorization breaks down.
    """
    if fact_cache is not None:
        fact = fact_cache.get(lam)
        counter = fact_cache.counter
    else:
        from .linalg import PencilFactorization

        fact = PencilFactorization(p.A0, p.E, lam, counter)
    before = counter.total_solves if counter is not None else None
    Y = fact.solve(np.asarray(p.Am))
    if Y.ndim == 1:
        Y = Y[:, None]
    H = p.Am.T @ Y
    G = Y.T @ matvec(p.B, Y)
    used = (counter.total_solves - before) if before is not None else p.m
    if counter is not None:
        counter.gh_evaluations += 1
    return GHPair(lam=float(lam), G=G, H=H, solves_used=used)


@dataclass
class GHCache:
    """Bit-exact lambda -> GHPair map with hit/miss counters.

    Concurrent reads are safe; inserts take the lock.
    """

    hits: int = 0
    misses: int = 0
    _store: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def get(self, lam) -> GHPair | None:
        return self._store.get(lambda_key(lam))

    def put(self, pair: GHPair) -> None:
        with self._lock:
            self._store.setdefault(lambda_key(pair.lam), pair)

    def __len__(self) -> int:
        return len(self._store)


def cache_get_or_eval(cache: GHCache, p: NEPvProblem, lam: float,
                      fact_cache: FactorizationCache | None = None,
                      counter: SolveCounter | None = None) -> GHPair:
    pair = cache.get(lam)
    if pair is not None:
        cache.hits += 1
        return pair
    cache.misses += 1
    pair = eval_gh(p, lam, fact_cache=fact_cache, counter=counter)
    cache.put(pair)
    return pair
