"""Shared builders for the test suite."""

from functools import lru_cache

import numpy as np
import pytest

from qnadmm import GeneratorSpec, generate


def random_spd(rng: np.random.Generator, n: int, lo: float = 0.5, hi: float = 5.0) -> np.ndarray:
    """Well-conditioned random SPD matrix with eigenvalues in [lo, hi]."""
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    eigs = rng.uniform(lo, hi, n)
    return (Q * eigs) @ Q.T


@lru_cache(maxsize=None)
def desk_problem(seed: int, beta: float = 10.0, n: int = 200, m: int = 100, p: float = 0.5):
    spec = GeneratorSpec(n=n, m=m, sparsity_s=0.1, density_p=p, seed=seed)
    prob, _ = generate(spec, beta=beta)
    return prob


@lru_cache(maxsize=None)
def small_problem(seed: int, beta: float = 5.0, n: int = 24, m: int = 12):
    spec = GeneratorSpec(n=n, m=m, sparsity_s=0.2, density_p=0.5, seed=seed)
    prob, _ = generate(spec, beta=beta)
    return prob


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
