"""Variable proximal metrics maintained by quasi-Newton updates.

Three interchangeable metric states back the x-subproblem: a dense inverse
matrix updated by the rank-two BFGS recurrence, a limited-memory pair history
applied through the two-loop recursion, and a damped direct matrix whose
update is shrunk by a summable coefficient sequence and shifted curvature so
that it stays above M + delta*I.

All update operations are pure: they return a new metric value and never
mutate their input, so frozen snapshots are safe to share with diagnostics.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, TextIO

import numpy as np

from .linalg import CholeskyFactor, cholesky

CURVATURE_RTOL = 1e-14
SPECTRAL_CAP = 512


class CurvatureError(ValueError):
    """Curvature s.T l is too small relative to ||s||*||l||."""


@dataclass(frozen=True)
class UpdatePair:
    """Secant pair: iterate difference s and l = M s, with curvature s.T l."""

    s: np.ndarray
    l: np.ndarray
    curvature: float


def make_pair(s: np.ndarray, l: np.ndarray) -> UpdatePair:
    return UpdatePair(s=s, l=l, curvature=float(s @ l))


def _check_curvature(pair: UpdatePair) -> None:
    floor = CURVATURE_RTOL * np.linalg.norm(pair.s) * np.linalg.norm(pair.l)
    if pair.curvature <= floor:
        raise CurvatureError(
            f"curvature breakdown: s.T l = {pair.curvature!r} <= {floor!r} "
            "(near-zero step should have been filtered by the caller)"
        )


@dataclass(frozen=True)
class BfgsMetric:
    """Dense inverse metric H, seeded as H0 = (1/xi0) * I."""

    H: np.ndarray
    xi0: float

    @classmethod
    def initial(cls, n: int, xi0: float) -> BfgsMetric:
        if xi0 <= 0.0:
            raise ValueError("xi0 must be > 0")
        return cls(H=np.eye(n) / xi0, xi0=xi0)

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.H @ v


def bfgs_update_H(metric: BfgsMetric, pair: UpdatePair) -> BfgsMetric:
    """Rank-two inverse update; the result maps l back to s exactly.

    Seeding H0 below the inverse of the SPD operator that produced the pairs
    keeps every iterate below it as well, which is what makes the induced
    proximal term positive semidefinite.
    """
    _check_curvature(pair)
    H, s, l, c = metric.H, pair.s, pair.l, pair.curvature
    Hl = H @ l
    coef = (1.0 + float(l @ Hl) / c) / c
    H_next = H - (np.outer(Hl, s) + np.outer(s, Hl)) / c + coef * np.outer(s, s)
    return dataclasses.replace(metric, H=H_next)


def bfgs_update_B(B: np.ndarray, pair: UpdatePair) -> np.ndarray:
    """Direct rank-two update; the result maps s to l exactly."""
    _check_curvature(pair)
    s, l, c = pair.s, pair.l, pair.curvature
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 0.0:
        raise ValueError(f"metric not positive definite: s.T B s = {sBs!r}")
    return B + np.outer(l, l) / c - np.outer(Bs, Bs) / sBs


@dataclass(frozen=True)
class LbfgsMetric:
    """Limited-memory metric: last ``capacity`` pairs over H0 = gamma0 * I.

    Each stored entry is (s_i, l_i, rho_i) with rho_i = 1 / s_i.T l_i; the
    base scale gamma0 is reused for every application (no per-step rescaling).
    """

    gamma0: float
    capacity: int
    history: tuple[tuple[np.ndarray, np.ndarray, float], ...] = ()

    @classmethod
    def initial(cls, gamma0: float, capacity: int) -> LbfgsMetric:
        if gamma0 <= 0.0:
            raise ValueError("gamma0 must be > 0")
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        return cls(gamma0=gamma0, capacity=capacity)


def lbfgs_push(metric: LbfgsMetric, pair: UpdatePair) -> LbfgsMetric:
    """Append a pair, evicting the oldest once capacity is exceeded."""
    _check_curvature(pair)
    entry = (pair.s, pair.l, 1.0 / pair.curvature)
    history = metric.history + (entry,)
    if len(history) > metric.capacity:
        history = history[-metric.capacity:]
    return dataclasses.replace(metric, history=history)


def lbfgs_apply(metric: LbfgsMetric, v: np.ndarray) -> np.ndarray:
    """Two-loop recursion: H_k @ v in O(h n) over the stored pairs."""
    q = np.array(v, dtype=np.float64)
    history = metric.history
    alphas = np.empty(len(history))
    for i in range(len(history) - 1, -1, -1):
        s, l, rho = history[i]
        alphas[i] = rho * float(s @ q)
        q -= alphas[i] * l
    r = metric.gamma0 * q
    for i in range(len(history)):
        s, l, rho = history[i]
        beta = rho * float(l @ r)
        r += (alphas[i] - beta) * s
    return r


def lbfgs_matrix(metric: LbfgsMetric, n: int) -> np.ndarray:
    """Densify the limited-memory operator by applying it to basis vectors."""
    H = np.empty((n, n))
    eye = np.eye(n)
    for j in range(n):
        H[:, j] = lbfgs_apply(metric, eye[:, j])
    return 0.5 * (H + H.T)


@dataclass(frozen=True)
class DampedBMetric:
    """Direct metric under the damped update B += c_k * (pure-BFGS - B).

    The pair's right-hand side is shifted to (M + delta*I) s and the step
    coefficient is c_k = zeta**k, a summable sequence for zeta < 1; together
    they keep B above M + delta*I whenever B0 starts there. ``factor`` caches
    the Cholesky factorization of the current B for the x-subproblem solve.
    """

    B: np.ndarray
    delta: float
    zeta: float
    k: int = 0
    factor: CholeskyFactor | None = None

    @classmethod
    def initial(cls, n: int, scale: float, delta: float, zeta: float) -> DampedBMetric:
        if delta <= 0.0:
            raise ValueError("delta must be > 0")
        if not 0.0 <= zeta < 1.0:
            raise ValueError("zeta must be in [0, 1)")
        return cls(B=scale * np.eye(n), delta=delta, zeta=zeta)


def damped_update(metric: DampedBMetric, s: np.ndarray, m_apply: Callable[[np.ndarray], np.ndarray]) -> DampedBMetric:
    """One damped step with c_k = zeta**k; increments the step counter.

    A coefficient that has underflowed leaves B and its cached factor
    untouched. Callers must filter s = 0 before calling.
    """
    c_k = metric.zeta**metric.k if metric.k > 0 else 1.0
    if c_k < 1e-16:
        return dataclasses.replace(metric, k=metric.k + 1)
    l_shift = m_apply(s) + metric.delta * s
    pair = make_pair(s, l_shift)
    _check_curvature(pair)
    B = metric.B
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 0.0:
        raise ValueError(f"metric not positive definite: s.T B s = {sBs!r}")
    step = np.outer(l_shift, l_shift) / pair.curvature - np.outer(Bs, Bs) / sBs
    return dataclasses.replace(metric, B=B + c_k * step, k=metric.k + 1, factor=None)


def ensure_factor(metric: DampedBMetric) -> DampedBMetric:
    """Return a metric whose Cholesky factor cache is populated."""
    if metric.factor is not None:
        return metric
    return dataclasses.replace(metric, factor=cholesky(metric.B))


def verify_order(H: np.ndarray, M_dense: np.ndarray, tol: float) -> tuple[bool, float]:
    """Spectral check of H <= M^{-1}: returns (pass, min eig of M^{-1} - H).

    O(n^3) diagnostic, refused above ``SPECTRAL_CAP``.
    """
    n = H.shape[0]
    if n > SPECTRAL_CAP:
        raise ValueError(f"spectral check unavailable at this scale (n={n} > {SPECTRAL_CAP})")
    Minv = np.linalg.inv(M_dense)
    Minv = 0.5 * (Minv + Minv.T)
    min_eig = float(np.linalg.eigvalsh(Minv - H).min())
    return min_eig >= -tol, min_eig


def _write_matrix_block(out: TextIO, name: str, mat: np.ndarray) -> None:
    out.write(f"# {name} {mat.shape[0]} {mat.shape[1]}\n")
    for row in mat:
        out.write(" ".join(f"{value:.17g}" for value in row) + "\n")


def _write_vector_block(out: TextIO, name: str, vec: np.ndarray) -> None:
    out.write(f"# {name} {vec.shape[0]}\n")
    out.write(" ".join(f"{value:.17g}" for value in vec) + "\n")


def dump_snapshot(metric, out: TextIO) -> None:
    """Write a plain-text snapshot of a metric for offline spectral analysis."""
    if isinstance(metric, BfgsMetric):
        out.write(f"# bfgs xi0 {metric.xi0:.17g}\n")
        _write_matrix_block(out, "H", metric.H)
    elif isinstance(metric, LbfgsMetric):
        out.write(f"# lbfgs gamma0 {metric.gamma0:.17g} capacity {metric.capacity}\n")
        for i, (s, l, _rho) in enumerate(metric.history):
            _write_vector_block(out, f"s{i}", s)
            _write_vector_block(out, f"l{i}", l)
    elif isinstance(metric, DampedBMetric):
        out.write(f"# damped delta {metric.delta:.17g} zeta {metric.zeta:.17g} k {metric.k}\n")
        _write_matrix_block(out, "B", metric.B)
    else:
        raise TypeError(f"unknown metric type {type(metric)!r}")
