"""Lasso instance model, random generator, and the l1 proximal operator.

An instance is min 0.5*||A x - b||^2 + tau*||x||_1 together with the penalty
beta of its augmented Lagrangian, whose x-block Hessian M = A.T A + beta*I is
only ever applied as an operator here.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .linalg import as_csc, load_matrix_market, matvec, matvec_transpose, save_matrix_market


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a random Lasso instance.

    ``sparsity_s`` is the density of the ground-truth coefficient vector,
    ``density_p`` the density of the data matrix; both draw standard-normal
    values at uniformly chosen distinct positions. tau is set to
    ``tau_factor * max|A.T b|``.
    """

    n: int
    m: int
    sparsity_s: float
    density_p: float
    noise_var: float = 1e-3
    tau_factor: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be >= 1")
        if not 0.0 < self.sparsity_s <= 1.0:
            raise ValueError("sparsity_s must be in (0, 1]")
        if not 0.0 < self.density_p <= 1.0:
            raise ValueError("density_p must be in (0, 1]")
        if self.noise_var < 0.0:
            raise ValueError("noise_var must be >= 0")
        if self.tau_factor <= 0.0:
            raise ValueError("tau_factor must be > 0")


@dataclass(frozen=True, eq=False)
class LassoProblem:
    """Immutable Lasso instance with the cached gradient constant A.T b.

    ``_derived`` memoizes deterministic per-instance quantities (the top
    eigenvalue estimate of A.T A); it is shared across beta re-stamps because
    those quantities do not depend on beta.
    """

    A: sparse.csc_array
    b: np.ndarray
    tau: float
    beta: float
    Atb: np.ndarray
    _derived: dict = dataclasses.field(default_factory=dict, repr=False)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]


def problem_from_data(A, b, beta: float, tau: float | None = None, tau_factor: float = 0.1) -> LassoProblem:
    """Build a problem from raw data; tau defaults to tau_factor * max|A.T b|."""
    A = as_csc(A)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.shape[0],):
        raise ValueError(f"b has shape {b.shape}, expected ({A.shape[0]},)")
    if beta <= 0.0:
        raise ValueError("beta must be > 0")
    Atb = matvec_transpose(A, b)
    if tau is None:
        tau = tau_factor * float(np.abs(Atb).max(initial=0.0))
    if tau <= 0.0:
        raise ValueError("zero regularization: tau must be > 0 (degenerate b)")
    return LassoProblem(A=A, b=b, tau=float(tau), beta=float(beta), Atb=Atb)


def with_beta(prob: LassoProblem, beta: float) -> LassoProblem:
    """Same data and tau, different augmented-Lagrangian penalty."""
    if beta <= 0.0:
        raise ValueError("beta must be > 0")
    return dataclasses.replace(prob, beta=float(beta))


def generate(spec: GeneratorSpec, beta: float = 1.0) -> tuple[LassoProblem, np.ndarray]:
    """Draw a random instance; fully deterministic given ``spec.seed``.

    The ground truth has ceil(s*n) nonzeros at distinct uniform positions, A
    has ceil(p*m*n) nonzeros likewise, b = A @ xbar + gaussian noise, and the
    returned ground truth is for diagnostics only.
    """
    rng = np.random.default_rng(spec.seed)
    n, m = spec.n, spec.m

    nnz_x = math.ceil(spec.sparsity_s * n)
    support = rng.choice(n, size=nnz_x, replace=False)
    xbar = np.zeros(n)
    xbar[support] = rng.standard_normal(nnz_x)

    nnz_a = math.ceil(spec.density_p * m * n)
    if nnz_a == m * n:
        flat = np.arange(m * n, dtype=np.int64)
    else:
        flat = rng.choice(m * n, size=nnz_a, replace=False)
    # Column-major unraveling keeps the layout friendly to the CSC build.
    cols, rows = np.divmod(flat, m)
    values = rng.standard_normal(nnz_a)
    A = sparse.csc_array((values, (rows, cols)), shape=(m, n))

    noise = rng.standard_normal(m)
    b = A @ xbar + math.sqrt(spec.noise_var) * noise
    return problem_from_data(A, b, beta=beta, tau_factor=spec.tau_factor), xbar


def m_apply(prob: LassoProblem, v: np.ndarray) -> np.ndarray:
    """Apply M = A.T A + beta I without materializing A.T A."""
    return matvec_transpose(prob.A, matvec(prob.A, v)) + prob.beta * v


def objective(prob: LassoProblem, x: np.ndarray, y: np.ndarray) -> float:
    """Split objective 0.5*||A x - b||^2 + tau*||y||_1."""
    r = matvec(prob.A, x) - prob.b
    return 0.5 * float(r @ r) + prob.tau * float(np.abs(y).sum())


def soft_threshold(v: np.ndarray, kappa: float) -> np.ndarray:
    """Elementwise shrink toward zero by kappa (prox of kappa*||.||_1)."""
    if kappa < 0.0:
        raise ValueError("kappa must be >= 0")
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


def kkt_residual(prob: LassoProblem, x: np.ndarray) -> float:
    """Max-norm violation of the Lasso stationarity condition at x.

    With g = A.T (A x - b): components with x_i != 0 contribute
    |g_i + tau*sign(x_i)|, zero components contribute max(|g_i| - tau, 0).
    Zero exactly at an optimum.
    """
    x = np.asarray(x, dtype=np.float64)
    g = matvec_transpose(prob.A, matvec(prob.A, x) - prob.b)
    on = x != 0.0
    res = np.where(on, np.abs(g + prob.tau * np.sign(x)), np.maximum(np.abs(g) - prob.tau, 0.0))
    return float(res.max(initial=0.0))


_META_FLOAT_KEYS = ("s", "p", "tau", "beta", "noise_var", "tau_factor")


def save_bundle(directory, prob: LassoProblem, xbar: np.ndarray, spec: GeneratorSpec) -> None:
    """Persist an instance as A.mtx + b.txt/xbar.txt + flat key=value meta."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_matrix_market(directory / "A.mtx", prob.A)
    np.savetxt(directory / "b.txt", prob.b, fmt="%.17g")
    np.savetxt(directory / "xbar.txt", xbar, fmt="%.17g")
    meta = {
        "n": spec.n,
        "m": spec.m,
        "s": spec.sparsity_s,
        "p": spec.density_p,
        "tau": prob.tau,
        "beta": prob.beta,
        "seed": spec.seed,
        "noise_var": spec.noise_var,
        "tau_factor": spec.tau_factor,
    }
    lines = [f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}" for key, value in meta.items()]
    (directory / "meta.txt").write_text("\n".join(lines) + "\n")


def load_bundle(directory) -> tuple[LassoProblem, np.ndarray, dict]:
    """Load an instance bundle written by :func:`save_bundle`."""
    directory = Path(directory)
    meta: dict = {}
    for line in (directory / "meta.txt").read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key in ("n", "m", "seed"):
            meta[key] = int(value)
        elif key in _META_FLOAT_KEYS:
            meta[key] = float(value)
        else:
            meta[key] = value
    A = load_matrix_market(directory / "A.mtx")
    b = np.loadtxt(directory / "b.txt", dtype=np.float64).reshape(-1)
    xbar = np.loadtxt(directory / "xbar.txt", dtype=np.float64).reshape(-1)
    prob = problem_from_data(A, b, beta=meta["beta"], tau=meta["tau"])
    return prob, xbar, meta
