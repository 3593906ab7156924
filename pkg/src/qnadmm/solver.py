"""The ADMM engine: seven x-subproblem strategies around one iterate loop.

Variants
--------
``opt``      exact x-minimization through a cached Cholesky factorization
             (Sherman-Morrison route when the data matrix is fat),
``spro``     fixed positive semidefinite shift xi*I - beta*I - A.T A,
``ipro``     fixed (possibly indefinite) shift xi*I - A.T A,
``bfgs``     dense inverse metric updated by BFGS each iteration,
``lbfgs``    limited-memory metric with the two-loop recursion,
``bfgs_r``   damped direct-metric update (shifted curvature, summable steps),
``lbfgs_r``  limited-memory metric frozen after iteration ``k_bar``.

All variants share the y-step (soft thresholding), the multiplier step, and
the absolute/relative stopping test on the primal residual x - y and dual
residual -beta*(y - y_prev).
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import metric as qn
from .linalg import CholeskyFactor, cholesky, matvec, matvec_transpose, max_eigenvalue_sym, solve_spd
from .problem import LassoProblem, kkt_residual, m_apply, objective, soft_threshold

VARIANTS = ("opt", "spro", "ipro", "bfgs", "lbfgs", "bfgs_r", "lbfgs_r")
_METRIC_VARIANTS = ("bfgs", "lbfgs", "bfgs_r", "lbfgs_r")
ALPHA_MAX = (1.0 + math.sqrt(5.0)) / 2.0
STEP_FILTER_RTOL = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    """Variant selector plus every tunable the variants consume.

    ``kappa1``/``kappa2``/``kappa3`` scale the estimated top eigenvalue into
    the shift xi for spro / ipro / the quasi-Newton seeds respectively.
    ``k_bar`` freezes metric updates after that iteration; ``delta``/``zeta``
    parameterize the damped update and must be given for ``bfgs_r``.
    """

    variant: str
    beta: float
    alpha: float = 1.0
    kappa1: float = 1.01
    kappa2: float = 0.8
    kappa3: float = 1.01
    h: int = 10
    k_bar: float = math.inf
    zeta: float | None = None
    delta: float | None = None
    eps_abs: float = 1e-4
    eps_rel: float = 1e-3
    max_iter: int = 20000
    eig_tol: float = 1e-6
    eig_max_iter: int = 1000
    eig_seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.beta <= 0.0:
            raise ValueError("beta must be > 0")
        if not 0.0 < self.alpha < ALPHA_MAX:
            raise ValueError(f"alpha must lie in (0, {ALPHA_MAX})")
        if self.eps_abs <= 0.0 or self.eps_rel <= 0.0:
            raise ValueError("stopping tolerances must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.variant == "spro" and not self.kappa1 > 1.0:
            raise ValueError("kappa1 must be > 1 for spro")
        if self.variant == "ipro" and not self.kappa2 >= 0.75:
            raise ValueError("kappa2 must be >= 0.75 for ipro")
        if self.variant in _METRIC_VARIANTS and not self.kappa3 >= 0.75:
            raise ValueError("kappa3 must be >= 0.75 for quasi-Newton variants")
        if self.variant in ("lbfgs", "lbfgs_r") and self.h < 1:
            raise ValueError("h must be >= 1")
        if self.variant == "lbfgs_r" and not (math.isfinite(self.k_bar) and self.k_bar >= 1):
            raise ValueError("lbfgs_r requires a finite k_bar >= 1")
        if self.variant == "bfgs_r":
            if self.delta is None or self.zeta is None:
                raise ValueError("bfgs_r requires explicit delta and zeta")
            if self.delta <= 0.0:
                raise ValueError("delta must be > 0")
            if not 0.0 <= self.zeta < 1.0:
                raise ValueError("zeta must be in [0, 1)")
        if math.isfinite(self.k_bar) and self.k_bar < 1:
            raise ValueError("k_bar must be >= 1 (or infinity)")


@dataclass
class AdmmState:
    """Iterate triple plus the previous iterates needed by the residuals."""

    x: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    y_prev: np.ndarray
    x_prev: np.ndarray
    k: int = 0


@dataclass
class IterationReport:
    """Per-run record: trajectories, final quality, and timing splits."""

    iterations: int
    converged: bool
    primal_residuals: np.ndarray
    dual_residuals: np.ndarray
    eps_pri: np.ndarray
    eps_dual: np.ndarray
    objective: float
    kkt_final: float
    time_total: float = 0.0
    time_factor: float = 0.0
    time_eig: float = 0.0
    time_algo: float = 0.0
    time_qn: float = 0.0


@dataclass(frozen=True)
class ExactCholesky:
    """Strategy state for ``opt``: one factorization reused every iteration."""

    factor: CholeskyFactor
    fat_path: bool


@dataclass(frozen=True)
class FixedShift:
    """Strategy state for ``spro``/``ipro``: the scalar shift xi."""

    xi: float
    mode: str


@dataclass
class VariableMetric:
    """Strategy state for the quasi-Newton variants."""

    metric: qn.BfgsMetric | qn.LbfgsMetric | qn.DampedBMetric
    k_bar: float


@dataclass
class SolveTrace:
    """Opt-in per-iteration capture for the diagnostics suite.

    ``iterates`` records (x, y, lam) from the starting point onward;
    ``metrics`` records the dense proximal matrix T_k used at each iteration
    (only sensible at diagnostic scales).
    """

    iterates: bool = False
    metrics: bool = False
    spectral_cap: int = qn.SPECTRAL_CAP
    w: list = field(default_factory=list)
    T: list = field(default_factory=list)


def _gram(A, transpose_first: bool) -> np.ndarray:
    """A A.T or A.T A densely; BLAS beats sparse-sparse above ~25% fill."""
    m, n = A.shape
    if A.nnz > 0.25 * m * n:
        Ad = A.toarray()
        return Ad @ Ad.T if not transpose_first else Ad.T @ Ad
    G = A @ A.T if not transpose_first else A.T @ A
    return G.toarray()


def prepare_exact(prob: LassoProblem) -> ExactCholesky:
    """Factor A.T A + beta I (skinny) or I + (1/beta) A A.T (fat) once."""
    m, n = prob.m, prob.n
    if m < n:
        S = np.eye(m) + _gram(prob.A, transpose_first=False) / prob.beta
        return ExactCholesky(factor=cholesky(S), fat_path=True)
    S = _gram(prob.A, transpose_first=True) + prob.beta * np.eye(n)
    return ExactCholesky(factor=cholesky(S), fat_path=False)


def _rhs(prob: LassoProblem, state: AdmmState) -> np.ndarray:
    return prob.Atb + state.lam + prob.beta * state.y


def x_update_exact(prob: LassoProblem, state: AdmmState, strategy: ExactCholesky) -> np.ndarray:
    """Exact minimizer of the x-subproblem: (A.T A + beta I) x = q."""
    q = _rhs(prob, state)
    if strategy.fat_path:
        Aq = matvec(prob.A, q)
        t = solve_spd(strategy.factor, Aq)
        return q / prob.beta - matvec_transpose(prob.A, t) / prob.beta**2
    return solve_spd(strategy.factor, q)


def x_update_fixed_shift(prob: LassoProblem, state: AdmmState, strategy: FixedShift) -> np.ndarray:
    """Closed-form proximal step for the scalar-shift strategies."""
    x, beta = state.x, prob.beta
    AtAx = matvec_transpose(prob.A, matvec(prob.A, x))
    if strategy.mode == "spro":
        return x - (AtAx - prob.Atb - state.lam + beta * x - beta * state.y) / strategy.xi
    if strategy.mode == "ipro":
        return (state.lam + beta * state.y + strategy.xi * x - AtAx + prob.Atb) / (beta + strategy.xi)
    raise ValueError(f"unknown fixed-shift mode {strategy.mode!r}")


def x_update_metric(prob: LassoProblem, state: AdmmState, metric) -> np.ndarray:
    """Quasi-Newton step x + H_k r with r the augmented-Lagrangian gradient sign-flipped."""
    r = _rhs(prob, state) - m_apply(prob, state.x)
    if isinstance(metric, qn.BfgsMetric):
        return state.x + metric.apply(r)
    if isinstance(metric, qn.LbfgsMetric):
        return state.x + qn.lbfgs_apply(metric, r)
    if isinstance(metric, qn.DampedBMetric):
        if metric.factor is None:
            raise ValueError("damped metric factor cache is empty; call ensure_factor first")
        return state.x + solve_spd(metric.factor, r)
    raise TypeError(f"unknown metric type {type(metric)!r}")


def y_update(prob: LassoProblem, x_new: np.ndarray, state: AdmmState) -> np.ndarray:
    """Soft-threshold step: prox of (tau/beta)*||.||_1 at x_new - lam/beta."""
    return soft_threshold(x_new - state.lam / prob.beta, prob.tau / prob.beta)


def lambda_update(state: AdmmState, x_new: np.ndarray, y_new: np.ndarray, beta: float, alpha: float) -> np.ndarray:
    return state.lam - alpha * beta * (x_new - y_new)


def check_stop(state: AdmmState, eps_abs: float, eps_rel: float, beta: float) -> tuple[bool, float, float, float, float]:
    """Absolute/relative test on the primal and dual residuals at state.k."""
    r = state.x - state.y
    sigma = -beta * (state.y - state.y_prev)
    r_norm = float(np.linalg.norm(r))
    s_norm = float(np.linalg.norm(sigma))
    sqrt_n = math.sqrt(state.x.shape[0])
    eps_pri = sqrt_n * eps_abs + eps_rel * max(np.linalg.norm(state.x), np.linalg.norm(state.y))
    eps_dual = sqrt_n * eps_abs + eps_rel * float(np.linalg.norm(state.lam))
    return (r_norm <= eps_pri and s_norm <= eps_dual), r_norm, s_norm, float(eps_pri), float(eps_dual)


def dense_m(prob: LassoProblem) -> np.ndarray:
    """Materialize M = A.T A + beta I (diagnostic scales only)."""
    return (prob.A.T @ prob.A).toarray() + prob.beta * np.eye(prob.n)


def _estimate_eig(prob: LassoProblem, config: SolverConfig) -> float:
    """Top eigenvalue of A.T A via power iteration on v -> A.T (A v).

    Memoized on the problem instance: the estimate is deterministic and
    beta-independent, and every shifted/metric variant needs it.
    """
    key = ("ata_eig", config.eig_tol, config.eig_max_iter, config.eig_seed)
    if key not in prob._derived:
        prob._derived[key] = max_eigenvalue_sym(
            lambda v: matvec_transpose(prob.A, matvec(prob.A, v)),
            prob.n,
            tol=config.eig_tol,
            max_iter=config.eig_max_iter,
            seed=config.eig_seed,
        )
    return prob._derived[key]


def _prepare_strategy(prob: LassoProblem, config: SolverConfig):
    """Build the variant's strategy state; returns (strategy, t_factor, t_eig)."""
    variant = config.variant
    if variant == "opt":
        t0 = time.perf_counter()
        strategy = prepare_exact(prob)
        return strategy, time.perf_counter() - t0, 0.0

    t0 = time.perf_counter()
    lam_max = _estimate_eig(prob, config)
    t_eig = time.perf_counter() - t0

    if variant == "spro":
        return FixedShift(xi=config.kappa1 * (lam_max + config.beta), mode="spro"), 0.0, t_eig
    if variant == "ipro":
        return FixedShift(xi=config.kappa2 * lam_max, mode="ipro"), 0.0, t_eig

    xi = config.kappa3 * (lam_max + config.beta)
    if variant == "bfgs":
        return VariableMetric(qn.BfgsMetric.initial(prob.n, xi), config.k_bar), 0.0, t_eig
    if variant in ("lbfgs", "lbfgs_r"):
        return VariableMetric(qn.LbfgsMetric.initial(1.0 / xi, config.h), config.k_bar), 0.0, t_eig
    # bfgs_r: seed above M + delta I so the damped update can preserve it.
    t0 = time.perf_counter()
    damped = qn.ensure_factor(qn.DampedBMetric.initial(prob.n, xi + config.delta, config.delta, config.zeta))
    t_factor = time.perf_counter() - t0
    return VariableMetric(damped, config.k_bar), t_factor, t_eig


def _metric_T_dense(prob: LassoProblem, strategy, M: np.ndarray) -> np.ndarray:
    """Dense proximal matrix T_k for the current strategy (diagnostics)."""
    if isinstance(strategy, ExactCholesky):
        return np.zeros((prob.n, prob.n))
    if isinstance(strategy, FixedShift):
        AtA = M - prob.beta * np.eye(prob.n)
        if strategy.mode == "spro":
            return strategy.xi * np.eye(prob.n) - prob.beta * np.eye(prob.n) - AtA
        return strategy.xi * np.eye(prob.n) - AtA
    metric = strategy.metric
    if isinstance(metric, qn.BfgsMetric):
        B = np.linalg.inv(metric.H)
    elif isinstance(metric, qn.LbfgsMetric):
        B = np.linalg.inv(qn.lbfgs_matrix(metric, prob.n))
    else:
        B = metric.B
    B = 0.5 * (B + B.T)
    return B - M


def solve(prob: LassoProblem, config: SolverConfig, trace: SolveTrace | None = None) -> tuple[AdmmState, IterationReport]:
    """Run the configured variant from the zero start until the stopping test.

    Reaching ``max_iter`` is reported (``converged=False``), not raised. When
    a :class:`SolveTrace` is supplied its requested series are filled in
    place; metric traces densify T_k each iteration and are O(n^3) diagnostics.
    """
    if config.beta != prob.beta:
        raise ValueError(
            f"config.beta ({config.beta}) and problem.beta ({prob.beta}) disagree; "
            "re-stamp the problem with with_beta or fix the config"
        )
    t_start = time.perf_counter()
    n = prob.n
    strategy, time_factor, time_eig = _prepare_strategy(prob, config)

    state = AdmmState(
        x=np.zeros(n), y=np.zeros(n), lam=np.zeros(n), y_prev=np.zeros(n), x_prev=np.zeros(n), k=0
    )
    is_metric = isinstance(strategy, VariableMetric)
    M_dense = None
    if trace is not None:
        if trace.iterates:
            trace.w.append((state.x.copy(), state.y.copy(), state.lam.copy()))
        if trace.metrics:
            if n > trace.spectral_cap:
                raise ValueError(f"metric trace unavailable at this scale (n={n} > {trace.spectral_cap})")
            M_dense = dense_m(prob)

    r_norms: list[float] = []
    s_norms: list[float] = []
    eps_pris: list[float] = []
    eps_duals: list[float] = []
    time_qn = 0.0
    converged = False
    loop_start = time.perf_counter()

    while state.k < config.max_iter:
        if is_metric and state.k >= 1 and state.k <= config.k_bar:
            s = state.x - state.x_prev
            if np.linalg.norm(s) > STEP_FILTER_RTOL * (1.0 + np.linalg.norm(state.x)):
                t0 = time.perf_counter()
                metric = strategy.metric
                if isinstance(metric, qn.BfgsMetric):
                    strategy.metric = qn.bfgs_update_H(metric, qn.make_pair(s, m_apply(prob, s)))
                elif isinstance(metric, qn.LbfgsMetric):
                    strategy.metric = qn.lbfgs_push(metric, qn.make_pair(s, m_apply(prob, s)))
                else:
                    strategy.metric = qn.ensure_factor(
                        qn.damped_update(metric, s, lambda v: m_apply(prob, v))
                    )
                time_qn += time.perf_counter() - t0

        if trace is not None and trace.metrics:
            trace.T.append(_metric_T_dense(prob, strategy, M_dense))

        if isinstance(strategy, ExactCholesky):
            x_new = x_update_exact(prob, state, strategy)
        elif isinstance(strategy, FixedShift):
            x_new = x_update_fixed_shift(prob, state, strategy)
        else:
            x_new = x_update_metric(prob, state, strategy.metric)
        y_new = y_update(prob, x_new, state)
        lam_new = lambda_update(state, x_new, y_new, prob.beta, config.alpha)

        state = AdmmState(x=x_new, y=y_new, lam=lam_new, y_prev=state.y, x_prev=state.x, k=state.k + 1)
        if trace is not None and trace.iterates:
            trace.w.append((x_new.copy(), y_new.copy(), lam_new.copy()))

        stop, r_norm, s_norm, eps_pri, eps_dual = check_stop(state, config.eps_abs, config.eps_rel, prob.beta)
        r_norms.append(r_norm)
        s_norms.append(s_norm)
        eps_pris.append(eps_pri)
        eps_duals.append(eps_dual)
        if stop:
            converged = True
            break

    loop_elapsed = time.perf_counter() - loop_start
    report = IterationReport(
        iterations=state.k,
        converged=converged,
        primal_residuals=np.asarray(r_norms),
        dual_residuals=np.asarray(s_norms),
        eps_pri=np.asarray(eps_pris),
        eps_dual=np.asarray(eps_duals),
        objective=objective(prob, state.x, state.y),
        kkt_final=kkt_residual(prob, state.y),
        time_total=time.perf_counter() - t_start,
        time_factor=time_factor,
        time_eig=time_eig,
        time_algo=loop_elapsed - time_qn,
        time_qn=time_qn,
    )
    return state, report
