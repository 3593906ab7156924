"""Runtime verification of the solver's convergence machinery.

Everything here consumes frozen snapshots or traces produced by a finished
solve: stacked optimality residual vectors, block-weighted distances to a
reference solution, and a certificate that the recorded proximal matrices
grew no faster than a summable sequence allows while staying above their
required floor. All checks are O(n^3) per step and meant for diagnostic
problem sizes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import matvec, matvec_transpose
from .problem import LassoProblem
from .solver import SolverConfig, solve

PSD_TOL = 1e-8
NULLSPACE_CUTOFF = 1e-10


class SubgradientRecoveryError(ValueError):
    """Recovered eta_g is not a valid l1 subgradient; signals a solver bug."""


@dataclass(frozen=True)
class KktVector:
    """Stacked optimality residual (eta_f - lam; eta_g + lam; x - y)."""

    grad_f_part: np.ndarray
    subgrad_g_part: np.ndarray
    primal_gap: np.ndarray

    def norm(self) -> float:
        return float(
            np.sqrt(
                self.grad_f_part @ self.grad_f_part
                + self.subgrad_g_part @ self.subgrad_g_part
                + self.primal_gap @ self.primal_gap
            )
        )


def kkt_vector(prob: LassoProblem, state, eta_f: np.ndarray, eta_g: np.ndarray, inclusion_tol: float = 1e-8) -> KktVector:
    """Assemble the stacked residual, checking eta_g against tau*d||y||_1.

    Components of y that are exactly zero admit any eta_g value in
    [-tau, tau]; nonzero components must carry tau*sign(y) exactly (within
    ``inclusion_tol``). A violation raises :class:`SubgradientRecoveryError`.
    """
    x, y, lam = _as_w(state)
    on = y != 0.0
    bad_on = np.abs(eta_g[on] - prob.tau * np.sign(y[on]))
    bad_off = np.abs(eta_g[~on]) - prob.tau
    worst = max(bad_on.max(initial=0.0), bad_off.max(initial=0.0))
    if worst > inclusion_tol:
        raise SubgradientRecoveryError(
            f"subgradient recovery failed: violation {worst!r} exceeds {inclusion_tol!r}"
        )
    return KktVector(grad_f_part=eta_f - lam, subgrad_g_part=eta_g + lam, primal_gap=x - y)


def kkt_vector_from_state(prob: LassoProblem, state, alpha: float = 1.0) -> KktVector:
    """Recover eta_f and eta_g from a completed iteration and assemble F.

    eta_f is the exact least-squares gradient at x; eta_g comes from the
    y-step's optimality identity eta_g = -lam_prev + beta*(x - y), with
    lam_prev reconstructed by undoing the multiplier step.
    """
    x, y, lam = _as_w(state)
    eta_f = matvec_transpose(prob.A, matvec(prob.A, x) - prob.b)
    lam_prev = lam + alpha * prob.beta * (x - y)
    eta_g = -lam_prev + prob.beta * (x - y)
    return kkt_vector(prob, (x, y, lam), eta_f, eta_g)


def _as_w(state) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if hasattr(state, "lam"):
        return state.x, state.y, state.lam
    x, y, lam = state
    return np.asarray(x), np.asarray(y), np.asarray(lam)


def g_distance(state, w_star, T_k: np.ndarray | None, S: np.ndarray | None, beta: float) -> float:
    """Squared block-weighted distance ||w - w*||^2 under diag(T_k, S+beta I, I/beta)."""
    x, y, lam = _as_w(state)
    xs, ys, lams = _as_w(w_star)
    dx, dy, dlam = x - xs, y - ys, lam - lams
    total = float(dy @ dy) * beta + float(dlam @ dlam) / beta
    if T_k is not None:
        total += float(dx @ (T_k @ dx))
    if S is not None:
        total += float(dy @ (S @ dy))
    return total


def reference_solution(prob: LassoProblem, eps: float = 1e-12, max_iter: int = 10**6) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Oracle w* from a tight exact-variant solve; lam* = A.T (A x* - b)."""
    config = SolverConfig(variant="opt", beta=prob.beta, eps_abs=eps, eps_rel=eps, max_iter=max_iter)
    state, report = solve(prob, config)
    if not report.converged:
        raise RuntimeError(f"reference solve did not converge in {max_iter} iterations")
    x_star = state.y.copy()
    lam_star = matvec_transpose(prob.A, matvec(prob.A, x_star) - prob.b)
    return x_star, x_star.copy(), lam_star


@dataclass(frozen=True)
class ConditionCertificate:
    """Empirical certificate for the metric-growth condition.

    ``growth_ok`` records that every consecutive proximal matrix satisfied
    T_next <= (1 + gamma_k) T_k for the smallest measurable gamma_k >= 0;
    ``lower_bound_ok`` that every T_k stayed above the required floor.
    ``Q_estimate`` is the running maximum of the undamped update magnitude.
    """

    gamma_series: np.ndarray
    gamma_sum: float
    growth_ok: bool
    lower_bound_ok: bool
    Q_estimate: float
    first_violation: int | None = None


def _smallest_growth_factor(T_k: np.ndarray, T_next: np.ndarray, tol: float) -> float | None:
    """Smallest gamma >= 0 with T_next <= (1+gamma) T_k, or None if none exists.

    The pencil is restricted to the range of T_k; directions in its null
    space must not pick up positive curvature in T_next beyond ``tol``.
    """
    if np.array_equal(T_k, T_next):
        return 0.0
    w, V = np.linalg.eigh(0.5 * (T_k + T_k.T))
    scale = max(float(w.max()), 0.0)
    cutoff = NULLSPACE_CUTOFF * scale if scale > 0.0 else NULLSPACE_CUTOFF
    range_mask = w > cutoff
    null_space = V[:, ~range_mask]
    if null_space.shape[1]:
        null_block = null_space.T @ T_next @ null_space
        if null_block.size and float(np.linalg.eigvalsh(0.5 * (null_block + null_block.T)).max()) > tol:
            return None
    if not range_mask.any():
        return 0.0
    W = V[:, range_mask] / np.sqrt(w[range_mask])
    C = W.T @ T_next @ W
    mu_max = float(np.linalg.eigvalsh(0.5 * (C + C.T)).max())
    return max(0.0, mu_max - 1.0)


def certify_condition1(
    trace_T,
    mode: str = "damped",
    zeta: float | None = None,
    delta: float | None = None,
    k_bar: int | None = None,
    tol: float = PSD_TOL,
) -> ConditionCertificate:
    """Check a recorded T_k series against the growth and floor requirements.

    ``mode="damped"`` covers the whole trace of a damped-update run: the
    floor is delta*I and the undamped update magnitude is recovered as
    ||T_next - T_k|| / c_k with c_k = zeta**k. ``mode="frozen"`` certifies
    the claim a metric freeze actually makes, i.e. the trace from iteration
    ``k_bar`` onward: every gamma_k must be exactly zero and every matrix
    must stay above the frozen one.
    ``mode="observe"`` runs the same measurements on an unmodified trace
    (pure quasi-Newton runs) purely for reporting; nothing asserts its flags.
    """
    trace_T = [np.asarray(T) for T in trace_T]
    if mode == "damped":
        if zeta is None or delta is None:
            raise ValueError("damped-mode certification requires zeta and delta")
        floors = [delta * np.eye(T.shape[0]) for T in trace_T]
    elif mode == "frozen":
        if k_bar is None:
            raise ValueError("frozen-mode certification requires k_bar")
        trace_T = trace_T[min(k_bar, max(len(trace_T) - 1, 0)):]
        floors = [trace_T[0]] * len(trace_T) if trace_T else []
    elif mode == "observe":
        floors = [np.zeros_like(T) for T in trace_T]
    else:
        raise ValueError(f"unknown mode {mode!r}")

    first_violation = None
    lower_bound_ok = True
    for k, (T, floor) in enumerate(zip(trace_T, floors)):
        if T is floor:
            continue
        shifted = T - floor
        if float(np.linalg.eigvalsh(0.5 * (shifted + shifted.T)).min()) < -tol:
            lower_bound_ok = False
            if first_violation is None:
                first_violation = k
            break

    gammas = []
    growth_ok = True
    q_estimate = 0.0
    for k in range(len(trace_T) - 1):
        T_k, T_next = trace_T[k], trace_T[k + 1]
        diff_norm = float(np.linalg.norm(T_next - T_k, 2))
        if mode == "damped":
            c_k = zeta**k if k > 0 else 1.0
            if c_k >= 1e-16:
                q_estimate = max(q_estimate, diff_norm / c_k)
        else:
            q_estimate = max(q_estimate, diff_norm)
        gamma = _smallest_growth_factor(T_k, T_next, tol)
        if gamma is None or (mode == "frozen" and gamma != 0.0):
            growth_ok = False
            if first_violation is None:
                first_violation = k
        gammas.append(np.inf if gamma is None else gamma)

    gamma_series = np.asarray(gammas)
    return ConditionCertificate(
        gamma_series=gamma_series,
        gamma_sum=float(gamma_series.sum()),
        growth_ok=growth_ok,
        lower_bound_ok=lower_bound_ok,
        Q_estimate=q_estimate,
        first_violation=first_violation,
    )


def mu_ratio_series(prob: LassoProblem, iterates, T_series, alpha: float = 1.0) -> np.ndarray:
    """Empirical per-step ratio ||F_next||^2 / (||u_next - u||^2_D + ||x_next - y||^2).

    Both sides are second order in the step, so the running maximum is a
    stable estimate of the constant bounding the stacked residual by the
    squared step; it is observational only.
    """
    ratios = []
    for k in range(len(iterates) - 1):
        x, y, _lam = iterates[k]
        x_next, y_next, lam_next = iterates[k + 1]
        F = kkt_vector_from_state(prob, (x_next, y_next, lam_next), alpha=alpha)
        dx = x_next - x
        T_k = T_series[k] if T_series is not None else None
        du = float(dx @ (T_k @ dx)) if T_k is not None else 0.0
        gap = x_next - y
        denom = du + float(gap @ gap)
        ratios.append(F.norm() ** 2 / denom if denom > 0 else np.inf)
    return np.asarray(ratios)


def save_series_csv(path, values, name: str = "value") -> None:
    """Write a (step, value) series as CSV for offline plotting."""
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", name])
        for step, value in enumerate(values):
            writer.writerow([step, repr(float(value))])


def save_certificate_csv(path, cert: ConditionCertificate) -> None:
    """Write a certificate's gamma series plus summary rows as CSV."""
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "gamma"])
        for step, value in enumerate(cert.gamma_series):
            writer.writerow([step, repr(float(value))])
        writer.writerow(["gamma_sum", repr(cert.gamma_sum)])
        writer.writerow(["growth_ok", cert.growth_ok])
        writer.writerow(["lower_bound_ok", cert.lower_bound_ok])
        writer.writerow(["Q_estimate", repr(cert.Q_estimate)])
