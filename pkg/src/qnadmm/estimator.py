"""Scikit-learn estimator facade over the ADMM solver."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .problem import problem_from_data
from .solver import SolverConfig, solve


class AdmmLasso(RegressorMixin, BaseEstimator):
    """l1-regularized least squares fit by proximal ADMM.

    Minimizes ``0.5 * ||X w - y||^2 + tau * ||w||_1`` (no intercept, no
    per-sample scaling of the penalty). The x-subproblem strategy is chosen
    by ``variant``; the quasi-Newton variants avoid factorizing ``X.T X`` and
    suit wide or dense design matrices.

    Parameters
    ----------
    tau : float or "auto"
        l1 weight; "auto" uses ``0.1 * max|X.T y|``.
    beta : float
        Augmented-Lagrangian penalty.
    variant : str
        One of ``opt``, ``spro``, ``ipro``, ``bfgs``, ``lbfgs``, ``bfgs_r``,
        ``lbfgs_r``.
    memory : int
        Pair history length for the limited-memory variants.
    k_bar : int or None
        Iteration after which metric updates freeze (``lbfgs_r``).
    zeta, delta : float or None
        Damped-update parameters (required for ``bfgs_r``).

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
        Fitted coefficients (the sparse ADMM iterate).
    tau_ : float
        The l1 weight actually used.
    n_iter_ : int
        Iterations taken by the solver.
    report_ : IterationReport
        Full residual trajectories and timing splits.
    """

    def __init__(
        self,
        tau="auto",
        beta: float = 1.0,
        variant: str = "lbfgs",
        kappa1: float = 1.01,
        kappa2: float = 0.8,
        kappa3: float = 1.01,
        memory: int = 10,
        k_bar=None,
        zeta=None,
        delta=None,
        alpha: float = 1.0,
        eps_abs: float = 1e-4,
        eps_rel: float = 1e-3,
        max_iter: int = 20000,
    ):
        self.tau = tau
        self.beta = beta
        self.variant = variant
        self.kappa1 = kappa1
        self.kappa2 = kappa2
        self.kappa3 = kappa3
        self.memory = memory
        self.k_bar = k_bar
        self.zeta = zeta
        self.delta = delta
        self.alpha = alpha
        self.eps_abs = eps_abs
        self.eps_rel = eps_rel
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = validate_data(self, X, y, accept_sparse="csc", y_numeric=True, dtype=np.float64)
        tau = None if isinstance(self.tau, str) and self.tau == "auto" else float(self.tau)
        prob = problem_from_data(X, y, beta=self.beta, tau=tau)
        config = SolverConfig(
            variant=self.variant,
            beta=self.beta,
            alpha=self.alpha,
            kappa1=self.kappa1,
            kappa2=self.kappa2,
            kappa3=self.kappa3,
            h=self.memory,
            k_bar=math.inf if self.k_bar is None else self.k_bar,
            zeta=self.zeta,
            delta=self.delta,
            eps_abs=self.eps_abs,
            eps_rel=self.eps_rel,
            max_iter=self.max_iter,
        )
        state, report = solve(prob, config)
        self.coef_ = state.y
        self.tau_ = prob.tau
        self.n_iter_ = report.iterations
        self.report_ = report
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, accept_sparse="csc", reset=False, dtype=np.float64)
        return X @ self.coef_
