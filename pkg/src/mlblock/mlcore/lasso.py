"""Lasso by cyclic coordinate descent, and Post-Lasso importance weights.

The objective is the unnormalized ``||y - X b||^2 + lam * ||b||_1`` with an
unpenalized intercept, so every coefficient is exactly zero once
``lam >= 2 * max_k |x_k' (y - mean(y))|``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..errors import DidNotConverge, NonStandardized, SingularDesign

MAX_SWEEPS = 100_000
TOL = 1e-8
GAP_TOL = 1e-12  # duality gap relative to ||y - mean(y)||^2
GAP_EVERY = 10
POLISH_EVERY = 50


@dataclass(frozen=True, eq=False)
class LinearModel:
    intercept: float
    coefficients: np.ndarray
    lam: float

    @property
    def selected(self) -> tuple[int, ...]:
        return tuple(int(k) for k in np.flatnonzero(self.coefficients != 0.0))

    def predict(self, X) -> np.ndarray:
        return self.intercept + np.asarray(X, dtype=float) @ self.coefficients


@dataclass(frozen=True, eq=False)
class ImportanceWeights:
    """Nonnegative weight per selected feature index."""

    weights: dict

    def vector(self, K: int) -> np.ndarray:
        w = np.zeros(K)
        for k, v in self.weights.items():
            w[k] = v
        return w


def lasso_objective(X, y, beta, lam, intercept=None) -> float:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if intercept is None:
        intercept = y.mean()
    r = y - intercept - X @ beta
    return float(r @ r + lam * np.abs(beta).sum())


@numba.njit(cache=True)
def _gap(XT, yc, r, beta, lam):
    """Primal minus dual objective at the rescaled residual (always >= 0)."""
    K, n = XT.shape
    rr = 0.0
    ry = 0.0
    for i in range(n):
        rr += r[i] * r[i]
        ry += r[i] * yc[i]
    corr = 0.0
    l1 = 0.0
    for k in range(K):
        c = 0.0
        for i in range(n):
            c += XT[k, i] * r[i]
        corr = max(corr, abs(c))
        l1 += abs(beta[k])
    s = 1.0 if corr <= 0.5 * lam else 0.5 * lam / corr
    return rr + lam * l1 - (2.0 * s * ry - s * s * rr)


@numba.njit(cache=True)
def _cd(XT, yc, lam, beta, tol, max_sweeps, gap_tol):
    K, n = XT.shape
    col_ss = np.zeros(K)
    r = yc.copy()
    for k in range(K):
        for i in range(n):
            col_ss[k] += XT[k, i] * XT[k, i]
            r[i] -= XT[k, i] * beta[k]
    half = 0.5 * lam
    for sweep in range(max_sweeps):
        max_delta = 0.0
        for k in range(K):
            if col_ss[k] == 0.0:
                continue
            old = beta[k]
            rho = col_ss[k] * old
            for i in range(n):
                rho += XT[k, i] * r[i]
            if rho > half:
                new = (rho - half) / col_ss[k]
            elif rho < -half:
                new = (rho + half) / col_ss[k]
            else:
                new = 0.0
            if new != old:
                step = new - old
                for i in range(n):
                    r[i] -= XT[k, i] * step
                beta[k] = new
                if abs(step) > max_delta:
                    max_delta = abs(step)
        if max_delta < tol:
            return sweep + 1
        # near-collinear columns crawl coordinate-wise; the gap certifies the objective
        if (sweep + 1) % GAP_EVERY == 0 and _gap(XT, yc, r, beta, lam) <= gap_tol:
            return sweep + 1
    return -1


def _check_standardized(X):
    if X.shape[0] and np.any(np.abs(X.mean(axis=0)) > 1e-6):
        bad = np.flatnonzero(np.abs(X.mean(axis=0)) > 1e-6).tolist()
        raise NonStandardized(f"columns {bad} are not centered")


def _polish(X, yc, beta, lam):
    """Active-set refinement of a coordinate-descent iterate.

    Coordinate descent crawls along nearly collinear columns. On a fixed
    support and sign pattern the objective is quadratic, with minimizer
    solving ``X_A' X_A b = X_A' y - (lam / 2) sign``. Step toward it; if a
    coefficient reaches zero first, stop there, drop it and re-solve.
    Returns ``(beta, exact)``: the objective never increases, and ``exact``
    means the optimality conditions hold.
    """
    beta = beta.copy()
    slack = 1e-9 * (np.abs(X.T @ yc).max() + 1.0)
    while True:
        active = np.flatnonzero(beta)
        if not len(active):
            return beta, False
        XA = X[:, active]
        sign = np.sign(beta[active])
        try:
            target = np.linalg.solve(XA.T @ XA, XA.T @ yc - 0.5 * lam * sign)
        except np.linalg.LinAlgError:
            return beta, False
        cur = beta[active]
        cross = np.sign(target) != sign
        if not cross.any():
            beta[active] = target
            corr = np.abs(X.T @ (yc - XA @ target)).max()
            return beta, bool(corr <= 0.5 * lam + slack)
        t = cur[cross] / (cur[cross] - target[cross])
        step = float(t.min())
        new = cur + step * (target - cur)
        new[np.flatnonzero(cross)[t <= step]] = 0.0
        new[np.sign(new) != sign] = 0.0
        beta[active] = new


def lasso_fit(X, y, lam: float, warm_start=None, tol: float = TOL, max_sweeps: int = MAX_SWEEPS) -> LinearModel:
    """Fit the Lasso on centered/standardized ``X``; the intercept is ``mean(y)``."""
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    _check_standardized(X)
    ybar = float(y.mean())
    yc = y - ybar
    beta = np.zeros(X.shape[1]) if warm_start is None else np.array(warm_start, dtype=float)
    if X.shape[1]:
        XT = np.ascontiguousarray(X.T)
        gap_tol = GAP_TOL * (float(yc @ yc) + 1e-300)
        done = 0
        while True:
            chunk = min(POLISH_EVERY, max_sweeps - done)
            if chunk <= 0:
                raise DidNotConverge(
                    f"lasso did not converge in {max_sweeps} sweeps",
                    objective=lasso_objective(X, y, beta, lam, ybar),
                )
            if _cd(XT, yc, float(lam), beta, tol, chunk, gap_tol) >= 0:
                break
            done += chunk
            beta, exact = _polish(X, yc, beta, lam)
            if exact:
                break
    return LinearModel(intercept=ybar, coefficients=beta, lam=float(lam))


def lambda_max(X, y) -> float:
    y = np.asarray(y, dtype=float)
    if X.shape[1] == 0:
        return 0.0
    return float(2.0 * np.max(np.abs(X.T @ (y - y.mean()))))


def lambda_grid(X, y, n_lambda: int = 30, ratio: float = 1e-3) -> np.ndarray:
    """Log-spaced grid from lambda_max down; descending lambda = rising complexity."""
    lmax = lambda_max(X, y)
    if lmax <= 0:
        return np.array([0.0])
    return np.geomspace(lmax, lmax * ratio, n_lambda)


def post_lasso_importance(X, y, selected) -> ImportanceWeights:
    """|OLS coefficient| of each selected column (OLS with intercept on those columns)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    selected = [int(k) for k in selected]
    if not selected:
        return ImportanceWeights({})
    if len(selected) >= X.shape[0]:
        raise SingularDesign(f"{len(selected)} selected features with n={X.shape[0]}")
    A = np.column_stack([np.ones(X.shape[0]), X[:, selected]])
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise SingularDesign("selected columns are collinear")
    coef = np.linalg.lstsq(A, y, rcond=None)[0][1:]
    return ImportanceWeights({k: float(abs(c)) for k, c in zip(selected, coef)})


def lasso_cv(X, y, plan=None, n_lambda: int = 30, rule: str = "min", seed: int = 0):
    """Lasso on standardized ``X`` with lambda chosen by K-fold CV.

    Each training fold is re-standardized and its lambda rescaled by
    ``n_train / n`` so that penalties stay comparable across sample sizes.
    Returns ``(model, cv_result)``.
    """
    from ..cv import DEFAULT_FOLDS, cv_tune, kfold_split
    from ..dataset import standardize

    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if plan is None:
        plan = kfold_split(n, min(DEFAULT_FOLDS, n), seed)
    grid = list(lambda_grid(X, y, n_lambda))

    class _Fitted:
        def __init__(self, scaler, model):
            self.scaler, self.model = scaler, model

        def predict(self, Xt):
            return self.model.predict(self.scaler.transform(Xt))

    def fitter(lam, Xtr, ytr):
        Ztr, scaler = standardize(Xtr)
        return _Fitted(scaler, lasso_fit(Ztr, ytr, lam * len(ytr) / n))

    result = cv_tune(fitter, X, y, grid, plan, rule)
    return lasso_fit(X, y, result.best), result
