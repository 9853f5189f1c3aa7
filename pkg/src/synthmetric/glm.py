"""Generalized linear model fitting: logistic IRLS, least squares, multinomial logit."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

SEPARATION_ETA = 30.0


class FitError(RuntimeError):
    pass


class FitWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class GlmFit:
    """Result of a GLM fit.

    For multinomial fits ``coefficients`` and ``standard_errors`` have shape
    ``(K - 1, k)`` (one row per non-reference class) and ``fitted_values`` has
    shape ``(N, K)``. Dropped (aliased) columns carry NaN coefficients.
    For gaussian fits ``deviance`` is the residual sum of squares and
    ``scale`` the residual standard deviation; for the others ``scale`` is 1.
    """

    family: str
    coefficients: np.ndarray
    standard_errors: np.ndarray
    fitted_values: np.ndarray
    converged: bool
    iterations: int
    deviance: float
    separation_flag: bool = False
    scale: float = 1.0
    dropped: tuple[int, ...] = ()


def _as_2d(Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    return Z


def _expit(eta):
    return 0.5 * (1.0 + np.tanh(0.5 * eta))


def _logistic_deviance(y, p):
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = np.where(y > 0, np.log(p), np.log1p(-p))
    return float(-2.0 * ll.sum())


def fit_logistic(Z, y, max_iter: int = 25, tol: float = 1e-8) -> GlmFit:
    """Logistic regression by iteratively reweighted least squares.

    Iterates Newton steps until the largest coefficient update falls below
    ``tol`` (scaled by coefficient size). Because Newton converges
    quadratically the score equations ``Z'(y - p) = 0`` then hold to
    rounding error, so the fitted probabilities average to ``mean(y)``.

    If any final linear predictor exceeds 30 in absolute value the result
    carries ``separation_flag``. Under complete separation Newton steps never
    settle; the fit is then returned after ``max_iter`` steps, flagged rather
    than failed.
    """
    Z = _as_2d(Z)
    y = np.asarray(y, dtype=np.float64)
    N, k = Z.shape
    if y.shape != (N,):
        raise FitError(f"response has shape {y.shape}, expected ({N},)")
    if N <= k:
        raise FitError(f"need more rows than columns (N={N}, k={k})")
    if not np.all((y == 0) | (y == 1)):
        raise FitError("logistic response must be 0/1")
    if y.min() == y.max():
        raise FitError("logistic response contains a single class")

    beta = np.zeros(k)
    eta = np.zeros(N)
    p = np.full(N, 0.5)
    converged = False
    it = 0
    chol = None
    for it in range(1, max_iter + 1):
        w = p * (1.0 - p)
        H = (Z * w[:, None]).T @ Z
        try:
            chol = linalg.cho_factor(H, check_finite=False)
        except linalg.LinAlgError:
            if np.max(np.abs(eta)) > SEPARATION_ETA:
                break
            raise FitError("weighted cross-product matrix is singular") from None
        step = linalg.cho_solve(chol, Z.T @ (y - p), check_finite=False)
        beta = beta + step
        eta = Z @ beta
        p = _expit(eta)
        if np.max(np.abs(step)) <= tol * (1.0 + np.max(np.abs(beta))):
            converged = True
            break
    separated = bool(np.max(np.abs(eta)) > SEPARATION_ETA)
    if separated:
        converged = True
    if not converged:
        warnings.warn(f"logistic IRLS did not converge in {max_iter} iterations", FitWarning,
                      stacklevel=2)

    w = p * (1.0 - p)
    H = (Z * w[:, None]).T @ Z
    try:
        cov = linalg.inv(H, check_finite=False)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except linalg.LinAlgError:
        se = np.full(k, np.nan)
    return GlmFit("binomial", beta, se, p, converged, it, _logistic_deviance(y, p), separated)


def fit_linear(X, y, rtol: float = 1e-10) -> GlmFit:
    """Ordinary least squares with aliased columns dropped.

    Columns whose QR pivot is negligible relative to their norm are dropped
    (with a warning) and get NaN coefficients. Standard errors use the
    unbiased residual variance RSS / (N - rank).
    """
    X = _as_2d(X)
    y = np.asarray(y, dtype=np.float64)
    N, k = X.shape
    if y.shape != (N,):
        raise FitError(f"response has shape {y.shape}, expected ({N},)")
    keep = list(range(k))
    dropped: list[int] = []
    while True:
        sub = X[:, keep]
        q, r = np.linalg.qr(sub)
        diag = np.abs(np.diag(r))
        norms = np.linalg.norm(sub, axis=0)
        bad = np.flatnonzero(diag <= rtol * np.maximum(norms, 1e-300))
        if bad.size == 0:
            break
        j = keep[int(bad[0])]
        dropped.append(j)
        keep.remove(j)
        if not keep:
            raise FitError("all predictor columns are zero")
    if dropped:
        warnings.warn(f"dropped aliased columns {sorted(dropped)} from linear fit", FitWarning,
                      stacklevel=2)
    rank = len(keep)
    if N <= rank:
        raise FitError(f"need more rows than coefficients (N={N}, rank={rank})")
    coef_sub = linalg.solve_triangular(r, q.T @ y, check_finite=False)
    fitted = sub @ coef_sub
    resid = y - fitted
    rss = float(resid @ resid)
    sigma2 = rss / (N - rank)
    rinv = linalg.solve_triangular(r, np.eye(rank), check_finite=False)
    se_sub = np.sqrt(sigma2 * np.sum(rinv**2, axis=1))

    coef = np.full(k, np.nan)
    se = np.full(k, np.nan)
    coef[keep] = coef_sub
    se[keep] = se_sub
    return GlmFit("gaussian", coef, se, fitted, True, 1, rss, False, float(np.sqrt(sigma2)),
                  tuple(sorted(dropped)))


def _softmax(eta_rest: np.ndarray) -> np.ndarray:
    """Class probabilities from (N, K-1) linear predictors; class 0 is the reference."""
    full = np.column_stack([np.zeros(eta_rest.shape[0]), eta_rest])
    full -= full.max(axis=1, keepdims=True)
    e = np.exp(full)
    return e / e.sum(axis=1, keepdims=True)


def multinomial_loglik(X, y, coef: np.ndarray) -> float:
    X = _as_2d(X)
    y = np.asarray(y)
    probs = _softmax(X @ coef.T)
    return float(np.log(probs[np.arange(len(y)), y]).sum())


def fit_multinomial(X, y, n_classes: int | None = None, max_iter: int = 25,
                    tol: float = 1e-8) -> GlmFit:
    """Multinomial logistic regression by Newton-Raphson, reference class 0.

    ``y`` holds integer class codes in ``0..n_classes-1``.
    """
    X = _as_2d(X)
    y = np.asarray(y)
    N, k = X.shape
    if y.shape != (N,):
        raise FitError(f"response has shape {y.shape}, expected ({N},)")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(y == np.round(y)):
            raise FitError("multinomial response must be integer class codes")
        y = y.astype(np.int64)
    K = int(n_classes if n_classes is not None else y.max() + 1)
    if y.min() < 0 or y.max() >= K:
        raise FitError("class code outside 0..n_classes-1")
    counts = np.bincount(y, minlength=K)
    if np.count_nonzero(counts) < 2:
        raise FitError("multinomial response has a single class")
    if counts[0] == 0:
        raise FitError("reference class (first level) is absent from the response")
    if np.any(counts == 0):
        raise FitError(f"classes {np.flatnonzero(counts == 0).tolist()} are absent from the response")
    J = K - 1
    if N <= k:
        raise FitError(f"need more rows than columns (N={N}, k={k})")

    Y = np.zeros((N, K))
    Y[np.arange(N), y] = 1.0
    coef = np.zeros((J, k))
    probs = _softmax(X @ coef.T)
    converged = False
    it = 0
    H = None
    for it in range(1, max_iter + 1):
        grad = ((Y[:, 1:] - probs[:, 1:]).T @ X).ravel()
        H = _multinomial_information(X, probs)
        try:
            chol = linalg.cho_factor(H, check_finite=False)
        except linalg.LinAlgError:
            if it > 1 and np.max(np.abs(eta)) > SEPARATION_ETA:
                break
            raise FitError("multinomial information matrix is singular") from None
        step = linalg.cho_solve(chol, grad, check_finite=False).reshape(J, k)
        coef = coef + step
        eta = X @ coef.T
        probs = _softmax(eta)
        if np.max(np.abs(step)) <= tol * (1.0 + np.max(np.abs(coef))):
            converged = True
            break
    separated = bool(np.max(np.abs(eta)) > SEPARATION_ETA)
    if separated:
        converged = True
    if not converged:
        warnings.warn(f"multinomial fit did not converge in {max_iter} iterations", FitWarning,
                      stacklevel=2)
    H = _multinomial_information(X, probs)
    try:
        se = np.sqrt(np.clip(np.diag(linalg.inv(H, check_finite=False)), 0.0, None)).reshape(J, k)
    except linalg.LinAlgError:
        se = np.full((J, k), np.nan)
    dev = -2.0 * float(np.log(np.clip(probs[np.arange(N), y], 1e-300, None)).sum())
    return GlmFit("multinomial", coef, se, probs, converged, it, dev, separated)


def _multinomial_information(X: np.ndarray, probs: np.ndarray) -> np.ndarray:
    N, k = X.shape
    J = probs.shape[1] - 1
    P = probs[:, 1:]
    H = np.empty((J * k, J * k))
    for a in range(J):
        for b in range(a, J):
            w = P[:, a] * ((1.0 if a == b else 0.0) - P[:, b])
            block = (X * w[:, None]).T @ X
            H[a * k:(a + 1) * k, b * k:(b + 1) * k] = block
            if b != a:
                H[b * k:(b + 1) * k, a * k:(a + 1) * k] = block.T
    return H
