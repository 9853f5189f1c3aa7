"""Independent reference implementations used by the tests."""
from __future__ import annotations

import mpmath
import numpy as np
from scipy import optimize, special


def logistic_mle(Z, y):
    """Maximize the Bernoulli log-likelihood with a quasi-Newton optimizer."""
    def nll(b):
        eta = Z @ b
        return float(np.sum(np.logaddexp(0.0, eta) - y * eta))

    def grad(b):
        return Z.T @ (special.expit(Z @ b) - y)

    res = optimize.minimize(nll, np.zeros(Z.shape[1]), jac=grad, method="BFGS",
                            options={"gtol": 1e-11, "maxiter": 10000})
    return res.x


def multinomial_mle(X, y, K):
    """Maximize the softmax log-likelihood (reference class 0) with BFGS."""
    N, k = X.shape
    Y = np.zeros((N, K))
    Y[np.arange(N), y] = 1.0

    def unpack(b):
        return np.vstack([np.zeros(k), b.reshape(K - 1, k)])

    def nll(b):
        eta = X @ unpack(b).T
        return float(np.sum(special.logsumexp(eta, axis=1) - eta[np.arange(N), y]))

    def grad(b):
        eta = X @ unpack(b).T
        P = special.softmax(eta, axis=1)
        return ((P - Y)[:, 1:].T @ X).ravel()

    res = optimize.minimize(nll, np.zeros((K - 1) * k), jac=grad, method="BFGS",
                            options={"gtol": 1e-11, "maxiter": 20000})
    return res.x.reshape(K - 1, k)


def normal_equations_mp(X, y, dps=50):
    """Least-squares coefficients from the normal equations in extended precision."""
    mpmath.mp.dps = dps
    Xm = mpmath.matrix(X.tolist())
    ym = mpmath.matrix(y.tolist())
    beta = mpmath.lu_solve(Xm.T * Xm, Xm.T * ym)
    return np.array([float(v) for v in beta])


def numeric_hessian(f_grad, b, h=1e-6):
    k = b.size
    H = np.empty((k, k))
    for j in range(k):
        e = np.zeros(k)
        e[j] = h
        H[:, j] = (f_grad(b + e) - f_grad(b - e)) / (2 * h)
    return 0.5 * (H + H.T)


def best_numeric_split(x, y, min_leaf, kind="regression"):
    """Exhaustive scan of every threshold between distinct sorted values."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = xs.size

    def imp(v):
        if kind == "regression":
            return float(((v - v.mean()) ** 2).sum())
        _, c = np.unique(v, return_counts=True)
        return float(v.size - (c ** 2).sum() / v.size)

    parent = imp(ys)
    best = (-np.inf, None)
    for i in range(min_leaf, n - min_leaf + 1):
        if xs[i - 1] == xs[i]:
            continue
        g = parent - imp(ys[:i]) - imp(ys[i:])
        if g > best[0] + 1e-9:
            best = (g, 0.5 * (xs[i - 1] + xs[i]))
    return best
