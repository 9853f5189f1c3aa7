"""Synthetic data generators.

``synthesize`` implements sequential conditional synthesis: each column in the
visit order is modelled on the unsynthesized columns plus the columns already
synthesized, using the original data to fit and the partly synthetic data to
predict. The multivariate-normal generators are the correct / incorrect
synthesizers of the simulation studies.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np
from scipy import stats

from . import cart
from .dataset import ColumnSchema, Dataset, SynthesisMask, NUMERIC
from .design import _main_effect_blocks
from .glm import FitError, fit_linear, fit_multinomial

METHODS = ("bootstrap", "parametric_normal", "parametric_rank", "cart")
_MASK64 = (1 << 64) - 1


class SynthesisError(RuntimeError):
    pass


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministically mix ``seed`` with integer keys into an independent 64-bit seed."""
    h = _splitmix64(int(seed) & _MASK64)
    for k in keys:
        h = _splitmix64(h ^ (int(k) & _MASK64))
    return h


def replicate_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))


# -- multivariate normal ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class MvnSpec:
    mean: np.ndarray
    covariance: np.ndarray
    n: int

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise ValueError("covariance matrix is not symmetric")
        if self.n < 1:
            raise ValueError("n must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def equicorrelation(dim: int, rho: float) -> np.ndarray:
    """Unit-variance covariance matrix with every off-diagonal equal to ``rho``."""
    cov = np.full((dim, dim), float(rho))
    np.fill_diagonal(cov, 1.0)
    return cov


def _cholesky(cov: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SynthesisError(f"{what} is not positive definite") from None


def _numeric_dataset(values: np.ndarray, names: Sequence[str], role: str) -> Dataset:
    schema = tuple(ColumnSchema(nm, NUMERIC) for nm in names)
    return Dataset(schema, {nm: values[:, j] for j, nm in enumerate(names)}, role)


def mvn_sample(spec: MvnSpec, rng: np.random.Generator, names: Sequence[str] | None = None,
               role: str = "original") -> Dataset:
    """Draw ``spec.n`` rows as ``mean + L z`` with ``L`` the Cholesky factor."""
    L = _cholesky(spec.covariance, "covariance")
    z = rng.standard_normal((spec.n, spec.dim))
    values = spec.mean + z @ L.T
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(spec.dim)]
    return _numeric_dataset(values, names, role)


def _numeric_matrix(data: Dataset, names: Sequence[str]) -> np.ndarray:
    for nm in names:
        if data.column_schema(nm).is_categorical:
            raise SynthesisError(f"column {nm!r} is categorical; normal synthesis needs numeric data")
    return np.column_stack([data[nm] for nm in names])


def mvn_correct_synthesis(original: Dataset, rng: np.random.Generator) -> Dataset:
    """Draw from a normal with the original's sample mean and sample covariance."""
    X = _numeric_matrix(original, original.names)
    sd = X.std(axis=0)
    if np.any(sd == 0):
        bad = [original.names[j] for j in np.flatnonzero(sd == 0)]
        raise SynthesisError(f"zero-variance columns {bad}: sample covariance is singular")
    cov = np.atleast_2d(np.cov(X, rowvar=False))
    L = _cholesky(cov, "sample covariance")
    z = rng.standard_normal(X.shape)
    values = X.mean(axis=0) + z @ L.T
    return _numeric_dataset(values, original.names, "synthetic")


def mvn_incorrect_synthesis(original: Dataset, rng: np.random.Generator,
                            columns: Sequence[str] | None = None) -> Dataset:
    """Draw each column independently from a normal with its sample mean and sd.

    With ``columns`` given only those columns are replaced (a parametric
    bootstrap of the chosen variables); the rest are copied.
    """
    columns = list(columns) if columns is not None else original.names
    X = _numeric_matrix(original, columns)
    mu = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    values = mu + rng.standard_normal(X.shape) * sd
    return original.replace(role="synthetic", **{nm: values[:, j] for j, nm in enumerate(columns)})


# -- sequential synthesis ---------------------------------------------------

@dataclass(frozen=True)
class SynthesisPlan:
    method: str
    visit_order: tuple[str, ...]
    mask: SynthesisMask
    m: int = 1
    seed: int = 0
    tree_config: cart.TreeConfig = cart.SYNTHESIS_TREE

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown synthesis method {self.method!r}; choose from {METHODS}")
        object.__setattr__(self, "visit_order", tuple(self.visit_order))
        if set(self.visit_order) != set(self.mask.synthesized_columns) or \
                len(set(self.visit_order)) != len(self.visit_order):
            raise ValueError("visit_order must list each synthesized column exactly once")
        if self.m < 1:
            raise ValueError("m must be at least 1")

    @classmethod
    def default(cls, data: Dataset, method: str, m: int = 1, seed: int = 0,
                columns: Sequence[str] | None = None, **kw) -> "SynthesisPlan":
        """Plan visiting ``columns`` (default: all) in schema order."""
        cols = list(columns) if columns is not None else data.names
        order = [nm for nm in data.names if nm in set(cols)]
        return cls(method, tuple(order), SynthesisMask(frozenset(order), m), m, seed, **kw)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "visit_order": list(self.visit_order),
            "synthesized_columns": sorted(self.mask.synthesized_columns),
            "m": self.m,
            "seed": self.seed,
            "tree_config": asdict(self.tree_config),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisPlan":
        tc = cart.TreeConfig(**d["tree_config"]) if "tree_config" in d else cart.SYNTHESIS_TREE
        m = int(d.get("m", 1))
        return cls(d["method"], tuple(d["visit_order"]),
                   SynthesisMask(frozenset(d.get("synthesized_columns", d["visit_order"])), m),
                   m, int(d.get("seed", 0)), tc)


def _predictors(fit_data: Dataset, pred_data: Dataset, names: Sequence[str]):
    """Main-effect matrices (with intercept) for fitting and for prediction.

    Numeric columns are centred and scaled by the fitting data's moments.
    """
    stats_ = {}
    for nm in names:
        if not fit_data.column_schema(nm).is_categorical:
            x = fit_data[nm]
            stats_[nm] = (float(x.mean()), float(x.std()))
    out = []
    for data in (fit_data, pred_data):
        blocks = _main_effect_blocks(data, names, True, stats_)
        cols = [np.ones((data.n, 1))] + [blocks[nm][0] for nm in names]
        out.append(np.hstack(cols))
    return out


def _normal_scores(y: np.ndarray) -> np.ndarray:
    ranks = stats.rankdata(y, method="average")
    return stats.norm.ppf((ranks - 0.5) / y.size)


def _inverse_empirical(y_sorted: np.ndarray, z: np.ndarray) -> np.ndarray:
    n = y_sorted.size
    probs = (np.arange(1, n + 1) - 0.5) / n
    return np.interp(stats.norm.cdf(z), probs, y_sorted)


def _draw_numeric(method, y, Xo, Xs, rng, tree_cfg, cat_flags):
    if method == "cart":
        tree = cart.fit_regression_tree(Xo, y, tree_cfg, categorical=cat_flags)
        return cart.sample_leaves(tree, Xs, rng)
    target = _normal_scores(y) if method == "parametric_rank" else y
    fit = fit_linear(Xo, target)
    coef = np.where(np.isnan(fit.coefficients), 0.0, fit.coefficients)
    draw = Xs @ coef + rng.standard_normal(Xs.shape[0]) * fit.scale
    if method == "parametric_rank":
        return _inverse_empirical(np.sort(y), draw)
    return draw


def _draw_categorical(method, codes, n_levels, Xo, Xs, rng, tree_cfg, cat_flags):
    if method == "cart":
        tree = cart.fit_classification_tree(Xo, codes, tree_cfg, categorical=cat_flags,
                                            n_classes=n_levels)
        return cart.sample_leaves(tree, Xs, rng)
    present = np.flatnonzero(np.bincount(codes, minlength=n_levels))
    u = rng.random(Xs.shape[0])
    if present.size == 1:
        return np.full(Xs.shape[0], present[0], dtype=np.int64)
    local = np.searchsorted(present, codes)
    fit = fit_multinomial(Xo, local, n_classes=present.size)
    probs = _softmax_predict(Xs, fit.coefficients)
    cdf = np.cumsum(probs, axis=1)
    pick = (u[:, None] > cdf[:, :-1]).sum(axis=1)
    return present[pick]


def _softmax_predict(X, coef):
    eta = np.column_stack([np.zeros(X.shape[0]), X @ coef.T])
    eta -= eta.max(axis=1, keepdims=True)
    e = np.exp(eta)
    return e / e.sum(axis=1, keepdims=True)


def _synthesize_one(original: Dataset, plan: SynthesisPlan, rng: np.random.Generator) -> Dataset:
    n = original.n
    if plan.method == "bootstrap":
        cols = {nm: original[nm][rng.integers(0, n, n)] for nm in plan.visit_order}
        return original.replace(role="synthetic", **cols)

    fixed = [nm for nm in original.names if nm not in plan.mask.synthesized_columns]
    current = original.replace(role="synthetic")
    done: list[str] = []
    for nm in plan.visit_order:
        preds = fixed + done
        col = original.column_schema(nm)
        try:
            if plan.method == "cart":
                Xo, cat_flags, _ = (cart.dataset_matrix(original, preds) if preds
                                    else (np.zeros((n, 0)), np.zeros(0, bool), []))
                Xs = cart.dataset_matrix(current, preds)[0] if preds else np.zeros((n, 0))
            else:
                Xo, Xs = _predictors(original, current, preds)
                cat_flags = None
            if col.is_categorical:
                new = _draw_categorical(plan.method, original[nm], len(col.levels), Xo, Xs, rng,
                                        plan.tree_config, cat_flags)
            else:
                new = _draw_numeric(plan.method, original[nm], Xo, Xs, rng, plan.tree_config,
                                    cat_flags)
        except (FitError, np.linalg.LinAlgError, ValueError) as exc:
            raise SynthesisError(f"synthesis of column {nm!r} failed: {exc}") from exc
        current = current.replace(**{nm: new})
        done.append(nm)
    return current


def synthesize(original: Dataset, plan: SynthesisPlan) -> list[Dataset]:
    """Generate ``plan.m`` synthetic replicates, each from its own derived RNG stream."""
    plan.mask.validate(original.schema)
    return [_synthesize_one(original, plan, replicate_rng(plan.seed, i)) for i in range(plan.m)]
