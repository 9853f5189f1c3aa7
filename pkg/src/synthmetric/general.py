"""General utility: propensity-score mean-squared error and its null distribution.

The pMSE compares the propensity scores of a model that tries to tell
original rows from synthetic rows with the synthetic share ``c``. Its
expectation under correct synthesis is estimated analytically (logistic
models), by permuting the group indicator, or by comparing pairs of
synthetic replicates with each other.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from . import cart
from .dataset import Dataset, SynthesisMask, harmonize_all
from .design import DesignSpec, build_design, stack
from .glm import fit_logistic

NULL_METHODS = ("analytic", "permutation", "pairwise")
MODELS = ("logistic", "cart")
DEFAULT_N_PERMS = 100
EXTREME_THRESHOLD = 0.25

# Which null estimates are valid for which propensity model and synthesis type.
NULL_RULES = ("complete synthesis: logistic -> analytic (theoretical); "
              "cart -> pairwise or permutation. "
              "incomplete synthesis (by columns): logistic -> analytic (theoretical); "
              "cart -> pairwise only.")


class NullMethodError(ValueError):
    """An invalid combination of propensity model, null method and synthesis."""


class UtilityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PropensityModelSpec:
    model: str = "logistic"
    design: DesignSpec = DesignSpec()
    tree_config: cart.TreeConfig = cart.TreeConfig()
    variables: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown propensity model {self.model!r}; choose from {MODELS}")
        if self.variables is not None:
            object.__setattr__(self, "variables", tuple(self.variables))


@dataclass(frozen=True)
class NullEstimate:
    mean: float
    sd: float
    method: str
    effective_df: int | None = None
    replicates: int | None = None


@dataclass(frozen=True, eq=False)
class PropensityFit:
    scores: np.ndarray
    indicator: np.ndarray
    c: float
    pmse: float
    k: int | None = None
    effective_df: int | None = None
    separated: bool = False
    n_splits: int | None = None

    @property
    def extreme_fraction(self) -> float:
        return cart.extreme_score_fraction(self.scores)


@dataclass
class UtilityReport:
    n1: int
    n2: int
    N: int
    c: float
    pmse_per_dataset: list[float]
    pmse: float
    null: NullEstimate
    ratio: float
    standardized: float
    score_diagnostics: float
    model: str
    k: int | None = None
    separated: bool = False
    notes: list[str] = field(default_factory=list)

    def summary_line(self) -> str:
        return f"pMSE={self.pmse:.6g}, ratio={self.ratio:.6g}, standardized={self.standardized:.6g}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["null"] = asdict(self.null)
        return d

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2)

    def to_markdown(self) -> str:
        rows = [
            ("propensity model", self.model),
            ("n1 (original)", self.n1),
            ("n2 (synthetic)", self.n2),
            ("c", f"{self.c:.6g}"),
            ("replicates", len(self.pmse_per_dataset)),
            ("pMSE", f"{self.pmse:.6g}"),
            ("null method", self.null.method),
            ("null mean", f"{self.null.mean:.6g}"),
            ("null sd", f"{self.null.sd:.6g}"),
            ("pMSE ratio", f"{self.ratio:.6g}"),
            ("standardized pMSE", f"{self.standardized:.6g}"),
            ("scores outside [0.05, 0.95]", f"{self.score_diagnostics:.3g}"),
        ]
        if self.null.effective_df is not None:
            rows.insert(7, ("degrees of freedom", self.null.effective_df))
        lines = ["| statistic | value |", "|---|---|"]
        lines += [f"| {a} | {b} |" for a, b in rows]
        lines += [f"\n> {note}" for note in self.notes]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        d = self.to_dict()
        keys = ["model", "n1", "n2", "c", "pmse", "ratio", "standardized", "score_diagnostics"]
        vals = [d[k] for k in keys] + [self.null.method, self.null.mean, self.null.sd]
        keys += ["null_method", "null_mean", "null_sd"]
        return ",".join(keys) + "\n" + ",".join(str(v) for v in vals) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def compute_pmse(scores, c: float) -> float:
    """Mean squared deviation of propensity scores from the synthetic share ``c``."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("empty score vector")
    if not 0.0 < c < 1.0:
        raise ValueError(f"c must lie in (0, 1), got {c}")
    d = scores - c
    return float(d @ d / d.size)


def analytic_null(effective_df: int, n1: int, n2: int) -> NullEstimate:
    """Null pMSE moments for a logistic propensity model with ``effective_df`` predictors.

    The null pMSE is ``(1-c)^2 c / N`` times a chi-squared variable with
    ``effective_df`` degrees of freedom.
    """
    if effective_df < 0:
        raise ValueError("effective_df must be non-negative")
    N = n1 + n2
    c = n2 / N
    unit = (1.0 - c) ** 2 * c / N
    return NullEstimate(effective_df * unit, math.sqrt(2.0 * effective_df) * unit, "analytic",
                        effective_df=int(effective_df))


def check_null_method(model: str, null_method: str, complete: bool, m: int) -> None:
    if null_method not in NULL_METHODS:
        raise NullMethodError(f"unknown null method {null_method!r}; choose from {NULL_METHODS}")
    if null_method == "analytic" and model != "logistic":
        raise NullMethodError(f"the analytic null needs a logistic propensity model. Rule: {NULL_RULES}")
    if null_method == "permutation" and not complete:
        raise NullMethodError("the permutation null is only valid when every column is synthesized: "
                              "permuting the indicator also moves the unsynthesized columns, which "
                              f"contribute nothing to the observed pMSE. Rule: {NULL_RULES}")
    if null_method == "pairwise" and m < 2:
        raise NullMethodError(f"the pairwise null needs at least 2 synthetic replicates, got {m}")


def _tree_scores(original: Dataset, synthetic: Dataset, spec: PropensityModelSpec,
                 indicator=None):
    combined = stack(original, synthetic)
    X, cat_flags, names = cart.dataset_matrix(combined, spec.variables)
    if indicator is None:
        indicator = np.concatenate([np.zeros(original.n), np.ones(synthetic.n)])
    tree = cart.fit_classification_tree(X, indicator.astype(np.int64), spec.tree_config,
                                        categorical=cat_flags, n_classes=2, feature_names=names)
    return cart.training_scores(tree), tree


def propensity_fit(original: Dataset, synthetic: Dataset, spec: PropensityModelSpec = PropensityModelSpec(),
                   mask: SynthesisMask | None = None) -> PropensityFit:
    """Fit the propensity model to stacked data and compute the pMSE."""
    N = original.n + synthetic.n
    c = synthetic.n / N
    if spec.model == "logistic":
        design, indicator = build_design(original, synthetic, spec.design, mask, spec.variables)
        fit = fit_logistic(design.values, indicator)
        return PropensityFit(fit.fitted_values, indicator, c, compute_pmse(fit.fitted_values, c),
                             design.k, design.effective_df, fit.separation_flag)
    scores, tree = _tree_scores(original, synthetic, spec)
    indicator = np.concatenate([np.zeros(original.n), np.ones(synthetic.n)])
    return PropensityFit(scores, indicator, c, compute_pmse(scores, c), n_splits=tree.n_splits)


def permutation_null(original: Dataset, synthetics: Sequence[Dataset],
                     spec: PropensityModelSpec = PropensityModelSpec(),
                     n_perms: int = DEFAULT_N_PERMS, rng: np.random.Generator | None = None,
                     mask: SynthesisMask | None = None) -> NullEstimate:
    """Null pMSE from refits with a shuffled original/synthetic indicator.

    With several replicates each permutation uses one chosen at random.

    A random relabelling treats both groups as independent samples, so the
    difference in group means has variance ``V (1/n1 + 1/n2)``. A synthetic
    set drawn from a model fitted to the original differs from it by only
    ``V / n2``. For logistic models the permutation moments are therefore
    scaled by ``n1 / N = 1 - c``, the same reasoning that halves the pairwise
    null. CART permutation moments are used as they are.
    """
    if n_perms < 20:
        raise ValueError(f"n_perms must be at least 20, got {n_perms}")
    if isinstance(synthetics, Dataset):
        synthetics = [synthetics]
    if mask is not None and not mask.is_complete(original.schema):
        check_null_method(spec.model, "permutation", False, len(synthetics))
    rng = rng if rng is not None else np.random.default_rng(0)
    cache: dict[int, tuple] = {}
    values = np.empty(n_perms)
    for b in range(n_perms):
        r = int(rng.integers(len(synthetics))) if len(synthetics) > 1 else 0
        syn = synthetics[r]
        if r not in cache:
            if spec.model == "logistic":
                design, ind = build_design(original, syn, spec.design, mask, spec.variables)
                cache[r] = (design.values, ind)
            else:
                combined = stack(original, syn)
                X, cat_flags, _ = cart.dataset_matrix(combined, spec.variables)
                ind = np.concatenate([np.zeros(original.n), np.ones(syn.n)])
                cache[r] = (X, ind, cat_flags)
        Z, ind = cache[r][0], cache[r][1]
        perm = rng.permutation(ind)
        c = float(ind.mean())
        if spec.model == "logistic":
            scores = fit_logistic(Z, perm).fitted_values
        else:
            tree = cart.fit_classification_tree(Z, perm.astype(np.int64), spec.tree_config,
                                                categorical=cache[r][2], n_classes=2)
            scores = cart.training_scores(tree)
        values[b] = compute_pmse(scores, c)
    factor = 1.0 - c if spec.model == "logistic" else 1.0
    return NullEstimate(factor * float(values.mean()), factor * float(values.std(ddof=1)),
                        "permutation", replicates=n_perms)


def pairwise_null(synthetics: Sequence[Dataset], spec: PropensityModelSpec = PropensityModelSpec(),
                  original_n1: int | None = None, mask: SynthesisMask | None = None) -> NullEstimate:
    """Null pMSE from all pairs of synthetic replicates.

    For logistic models a pair of replicates differs by twice the variance of
    a replicate against the original, so the pair moments are halved (and
    rescaled to the original/synthetic sizes). For CART models the pair
    moments are used as they are.
    """
    m = len(synthetics)
    if m < 2:
        raise NullMethodError(f"the pairwise null needs at least 2 synthetic replicates, got {m}")
    vals = []
    for i, j in itertools.combinations(range(m), 2):
        a = synthetics[i].replace(role="original")
        vals.append(propensity_fit(a, synthetics[j], spec, mask).pmse)
    vals = np.asarray(vals)
    sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    mean = float(vals.mean())
    if spec.model == "logistic":
        n2 = synthetics[0].n
        n1 = original_n1 if original_n1 is not None else n2
        N, c = n1 + n2, n2 / (n1 + n2)
        Np, cp = 2 * n2, 0.5
        factor = 0.5 * ((1 - c) ** 2 * c / N) / ((1 - cp) ** 2 * cp / Np)
        mean, sd = mean * factor, sd * factor
    return NullEstimate(mean, sd, "pairwise", replicates=int(vals.size))


def general_utility(original: Dataset, synthetics: Sequence[Dataset] | Dataset,
                    spec: PropensityModelSpec = PropensityModelSpec(),
                    null_method: str = "analytic", mask: SynthesisMask | None = None,
                    n_perms: int = DEFAULT_N_PERMS, seed: int = 0,
                    extreme_threshold: float = EXTREME_THRESHOLD) -> UtilityReport:
    """pMSE of each synthetic replicate against the original, with its null and rescalings.

    ``mask`` defaults to complete synthesis. The reported pMSE is the mean over
    replicates; the ratio and standardized pMSE compare it to the null for a
    single synthetic dataset.
    """
    if isinstance(synthetics, Dataset):
        synthetics = [synthetics]
    if not synthetics:
        raise ValueError("no synthetic datasets given")
    original, synthetics = harmonize_all(original, synthetics)
    mask = mask or SynthesisMask.complete(original.schema, len(synthetics))
    mask.validate(original.schema)
    check_null_method(spec.model, null_method, mask.is_complete(original.schema), len(synthetics))

    fits = [propensity_fit(original, syn, spec, mask) for syn in synthetics]
    pmses = [f.pmse for f in fits]
    pmse = float(np.mean(pmses))
    n1, n2 = original.n, synthetics[0].n
    notes = []

    if null_method == "analytic":
        null = analytic_null(fits[0].effective_df, n1, n2)
    elif null_method == "permutation":
        null = permutation_null(original, synthetics, spec, n_perms, np.random.default_rng(seed), mask)
    else:
        null = pairwise_null(synthetics, spec, n1, mask)

    separated = any(f.separated for f in fits)
    if separated:
        notes.append("propensity model separated the groups (scores near 0 or 1); "
                     "the analytic null assumes scores stay away from 0 and 1")
    extreme = float(np.mean([f.extreme_fraction for f in fits]))
    if extreme > extreme_threshold:
        notes.append(f"{extreme:.1%} of propensity scores lie outside [0.05, 0.95]; "
                     "the propensity model may be overfitting, consider simpler tuning")
    if spec.model == "cart" and any(f.n_splits == 0 for f in fits):
        notes.append("a propensity tree made no splits, so every score equals c and the pMSE is 0; "
                     "the tuning parameters probably prevent any discrimination")
    for note in notes:
        warnings.warn(note, UtilityWarning, stacklevel=2)

    ratio = pmse / null.mean if null.mean > 0 else math.nan
    standardized = (pmse - null.mean) / null.sd if null.sd > 0 else math.nan
    return UtilityReport(n1, n2, n1 + n2, n2 / (n1 + n2), pmses, pmse, null, ratio, standardized,
                         extreme, spec.model, fits[0].k, separated, notes)
