"""Specific utility: compare a regression fitted to original and synthetic data.

Synthetic estimates are combined over replicates by simple averaging
(coefficients and squared standard errors). Each coefficient is then summarised
by the overlap of the two confidence intervals and by the absolute difference
in coefficients measured in original standard errors.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np
from scipy import stats

from .dataset import Dataset, harmonize_all
from .design import ModelFormula, _aliased_columns, model_matrix, response_vector
from .glm import FitError, FitWarning, fit_linear, fit_logistic, fit_multinomial


class ComparisonError(RuntimeError):
    pass


def interval_overlap(l_o: float, u_o: float, l_s: float, u_s: float) -> float:
    """Average share of each interval covered by their intersection.

    Equals 1 for identical intervals and is negative for disjoint ones, growing
    more negative with the gap between them.
    """
    if not (u_o > l_o and u_s > l_s):
        raise ValueError(f"degenerate interval: ({l_o}, {u_o}) / ({l_s}, {u_s})")
    inter = min(u_o, u_s) - max(l_o, l_s)
    return 0.5 * (inter / (u_o - l_o) + inter / (u_s - l_s))


def standardized_difference(beta_orig: float, beta_syn: float, se_orig: float) -> float:
    """``|beta_orig - beta_syn| / se_orig``."""
    if not se_orig > 0:
        raise ValueError(f"se_orig must be positive, got {se_orig}")
    return abs(beta_orig - beta_syn) / se_orig


@dataclass
class CoefficientComparison:
    term: str
    beta_orig: float
    se_orig: float
    beta_syn: float
    se_syn: float
    ci_orig: tuple[float, float]
    ci_syn: tuple[float, float]
    io: float
    std_diff: float
    available: bool = True


@dataclass
class FitComparison:
    formula: str
    level: float
    m: int
    records: list[CoefficientComparison]
    notes: list[str] = field(default_factory=list)

    def _available(self):
        return [r for r in self.records if r.available]

    @property
    def median_io(self) -> float:
        vals = [r.io for r in self._available()]
        return float(np.median(vals)) if vals else math.nan

    @property
    def median_std_diff(self) -> float:
        vals = [r.std_diff for r in self._available()]
        return float(np.median(vals)) if vals else math.nan

    def to_dict(self) -> dict:
        return {
            "formula": self.formula,
            "level": self.level,
            "m": self.m,
            "median_io": self.median_io,
            "median_std_diff": self.median_std_diff,
            "records": [asdict(r) for r in self.records],
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return None
            if isinstance(x, dict):
                return {k: clean(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [clean(v) for v in x]
            return x
        return json.dumps(clean(self.to_dict()), indent=2)

    def to_markdown(self) -> str:
        lines = [f"Model: `{self.formula}`, {self.level:.0%} intervals, m = {self.m}", "",
                 "| term | beta orig | se orig | beta syn | se syn | IO | std diff |",
                 "|---|---|---|---|---|---|---|"]
        for r in self.records:
            if r.available:
                lines.append(f"| {r.term} | {r.beta_orig:.4g} | {r.se_orig:.4g} | {r.beta_syn:.4g} "
                             f"| {r.se_syn:.4g} | {r.io:.3f} | {r.std_diff:.3f} |")
            else:
                lines.append(f"| {r.term} | {r.beta_orig:.4g} | {r.se_orig:.4g} | n/a | n/a | n/a | n/a |")
        lines += ["", f"median IO = {self.median_io:.4f}, median std diff = {self.median_std_diff:.4f}"]
        lines += [f"\n> {note}" for note in self.notes]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        head = "term,beta_orig,se_orig,beta_syn,se_syn,l_o,u_o,l_s,u_s,io,std_diff,available"
        rows = [head]
        for r in self.records:
            vals = [r.beta_orig, r.se_orig, r.beta_syn, r.se_syn, *r.ci_orig, *r.ci_syn,
                    r.io, r.std_diff]
            rows.append(",".join([r.term] + [repr(float(v)) for v in vals] + [str(r.available)]))
        return "\n".join(rows) + "\n"


@dataclass(frozen=True, eq=False)
class _FormulaFit:
    labels: list[str]
    coefficients: np.ndarray
    standard_errors: np.ndarray


def fit_formula(data: Dataset, formula: ModelFormula) -> _FormulaFit:
    """Fit ``formula`` to ``data``; aliased terms get NaN estimates.

    Multinomial coefficients are flattened as ``level:term`` against the
    first level.
    """
    X, labels = model_matrix(data, formula)
    y = response_vector(data, formula)
    if formula.family == "gaussian":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FitWarning)
            fit = fit_linear(X, y)
        return _FormulaFit(labels, fit.coefficients, fit.standard_errors)

    dropped = _aliased_columns(X)
    keep = [j for j in range(X.shape[1]) if j not in set(dropped)]
    Xk = X[:, keep]
    if formula.family == "binomial":
        fit = fit_logistic(Xk, y)
        if not fit.converged:
            raise FitError("logistic fit did not converge")
        coef = np.full(X.shape[1], np.nan)
        se = np.full(X.shape[1], np.nan)
        coef[keep] = fit.coefficients
        se[keep] = fit.standard_errors
        return _FormulaFit(labels, coef, se)

    levels = data.column_schema(formula.response).levels
    K = len(levels)
    present = np.flatnonzero(np.bincount(y, minlength=K))
    if present[0] != 0:
        raise FitError(f"reference level {levels[0]!r} of {formula.response!r} is absent")
    local = np.searchsorted(present, y)
    fit = fit_multinomial(Xk, local, n_classes=present.size)
    if not fit.converged:
        raise FitError("multinomial fit did not converge")
    coef = np.full((K - 1, X.shape[1]), np.nan)
    se = np.full((K - 1, X.shape[1]), np.nan)
    for row, cls in enumerate(present[1:]):
        coef[cls - 1, keep] = fit.coefficients[row]
        se[cls - 1, keep] = fit.standard_errors[row]
    full_labels = [f"{lev}:{lab}" for lev in levels[1:] for lab in labels]
    return _FormulaFit(full_labels, coef.ravel(), se.ravel())


def compare_fits(original: Dataset, synthetics: Sequence[Dataset] | Dataset, formula: ModelFormula,
                 level: float = 0.95) -> FitComparison:
    """Per-coefficient interval overlap and standardized difference.

    The synthetic estimate is the mean of the replicate coefficients and its
    standard error the square root of the mean squared replicate standard
    error. Wald intervals use the normal quantile. A term that cannot be
    estimated in the original or in any replicate is reported as unavailable.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if isinstance(synthetics, Dataset):
        synthetics = [synthetics]
    if not synthetics:
        raise ValueError("no synthetic datasets given")
    original, synthetics = harmonize_all(original, synthetics)

    def run(data, what):
        try:
            return fit_formula(data, formula)
        except (FitError, np.linalg.LinAlgError) as exc:
            raise ComparisonError(f"model fit failed on {what}: {exc}") from exc

    orig = run(original, "original data")
    syn = [run(s, f"synthetic replicate {i + 1}") for i, s in enumerate(synthetics)]
    q = np.vstack([f.coefficients for f in syn])
    v = np.vstack([f.standard_errors for f in syn]) ** 2
    qbar, vbar = q.mean(axis=0), v.mean(axis=0)
    z = float(stats.norm.ppf(0.5 + level / 2))

    records, notes = [], []
    for j, term in enumerate(orig.labels):
        b_o, s_o, b_s, s_s = orig.coefficients[j], orig.standard_errors[j], qbar[j], math.sqrt(vbar[j])
        ok = bool(np.all(np.isfinite([b_o, s_o, b_s, s_s])) and s_o > 0 and s_s > 0)
        ci_o = (b_o - z * s_o, b_o + z * s_o)
        ci_s = (b_s - z * s_s, b_s + z * s_s)
        if ok:
            io = interval_overlap(*ci_o, *ci_s)
            sd = standardized_difference(b_o, b_s, s_o)
        else:
            io = sd = math.nan
            notes.append(f"term {term!r} could not be estimated in every dataset; comparison unavailable")
        records.append(CoefficientComparison(term, float(b_o), float(s_o), float(b_s), float(s_s),
                                             tuple(map(float, ci_o)), tuple(map(float, ci_s)),
                                             float(io), float(sd), ok))
    return FitComparison(str(formula), level, len(synthetics), records, notes)


def forest_plot_svg(comparison: FitComparison, width: int = 640, row_height: int = 26) -> str:
    """Interval plot: original (dark) above synthetic (light) for each term,
    each on its own axis scaled to the pair's combined range."""
    recs = [r for r in comparison.records if r.available]
    label_w, pad = 170, 12
    plot_w = width - label_w - 90
    height = pad * 2 + 24 + row_height * max(len(recs), 1)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<text x="{pad}" y="{pad + 10}" font-weight="bold">Interval overlap '
           f'(median IO {comparison.median_io:.3f})</text>']
    for i, r in enumerate(recs):
        y0 = pad + 24 + i * row_height
        lo = min(r.ci_orig[0], r.ci_syn[0])
        hi = max(r.ci_orig[1], r.ci_syn[1])
        span = hi - lo if hi > lo else 1.0

        def sx(v):
            return label_w + (v - lo) / span * plot_w

        out.append(f'<text x="{pad}" y="{y0 + 12}">{_escape(r.term)}</text>')
        for ci, beta, dy, colour in ((r.ci_orig, r.beta_orig, 6, "#1f3b73"),
                                     (r.ci_syn, r.beta_syn, 16, "#6fa8dc")):
            out.append(f'<line x1="{sx(ci[0]):.1f}" y1="{y0 + dy}" x2="{sx(ci[1]):.1f}" '
                       f'y2="{y0 + dy}" stroke="{colour}" stroke-width="3"/>')
            out.append(f'<circle cx="{sx(beta):.1f}" cy="{y0 + dy}" r="3" fill="{colour}"/>')
        out.append(f'<text x="{label_w + plot_w + 8}" y="{y0 + 14}">{r.io:.2f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
