"""Predictor matrices for propensity models and for user formulas.

:func:`build_design` stacks original and synthetic rows and expands them into
intercept, main-effect, and interaction columns. Each column records the set of
source variables it was built from, which is what the incomplete-synthesis
degrees of freedom are counted from.
"""
from __future__ import annotations

import itertools
import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import Dataset, SynthesisMask, harmonize_levels

DEFAULT_MEMORY_BUDGET = 2 * 1024**3


class DesignError(ValueError):
    pass


class DesignWarning(UserWarning):
    pass


class FormulaError(ValueError):
    """Formula syntax or binding error; ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


@dataclass(frozen=True)
class DesignSpec:
    interaction_order: int = 2
    include_squares: bool = False
    standardize_numeric: bool = True
    memory_budget: int = DEFAULT_MEMORY_BUDGET

    def __post_init__(self):
        if self.interaction_order not in (1, 2, 3):
            raise DesignError(f"interaction_order must be 1, 2 or 3, got {self.interaction_order}")


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    values: np.ndarray
    column_labels: tuple[str, ...]
    sources: tuple[frozenset, ...]
    involves_synthesized: np.ndarray
    dropped: tuple[str, ...] = ()

    @property
    def k(self) -> int:
        return self.values.shape[1]

    @property
    def effective_df(self) -> int:
        return int(self.involves_synthesized[1:].sum())

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ModelFormula:
    response: str
    terms: tuple[tuple[str, ...], ...]
    family: str = "gaussian"

    def __post_init__(self):
        if self.family not in ("gaussian", "binomial", "multinomial"):
            raise FormulaError(f"unknown family {self.family!r}")

    @property
    def variables(self) -> list[str]:
        seen = []
        for term in self.terms:
            for name in term:
                if name not in seen:
                    seen.append(name)
        return seen

    def __str__(self) -> str:
        return f"{self.response} ~ " + " + ".join(":".join(t) for t in self.terms)


_TOKEN = re.compile(r"\s*(?:(?P<name>[A-Za-z_.][A-Za-z0-9_.]*)|(?P<op>[~+:])|(?P<bad>\S))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        if m.group("bad"):
            raise FormulaError(f"unexpected character {m.group('bad')!r}", m.start("bad"))
        kind = "name" if m.group("name") else "op"
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return tokens


def parse_formula(text: str, family: str = "gaussian") -> ModelFormula:
    """Parse ``response ~ term (+ term)*`` where a term is ``name`` or ``name:name``.

    Names are checked against a schema later, in :func:`model_matrix`.
    """
    tokens = _tokenize(text)
    end = len(text)
    i = 0

    def peek():
        return tokens[i] if i < len(tokens) else ("eof", "", end)

    def expect_name(what: str) -> str:
        nonlocal i
        kind, val, pos = peek()
        if kind != "name":
            shown = "end of input" if kind == "eof" else f"token {val!r}"
            raise FormulaError(f"expected {what}, found {shown}", pos)
        i += 1
        return val

    response = expect_name("response name")
    kind, val, pos = peek()
    if val != "~":
        raise FormulaError("expected '~'", pos)
    i += 1
    terms = []
    while True:
        parts = [expect_name("term")]
        while peek()[1] == ":":
            i += 1
            parts.append(expect_name("name after ':'"))
        if len(set(parts)) != len(parts):
            raise FormulaError(f"repeated variable in term {':'.join(parts)!r}", pos)
        term = tuple(parts)
        if term not in terms:
            terms.append(term)
        kind, val, pos = peek()
        if kind == "eof":
            break
        if val != "+":
            raise FormulaError(f"expected '+' or end of input, found {val!r}", pos)
        i += 1
    if any(response in t for t in terms):
        raise FormulaError(f"response {response!r} also appears among the terms")
    return ModelFormula(response, tuple(terms), family)


# -- column expansion ---------------------------------------------------------

def _main_effect_blocks(data: Dataset, names: Sequence[str], standardize: bool,
                        stats: dict | None = None):
    """Return {name: (matrix, labels)} of main-effect columns.

    Categorical variables become L-1 dummies against their first level.
    ``stats`` holds numeric (mean, sd) pairs used for standardization.
    """
    blocks = {}
    for name in names:
        col = data.column_schema(name)
        x = data[name]
        if col.is_categorical:
            L = len(col.levels)
            mat = np.zeros((data.n, L - 1))
            rows = np.flatnonzero(x > 0)
            mat[rows, x[rows] - 1] = 1.0
            labels = [f"{name}[{lvl}]" for lvl in col.levels[1:]]
        else:
            v = x
            if standardize:
                mu, sd = stats[name]
                v = (x - mu) / sd if sd > 0 else x - mu
            mat = v[:, None].astype(np.float64)
            labels = [name]
        blocks[name] = (mat, labels)
    return blocks


def _product_block(blocks, combo):
    mats = [blocks[name][0] for name in combo]
    labs = [blocks[name][1] for name in combo]
    cols, labels = [], []
    for idx in itertools.product(*[range(m.shape[1]) for m in mats]):
        v = mats[0][:, idx[0]].copy()
        for m, j in zip(mats[1:], idx[1:]):
            v *= m[:, j]
        cols.append(v)
        labels.append(":".join(lab[j] for lab, j in zip(labs, idx)))
    if not cols:
        return np.zeros((mats[0].shape[0], 0)), []
    return np.column_stack(cols), labels


def _aliased_columns(values: np.ndarray, rtol: float = 1e-7) -> list[int]:
    """Indices of columns linearly dependent on earlier columns.

    Mirrors the usual regression convention of keeping the earlier of two
    aliased columns.
    """
    keep = list(range(values.shape[1]))
    dropped = []
    while True:
        sub = values[:, keep]
        r = np.linalg.qr(sub, mode="r")
        diag = np.abs(np.diag(r))
        norms = np.linalg.norm(sub, axis=0)
        bad = np.flatnonzero(diag <= rtol * np.maximum(norms, 1e-300))
        if bad.size == 0:
            return dropped
        j = keep[int(bad[0])]
        dropped.append(j)
        keep.remove(j)


def _assemble(values_list, labels, sources, synthesized, what):
    values = np.column_stack(values_list) if values_list else np.zeros((0, 0))
    # constant non-intercept columns carry no information and break invertibility
    const = [j for j in range(1, values.shape[1]) if np.ptp(values[:, j]) == 0.0]
    keep = [j for j in range(values.shape[1]) if j not in set(const)]
    dropped = [labels[j] for j in const]
    if const:
        warnings.warn(f"{what}: dropped {len(const)} constant column(s): {dropped[:5]}"
                      + ("..." if len(const) > 5 else ""), DesignWarning, stacklevel=3)
    values = values[:, keep]
    labels = [labels[j] for j in keep]
    sources = [sources[j] for j in keep]
    aliased = _aliased_columns(values) if values.shape[0] >= values.shape[1] else []
    if aliased:
        names = [labels[j] for j in aliased]
        warnings.warn(f"{what}: dropped {len(aliased)} aliased column(s): {names[:5]}",
                      DesignWarning, stacklevel=3)
        keep = [j for j in range(values.shape[1]) if j not in set(aliased)]
        values = values[:, keep]
        labels = [labels[j] for j in keep]
        sources = [sources[j] for j in keep]
        dropped += names
    involves = np.array([bool(s & synthesized) for s in sources], dtype=bool)
    values = np.ascontiguousarray(values)
    values.setflags(write=False)
    involves.setflags(write=False)
    return DesignMatrix(values, tuple(labels), tuple(sources), involves, tuple(dropped))


def stack(original: Dataset, synthetic: Dataset) -> Dataset:
    """Concatenate rows of two harmonized datasets (original first)."""
    if original.schema != synthetic.schema:
        original, synthetic = harmonize_levels(original, synthetic)
    cols = {k: np.concatenate([original[k], synthetic[k]]) for k in original.names}
    return Dataset(original.schema, cols, "original")


def build_design(original: Dataset, synthetic: Dataset, spec: DesignSpec = DesignSpec(),
                 mask: SynthesisMask | None = None,
                 variables: Sequence[str] | None = None) -> tuple[DesignMatrix, np.ndarray]:
    """Build the propensity predictor matrix for stacked original + synthetic rows.

    Returns the design and the 0/1 indicator (1 = synthetic row).
    """
    if original.n < 2 or synthetic.n < 2:
        raise DesignError("need at least two rows in each dataset")
    combined = stack(original, synthetic)
    names = list(variables) if variables is not None else combined.names
    mask = mask or SynthesisMask.complete(combined.schema)
    mask.validate(combined.schema)
    N = combined.n

    n_main = sum(1 if not combined.column_schema(v).is_categorical
                 else len(combined.column_schema(v).levels) - 1 for v in names)
    est = 1 + sum(math.comb(n_main, order) for order in range(1, spec.interaction_order + 1))
    if N * est * 8 > spec.memory_budget:
        raise DesignError(f"design would need about {N * est * 8 / 2**20:.0f} MiB, "
                          f"over the {spec.memory_budget / 2**20:.0f} MiB budget")

    stats = {}
    for v in names:
        if not combined.column_schema(v).is_categorical:
            x = combined[v]
            stats[v] = (float(x.mean()), float(x.std()))
    blocks = _main_effect_blocks(combined, names, spec.standardize_numeric, stats)

    values = [np.ones(N)]
    labels = ["(Intercept)"]
    sources = [frozenset()]
    for v in names:
        mat, labs = blocks[v]
        values.extend(mat.T)
        labels.extend(labs)
        sources.extend([frozenset([v])] * len(labs))
    for order in range(2, spec.interaction_order + 1):
        for combo in itertools.combinations(names, order):
            mat, labs = _product_block(blocks, combo)
            values.extend(mat.T)
            labels.extend(labs)
            sources.extend([frozenset(combo)] * len(labs))
    if spec.include_squares:
        for v in names:
            if not combined.column_schema(v).is_categorical:
                mat, labs = blocks[v]
                values.append(mat[:, 0] ** 2)
                labels.append(f"{v}^2")
                sources.append(frozenset([v]))

    design = _assemble(values, labels, sources, mask.synthesized_columns, "propensity design")
    indicator = np.concatenate([np.zeros(original.n), np.ones(synthetic.n)])
    return design, indicator


def model_matrix(data: Dataset, formula: ModelFormula) -> tuple[np.ndarray, list[str]]:
    """Predictor matrix (with intercept) for the right-hand side of ``formula``.

    Numeric predictors are used on their raw scale so coefficients keep their
    usual interpretation. No columns are dropped here; callers that need a full
    rank matrix handle aliasing themselves.
    """
    names = set(data.names)
    for var in [formula.response] + formula.variables:
        if var not in names:
            raise FormulaError(f"unknown column {var!r}")
    blocks = _main_effect_blocks(data, formula.variables, standardize=False)
    values = [np.ones(data.n)]
    labels = ["(Intercept)"]
    for term in formula.terms:
        if len(term) == 1:
            mat, labs = blocks[term[0]]
        else:
            mat, labs = _product_block(blocks, term)
        values.extend(mat.T)
        labels.extend(labs)
    return np.column_stack(values), labels


def response_vector(data: Dataset, formula: ModelFormula) -> np.ndarray:
    """Response as float (gaussian), 0/1 (binomial), or level codes (multinomial)."""
    if formula.response not in data.names:
        raise FormulaError(f"unknown column {formula.response!r}")
    col = data.column_schema(formula.response)
    y = data[formula.response]
    if formula.family == "gaussian":
        if col.is_categorical:
            raise FormulaError(f"gaussian family needs a numeric response, {col.name!r} is categorical")
        return y.astype(np.float64)
    if formula.family == "binomial":
        if col.is_categorical:
            if len(col.levels) != 2:
                raise FormulaError(f"binomial response {col.name!r} must have exactly 2 levels")
            return (y == 1).astype(np.float64)
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise FormulaError(f"binomial response {col.name!r} must be 0/1")
        return y.astype(np.float64)
    if not col.is_categorical:
        raise FormulaError(f"multinomial family needs a categorical response, {col.name!r} is numeric")
    return y
