"""Monte-Carlo harness for the multivariate-normal pMSE calibration studies.

Each replicate draws a fresh original dataset for every population
covariance, synthesizes it once with the correct model (normal with the
fitted covariance) and once with an incorrect model (independent normals),
and records the pMSE, ratio and standardized pMSE of both.
"""
from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, replace
from typing import Sequence

import numpy as np

from . import cart
from .dataset import SynthesisMask
from .design import DesignSpec
from .general import PropensityModelSpec, check_null_method, general_utility
from .synth import (MvnSpec, SynthesisPlan, equicorrelation, mvn_correct_synthesis,
                    mvn_incorrect_synthesis, mvn_sample, replicate_rng, synthesize)

TABLE_COVARIANCES = tuple(round(0.1 * i, 1) for i in range(10))


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``columns`` lists the synthesized variables (``None`` synthesizes all);
    ``m`` is the number of synthetic replicates per original dataset.
    """

    n: int = 1000
    dim: int = 10
    covariances: tuple[float, ...] = TABLE_COVARIANCES
    reps: int = 200
    spec: PropensityModelSpec = PropensityModelSpec()
    null_method: str = "analytic"
    columns: tuple[str, ...] | None = None
    m: int = 1
    seed: int = 0
    n_perms: int = 100

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError(f"reps must be at least 1, got {self.reps}")
        if self.n < 2 or self.dim < 1:
            raise ValueError("need n >= 2 and dim >= 1")
        object.__setattr__(self, "covariances", tuple(float(r) for r in self.covariances))
        for rho in self.covariances:
            # equicorrelation is positive definite iff -1/(dim-1) < rho < 1
            if not 0.0 <= rho < 1.0:
                raise ValueError(f"covariance {rho} outside [0, 1)")
        if self.columns is not None:
            cols = tuple(self.columns)
            bad = [c for c in cols if c not in self.variable_names]
            if bad:
                raise ValueError(f"unknown columns {bad}; variables are x1..x{self.dim}")
            object.__setattr__(self, "columns", cols)
        check_null_method(self.spec.model, self.null_method, self.complete, self.m)

    @property
    def variable_names(self) -> list[str]:
        return [f"x{j + 1}" for j in range(self.dim)]

    @property
    def complete(self) -> bool:
        return self.columns is None or set(self.columns) == set(self.variable_names)

    @property
    def mask(self) -> SynthesisMask:
        return SynthesisMask(frozenset(self.columns or self.variable_names), self.m)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["covariances"] = list(self.covariances)
        d["columns"] = list(self.columns) if self.columns is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        spec = d.pop("spec", None)
        if isinstance(spec, dict):
            spec = PropensityModelSpec(
                spec.get("model", "logistic"),
                DesignSpec(**spec.get("design", {})),
                cart.TreeConfig(**spec.get("tree_config", {})),
                spec.get("variables"),
            )
        if spec is not None:
            d["spec"] = spec
        if "covariances" in d:
            d["covariances"] = tuple(d["covariances"])
        if d.get("columns") is not None:
            d["columns"] = tuple(d["columns"])
        return cls(**d)


@dataclass(frozen=True)
class SimSummary:
    mean_pmse: float
    mean_ratio: float
    mean_std: float


@dataclass(frozen=True)
class SimResultRow:
    rho: float
    correct: SimSummary
    incorrect: SimSummary
    reps_used: int
    failures: int = 0
    messages: tuple[str, ...] = field(default=(), compare=False)


def preset(name: str, full: bool = False, seed: int = 0, reps: int | None = None) -> SimConfig:
    """Named configurations shaped like the published calibration tables.

    Desk versions use ``n = 1000``; ``full`` switches to ``n = 5000`` and
    1000 replicates.
    """
    logistic = PropensityModelSpec("logistic", DesignSpec(interaction_order=2))
    tree = PropensityModelSpec("cart")
    two = ("x1", "x2")
    table = {
        "table1": dict(spec=logistic, null_method="analytic", reps=200),
        "table2": dict(spec=logistic, null_method="analytic", columns=two, reps=200),
        "tableA1": dict(spec=tree, null_method="pairwise", m=10, reps=20),
        "tableA3": dict(spec=tree, null_method="pairwise", columns=two, m=10, reps=20),
    }
    key = name.removesuffix("-desk").removesuffix("-full")
    if key not in table:
        raise ValueError(f"unknown preset {name!r}; choose from "
                         f"{sorted(k + '-desk' for k in table)}")
    kw = dict(table[key])
    full = full or name.endswith("-full")
    kw["n"] = 5000 if full else 1000
    if full:
        kw["reps"] = 1000
    if reps is not None:
        kw["reps"] = reps
    return SimConfig(seed=seed, **kw)


def _syntheses(cfg: SimConfig, original, rng):
    """``m`` correct and ``m`` incorrect syntheses of one original dataset."""
    correct, incorrect = [], []
    for _ in range(cfg.m):
        if cfg.complete:
            correct.append(mvn_correct_synthesis(original, rng))
        else:
            plan = SynthesisPlan("parametric_normal", cfg.columns, cfg.mask, 1,
                                 int(rng.integers(2**63)))
            correct.append(synthesize(original, plan)[0])
        incorrect.append(mvn_incorrect_synthesis(original, rng, cfg.columns))
    return correct, incorrect


def _replicate(cfg: SimConfig, rho_index: int, rep: int):
    """Run one replicate at one covariance; returns ((pmse, ratio, std) x 2) or an error string."""
    rng = replicate_rng(cfg.seed, rho_index, rep)
    rho = cfg.covariances[rho_index]
    try:
        original = mvn_sample(MvnSpec(np.zeros(cfg.dim), equicorrelation(cfg.dim, rho), cfg.n), rng)
        correct, incorrect = _syntheses(cfg, original, rng)
        out = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for syns in (correct, incorrect):
                rep_ = general_utility(original, syns, cfg.spec, cfg.null_method, cfg.mask,
                                       cfg.n_perms, seed=int(rng.integers(2**63)))
                out.append((rep_.pmse, rep_.ratio, rep_.standardized))
        return tuple(out)
    except Exception as exc:  # fit failures are counted, the replicate skipped
        return f"rho={rho} rep={rep}: {type(exc).__name__}: {exc}"


def _worker(args):
    cfg, rho_index, rep = args
    return rho_index, rep, _replicate(cfg, rho_index, rep)


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("SYNTHMETRIC_THREADS")
        threads = int(env) if env else 1
    return max(1, int(threads))


def run_simulation(cfg: SimConfig, threads: int | None = None, progress=None) -> list[SimResultRow]:
    """Run every replicate at every covariance and average per covariance.

    Results are identical for any ``threads`` value: each replicate has its
    own RNG stream and sums are taken in replicate order.
    """
    jobs = [(cfg, i, r) for i in range(len(cfg.covariances)) for r in range(cfg.reps)]
    results: dict[tuple[int, int], object] = {}
    n_threads = resolve_threads(threads)
    if n_threads == 1:
        iterator = map(_worker, jobs)
    else:
        pool = ProcessPoolExecutor(max_workers=n_threads)
        iterator = pool.map(_worker, jobs, chunksize=max(1, len(jobs) // (8 * n_threads)))
    try:
        for done, (i, r, res) in enumerate(iterator, start=1):
            results[(i, r)] = res
            if progress is not None:
                progress(done, len(jobs))
    finally:
        if n_threads > 1:
            pool.shutdown()

    rows = []
    for i, rho in enumerate(cfg.covariances):
        ok = [results[(i, r)] for r in range(cfg.reps) if not isinstance(results[(i, r)], str)]
        msgs = tuple(results[(i, r)] for r in range(cfg.reps) if isinstance(results[(i, r)], str))

        def summary(which):
            if not ok:
                return SimSummary(math.nan, math.nan, math.nan)
            cols = list(zip(*[res[which] for res in ok]))
            return SimSummary(*(math.fsum(c) / len(c) for c in cols))

        rows.append(SimResultRow(rho, summary(0), summary(1), len(ok), len(msgs), msgs))
    return rows


COLUMNS = ("covariance", "correct_mean_pmse", "correct_ratio", "correct_standardized",
           "incorrect_mean_pmse", "incorrect_ratio", "incorrect_standardized")


def render_table(rows: Sequence[SimResultRow], format: str = "markdown") -> str:
    """Render rows in the layout of the calibration tables (7 columns)."""
    def cells(row):
        c, w = row.correct, row.incorrect
        return [f"{row.rho:.1f}", f"{c.mean_pmse:.5f}", f"{c.mean_ratio:.5f}", f"{c.mean_std:.5f}",
                f"{w.mean_pmse:.5f}", f"{w.mean_ratio:.5f}", f"{w.mean_std:.5f}"]

    if format == "csv":
        lines = [",".join(COLUMNS)]
        for row in rows:
            c, w = row.correct, row.incorrect
            vals = [row.rho, c.mean_pmse, c.mean_ratio, c.mean_std, w.mean_pmse, w.mean_ratio, w.mean_std]
            lines.append(",".join(repr(float(v)) for v in vals))
        return "\n".join(lines) + "\n"
    if format in ("markdown", "md"):
        lines = ["| Covariance | Correct pMSE | Correct ratio | Correct std. "
                 "| Incorrect pMSE | Incorrect ratio | Incorrect std. |",
                 "|---|---|---|---|---|---|---|"]
        lines += ["| " + " | ".join(cells(row)) + " |" for row in rows]
        return "\n".join(lines) + "\n"
    if format == "json":
        return json.dumps([_row_dict(r) for r in rows], indent=2) + "\n"
    raise ValueError(f"unknown format {format!r}")


def _row_dict(row: SimResultRow) -> dict:
    d = asdict(row)
    d["messages"] = list(row.messages)
    return d


def with_overrides(cfg: SimConfig, **kw) -> SimConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw) if kw else cfg
