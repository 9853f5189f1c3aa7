"""Bundled stand-in survey dataset for demonstrating the workflow end to end.

The data are simulated (not real survey records) with a mix of numeric and
categorical columns and realistic dependencies between them, so that a
synthesizer that ignores the dependencies visibly loses specific utility.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .dataset import CATEGORICAL, NUMERIC, ColumnSchema, Dataset, from_arrays, load_csv, load_schema

STANDIN_SEED = 20180214
STANDIN_ROWS = 2000

STANDIN_SCHEMA = (
    ColumnSchema("sex", CATEGORICAL, ("female", "male")),
    ColumnSchema("age", NUMERIC),
    ColumnSchema("region", CATEGORICAL, ("north", "east", "south", "west", "central")),
    ColumnSchema("educ", CATEGORICAL, ("none", "school", "college", "degree")),
    ColumnSchema("smoker", CATEGORICAL, ("no", "yes")),
    ColumnSchema("bmi", NUMERIC),
    ColumnSchema("log_income", NUMERIC),
    ColumnSchema("health", CATEGORICAL, ("good", "fair", "poor")),
)


def generate_standin(n: int = STANDIN_ROWS, seed: int = STANDIN_SEED) -> Dataset:
    """Simulate the stand-in dataset; the bundled CSV is ``generate_standin()``."""
    rng = np.random.default_rng(seed)
    sex = rng.integers(0, 2, n)
    age = np.round(rng.uniform(18, 85, n))
    region = rng.choice(5, n, p=[0.25, 0.2, 0.25, 0.2, 0.1])
    # younger people are more educated
    educ_score = -0.02 * (age - 50) + rng.logistic(size=n)
    educ = np.digitize(educ_score, [-1.5, 0.3, 1.4])
    p_smoke = 1.0 / (1.0 + np.exp(-(-0.4 - 0.35 * educ - 0.015 * (age - 50) + 0.3 * sex)))
    smoker = (rng.random(n) < p_smoke).astype(np.int64)
    bmi = np.round(26.5 + 0.06 * (age - 50) - 0.5 * educ + 0.8 * sex - 0.9 * smoker
                   + rng.normal(0, 3.5, n), 1)
    log_income = np.round(9.6 + 0.35 * educ + 0.2 * sex + 0.03 * (age - 18) - 0.0004 * (age - 18) ** 2
                          + 0.1 * (region == 4) + rng.normal(0, 0.45, n), 3)
    risk = 0.035 * (age - 50) + 0.8 * smoker + 0.09 * (bmi - 27) - 0.25 * educ - 0.3 * (log_income - 10.5)
    health = np.digitize(risk + rng.logistic(size=n), [0.4, 2.0])
    return from_arrays({
        "sex": sex, "age": age, "region": region, "educ": educ.astype(np.int64),
        "smoker": smoker, "bmi": bmi, "log_income": log_income, "health": health.astype(np.int64),
    }, STANDIN_SCHEMA)


def _data_dir() -> Path:
    return Path(str(resources.files("synthmetric") / "data"))


def standin_paths() -> tuple[Path, Path]:
    """Paths of the bundled CSV and its schema JSON."""
    d = _data_dir()
    return d / "standin.csv", d / "standin_schema.json"


def load_standin() -> Dataset:
    csv_path, schema_path = standin_paths()
    return load_csv(csv_path, load_schema(schema_path))
