"""Typed tabular data: schemas, loading/writing CSV, and level harmonization.

Numeric columns are stored as float64 arrays; categorical columns are stored
as integer codes into the column's declared ``levels``. Arrays are made
read-only on construction so a :class:`Dataset` can be shared freely.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class DataError(ValueError):
    """Raised for schema violations and unparseable input files."""


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        if self.kind == CATEGORICAL:
            if not self.levels:
                raise DataError(f"column {self.name!r}: categorical column needs levels")
            if len(set(self.levels)) != len(self.levels):
                raise DataError(f"column {self.name!r}: duplicate levels {self.levels}")
        elif self.levels:
            raise DataError(f"column {self.name!r}: numeric column cannot declare levels")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.is_categorical:
            d["levels"] = list(self.levels)
        return d


def _check_schema(schema: Sequence[ColumnSchema]) -> tuple[ColumnSchema, ...]:
    schema = tuple(schema)
    if not schema:
        raise DataError("schema has no columns")
    names = [c.name for c in schema]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise DataError(f"duplicate column names in schema: {dupes}")
    return schema


def load_schema(path: str | Path) -> tuple[ColumnSchema, ...]:
    """Read a schema JSON document: an array of ``{name, kind, levels?}``."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return schema_from_json(raw)


def schema_from_json(raw: Iterable[Mapping]) -> tuple[ColumnSchema, ...]:
    cols = []
    for entry in raw:
        try:
            cols.append(ColumnSchema(entry["name"], entry["kind"], tuple(entry.get("levels", ()))))
        except KeyError as exc:
            raise DataError(f"schema entry {entry!r} missing field {exc}") from None
    return _check_schema(cols)


def schema_to_json(schema: Sequence[ColumnSchema]) -> list[dict]:
    return [c.to_dict() for c in schema]


def schema_hash(schema: Sequence[ColumnSchema]) -> str:
    blob = json.dumps(schema_to_json(schema), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable n x p table with a declared schema.

    ``columns`` maps column name to a 1-D array: float64 for numeric columns,
    int64 level codes for categorical ones.
    """

    schema: tuple[ColumnSchema, ...]
    columns: Mapping[str, np.ndarray]
    role: str = "original"
    n: int = field(init=False)

    def __post_init__(self):
        schema = _check_schema(self.schema)
        object.__setattr__(self, "schema", schema)
        if self.role not in ("original", "synthetic"):
            raise DataError(f"unknown dataset role {self.role!r}")
        missing = [c.name for c in schema if c.name not in self.columns]
        if missing:
            raise DataError(f"columns missing from data: {missing}")
        cols = {}
        n = None
        for col in schema:
            if col.is_categorical:
                arr = np.array(self.columns[col.name], dtype=np.int64)
                bad = (arr < 0) | (arr >= len(col.levels))
                if bad.any():
                    i = int(np.flatnonzero(bad)[0])
                    raise DataError(f"column {col.name!r} row {i}: code {arr[i]} outside levels")
            else:
                arr = np.array(self.columns[col.name], dtype=np.float64)
                if not np.all(np.isfinite(arr)):
                    i = int(np.flatnonzero(~np.isfinite(arr))[0])
                    raise DataError(f"column {col.name!r} row {i}: missing or non-finite value")
            if arr.ndim != 1:
                raise DataError(f"column {col.name!r} is not one-dimensional")
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise DataError(f"column {col.name!r} has {arr.shape[0]} rows, expected {n}")
            arr.setflags(write=False)
            cols[col.name] = arr
        if not n:
            raise DataError("dataset has no rows")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "n", n)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    def column_schema(self, name: str) -> ColumnSchema:
        for c in self.schema:
            if c.name == name:
                return c
        raise KeyError(name)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def __len__(self) -> int:
        return self.n

    def replace(self, role: str | None = None, schema=None, **new_columns) -> "Dataset":
        """Return a copy with some columns swapped out."""
        cols = dict(self.columns)
        cols.update(new_columns)
        return Dataset(schema if schema is not None else self.schema, cols, role or self.role)

    def take(self, rows: np.ndarray) -> "Dataset":
        return Dataset(self.schema, {k: v[rows] for k, v in self.columns.items()}, self.role)

    def labels(self, name: str) -> list[str]:
        """Column values rendered as they appear in CSV."""
        col = self.column_schema(name)
        if col.is_categorical:
            return [col.levels[i] for i in self.columns[name]]
        return [repr(float(v)) for v in self.columns[name]]

    def equals(self, other: "Dataset") -> bool:
        return self.schema == other.schema and all(
            np.array_equal(self.columns[k], other.columns[k]) for k in self.names
        )


def from_arrays(data: Mapping[str, Sequence], schema: Sequence[ColumnSchema] | None = None,
                role: str = "original") -> Dataset:
    """Build a Dataset from raw values; categorical values may be labels or codes.

    Without a schema every column is treated as numeric.
    """
    if schema is None:
        schema = [ColumnSchema(k, NUMERIC) for k in data]
    cols = {}
    for col in schema:
        values = data[col.name]
        if col.is_categorical and not np.issubdtype(np.asarray(values).dtype, np.integer):
            index = {lvl: i for i, lvl in enumerate(col.levels)}
            try:
                values = [index[str(v)] for v in values]
            except KeyError as exc:
                raise DataError(f"column {col.name!r}: value {exc} not in declared levels") from None
        cols[col.name] = values
    return Dataset(tuple(schema), cols, role)


def load_csv(path: str | Path, schema: Sequence[ColumnSchema], role: str = "original") -> Dataset:
    """Parse a comma-separated UTF-8 file whose header row matches ``schema``.

    Categorical levels are taken from the schema, never inferred, so an
    undeclared value is an error.
    """
    schema = _check_schema(schema)
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        expected = [c.name for c in schema]
        if [h.strip() for h in header] != expected:
            raise DataError(f"{path}: header {header} does not match schema {expected}")
        lookups = [{lvl: i for i, lvl in enumerate(c.levels)} if c.is_categorical else None
                   for c in schema]
        raw: list[list] = [[] for _ in schema]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(schema):
                raise DataError(f"{path}:{lineno}: expected {len(schema)} fields, got {len(row)}")
            for j, (col, cell) in enumerate(zip(schema, row)):
                cell = cell.strip()
                where = f"{path}:{lineno} column {col.name!r}"
                if cell == "" or cell.upper() in ("NA", "NAN"):
                    raise DataError(f"{where}: missing value")
                if col.is_categorical:
                    code = lookups[j].get(cell)
                    if code is None:
                        raise DataError(f"{where}: value {cell!r} not in levels {list(col.levels)}")
                    raw[j].append(code)
                else:
                    try:
                        val = float(cell)
                    except ValueError:
                        raise DataError(f"{where}: cannot parse {cell!r} as a number") from None
                    if not np.isfinite(val):
                        raise DataError(f"{where}: non-finite value {cell!r}")
                    raw[j].append(val)
    if not raw[0]:
        raise DataError(f"{path}: no data rows")
    return Dataset(schema, {c.name: raw[j] for j, c in enumerate(schema)}, role)


def write_csv(data: Dataset, path: str | Path) -> None:
    """Write ``data`` so that :func:`load_csv` reads it back unchanged.

    Floats are written with ``repr`` (shortest round-tripping form).
    """
    cols = [data.labels(name) for name in data.names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(data.names)
        writer.writerows(zip(*cols))


def harmonize_levels(original: Dataset, synthetic: Dataset) -> tuple[Dataset, Dataset]:
    """Give both datasets the same categorical levels.

    The shared level list is the original's levels followed by any level only
    the synthetic schema declares. Codes are remapped accordingly.
    """
    if len(original.schema) != len(synthetic.schema):
        raise DataError("schemas differ in number of columns")
    for a, b in zip(original.schema, synthetic.schema):
        if a.name != b.name or a.kind != b.kind:
            raise DataError(f"schema mismatch: {a.name}/{a.kind} vs {b.name}/{b.kind}")
    if original.schema == synthetic.schema:
        return original, synthetic

    merged, remap_o, remap_s = [], {}, {}
    for a, b in zip(original.schema, synthetic.schema):
        if not a.is_categorical or a.levels == b.levels:
            merged.append(a)
            continue
        levels = list(a.levels) + [lvl for lvl in b.levels if lvl not in a.levels]
        pos = {lvl: i for i, lvl in enumerate(levels)}
        remap_o[a.name] = np.array([pos[lvl] for lvl in a.levels], dtype=np.int64)
        remap_s[a.name] = np.array([pos[lvl] for lvl in b.levels], dtype=np.int64)
        merged.append(ColumnSchema(a.name, a.kind, tuple(levels)))
    merged = tuple(merged)

    def recode(ds: Dataset, remap: dict) -> Dataset:
        cols = {k: (remap[k][v] if k in remap else v) for k, v in ds.columns.items()}
        return Dataset(merged, cols, ds.role)

    return recode(original, remap_o), recode(synthetic, remap_s)


def harmonize_all(original: Dataset, synthetics: Sequence[Dataset]) -> tuple[Dataset, list[Dataset]]:
    """Harmonize an original against several synthetic replicates at once."""
    ref = original
    for syn in synthetics:
        ref, _ = harmonize_levels(ref, syn)
    out = []
    for syn in synthetics:
        _, s = harmonize_levels(ref, syn)
        out.append(s)
    return ref, out


@dataclass(frozen=True)
class SynthesisMask:
    """Which columns were replaced by synthetic values, and how many replicates."""

    synthesized_columns: frozenset[str]
    m: int = 1

    def __post_init__(self):
        object.__setattr__(self, "synthesized_columns", frozenset(self.synthesized_columns))
        if self.m < 1:
            raise DataError("m must be at least 1")

    @classmethod
    def complete(cls, schema: Sequence[ColumnSchema], m: int = 1) -> "SynthesisMask":
        return cls(frozenset(c.name for c in schema), m)

    def validate(self, schema: Sequence[ColumnSchema]) -> None:
        unknown = self.synthesized_columns - {c.name for c in schema}
        if unknown:
            raise DataError(f"synthesized columns not in schema: {sorted(unknown)}")
        if not self.synthesized_columns:
            raise DataError("synthesis mask is empty")

    def is_complete(self, schema: Sequence[ColumnSchema]) -> bool:
        return self.synthesized_columns == {c.name for c in schema}
