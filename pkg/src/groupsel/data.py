"""Mixed-type dataset model, standardization, and group bookkeeping.

Quantitative columns are centered and scaled to unit (population) standard
deviation.  Qualitative columns are expanded to centered indicator columns,
each scaled by the square root of its category's relative frequency, so that
a single variable of either kind contributes unit total inertia to the
factorization used by the clustering stage.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConstantColumn,
    DimensionMismatch,
    EmptyCategory,
    GroupselError,
)

log = logging.getLogger(__name__)

QUANTITATIVE = "quantitative"
QUALITATIVE = "qualitative"

_MISSING_TOKENS = {"", "na", "nan", "null"}


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Variable:
    """One column of a dataset: numeric values or integer category codes."""

    name: str
    kind: str
    values: np.ndarray
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (QUANTITATIVE, QUALITATIVE):
            raise GroupselError(f"unknown variable kind {self.kind!r}")
        values = np.asarray(self.values)
        if self.kind == QUANTITATIVE:
            values = values.astype(float)
            if not np.all(np.isfinite(values)):
                raise GroupselError(f"variable {self.name!r} contains non-finite values")
        else:
            values = values.astype(int)
            if len(self.levels) < 2:
                raise EmptyCategory(self.name, None)
            if values.min() < 0 or values.max() >= len(self.levels):
                raise GroupselError(f"variable {self.name!r} has out-of-range category codes")
            if len(np.unique(values)) < 2:
                raise EmptyCategory(self.name, self.levels[int(values[0])])
        object.__setattr__(self, "values", _freeze(values))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def n_expanded(self) -> int:
        """Number of columns this variable occupies after indicator expansion."""
        return 1 if self.kind == QUANTITATIVE else len(self.levels)


@dataclass(frozen=True)
class Dataset:
    """n observations of p mixed-type variables plus a response vector."""

    variables: tuple[Variable, ...]
    y: np.ndarray
    response_kind: str  # "continuous" or "binary"

    def __post_init__(self):
        if not self.variables:
            raise GroupselError("dataset has no variables")
        y = np.asarray(self.y, dtype=float)
        n = self.variables[0].n
        for v in self.variables:
            if v.n != n:
                raise DimensionMismatch(f"variable {v.name!r} has {v.n} rows, expected {n}")
        if y.shape != (n,):
            raise DimensionMismatch(f"response has shape {y.shape}, expected ({n},)")
        if not np.all(np.isfinite(y)):
            raise GroupselError("response contains non-finite values")
        if self.response_kind == "binary":
            if not np.all(np.isin(y, (0.0, 1.0))):
                raise GroupselError("binary response must take values in {0, 1}")
        elif self.response_kind != "continuous":
            raise GroupselError(f"unknown response kind {self.response_kind!r}")
        object.__setattr__(self, "y", _freeze(y))

    @property
    def n(self) -> int:
        return self.variables[0].n

    @property
    def p(self) -> int:
        return len(self.variables)

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def subset(self, indices) -> "Dataset":
        """Dataset restricted to the given variable indices (order kept)."""
        return Dataset(tuple(self.variables[int(i)] for i in indices), self.y, self.response_kind)

    def take_rows(self, rows) -> "Dataset":
        """Dataset on a row subset/resample (raises if a column degenerates)."""
        rows = np.asarray(rows, dtype=int)
        variables = tuple(
            Variable(v.name, v.kind, v.values[rows], v.levels) for v in self.variables
        )
        return Dataset(variables, self.y[rows], self.response_kind)


@dataclass(frozen=True)
class Partition:
    """Assignment of p items to clusters labeled 1..k, every label used."""

    assignment: np.ndarray
    k: int

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=int)
        if a.ndim != 1 or a.size == 0:
            raise GroupselError("partition assignment must be a nonempty 1-d array")
        used = np.unique(a)
        if used[0] < 1 or used[-1] > self.k or used.size != self.k:
            raise GroupselError(
                f"partition must use every label in 1..{self.k}, got labels {used.tolist()}"
            )
        object.__setattr__(self, "assignment", _freeze(a))

    @property
    def size(self) -> int:
        return self.assignment.shape[0]

    def members(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == label)

    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k + 1)[1:]


@dataclass(frozen=True)
class StandardizedMatrix:
    """Standardized/expanded design matrix with its bookkeeping.

    ``column_map[j]`` gives the half-open expanded column range ``(start, stop)``
    of original variable ``j``.
    """

    z: np.ndarray
    centers: np.ndarray
    scales: np.ndarray
    column_map: tuple[tuple[int, int], ...]
    names: tuple[str, ...] = field(default=())
    kinds: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "z", _freeze(np.asarray(self.z, dtype=float)))
        object.__setattr__(self, "centers", _freeze(np.asarray(self.centers, dtype=float)))
        object.__setattr__(self, "scales", _freeze(np.asarray(self.scales, dtype=float)))

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def n_columns(self) -> int:
        return self.z.shape[1]

    @property
    def n_variables(self) -> int:
        return len(self.column_map)

    def columns_of(self, var_index: int) -> np.ndarray:
        start, stop = self.column_map[var_index]
        return np.arange(start, stop)

    def variable_of_column(self, col: int) -> int:
        for j, (start, stop) in enumerate(self.column_map):
            if start <= col < stop:
                return j
        raise DimensionMismatch(f"column {col} outside expanded range")


@dataclass(frozen=True)
class Coefficients:
    """Fitted coefficients on standardized columns plus per-group norms."""

    intercept: float
    beta: np.ndarray
    group_norms: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", _freeze(np.asarray(self.beta, dtype=float)))
        object.__setattr__(self, "group_norms", _freeze(np.asarray(self.group_norms, dtype=float)))

    @classmethod
    def from_beta(cls, intercept: float, beta: np.ndarray, part: Partition) -> "Coefficients":
        beta = np.asarray(beta, dtype=float)
        if beta.shape[0] != part.size:
            raise DimensionMismatch("beta length does not match partition size")
        norms = np.sqrt(np.bincount(part.assignment, weights=beta**2, minlength=part.k + 1)[1:])
        return cls(float(intercept), beta, norms)


def standardize(d: Dataset) -> StandardizedMatrix:
    """Center/scale quantitative columns; expand qualitative ones to indicators.

    A qualitative level with relative frequency ``f`` becomes the column
    ``(indicator - f) / sqrt(f)``; together with the unit-variance quantitative
    columns this makes every variable's expanded block carry comparable scale.
    """
    n = d.n
    cols, centers, scales, column_map = [], [], [], []
    start = 0
    for j, v in enumerate(d.variables):
        if v.kind == QUANTITATIVE:
            mean = float(v.values.mean())
            sd = float(v.values.std())  # population convention (1/n)
            if sd == 0.0:
                raise ConstantColumn(j, v.name)
            cols.append((v.values - mean) / sd)
            centers.append(mean)
            scales.append(sd)
            column_map.append((start, start + 1))
            start += 1
        else:
            counts = np.bincount(v.values, minlength=len(v.levels))
            for lvl, c in enumerate(counts):
                if c == 0:
                    raise EmptyCategory(j, v.levels[lvl])
            freq = counts / n
            ind = np.zeros((n, len(v.levels)))
            ind[np.arange(n), v.values] = 1.0
            for lvl in range(len(v.levels)):
                cols.append((ind[:, lvl] - freq[lvl]) / np.sqrt(freq[lvl]))
                centers.append(freq[lvl])
                scales.append(np.sqrt(freq[lvl]))
            column_map.append((start, start + len(v.levels)))
            start += len(v.levels)
    z = np.column_stack(cols)
    return StandardizedMatrix(
        z,
        np.asarray(centers),
        np.asarray(scales),
        tuple(column_map),
        names=d.column_names,
        kinds=tuple(v.kind for v in d.variables),
    )


def expand_groups(part: Partition, column_map) -> Partition:
    """Propagate a variable-level partition to the expanded column layout."""
    if part.size != len(column_map):
        raise DimensionMismatch(
            f"partition covers {part.size} variables, column map has {len(column_map)}"
        )
    total = column_map[-1][1]
    assignment = np.empty(total, dtype=int)
    for j, (lo, hi) in enumerate(column_map):
        assignment[lo:hi] = part.assignment[j]
    return Partition(assignment, part.k)


def selected_variables(beta: np.ndarray, column_map, names=None) -> list[int]:
    """Original-variable indices with any nonzero coefficient in their block."""
    beta = np.asarray(beta)
    out = []
    for j, (lo, hi) in enumerate(column_map):
        if np.any(beta[lo:hi] != 0.0):
            out.append(j)
    return out


def save_csv(d: Dataset, data_path, schema_path, response_name: str = "y") -> None:
    """Write a Dataset to the CSV + sidecar-schema format that load_csv reads."""
    schema = {
        "response": response_name,
        "response_kind": d.response_kind,
        "columns": {v.name: v.kind for v in d.variables},
    }
    with open(schema_path, "w") as fh:
        json.dump(schema, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(data_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([v.name for v in d.variables] + [response_name])
        for i in range(d.n):
            row = []
            for v in d.variables:
                if v.kind == QUANTITATIVE:
                    row.append(repr(float(v.values[i])))
                else:
                    row.append(v.levels[int(v.values[i])])
            row.append(repr(float(d.y[i])))
            writer.writerow(row)


def load_csv(data_path, schema_path) -> Dataset:
    """Read a header-full CSV plus its sidecar JSON schema into a Dataset.

    The schema names the response column and tags every predictor column
    quantitative or qualitative.  Rows with missing cells (empty, NA, NaN,
    null; case-insensitive) are dropped with a logged count.
    """
    with open(schema_path) as fh:
        schema = json.load(fh)
    response = schema["response"]
    response_kind = schema.get("response_kind", "continuous")
    col_kinds = schema["columns"]

    with open(data_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise GroupselError(f"{data_path}: empty file (header row required)")
        rows = list(reader)

    if response not in header:
        raise GroupselError(f"response column {response!r} not found in {data_path}")
    for name in col_kinds:
        if name not in header:
            raise GroupselError(f"schema column {name!r} not found in {data_path}")

    predictor_names = [name for name in header if name != response and name in col_kinds]
    if not predictor_names:
        raise GroupselError("schema selects no predictor columns")
    want = predictor_names + [response]
    idx = {name: header.index(name) for name in want}

    kept, dropped = [], 0
    for row in rows:
        if any(row[idx[name]].strip().lower() in _MISSING_TOKENS for name in want):
            dropped += 1
        else:
            kept.append(row)
    if dropped:
        log.info("dropped %d row(s) with missing cells from %s", dropped, data_path)
    if not kept:
        raise GroupselError(f"{data_path}: no complete rows remain after dropping missing values")

    variables = []
    for name in predictor_names:
        raw = [row[idx[name]] for row in kept]
        kind = col_kinds[name]
        if kind == QUANTITATIVE:
            variables.append(Variable(name, QUANTITATIVE, np.array([float(x) for x in raw])))
        elif kind == QUALITATIVE:
            levels = tuple(sorted(set(raw)))
            code = {lvl: i for i, lvl in enumerate(levels)}
            variables.append(
                Variable(name, QUALITATIVE, np.array([code[x] for x in raw]), levels)
            )
        else:
            raise GroupselError(f"schema column {name!r} has unknown kind {kind!r}")

    y = np.array([float(row[idx[response]]) for row in kept])
    return Dataset(tuple(variables), y, response_kind)
