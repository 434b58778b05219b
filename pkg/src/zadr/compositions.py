"""Compositional datasets, zero patterns and additive log-ratio transforms.

A composition is a vector of nonnegative proportions summing to 1. Exact
zeros are meaningful here (structural absence of a component) and are never
imputed or perturbed; renormalization of noisy row sums touches only the
positive entries.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateRow,
    EmptyInput,
    NegativeEntry,
    RowSumViolation,
    SchemaMismatch,
    ZeroInTransform,
)

DEFAULT_ROW_SUM_TOLERANCE = 1e-8


@dataclass(frozen=True)
class CompositionDataset:
    """An n x D matrix of proportions on the simplex, with labels.

    Immutable after construction; build instances through :func:`load_dataset`
    which validates and renormalizes.
    """

    values: np.ndarray
    component_names: list[str]
    row_ids: list[str]

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def D(self) -> int:
        return self.values.shape[1]

    def zero_free_mask(self) -> np.ndarray:
        """Boolean mask of rows with no zero component."""
        return np.all(self.values > 0.0, axis=1)


@dataclass(frozen=True)
class CovariateMatrix:
    """An n x (p+1) design matrix whose first column is the intercept."""

    design: np.ndarray
    covariate_names: list[str]

    def __post_init__(self):
        design = self.design
        if design.ndim != 2 or design.shape[1] < 1:
            raise EmptyInput("design matrix must be 2-D with >= 1 column")
        if not np.all(np.isfinite(design)):
            raise ValueError("design matrix contains non-finite values")
        if not np.all(design[:, 0] == 1.0):
            raise ValueError("first design column must be the intercept (all ones)")
        if len(self.covariate_names) != design.shape[1]:
            raise ValueError("covariate_names length must match design columns")
        design.setflags(write=False)

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1] - 1


def make_design(covariates: np.ndarray, names: list[str] | None = None) -> CovariateMatrix:
    """Prepend an intercept column to raw covariates (n x p, possibly p=0)."""
    covariates = np.asarray(covariates, dtype=float)
    if covariates.ndim == 1:
        covariates = covariates[:, None]
    n = covariates.shape[0]
    design = np.hstack([np.ones((n, 1)), covariates])
    if names is None:
        names = [f"x{k}" for k in range(1, covariates.shape[1] + 1)]
    return CovariateMatrix(design=design, covariate_names=["intercept", *names])


@dataclass(frozen=True)
class ZeroPattern:
    """Per-row binary indicators of nonzero components.

    u[i, j] = 1 iff values[i, j] > 0. nonzero_sets[i] is the index tuple of
    positive components of row i (kept as an index set, never materialized
    as a selection matrix).
    """

    u: np.ndarray
    nonzero_sets: list[tuple[int, ...]] = field(repr=False)
    zero_row_indices: tuple[int, ...]

    def __post_init__(self):
        self.u.setflags(write=False)


def load_dataset(
    rows,
    names: list[str] | None = None,
    tolerance: float = DEFAULT_ROW_SUM_TOLERANCE,
    row_ids: list[str] | None = None,
) -> CompositionDataset:
    """Validate and normalize raw proportion rows into a dataset.

    Rows whose sum deviates from 1 by at most `tolerance` are renormalized;
    the renormalization divides only the positive entries so exact zeros are
    preserved bit-exactly.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be > 0")
    values = np.array(rows, dtype=float)
    if values.size == 0:
        raise EmptyInput("no composition rows supplied")
    if values.ndim == 1:
        values = values[None, :]
    if values.ndim != 2:
        raise EmptyInput("composition rows must form a rectangular matrix")
    n, D = values.shape
    if D < 2:
        raise DegenerateRow("compositions need at least 2 components")
    if np.any(values < 0):
        i, j = np.argwhere(values < 0)[0]
        raise NegativeEntry(f"negative entry {values[i, j]} at row {i}, column {j}")
    sums = values.sum(axis=1)
    bad = np.abs(sums - 1.0) > tolerance
    if np.any(bad):
        i = int(np.argmax(bad))
        raise RowSumViolation(f"row {i} sums to {sums[i]}, off by more than {tolerance}")
    positive_counts = (values > 0).sum(axis=1)
    if np.any(positive_counts < 2):
        i = int(np.argmax(positive_counts < 2))
        raise DegenerateRow(f"row {i} has fewer than 2 positive components")
    # Renormalize positive entries only; zeros stay exactly zero.
    values = values / sums[:, None]
    if names is None:
        names = [f"c{j + 1}" for j in range(D)]
    if len(names) != D:
        raise ValueError("component name count must equal D")
    if row_ids is None:
        row_ids = [str(i) for i in range(n)]
    if len(row_ids) != n:
        raise ValueError("row_ids length must equal n")
    return CompositionDataset(values=values, component_names=list(names), row_ids=list(row_ids))


def zero_pattern(ds: CompositionDataset) -> ZeroPattern:
    """Extract the binary nonzero-indicator matrix and per-row index sets."""
    u = (ds.values > 0.0).astype(np.int8)
    nonzero_sets = [tuple(np.flatnonzero(row)) for row in u]
    zero_rows = tuple(int(i) for i in np.flatnonzero((u == 0).any(axis=1)))
    return ZeroPattern(u=u, nonzero_sets=nonzero_sets, zero_row_indices=zero_rows)


def alr(ds_or_values, ref_index: int = 0) -> np.ndarray:
    """Additive log-ratio transform z_i = log(y_i / y_ref), i != ref.

    Requires strictly positive input; callers must filter to zero-free rows.
    Column order preserves the order of the non-reference components.
    """
    values = ds_or_values.values if isinstance(ds_or_values, CompositionDataset) else np.asarray(ds_or_values, dtype=float)
    if values.ndim == 1:
        values = values[None, :]
    D = values.shape[1]
    if not 0 <= ref_index < D:
        raise IndexError(f"ref_index {ref_index} out of range for D={D}")
    if np.any(values <= 0.0):
        raise ZeroInTransform("alr requires strictly positive compositions")
    logs = np.log(values)
    keep = [j for j in range(D) if j != ref_index]
    return logs[:, keep] - logs[:, [ref_index]]


def alr_inv(
    z: np.ndarray,
    ref_index: int = 0,
    component_names: list[str] | None = None,
) -> CompositionDataset:
    """Inverse alr: map R^d back onto the open simplex.

    Overflow-safe via max-subtraction; output rows sum to exactly 1.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[None, :]
    n, d = z.shape
    D = d + 1
    if not 0 <= ref_index < D:
        raise IndexError(f"ref_index {ref_index} out of range for D={D}")
    eta = np.zeros((n, D))
    keep = [j for j in range(D) if j != ref_index]
    eta[:, keep] = z
    eta -= eta.max(axis=1, keepdims=True)
    expo = np.exp(eta)
    y = expo / expo.sum(axis=1, keepdims=True)
    if component_names is None:
        component_names = [f"c{j + 1}" for j in range(D)]
    return CompositionDataset(values=y, component_names=list(component_names), row_ids=[str(i) for i in range(n)])


def estimate_p(zp: ZeroPattern) -> np.ndarray:
    """Per-component proportion of nonzero observations (closed-form MLE)."""
    return zp.u.mean(axis=0)


def read_csv(
    path,
    components: list[str] | None = None,
    covariates: list[str] | None = None,
    tolerance: float = DEFAULT_ROW_SUM_TOLERANCE,
) -> tuple[CompositionDataset, CovariateMatrix]:
    """Read a dataset CSV: header row, composition columns plus covariates.

    Composition columns are picked by the `components` name list, or by a
    `y:` prefix convention when the list is absent. Remaining numeric columns
    become covariates (all of them, or only those named in `covariates`).
    Empty cells are errors, not zeros.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInput(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        records = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not records:
        raise EmptyInput(f"{path}: no data rows")

    if components is not None:
        comp_cols = []
        for name in components:
            if name not in header:
                raise SchemaMismatch(f"{path}: component column {name!r} not found")
            comp_cols.append(header.index(name))
        comp_names = list(components)
    else:
        comp_cols = [j for j, h in enumerate(header) if h.startswith("y:")]
        if not comp_cols:
            raise SchemaMismatch(f"{path}: no components given and no 'y:'-prefixed columns")
        comp_names = [header[j][2:] for j in comp_cols]

    if covariates is not None:
        cov_cols = []
        for name in covariates:
            if name not in header:
                raise SchemaMismatch(f"{path}: covariate column {name!r} not found")
            cov_cols.append(header.index(name))
        cov_names = list(covariates)
    else:
        cov_cols = [j for j in range(len(header)) if j not in comp_cols]
        cov_names = [header[j] for j in cov_cols]

    def parse(cell, row_i, col):
        cell = cell.strip()
        if not cell:
            raise EmptyInput(f"{path}: empty cell at data row {row_i}, column {header[col]!r}")
        return float(cell)

    comp_rows = [[parse(rec[j], i, j) for j in comp_cols] for i, rec in enumerate(records)]
    ds = load_dataset(comp_rows, names=comp_names, tolerance=tolerance)
    cov_values = np.array([[parse(rec[j], i, j) for j in cov_cols] for i, rec in enumerate(records)])
    if cov_values.size == 0:
        cov_values = np.empty((len(records), 0))
    X = make_design(cov_values, names=cov_names)
    return ds, X
