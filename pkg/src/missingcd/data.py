"""Datasets with a missingness mask, test-wise deletion and the CSV format."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from os import PathLike
from typing import Iterable, Sequence

import numpy as np

MISSING_TOKENS = frozenset({"", "NA"})


class EmptyAfterDeletion(ValueError):
    """No row survives test-wise deletion."""


class CsvParseError(ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.row = row
        self.column = column


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ``n x d`` sample matrix with a boolean mask (True = missing).

    Masked cells are overwritten with NaN on construction so that any statistic
    that accidentally reads them returns NaN instead of a plausible number.
    """

    values: np.ndarray
    mask: np.ndarray
    names: tuple[str, ...]
    _row_ids: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float, copy=True)
        mask = np.array(self.mask, dtype=bool, copy=True)
        if values.ndim != 2 or mask.shape != values.shape:
            raise ValueError("values and mask must be matrices of equal shape")
        n, d = values.shape
        if n < 1 or d < 1:
            raise ValueError("a dataset needs at least one row and one column")
        names = tuple(str(c) for c in self.names)
        if len(names) != d or len(set(names)) != d:
            raise ValueError("column names must be unique, one per column")
        if np.any(~np.isfinite(values[~mask])):
            raise ValueError("observed values must be finite")
        values[mask] = np.nan
        values.setflags(write=False)
        mask.setflags(write=False)
        row_ids = np.arange(n) if self._row_ids is None else np.asarray(self._row_ids)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "_row_ids", row_ids)

    @classmethod
    def from_array(cls, values: np.ndarray, names: Sequence[str] | None = None) -> "Dataset":
        """Build from a float array where NaN marks a missing entry."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if names is None:
            names = [f"X{i}" for i in range(values.shape[1])]
        return cls(values, np.isnan(values), tuple(names))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def row_ids(self) -> np.ndarray:
        """Row positions in the dataset this one was derived from."""
        return self._row_ids

    def column(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown column {name!r}") from None

    def partially_observed(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.mask.any(axis=0)))

    def indicator(self, col: int) -> np.ndarray:
        """The missingness indicator of ``col`` as 0/1 floats."""
        return self.mask[:, col].astype(float)

    def observed_rows(self, cols: Iterable[int]) -> np.ndarray:
        cols = sorted(set(cols))
        if not cols:
            return np.ones(self.n, dtype=bool)
        return ~self.mask[:, cols].any(axis=1)

    def take_rows(self, rows: np.ndarray) -> "Dataset":
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return Dataset(self.values[rows], self.mask[rows], self.names, self._row_ids[rows])


def testwise_delete(d: Dataset, cols: Iterable[int | str]) -> Dataset:
    """Keep the rows on which every column in ``cols`` is observed."""
    idx = {d.column(c) if isinstance(c, str) else int(c) for c in cols}
    if not idx:
        raise ValueError("test-wise deletion needs at least one column")
    keep = d.observed_rows(idx)
    if not keep.any():
        raise EmptyAfterDeletion(f"no complete rows for columns {sorted(d.names[j] for j in idx)}")
    return d.take_rows(keep)


def _format(x: float) -> str:
    return "%.17g" % x


def write_csv(d: Dataset, path: str | PathLike | io.TextIOBase) -> None:
    """Header row, then one line per sample; missing entries are written as ``NA``."""
    rows = [list(d.names)]
    for i in range(d.n):
        rows.append(["NA" if d.mask[i, j] else _format(d.values[i, j]) for j in range(d.d)])
    if isinstance(path, io.TextIOBase):
        csv.writer(path, lineterminator="\n").writerows(rows)
        return
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def read_csv(path: str | PathLike | io.TextIOBase) -> Dataset:
    """Parse a data CSV; empty fields and ``NA`` are missing."""
    if isinstance(path, io.TextIOBase):
        rows = list(csv.reader(path))
    else:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    if not rows:
        raise CsvParseError("file is empty; a header row is required")
    header = [h.strip() for h in rows[0]]
    if any(not h for h in header):
        raise CsvParseError("empty column name in header", row=1)
    if len(set(header)) != len(header):
        raise CsvParseError("duplicate column names in header", row=1)
    body = rows[1:]
    if not body:
        raise CsvParseError("no data rows")
    values = np.zeros((len(body), len(header)))
    mask = np.zeros((len(body), len(header)), dtype=bool)
    for i, row in enumerate(body):
        line = i + 2
        if len(row) != len(header):
            raise CsvParseError(f"expected {len(header)} fields, found {len(row)}", row=line)
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell in MISSING_TOKENS:
                mask[i, j] = True
                continue
            try:
                v = float(cell)
            except ValueError:
                raise CsvParseError(f"cannot parse {cell!r} as a number", row=line, column=header[j]) from None
            if not np.isfinite(v):
                raise CsvParseError(f"non-finite value {cell!r}", row=line, column=header[j])
            values[i, j] = v
    return Dataset(values, mask, tuple(header))
