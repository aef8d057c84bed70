"""Relational encoding of continuous object x attribute data.

A continuous matrix becomes a 3-way relation tensor: entry (object, i, j) is
an observed one when attribute i exceeds attribute j for that object, an
observed zero when it is smaller, and missing on ties, missing values, and
the diagonal.  Attributes are usually z-scored first so that values are
comparable across columns.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .tensor import ObservedTensor, ParseError


@dataclass
class ContinuousMatrix:
    objects: list[str]
    attributes: list[str]
    values: np.ndarray  # NaN marks missing cells

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-D array")
        n, g = self.values.shape
        if g < 2:
            raise ValueError(f"need at least 2 attributes, got {g}")
        if len(self.objects) != n or len(self.attributes) != g:
            raise ValueError("label lengths do not match the value array")


def read_continuous_csv(source: str) -> ContinuousMatrix:
    """CSV with a header row of attribute names and a first column of object IDs.

    Empty cells are missing values.
    """
    with open(source, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("line 1: empty file") from None
        if len(header) < 3:
            raise ParseError("line 1: need an ID column plus at least 2 attributes")
        attributes = [h.strip() for h in header[1:]]
        objects, rows = [], []
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"line {ln}: expected {len(header)} cells, got {len(row)}")
            objects.append(row[0].strip())
            vals = []
            for cell in row[1:]:
                cell = cell.strip()
                if not cell:
                    vals.append(math.nan)
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(f"line {ln}: non-numeric cell {cell!r}") from None
            rows.append(vals)
    if not rows:
        raise ParseError("no data rows")
    return ContinuousMatrix(objects, attributes, np.asarray(rows))


def zscore_normalize(m: ContinuousMatrix) -> ContinuousMatrix:
    """Standardize each attribute to mean 0 and sample standard deviation 1.

    Missing cells are ignored and stay missing.
    """
    values = m.values.copy()
    for j, name in enumerate(m.attributes):
        col = values[:, j]
        present = ~np.isnan(col)
        if present.sum() < 2:
            raise ValueError(f"attribute {name!r}: need >= 2 values to standardize")
        sd = float(np.std(col[present], ddof=1))
        if sd == 0.0:
            raise ValueError(f"attribute {name!r} has zero variance")
        values[present, j] = (col[present] - float(np.mean(col[present]))) / sd
    return ContinuousMatrix(list(m.objects), list(m.attributes), values)


def relational_encode(m: ContinuousMatrix, tie_epsilon: float = 0.0) -> ObservedTensor:
    """Encode pairwise attribute orderings per object into an [N, G, G] tensor.

    Differences with magnitude <= tie_epsilon count as ties (missing).  Both
    orientations are materialized; the diagonal is entirely missing.
    """
    if tie_epsilon < 0:
        raise ValueError("tie_epsilon must be >= 0")
    n, g = m.values.shape
    if g < 2:
        raise ValueError("need at least 2 attributes to encode relations")
    diff = m.values[:, :, None] - m.values[:, None, :]
    data = np.zeros((n, g, g), dtype=np.int8)
    data[diff > tie_epsilon] = 1
    data[diff < -tie_epsilon] = -1
    # NaN comparisons are False on both sides, so missing cells are already 0
    for i in range(g):
        data[:, i, i] = 0
    return ObservedTensor(data)


def write_name_map(m: ContinuousMatrix, dest: str) -> None:
    """Sidecar label file: one `kind<TAB>index<TAB>label` line per object/attribute."""
    lines = [f"object\t{i}\t{name}" for i, name in enumerate(m.objects)]
    lines += [f"attribute\t{j}\t{name}" for j, name in enumerate(m.attributes)]
    with open(dest, "w") as fh:
        fh.write("\n".join(lines) + "\n")
