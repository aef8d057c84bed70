"""Storage, indexing and I/O for K-way binary tensors with missing entries.

Entries are signed ternary: +1 for an observed one, -1 for an observed zero,
0 for missing.  Storage is dense, one signed byte per entry, row-major with
the last index fastest.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

MAGIC = b"BTNSR1"

IndexTuple = tuple[int, ...]


class ParseError(ValueError):
    """Malformed tensor file; message carries the offending line or offset."""


@dataclass
class ObservedTensor:
    """Dense K-way array of ternary entries (+1 observed-one, -1 observed-zero, 0 missing)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.int8)
        if arr.ndim < 2:
            raise ValueError(f"tensor must have at least 2 modes, got {arr.ndim}")
        if arr.size and not np.isin(arr, (-1, 0, 1)).all():
            bad = arr.ravel()[~np.isin(arr.ravel(), (-1, 0, 1))][0]
            raise ValueError(f"tensor entries must be in {{-1, 0, 1}}, found {bad}")
        self.data = arr

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def n_modes(self) -> int:
        return self.data.ndim

    @property
    def entries(self) -> np.ndarray:
        """Flat row-major view of the entries."""
        return self.data.reshape(-1)

    @property
    def n_observed(self) -> int:
        return int(np.count_nonzero(self.data))

    def observed_mask(self) -> np.ndarray:
        return self.data != 0

    def copy(self) -> "ObservedTensor":
        return ObservedTensor(self.data.copy())

    @classmethod
    def from_entries(cls, dims: Sequence[int], entries: Sequence[int]) -> "ObservedTensor":
        dims = tuple(int(d) for d in dims)
        flat = np.asarray(entries, dtype=np.int8)
        expected = int(np.prod(dims)) if dims else 0
        if flat.size != expected:
            raise ValueError(f"expected {expected} entries for dims {dims}, got {flat.size}")
        return cls(flat.reshape(dims))

    @classmethod
    def from_binary(cls, binary: np.ndarray) -> "ObservedTensor":
        """Build a fully-observed tensor from a 0/1 array (1 -> +1, 0 -> -1)."""
        b = np.asarray(binary)
        return cls((2 * (b != 0).astype(np.int8) - 1))


def flat_offset(idx: Sequence[int], dims: Sequence[int]) -> int:
    """Row-major offset of ``idx`` in a tensor with extents ``dims``."""
    if len(idx) != len(dims):
        raise IndexError(f"index {tuple(idx)} has wrong arity for dims {tuple(dims)}")
    off = 0
    for i, n in zip(idx, dims):
        if not 0 <= i < n:
            raise IndexError(f"index {tuple(idx)} out of range for dims {tuple(dims)}")
        off = off * n + i
    return off


def unflatten_offset(offset: int, dims: Sequence[int]) -> IndexTuple:
    """Inverse of :func:`flat_offset`."""
    total = int(np.prod(dims))
    if not 0 <= offset < total:
        raise IndexError(f"offset {offset} out of range for dims {tuple(dims)}")
    idx = []
    for n in reversed(dims):
        idx.append(offset % n)
        offset //= n
    return tuple(reversed(idx))


def save_dense(t: ObservedTensor, dest: str | BinaryIO) -> None:
    """Write the dense binary format: magic, K, extents (u32 LE), signed bytes."""
    header = MAGIC + struct.pack("<I", t.n_modes)
    header += struct.pack(f"<{t.n_modes}I", *t.dims)
    payload = t.data.tobytes()  # C order == row-major, last index fastest
    if hasattr(dest, "write"):
        dest.write(header + payload)
    else:
        with open(dest, "wb") as fh:
            fh.write(header + payload)


def load_dense(source: str | BinaryIO) -> ObservedTensor:
    if hasattr(source, "read"):
        raw = source.read()
    else:
        with open(source, "rb") as fh:
            raw = fh.read()
    if raw[: len(MAGIC)] != MAGIC:
        raise ParseError(f"bad magic bytes at offset 0: expected {MAGIC!r}")
    pos = len(MAGIC)
    if len(raw) < pos + 4:
        raise ParseError(f"truncated header at offset {len(raw)}")
    (k,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if k < 2:
        raise ParseError(f"tensor order {k} at offset {len(MAGIC)} must be >= 2")
    if len(raw) < pos + 4 * k:
        raise ParseError(f"truncated extents at offset {len(raw)}")
    dims = struct.unpack_from(f"<{k}I", raw, pos)
    pos += 4 * k
    total = int(np.prod(dims))
    if len(raw) - pos != total:
        raise ParseError(
            f"payload length {len(raw) - pos} at offset {pos} does not match "
            f"{total} entries for dims {dims}"
        )
    flat = np.frombuffer(raw, dtype=np.int8, count=total, offset=pos)
    bad = ~np.isin(flat, (-1, 0, 1))
    if bad.any():
        where = int(np.flatnonzero(bad)[0])
        raise ParseError(f"entry value {flat[where]} at payload offset {where} not in {{-1,0,1}}")
    return ObservedTensor(flat.reshape(dims).copy())


def save_sparse(t: ObservedTensor, dest: str, default: str = "missing") -> None:
    """Write the sparse coordinate text format.

    default="missing" lists every observed entry; default="zero" lists only
    ones and requires a fully-observed tensor (missing entries cannot be
    represented under that convention).
    """
    if default not in ("missing", "zero"):
        raise ValueError(f"default must be 'missing' or 'zero', got {default!r}")
    if default == "zero" and t.n_observed != t.data.size:
        raise ValueError("default=zero cannot represent tensors with missing entries")
    lines = [f"dims: {' '.join(str(d) for d in t.dims)}", f"default: {default}"]
    if default == "missing":
        coords = np.argwhere(t.data != 0)
    else:
        coords = np.argwhere(t.data == 1)
    for c in coords:
        v = 1 if t.data[tuple(c)] > 0 else 0
        lines.append(" ".join(str(int(i)) for i in c) + f" {v}")
    text = "\n".join(lines) + "\n"
    with open(dest, "w") as fh:
        fh.write(text)


def load_sparse(source: str) -> ObservedTensor:
    with open(source) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("dims:"):
        raise ParseError("line 1: expected 'dims: N1 N2 ... NK'")
    try:
        dims = tuple(int(tok) for tok in lines[0][len("dims:"):].split())
    except ValueError as exc:
        raise ParseError(f"line 1: {exc}") from None
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ParseError(f"line 1: need >= 2 positive extents, got {dims}")
    if len(lines) < 2 or not lines[1].startswith("default:"):
        raise ParseError("line 2: expected 'default: missing|zero'")
    default = lines[1][len("default:"):].strip()
    if default not in ("missing", "zero"):
        raise ParseError(f"line 2: default must be 'missing' or 'zero', got {default!r}")
    fill = np.int8(0) if default == "missing" else np.int8(-1)
    data = np.full(dims, fill, dtype=np.int8)
    seen = set()
    for ln, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        toks = line.split()
        if len(toks) != len(dims) + 1:
            raise ParseError(f"line {ln}: expected {len(dims)} indices and a value")
        try:
            idx = tuple(int(tok) for tok in toks[:-1])
            v = int(toks[-1])
        except ValueError:
            raise ParseError(f"line {ln}: non-integer token") from None
        if any(not 0 <= i < n for i, n in zip(idx, dims)):
            raise ParseError(f"line {ln}: index {idx} out of range for dims {dims}")
        if v not in (0, 1):
            raise ParseError(f"line {ln}: value must be 0 or 1, got {v}")
        if idx in seen:
            raise ParseError(f"line {ln}: duplicate entry for index {idx}")
        seen.add(idx)
        data[idx] = 1 if v == 1 else -1
    return ObservedTensor(data)


def load_tensor(source: str) -> ObservedTensor:
    """Load either format, sniffing the dense magic bytes."""
    with open(source, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        return load_dense(source)
    return load_sparse(source)


def mask_holdout(
    t: ObservedTensor, fraction: float, seed: int
) -> tuple[ObservedTensor, list[tuple[IndexTuple, int]]]:
    """Mask a fraction of the observed entries for held-out evaluation.

    Returns (train, heldout) where train has round(fraction * n_observed)
    formerly-observed entries set to missing and heldout lists those entries
    as (index tuple, binary value).  Selection is uniform over the observed
    entries (no stratification); entries already missing are never selected.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"holdout fraction must be in [0, 1), got {fraction}")
    observed = np.flatnonzero(t.entries != 0)
    n_mask = round(fraction * observed.size)
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(observed, size=n_mask, replace=False))
    train = t.data.copy()
    flat = train.reshape(-1)
    heldout = []
    for off in chosen:
        idx = unflatten_offset(int(off), t.dims)
        heldout.append((idx, 1 if flat[off] > 0 else 0))
        flat[off] = 0
    return ObservedTensor(train), heldout
