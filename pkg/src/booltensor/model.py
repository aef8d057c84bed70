"""Model state (binary factor matrices, noise parameter) and the pointwise likelihood.

An entry of the Boolean product is 1 iff some latent dimension has all of its
factors active.  The likelihood of an observation is sigma(lambda) if it
matches the product, 1 - sigma(lambda) otherwise; missing entries contribute
a factor of 1/2.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import ObservedTensor


def sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def log_sigmoid(x: float) -> float:
    # -log(1 + exp(-x)), stable on both tails
    return -math.log1p(math.exp(-x)) if x >= 0 else x - math.log1p(math.exp(x))


def logit(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError(f"logit needs p in (0, 1), got {p}")
    return math.log(p) - math.log1p(-p)


@dataclass
class FactorMatrix:
    """Binary N_k x L factor matrix for one tensor mode."""

    mode: int
    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if arr.ndim != 2:
            raise ValueError(f"factor matrix must be 2-D, got shape {arr.shape}")
        if arr.size and arr.max() > 1:
            raise ValueError("factor entries must be 0 or 1")
        self.bits = arr

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def rank(self) -> int:
        return self.bits.shape[1]

    def signed(self) -> np.ndarray:
        """The {-1, +1} view 2f - 1 (derived, never stored)."""
        return 2 * self.bits.astype(np.int8) - 1


@dataclass
class NoiseModel:
    """Noise strength lambda with Beta(alpha, beta) pseudo-counts on sigma(lambda).

    alpha counts correct predictions, beta incorrect ones; alpha = beta = 1 is
    the add-one (rule of succession) default that keeps sigma(lambda) < 1 and
    log-likelihoods finite.  In a converged fit sigma(lambda) lies in [0.5, 1);
    transient MAP updates may briefly dip below while the factors are poor.
    """

    lam: float = 0.0
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta pseudo-counts must be positive")
        if not math.isfinite(self.lam):
            raise ValueError("lambda must be finite")

    def sigma(self) -> float:
        return sigmoid(self.lam)


@dataclass
class ModelState:
    """Factor matrices for every mode plus the noise model.

    ``dim_labels`` are stable integer labels for the latent dimensions; rank
    pruning keeps the surviving labels so posterior traces remain alignable
    across restarts.
    """

    factors: list[FactorMatrix]
    noise: NoiseModel = field(default_factory=NoiseModel)
    dim_labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        if len(self.factors) < 2:
            raise ValueError("need at least 2 factor matrices")
        ranks = {f.rank for f in self.factors}
        if len(ranks) != 1:
            raise ValueError(f"factor matrices disagree on rank: {sorted(ranks)}")
        for k, f in enumerate(self.factors):
            if f.mode != k:
                raise ValueError(f"factor at position {k} claims mode {f.mode}")
        if self.dim_labels is None:
            self.dim_labels = np.arange(self.rank)
        else:
            self.dim_labels = np.asarray(self.dim_labels, dtype=int)
            if self.dim_labels.shape != (self.rank,):
                raise ValueError("dim_labels length must equal the rank")

    @property
    def n_modes(self) -> int:
        return len(self.factors)

    @property
    def rank(self) -> int:
        return self.factors[0].rank

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.rows for f in self.factors)

    def bits(self) -> list[np.ndarray]:
        return [f.bits for f in self.factors]

    def copy(self) -> "ModelState":
        return ModelState(
            [FactorMatrix(f.mode, f.bits.copy()) for f in self.factors],
            NoiseModel(self.noise.lam, self.noise.alpha, self.noise.beta),
            self.dim_labels.copy(),
        )

    def check_dims(self, t: ObservedTensor) -> None:
        if self.dims != t.dims:
            raise ValueError(f"model dims {self.dims} do not match tensor dims {t.dims}")


def boolean_product(bits: Sequence[np.ndarray]) -> np.ndarray:
    """Full deterministic Boolean product: OR over dimensions of ANDs over modes."""
    dims = tuple(b.shape[0] for b in bits)
    rank = bits[0].shape[1]
    out = np.zeros(dims, dtype=bool)
    for l in range(rank):
        block = bits[0][:, l].astype(bool)
        for b in bits[1:]:
            block = block[..., None] & b[:, l].astype(bool)
        out |= block
    return out


def deterministic_product_entry(state: ModelState, idx: Sequence[int]) -> int:
    """Entry of the Boolean product: 1 iff some dimension has all factors on at idx."""
    for l in range(state.rank):
        if all(f.bits[i, l] for f, i in zip(state.factors, idx)):
            return 1
    return 0


def entry_log_likelihood(state: ModelState, idx: Sequence[int], x: int) -> float:
    """Log-probability of one ternary observation under the current state.

    x is the signed/missing code: +1 observed-one, -1 observed-zero,
    0 missing (contributes exactly log(1/2)).
    """
    covered = deterministic_product_entry(state, idx)
    return log_sigmoid(state.noise.lam * x * (2 * covered - 1))


def total_log_likelihood(state: ModelState, t: ObservedTensor) -> float:
    """Sum of entry log-likelihoods over the whole tensor (missing included)."""
    state.check_dims(t)
    covered = boolean_product(state.bits())
    z = state.noise.lam * t.data * (2 * covered.astype(np.int8) - 1)
    return float(-np.logaddexp(0.0, -z).sum())


def count_correct(state: ModelState, t: ObservedTensor) -> tuple[int, int]:
    """(#observed entries matching the Boolean product, #observed entries)."""
    state.check_dims(t)
    covered = boolean_product(state.bits())
    observed = t.data != 0
    match = np.where(covered, t.data == 1, t.data == -1)
    return int(np.count_nonzero(match & observed)), int(np.count_nonzero(observed))


def write_factor_csv(values: np.ndarray, dest: str) -> None:
    """One file per mode: header l0,l1,..., one row per index, 0/1 or means in [0,1]."""
    values = np.asarray(values)
    with open(dest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"l{j}" for j in range(values.shape[1])])
        for row in values:
            writer.writerow([_format_cell(v) for v in row])


def _format_cell(v) -> str:
    f = float(v)
    return str(int(f)) if f == int(f) else repr(f)


def read_factor_csv(source: str) -> np.ndarray:
    with open(source, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(c) for c in row] for row in reader if row]
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != len(header):
        raise ValueError(f"malformed factor CSV {source}")
    return arr
