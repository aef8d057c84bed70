"""Reconstruction estimators over posterior samples and accuracy metrics.

Three estimators: averaging per-sample predictive probabilities, the Boolean
product of marginal-MAP factors, and the cheap factor-mean approximation
1 - prod_l(1 - prod_k mean).  Hard reconstructions round probabilities with
ties at exactly 0.5 broken toward 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import boolean_product
from .sampler import PosteriorAccumulator
from .tensor import IndexTuple, ObservedTensor

ESTIMATORS = ("posterior_predictive", "factor_map", "factor_mean")


@dataclass
class Reconstruction:
    probabilities: np.ndarray
    estimator_kind: str

    @property
    def hard(self) -> np.ndarray:
        """Rounded reconstruction; a probability of exactly 0.5 rounds to 0."""
        return self.probabilities > 0.5

    @property
    def dims(self) -> tuple[int, ...]:
        return self.probabilities.shape


def posterior_predictive(acc: PosteriorAccumulator) -> Reconstruction:
    """Average of per-sample entry probabilities."""
    return Reconstruction(acc.predictive_mean(), "posterior_predictive")


def factor_map_reconstruct(acc: PosteriorAccumulator) -> Reconstruction:
    """Boolean product of the marginal-MAP factors (means rounded, ties to 0)."""
    rounded = [(m > 0.5).astype(np.uint8) for m in acc.factor_means()]
    return Reconstruction(boolean_product(rounded).astype(np.float64), "factor_map")


def factor_mean_reconstruct(acc: PosteriorAccumulator) -> Reconstruction:
    """Probabilities from factor means: 1 - prod_l (1 - prod_k mean_k[:, l])."""
    means = acc.factor_means()
    dims = tuple(m.shape[0] for m in means)
    rank = means[0].shape[1]
    miss = np.ones(dims, np.float64)
    for l in range(rank):
        block = means[0][:, l]
        for m in means[1:]:
            block = block[..., None] * m[:, l]
        miss *= 1.0 - block
    return Reconstruction(1.0 - miss, "factor_mean")


def accuracy(
    recon: Reconstruction,
    reference: ObservedTensor,
    scope: str | Sequence[tuple[IndexTuple, int]] = "all_observed",
) -> float:
    """Fraction of in-scope entries whose hard reconstruction matches the reference.

    scope is either "all_observed" (missing reference entries excluded) or a
    held-out list of (index tuple, binary value) pairs as produced by
    mask_holdout; in the latter case the reference tensor is ignored.
    """
    hard = recon.hard
    if isinstance(scope, str):
        if scope != "all_observed":
            raise ValueError(f"unknown scope {scope!r}")
        if recon.dims != reference.dims:
            raise ValueError(f"dims mismatch: {recon.dims} vs {reference.dims}")
        observed = reference.data != 0
        if not observed.any():
            raise ValueError("reference has no observed entries to score")
        return float(np.mean(hard[observed] == (reference.data[observed] == 1)))
    heldout = list(scope)
    if not heldout:
        raise ValueError("empty held-out list")
    hits = sum(1 for idx, v in heldout if bool(hard[idx]) == bool(v))
    return hits / len(heldout)
