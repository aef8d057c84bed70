"""Rank selection: pruning non-contributing dimensions, or cross-validation.

The pruning route starts from a deliberately large rank, runs the chain to
convergence, drops every latent dimension whose removal does not strictly
decrease the number of correctly reconstructed observed entries, and restarts
burn-in until all surviving dimensions contribute.  The cross-validation
route masks a fraction of the observed entries once (shared across candidate
ranks) and picks the rank with the best held-out predictive accuracy,
breaking ties toward the smaller rank.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .model import FactorMatrix, ModelState, boolean_product, total_log_likelihood
from .reconstruct import accuracy, posterior_predictive
from .rng import TAG_CV, TAG_HOLDOUT, TAG_OCCAM, derive_seed
from .sampler import SamplerConfig, run_chain
from .tensor import ObservedTensor, mask_holdout


@dataclass
class RankSelectionReport:
    method: str
    chosen_rank: int
    candidates: list[dict] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)

    def to_records(self) -> str:
        lines = [json.dumps({"method": self.method, "chosen_rank": self.chosen_rank})]
        lines += [json.dumps(c) for c in self.candidates]
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        lines = [f"method: {self.method}", f"chosen rank: {self.chosen_rank}", ""]
        if self.candidates:
            keys = list(self.candidates[0].keys())
            lines.append("  ".join(f"{k:>18}" for k in keys))
            for c in self.candidates:
                lines.append("  ".join(f"{str(c.get(k)):>18}" for k in keys))
        return "\n".join(lines) + "\n"


def _correct_count(bits: list[np.ndarray], t: ObservedTensor) -> int:
    covered = boolean_product(bits)
    return int(np.count_nonzero(np.where(covered, t.data == 1, t.data == -1) & (t.data != 0)))


def contributing_dims(bits: list[np.ndarray], t: ObservedTensor) -> np.ndarray:
    """Boolean mask of dimensions whose removal strictly decreases the correct count.

    Dimensions are examined in order with earlier removals applied, so one of
    a redundant pair is dropped and the other kept.
    """
    rank = bits[0].shape[1]
    current = [b.copy() for b in bits]
    best = _correct_count(current, t)
    keep = np.ones(rank, dtype=bool)
    for l in range(rank):
        trial = [b.copy() for b in current]
        for b in trial:
            b[:, l] = 0
        c = _correct_count(trial, t)
        if c >= best:  # removal does not hurt: dimension does not contribute
            keep[l] = False
            current = trial
            best = c
    return keep


def occam_select(t: ObservedTensor, start_rank: int, cfg: SamplerConfig) -> RankSelectionReport:
    """Iteratively prune non-contributing dimensions, restarting burn-in after each pruning.

    Restarts are warm: the chain continues from the surviving columns of the
    last sampled state, so dimensions that already explain part of the data
    keep their structure while burn-in re-converges at the reduced rank.
    """
    if start_rank < 1:
        raise ValueError("start_rank must be >= 1")
    report = RankSelectionReport("occam", chosen_rank=start_rank)
    rank = start_rank
    labels = np.arange(start_rank)
    warm: ModelState | None = None
    round_idx = 0
    while rank >= 1:
        seed = derive_seed(cfg.seed, TAG_OCCAM, round_idx)
        round_cfg = replace(cfg, rank=rank, seed=seed)
        acc, state, trace = run_chain(t, round_cfg, initial_state=warm)
        map_bits = [(m > 0.5).astype(np.uint8) for m in acc.factor_means()]
        map_state = ModelState(
            [FactorMatrix(k, b) for k, b in enumerate(map_bits)], state.noise, labels
        )
        keep = contributing_dims(map_bits, t)
        removed = [int(x) for x in labels[~keep]]
        report.seeds.append(seed)
        report.candidates.append(
            {
                "round": round_idx,
                "rank": rank,
                "removed_labels": removed,
                "train_log_likelihood": total_log_likelihood(map_state, t),
                "sigma_lambda": state.noise.sigma(),
                "converged": trace.converged,
                "seed": seed,
            }
        )
        if keep.all():
            break
        labels = labels[keep]
        rank = int(keep.sum())
        round_idx += 1
        if rank == 0:
            break
        warm = ModelState(
            [FactorMatrix(k, f.bits[:, keep].copy()) for k, f in enumerate(state.factors)],
            state.noise,
            labels.copy(),
        )
    report.chosen_rank = rank
    return report


def cv_select(
    t: ObservedTensor,
    ranks: Sequence[int],
    holdout_fraction: float,
    cfg: SamplerConfig,
) -> RankSelectionReport:
    """Pick the rank with the best held-out predictive accuracy (ties to the smallest)."""
    ranks = list(ranks)
    if not ranks:
        raise ValueError("need at least one candidate rank")
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError(f"holdout_fraction must be in (0, 1), got {holdout_fraction}")
    mask_seed = derive_seed(cfg.seed, TAG_HOLDOUT)
    train, heldout = mask_holdout(t, holdout_fraction, mask_seed)
    if not heldout:
        raise ValueError("holdout selected zero entries")
    report = RankSelectionReport("cross_validation", chosen_rank=ranks[0])
    scores: list[tuple[int, float]] = []
    for rank in ranks:
        seed = derive_seed(cfg.seed, TAG_CV, rank)
        acc, _, trace = run_chain(train, replace(cfg, rank=rank, seed=seed))
        score = accuracy(posterior_predictive(acc), t, heldout)
        scores.append((rank, score))
        report.seeds.append(seed)
        report.candidates.append(
            {
                "rank": rank,
                "heldout_accuracy": score,
                "converged": trace.converged,
                "seed": seed,
            }
        )
    best_score = max(s for _, s in scores)
    report.chosen_rank = min(r for r, s in scores if s == best_score)
    return report
