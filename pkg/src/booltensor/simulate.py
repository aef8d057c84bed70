"""Synthetic random-tensor benchmark: Boolean products of i.i.d. Bernoulli factors.

Tensors are generated by taking the Boolean product of random binary factor
matrices and flipping each entry with a given probability.  The expected
tensor density is 1 - (1 - d^K)^L for factor density d, which is inverted to
hit target densities on a benchmark grid.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import FactorMatrix, boolean_product
from .reconstruct import (
    accuracy,
    factor_map_reconstruct,
    factor_mean_reconstruct,
    posterior_predictive,
)
from .sampler import SamplerConfig, run_chain
from .tensor import ObservedTensor

BENCH_COLUMNS = [
    "seed",
    "dims",
    "rank_true",
    "rank_fit",
    "factor_density",
    "noise_p",
    "estimator",
    "train_acc",
    "test_acc",
    "sweeps_to_converge",
    "wall_ms",
]


@dataclass
class SimSpec:
    dims: tuple[int, ...]
    rank: int
    factor_density: float
    noise_p: float
    seed: int

    def __post_init__(self) -> None:
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) < 2 or any(d < 1 for d in self.dims):
            raise ValueError(f"need >= 2 positive extents, got {self.dims}")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if not 0.0 < self.factor_density < 1.0:
            raise ValueError(f"factor_density must be in (0, 1), got {self.factor_density}")
        if not 0.0 <= self.noise_p < 0.5:
            raise ValueError(f"noise_p must be in [0, 0.5), got {self.noise_p}")


def expected_density(factor_density: float, rank: int, n_modes: int) -> float:
    """Expected density of the Boolean product of i.i.d. Bernoulli factors."""
    return 1.0 - (1.0 - factor_density**n_modes) ** rank


def density_for_target(target: float, rank: int, n_modes: int) -> float:
    """Factor density whose expected tensor density is `target`."""
    if not 0.0 < target < 1.0:
        raise ValueError(f"target density must be in (0, 1), got {target}")
    return (1.0 - (1.0 - target) ** (1.0 / rank)) ** (1.0 / n_modes)


def generate(spec: SimSpec) -> tuple[ObservedTensor, ObservedTensor, list[FactorMatrix]]:
    """Returns (clean, noisy, true factors); both tensors fully observed.

    noisy differs from clean by independent symmetric bit flips with
    probability noise_p.
    """
    rng = np.random.default_rng(spec.seed)
    factors = [
        FactorMatrix(k, (rng.random((n, spec.rank)) < spec.factor_density).astype(np.uint8))
        for k, n in enumerate(spec.dims)
    ]
    clean_bits = boolean_product([f.bits for f in factors])
    flips = rng.random(spec.dims) < spec.noise_p
    noisy_bits = clean_bits ^ flips
    return (
        ObservedTensor.from_binary(clean_bits),
        ObservedTensor.from_binary(noisy_bits),
        factors,
    )


def benchmark_cell(
    spec: SimSpec, cfg: SamplerConfig, rank_fit: int | None = None
) -> list[dict]:
    """Fit one simulated tensor; one row per reconstruction estimator."""
    clean, noisy, _ = generate(spec)
    fit_rank = spec.rank if rank_fit is None else rank_fit
    cell_cfg = SamplerConfig(
        rank=fit_rank,
        max_burn_in_sweeps=cfg.max_burn_in_sweeps,
        convergence_window=cfg.convergence_window,
        convergence_tol=cfg.convergence_tol,
        n_samples=cfg.n_samples,
        seed=spec.seed,
        threads=cfg.threads,
        lambda_init=cfg.lambda_init,
        update_lambda_during_sampling=cfg.update_lambda_during_sampling,
        alpha=cfg.alpha,
        beta=cfg.beta,
    )
    t0 = time.perf_counter()
    acc, _, trace = run_chain(noisy, cell_cfg)
    wall_ms = (time.perf_counter() - t0) * 1e3
    recons = [posterior_predictive(acc), factor_map_reconstruct(acc), factor_mean_reconstruct(acc)]
    rows = []
    for recon in recons:
        rows.append(
            {
                "seed": spec.seed,
                "dims": "x".join(str(d) for d in spec.dims),
                "rank_true": spec.rank,
                "rank_fit": fit_rank,
                "factor_density": spec.factor_density,
                "noise_p": spec.noise_p,
                "estimator": recon.estimator_kind,
                "train_acc": accuracy(recon, noisy),
                "test_acc": accuracy(recon, clean),
                "sweeps_to_converge": trace.sweeps_to_converge,
                "wall_ms": round(wall_ms, 3),
            }
        )
    return rows


def benchmark_grid(
    dims: Sequence[int],
    ranks: Sequence[int],
    target_densities: Sequence[float],
    noise_levels: Sequence[float],
    seeds: Sequence[int],
    cfg: SamplerConfig,
) -> Iterable[dict]:
    """Sweep the (noise x density x rank x seed) grid, yielding CSV rows."""
    for rank in ranks:
        for target in target_densities:
            d = density_for_target(target, rank, len(dims))
            for noise_p in noise_levels:
                for seed in seeds:
                    spec = SimSpec(tuple(dims), rank, d, noise_p, seed)
                    yield from benchmark_cell(spec, cfg)


def write_benchmark_csv(rows: Iterable[dict], dest: str) -> None:
    with open(dest, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def perfect_oracle_train_accuracy(clean: ObservedTensor, noisy: ObservedTensor) -> float:
    """Training accuracy of an oracle predicting the noise-free tensor: 1 - flip rate."""
    return float(np.mean(clean.data == noisy.data))
