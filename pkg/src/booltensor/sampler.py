"""Gibbs sampling of factor entries and conditional-MAP updates of the noise.

``conditional_prob`` / ``relevance_indicator`` are the scalar, readable forms
of the update rule (used directly by tests and small-scale diagnostics);
``sweep_mode`` runs the jitted kernel over a whole mode.  Both compute the
same sum and are cross-checked against each other and against brute-force
normalized likelihoods in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .model import (
    FactorMatrix,
    ModelState,
    NoiseModel,
    boolean_product,
    count_correct,
    logit,
    sigmoid,
)
from .rng import TAG_INIT, TAG_SCAN, derive_seed
from .tensor import ObservedTensor


@dataclass
class SamplerConfig:
    rank: int
    max_burn_in_sweeps: int = 500
    convergence_window: int = 20
    convergence_tol: float = 1e-3
    n_samples: int = 50
    seed: int = 0
    threads: int | None = None
    lambda_init: float = 0.5
    update_lambda_during_sampling: bool = True
    random_scan: bool = False
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.n_samples < 1:
            raise ValueError("need at least one posterior sample")
        if self.convergence_window < 2:
            raise ValueError("convergence_window must be >= 2")
        if self.lambda_init < 0:
            raise ValueError("lambda_init must be >= 0")


@dataclass
class PosteriorAccumulator:
    """Running sums over posterior samples: factor bits and per-entry predictive probabilities."""

    factor_sums: list[np.ndarray]
    predictive_sums: np.ndarray
    samples_seen: int = 0

    @classmethod
    def empty(cls, dims: Sequence[int], rank: int) -> "PosteriorAccumulator":
        return cls(
            [np.zeros((n, rank), np.float64) for n in dims],
            np.zeros(tuple(dims), np.float64),
        )

    def add_sample(self, state: ModelState) -> None:
        covered = boolean_product(state.bits())
        s = state.noise.sigma()
        self.predictive_sums += np.where(covered, s, 1.0 - s)
        for sums, f in zip(self.factor_sums, state.factors):
            sums += f.bits
        self.samples_seen += 1

    def factor_means(self) -> list[np.ndarray]:
        if self.samples_seen == 0:
            raise ValueError("no posterior samples accumulated")
        return [s / self.samples_seen for s in self.factor_sums]

    def predictive_mean(self) -> np.ndarray:
        if self.samples_seen == 0:
            raise ValueError("no posterior samples accumulated")
        return self.predictive_sums / self.samples_seen


@dataclass
class Trace:
    """Per-sweep diagnostics plus the convergence outcome."""

    sweeps: list[int] = field(default_factory=list)
    sigma_lambda: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    phase: list[str] = field(default_factory=list)
    converged: bool = False
    sweeps_to_converge: int | None = None

    def record(self, sweep: int, sigma: float, acc: float, phase: str) -> None:
        self.sweeps.append(sweep)
        self.sigma_lambda.append(sigma)
        self.train_accuracy.append(acc)
        self.phase.append(phase)

    def records(self) -> list[dict]:
        return [
            {
                "sweep": s,
                "sigma_lambda": sl,
                "train_accuracy": None if math.isnan(a) else a,
                "phase": p,
            }
            for s, sl, a, p in zip(self.sweeps, self.sigma_lambda, self.train_accuracy, self.phase)
        ]


def relevance_indicator(
    state: ModelState, mode: int, row: int, dim: int, idx: Sequence[int]
) -> int:
    """Whether factor entry (mode, row, dim) is relevant for the observation at idx.

    1 iff all co-parents in `dim` are active and no other dimension is fully
    active at idx.  Evaluation short-circuits on the first zero co-parent and
    on the first fully-active other dimension.
    """
    if idx[mode] != row:
        raise ValueError(f"idx[{mode}]={idx[mode]} does not match row {row}")
    factors = state.factors
    for k, i in enumerate(idx):
        if k != mode and factors[k].bits[i, dim] == 0:
            return 0
    for l in range(state.rank):
        if l == dim:
            continue
        for k, i in enumerate(idx):
            if factors[k].bits[i, l] == 0:
                break
        else:
            return 0  # explained away
    return 1


def conditional_count(
    state: ModelState, t: ObservedTensor, mode: int, row: int, dim: int
) -> int:
    """Signed count m: sum of x over observations where the entry is relevant."""
    m = 0
    other_dims = [n for k, n in enumerate(t.dims) if k != mode]
    for rest in np.ndindex(*other_dims):
        idx = list(rest)
        idx.insert(mode, row)
        x = int(t.data[tuple(idx)])
        if x == 0:
            continue
        if relevance_indicator(state, mode, row, dim, idx):
            m += x
    return m


def conditional_prob(
    state: ModelState, t: ObservedTensor, mode: int, row: int, dim: int
) -> float:
    """Full conditional probability of the CURRENT value of factor entry (mode, row, dim).

    The probability that the entry is 1 is sigmoid(lambda * m) regardless of
    its current value; missing observations contribute nothing to m.
    """
    state.check_dims(t)
    m = conditional_count(state, t, mode, row, dim)
    signed = 2 * int(state.factors[mode].bits[row, dim]) - 1
    return sigmoid(state.noise.lam * signed * m)


def sweep_mode(
    state: ModelState, t: ObservedTensor, mode: int, seed: int, sweep_index: int
) -> FactorMatrix:
    """Resample every entry of mode's factor matrix from its full conditional.

    Rows use independent streams keyed by (seed, sweep_index, mode, row);
    entries within a row are updated sequentially in dimension order.
    """
    state.check_dims(t)
    kernels.sweep_mode_inplace(
        t.data, state.bits(), mode, state.noise.lam, seed, sweep_index
    )
    return state.factors[mode]


def update_lambda(state: ModelState, t: ObservedTensor) -> float:
    """Conditional-MAP noise update: logit of the smoothed correct fraction.

    Missing entries count toward neither the correct count nor the total.
    """
    correct, observed = count_correct(state, t)
    noise = state.noise
    state.noise = NoiseModel(
        logit((noise.alpha + correct) / (noise.alpha + noise.beta + observed)),
        noise.alpha,
        noise.beta,
    )
    return state.noise.lam


def init_state(t: ObservedTensor, cfg: SamplerConfig) -> ModelState:
    """Factors i.i.d. Bernoulli(0.5), lambda at its configured init."""
    factors = []
    for k, n in enumerate(t.dims):
        rng = np.random.default_rng(derive_seed(cfg.seed, TAG_INIT, k))
        bits = (rng.random((n, cfg.rank)) < 0.5).astype(np.uint8)
        factors.append(FactorMatrix(k, bits))
    return ModelState(factors, NoiseModel(cfg.lambda_init, cfg.alpha, cfg.beta))


def _mode_order(cfg: SamplerConfig, n_modes: int, sweep: int) -> Sequence[int]:
    if not cfg.random_scan:
        return range(n_modes)
    rng = np.random.default_rng(derive_seed(cfg.seed, TAG_SCAN, sweep))
    return rng.permutation(n_modes)


def run_chain(
    t: ObservedTensor, cfg: SamplerConfig, initial_state: ModelState | None = None
) -> tuple[PosteriorAccumulator, ModelState, Trace]:
    """Burn in until the sigma(lambda) trace plateaus, then draw posterior samples.

    Convergence: the means of sigma(lambda) over the last two adjacent
    windows of `convergence_window` sweeps differ by less than
    `convergence_tol`.  If burn-in hits `max_burn_in_sweeps` first, sampling
    proceeds anyway and the trace is flagged unconverged.

    `initial_state` warm-starts the chain (used when rank pruning restarts
    burn-in from the surviving dimensions); the default is a fresh
    Bernoulli(0.5) state.
    """
    import numba

    if initial_state is None:
        state = init_state(t, cfg)
    else:
        state = initial_state.copy()
        if state.rank != cfg.rank:
            raise ValueError(f"initial state rank {state.rank} != cfg.rank {cfg.rank}")
        state.check_dims(t)
    acc = PosteriorAccumulator.empty(t.dims, cfg.rank)
    trace = Trace()

    old_threads = numba.get_num_threads()
    if cfg.threads is not None:
        numba.set_num_threads(min(cfg.threads, numba.config.NUMBA_NUM_THREADS))
    try:
        sweep = 0
        sigmas: list[float] = []
        w = cfg.convergence_window
        while sweep < cfg.max_burn_in_sweeps:
            _one_sweep(state, t, cfg, sweep, update_noise=True)
            sigma, acc_frac = _diagnostics(state, t)
            trace.record(sweep, sigma, acc_frac, "burnin")
            sigmas.append(sigma)
            sweep += 1
            if len(sigmas) >= 2 * w:
                recent = np.mean(sigmas[-w:])
                previous = np.mean(sigmas[-2 * w : -w])
                if abs(recent - previous) < cfg.convergence_tol:
                    trace.converged = True
                    trace.sweeps_to_converge = sweep
                    break
        for _ in range(cfg.n_samples):
            _one_sweep(state, t, cfg, sweep, update_noise=cfg.update_lambda_during_sampling)
            sigma, acc_frac = _diagnostics(state, t)
            trace.record(sweep, sigma, acc_frac, "sample")
            acc.add_sample(state)
            sweep += 1
    finally:
        numba.set_num_threads(old_threads)
    return acc, state, trace


def _one_sweep(
    state: ModelState, t: ObservedTensor, cfg: SamplerConfig, sweep: int, update_noise: bool
) -> None:
    if cfg.random_scan:
        for k in _mode_order(cfg, t.n_modes, sweep):
            sweep_mode(state, t, int(k), cfg.seed, sweep)
    else:
        # fused path: one kernel dispatch per sweep, bit-identical to the loop above
        kernels.full_sweep_inplace(t.data, state.bits(), state.noise.lam, cfg.seed, sweep)
    if update_noise:
        update_lambda(state, t)


def _diagnostics(state: ModelState, t: ObservedTensor) -> tuple[float, float]:
    correct, observed = count_correct(state, t)
    acc = correct / observed if observed else float("nan")
    return state.noise.sigma(), acc
