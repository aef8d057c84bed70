"""Shared brute-force oracles, deliberately independent of the library's fast paths."""

import math

import numpy as np
import pytest

from booltensor.model import FactorMatrix, ModelState, NoiseModel, total_log_likelihood
from booltensor.rng import next_uniform, stream_state
from booltensor.sampler import conditional_count
from booltensor.tensor import ObservedTensor


def random_tensor(rng, dims):
    return ObservedTensor(rng.integers(-1, 2, size=dims).astype(np.int8))


def random_state(rng, dims, rank, lam):
    factors = [
        FactorMatrix(k, rng.integers(0, 2, size=(n, rank)).astype(np.uint8))
        for k, n in enumerate(dims)
    ]
    return ModelState(factors, NoiseModel(lam))


def naive_relevance(state, mode, row, dim, idx):
    """Eq.-style full-product relevance indicator without any short-circuiting."""
    first = 1
    for k, i in enumerate(idx):
        if k != mode:
            first *= int(state.factors[k].bits[i, dim])
    second = 1
    for l in range(state.rank):
        if l == dim:
            continue
        inner = 1
        for k, i in enumerate(idx):
            inner *= int(state.factors[k].bits[i, l])
        second *= 1 - inner
    return first * second


def brute_conditional_p1(state, t, mode, row, dim):
    """p(entry = 1 | rest) by normalizing the full likelihood at both values."""
    s1 = state.copy()
    s1.factors[mode].bits[row, dim] = 1
    s0 = state.copy()
    s0.factors[mode].bits[row, dim] = 0
    ll1 = total_log_likelihood(s1, t)
    ll0 = total_log_likelihood(s0, t)
    return 1.0 / (1.0 + math.exp(ll0 - ll1))


def mirror_sweep(state, t, mode, seed, sweep_index):
    """Pure-Python reference sweep: same streams and clamped sigmoid as the kernel."""
    fk = state.factors[mode].bits
    n_rows, rank = fk.shape
    for n in range(n_rows):
        st = stream_state(seed, sweep_index, mode, n)
        for l in range(rank):
            m = conditional_count(state, t, mode, n, l)
            st, u = next_uniform(st)
            z = state.noise.lam * m
            if z > 40.0:
                p = 1.0
            elif z < -40.0:
                p = 0.0
            else:
                p = 1.0 / (1.0 + math.exp(-z))
            fk[n, l] = 1 if u < p else 0


@pytest.fixture(scope="session", autouse=True)
def _warm_numba():
    """Compile the kernels once up front so per-test timing stays honest."""
    rng = np.random.default_rng(0)
    t = random_tensor(rng, (2, 2, 2))
    state = random_state(rng, (2, 2, 2), 1, 0.5)
    from booltensor.sampler import sweep_mode
    from booltensor import kernels

    sweep_mode(state, t, 0, seed=0, sweep_index=0)
    kernels.full_sweep_inplace(t.data, state.bits(), 0.5, 0, 0)
    kernels.time_single_sweep(t.data, state.bits(), 0.5, 0, 1)
