import itertools
import math

import numba
import numpy as np
import pytest

from booltensor.model import FactorMatrix, ModelState, NoiseModel, boolean_product, logit
from booltensor.sampler import (
    PosteriorAccumulator,
    SamplerConfig,
    conditional_prob,
    init_state,
    relevance_indicator,
    run_chain,
    sweep_mode,
    update_lambda,
)
from booltensor.tensor import ObservedTensor

from conftest import (
    brute_conditional_p1,
    mirror_sweep,
    naive_relevance,
    random_state,
    random_tensor,
)


class TestRelevanceIndicator:
    def test_zero_coparent(self):
        state = ModelState([FactorMatrix(k, np.ones((2, 2), np.uint8)) for k in range(3)])
        state.factors[1].bits[0, 0] = 0
        assert relevance_indicator(state, 0, 1, 0, (1, 0, 1)) == 0

    def test_explaining_away(self):
        # another dimension fully active at idx makes the entry irrelevant
        state = ModelState([FactorMatrix(k, np.ones((2, 2), np.uint8)) for k in range(3)])
        assert relevance_indicator(state, 0, 0, 0, (0, 0, 0)) == 0

    def test_matches_naive_products(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            state = random_state(rng, (3, 3, 3), 3, 1.0)
            for _ in range(20):
                idx = tuple(int(rng.integers(3)) for _ in range(3))
                mode = int(rng.integers(3))
                dim = int(rng.integers(3))
                got = relevance_indicator(state, mode, idx[mode], dim, idx)
                assert got == naive_relevance(state, mode, idx[mode], dim, idx)

    def test_row_mismatch_rejected(self):
        rng = np.random.default_rng(1)
        state = random_state(rng, (2, 2), 1, 1.0)
        with pytest.raises(ValueError):
            relevance_indicator(state, 0, 1, 0, (0, 1))


class TestConditionalProb:
    def test_no_relevant_observations_gives_half(self):
        state = ModelState([FactorMatrix(k, np.zeros((2, 2), np.uint8)) for k in range(3)], NoiseModel(2.0))
        t = ObservedTensor(np.ones((2, 2, 2), np.int8))
        assert conditional_prob(state, t, 0, 0, 0) == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("dims", [(2, 2, 2), (2, 3, 2)])
    @pytest.mark.parametrize("rank", [1, 2])
    def test_oracle_equivalence_50_random_states(self, dims, rank):
        rng = np.random.default_rng(42)
        for _ in range(50):
            lam = float(rng.uniform(0.1, 3.0))
            state = random_state(rng, dims, rank, lam)
            t = random_tensor(rng, dims)
            mode = int(rng.integers(len(dims)))
            row = int(rng.integers(dims[mode]))
            dim = int(rng.integers(rank))
            cur = int(state.factors[mode].bits[row, dim])
            p_cur = conditional_prob(state, t, mode, row, dim)
            p1 = p_cur if cur == 1 else 1.0 - p_cur
            assert abs(p1 - brute_conditional_p1(state, t, mode, row, dim)) < 1e-12

    def test_missing_entries_contribute_nothing(self):
        rng = np.random.default_rng(5)
        state = random_state(rng, (2, 2, 2), 2, 1.5)
        data = rng.integers(-1, 2, size=(2, 2, 2)).astype(np.int8)
        data[0, 1, 1] = 0
        base = conditional_prob(state, ObservedTensor(data), 0, 0, 0)
        # a missing slot is already coded 0; the conditional must be computable
        # identically from a tensor whose slot was zeroed after observation
        other = data.copy()
        assert conditional_prob(state, ObservedTensor(other), 0, 0, 0) == base


class TestSweepMode:
    def test_lambda_zero_fair_coins(self):
        t = ObservedTensor(np.ones((4, 4, 4), np.int8))
        state = ModelState(
            [FactorMatrix(k, np.zeros((4, 3), np.uint8)) for k in range(3)], NoiseModel(0.0)
        )
        ones = 0
        total = 0
        for sweep in range(300):
            sweep_mode(state, t, 0, seed=1, sweep_index=sweep)
            ones += int(state.factors[0].bits.sum())
            total += state.factors[0].bits.size
        assert abs(ones / total - 0.5) < 0.03

    def test_matches_python_mirror(self):
        rng = np.random.default_rng(11)
        for trial in range(25):
            dims = tuple(rng.integers(2, 5, size=rng.integers(2, 5)))
            rank = int(rng.integers(1, 5))
            lam = float(rng.uniform(0.0, 4.0))
            t = random_tensor(rng, dims)
            bits = [rng.integers(0, 2, size=(n, rank)).astype(np.uint8) for n in dims]
            s_kernel = ModelState([FactorMatrix(k, b.copy()) for k, b in enumerate(bits)], NoiseModel(lam))
            s_mirror = ModelState([FactorMatrix(k, b.copy()) for k, b in enumerate(bits)], NoiseModel(lam))
            for sweep in range(3):
                for mode in range(len(dims)):
                    sweep_mode(s_kernel, t, mode, seed=99, sweep_index=sweep)
                    mirror_sweep(s_mirror, t, mode, seed=99, sweep_index=sweep)
            for k in range(len(dims)):
                assert np.array_equal(s_kernel.factors[k].bits, s_mirror.factors[k].bits)

    def test_thread_count_invariance(self):
        rng = np.random.default_rng(12)
        dims = (6, 7, 5)
        t = random_tensor(rng, dims)
        bits = [rng.integers(0, 2, size=(n, 3)).astype(np.uint8) for n in dims]
        results = []
        max_threads = numba.config.NUMBA_NUM_THREADS
        for nt in (1, max_threads):
            numba.set_num_threads(nt)
            state = ModelState([FactorMatrix(k, b.copy()) for k, b in enumerate(bits)], NoiseModel(1.5))
            for sweep in range(5):
                for mode in range(3):
                    sweep_mode(state, t, mode, seed=5, sweep_index=sweep)
            results.append([f.bits.copy() for f in state.factors])
        for a, b in zip(*results):
            assert np.array_equal(a, b)


class TestUpdateLambda:
    def test_all_correct_small(self):
        # 8 observed entries all matching: sigma = (1+8)/(2+8)
        state = ModelState([FactorMatrix(k, np.ones((2, 1), np.uint8)) for k in range(3)])
        t = ObservedTensor(np.ones((2, 2, 2), np.int8))
        lam = update_lambda(state, t)
        assert math.isclose(state.noise.sigma(), 9 / 10, abs_tol=1e-12)
        assert lam == state.noise.lam

    def test_half_correct_gives_zero(self):
        state = ModelState([FactorMatrix(k, np.ones((2, 1), np.uint8)) for k in range(2)])
        t = ObservedTensor(np.array([[1, 1], [-1, -1]], np.int8))
        assert update_lambda(state, t) == pytest.approx(0.0, abs=1e-15)

    def test_noise_free_20_cubed(self):
        rng = np.random.default_rng(13)
        state = random_state(rng, (20, 20, 20), 3, 0.0)
        covered = boolean_product(state.bits())
        t = ObservedTensor(2 * covered.astype(np.int8) - 1)
        update_lambda(state, t)
        assert state.noise.sigma() == pytest.approx(8001 / 8002, abs=1e-14)

    def test_independent_counter_oracle(self):
        rng = np.random.default_rng(14)
        for _ in range(30):
            dims = tuple(rng.integers(2, 5, size=rng.integers(2, 4)))
            state = random_state(rng, dims, int(rng.integers(1, 4)), 1.0)
            alpha, beta = float(rng.uniform(0.5, 3)), float(rng.uniform(0.5, 3))
            state.noise = NoiseModel(1.0, alpha, beta)
            t = random_tensor(rng, dims)
            # independent counter: loop entries, evaluate the product per entry
            correct = observed = 0
            for idx in itertools.product(*(range(n) for n in dims)):
                x = int(t.data[idx])
                if x == 0:
                    continue
                observed += 1
                prod = 0
                for l in range(state.rank):
                    if all(state.factors[k].bits[i, l] for k, i in enumerate(idx)):
                        prod = 1
                        break
                if (x == 1) == (prod == 1):
                    correct += 1
            expected = logit((alpha + correct) / (alpha + beta + observed))
            assert abs(update_lambda(state, t) - expected) < 1e-12

    def test_monotone_in_correct_count(self):
        # same #observed, increasing #correct => lambda strictly increases
        lams = []
        for n_correct in range(5):
            data = np.full((1, 5), -1, np.int8)
            data[0, :n_correct] = 1
            state = ModelState([FactorMatrix(0, np.ones((1, 1), np.uint8)), FactorMatrix(1, np.ones((5, 1), np.uint8))])
            t = ObservedTensor(data)
            lams.append(update_lambda(state, t))
        assert all(b > a for a, b in zip(lams, lams[1:]))


class TestRunChain:
    def test_determinism(self):
        rng = np.random.default_rng(15)
        t = random_tensor(rng, (6, 6, 6))
        cfg = SamplerConfig(rank=2, seed=77, n_samples=10, max_burn_in_sweeps=30)
        a = run_chain(t, cfg)
        b = run_chain(t, cfg)
        assert a[2].sigma_lambda == b[2].sigma_lambda
        assert a[2].train_accuracy == b[2].train_accuracy
        for fa, fb in zip(a[1].factors, b[1].factors):
            assert np.array_equal(fa.bits, fb.bits)
        assert np.array_equal(a[0].predictive_sums, b[0].predictive_sums)

    def test_all_missing_tensor(self):
        t = ObservedTensor(np.zeros((4, 4, 4), np.int8))
        cfg = SamplerConfig(
            rank=2, seed=3, n_samples=500, max_burn_in_sweeps=20, convergence_window=5
        )
        acc, state, trace = run_chain(t, cfg)
        assert all(s == 0.5 for s in trace.sigma_lambda)  # (alpha)/(alpha+beta)
        for means in acc.factor_means():
            assert means.min() >= 0.4 and means.max() <= 0.6

    def test_noise_free_reaches_exact_fit(self):
        from booltensor.simulate import SimSpec, density_for_target, generate

        d = density_for_target(0.4, 3, 3)
        clean, noisy, _ = generate(SimSpec((20, 20, 20), 3, d, 0.0, seed=7))
        cfg = SamplerConfig(rank=3, seed=0, convergence_window=50)
        acc, state, trace = run_chain(noisy, cfg)
        assert trace.train_accuracy[-1] == 1.0
        assert trace.sigma_lambda[-1] == pytest.approx(8001 / 8002, abs=1e-12)

    def test_masked_equals_prezeroed(self):
        # marginalizing removed entries == zeroing their slots by hand; the two
        # construction routes must give identical chains
        from booltensor.tensor import mask_holdout

        rng = np.random.default_rng(16)
        data = rng.choice([-1, 1], size=(5, 5, 5)).astype(np.int8)
        t = ObservedTensor(data)
        masked, heldout = mask_holdout(t, 0.2, seed=4)
        by_hand = data.copy()
        for idx, _ in heldout:
            by_hand[idx] = 0
        cfg = SamplerConfig(rank=2, seed=9, n_samples=5, max_burn_in_sweeps=20)
        a = run_chain(masked, cfg)
        b = run_chain(ObservedTensor(by_hand), cfg)
        assert a[2].sigma_lambda == b[2].sigma_lambda
        assert np.array_equal(a[0].predictive_sums, b[0].predictive_sums)

    def test_non_convergence_flag(self):
        rng = np.random.default_rng(17)
        t = random_tensor(rng, (6, 6, 6))
        cfg = SamplerConfig(rank=2, seed=1, n_samples=2, max_burn_in_sweeps=5, convergence_window=10)
        acc, state, trace = run_chain(t, cfg)
        assert not trace.converged
        assert trace.sweeps_to_converge is None
        assert acc.samples_seen == 2

    def test_warm_start_rank_mismatch(self):
        rng = np.random.default_rng(18)
        t = random_tensor(rng, (4, 4))
        state = random_state(rng, (4, 4), 3, 0.5)
        with pytest.raises(ValueError, match="rank"):
            run_chain(t, SamplerConfig(rank=2, seed=0, max_burn_in_sweeps=5), initial_state=state)

    def test_random_scan_deterministic(self):
        rng = np.random.default_rng(21)
        t = random_tensor(rng, (5, 5, 5))
        cfg = SamplerConfig(rank=2, seed=6, n_samples=5, max_burn_in_sweeps=15, random_scan=True)
        a = run_chain(t, cfg)
        b = run_chain(t, cfg)
        assert a[2].sigma_lambda == b[2].sigma_lambda
        for fa, fb in zip(a[1].factors, b[1].factors):
            assert np.array_equal(fa.bits, fb.bits)

    def test_trace_records_schema(self):
        rng = np.random.default_rng(19)
        t = random_tensor(rng, (4, 4))
        cfg = SamplerConfig(rank=1, seed=2, n_samples=3, max_burn_in_sweeps=4, convergence_window=2)
        _, _, trace = run_chain(t, cfg)
        recs = trace.records()
        assert {r["phase"] for r in recs} <= {"burnin", "sample"}
        assert sum(1 for r in recs if r["phase"] == "sample") == 3
        assert all(set(r) == {"sweep", "sigma_lambda", "train_accuracy", "phase"} for r in recs)


class TestPosteriorAccumulator:
    def test_means_range_and_errors(self):
        acc = PosteriorAccumulator.empty((3, 3), 2)
        with pytest.raises(ValueError):
            acc.factor_means()
        with pytest.raises(ValueError):
            acc.predictive_mean()
        rng = np.random.default_rng(20)
        for _ in range(4):
            acc.add_sample(random_state(rng, (3, 3), 2, 1.0))
        assert acc.samples_seen == 4
        for m in acc.factor_means():
            assert m.min() >= 0 and m.max() <= 1
        p = acc.predictive_mean()
        assert p.min() >= 0 and p.max() <= 1

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SamplerConfig(rank=0)
        with pytest.raises(ValueError):
            SamplerConfig(rank=1, n_samples=0)
        with pytest.raises(ValueError):
            SamplerConfig(rank=1, convergence_window=1)
        with pytest.raises(ValueError):
            SamplerConfig(rank=1, lambda_init=-0.5)
