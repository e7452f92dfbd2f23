import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from zoosel import instrument
from zoosel.embedder import Extractor, ExtractorConfig
from zoosel.library import LibraryDriftError, build_library
from zoosel.selector import (
    DegenerateOracleError,
    SelectionReport,
    average_forecasts,
    consensus_rank,
    delta_p,
    eta,
    select,
    select_many,
    similarity_matrix,
    topk_ensemble,
    vote,
)
from zoosel.tscore import TimeSeriesTask
from zoosel.zoo import ForecasterSpec, forecast_task, register_kind


def brute_force_order(B, sim):
    """Count zeros per column with plain loops, then sort by (h, -sum sim, index)."""
    c, m = len(B), len(B[0])
    h = [sum(1 for row in B if row[j] == 0) for j in range(m)]
    sums = [sum(sim[j]) for j in range(m)]
    return h, sorted(range(m), key=lambda j: (h[j], -sums[j], j))


@pytest.fixture(scope="module")
def lib(zoo, dset, ext):
    return build_library(zoo, dset, ext)


class TestSimilarity:
    def test_orthogonal_is_zero(self):
        sim, _ = similarity_matrix([[1.0, 0.0]], [7.0], [[0.0, 3.0]])
        assert sim[0, 0] == 0.0

    def test_identical_scaled_by_weight(self):
        r = np.array([[0.3, -1.2, 2.0]])
        sim, _ = similarity_matrix(r, [0.5], r)
        assert sim[0, 0] == pytest.approx(0.5, abs=1e-15)

    def test_zero_norm_flagged(self):
        sim, pairs = similarity_matrix([[0.0, 0.0], [1.0, 1.0]], [1.0, 1.0], [[1.0, 0.0], [0.0, 0.0]])
        assert sim[0, 0] == 0.0 and sim[1, 1] == 0.0
        assert pairs == [(0, 0), (0, 1), (1, 1)]

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            similarity_matrix(np.ones((2, 3)), [1, 1], np.ones((1, 4)))

    @given(arrays(np.float64, (4, 6), elements=st.floats(-3, 3)), arrays(np.float64, (3, 6), elements=st.floats(-3, 3)),
           st.floats(1e-3, 1e3), arrays(np.float64, 4, elements=st.floats(0.01, 1)))
    def test_bounded_and_scale_invariant(self, r_zoo, r_task, c, w):
        sim, _ = similarity_matrix(r_zoo, w, r_task)
        assert np.all(np.abs(sim) <= w[:, None] * (1 + 1e-12))
        scaled = r_task.copy()
        scaled[1] *= c
        np.testing.assert_allclose(similarity_matrix(r_zoo, w, scaled)[0], sim, atol=1e-12)

    def test_literal_cosine(self, rng):
        r_zoo, r_task, w = rng.normal(size=(5, 8)), rng.normal(size=(3, 8)), rng.random(5)
        sim, _ = similarity_matrix(r_zoo, w, r_task)
        for m in range(5):
            for c in range(3):
                cos = sum(a * b for a, b in zip(r_zoo[m], r_task[c])) / (
                    np.sqrt(sum(a * a for a in r_zoo[m])) * np.sqrt(sum(b * b for b in r_task[c])))
                assert sim[m, c] == pytest.approx(w[m] * cos, abs=1e-12)


class TestVote:
    def test_top_three(self):
        B, trace = vote(np.array([[0.9], [0.8], [0.7], [0.1]]), 3)
        assert B.tolist() == [[1, 1, 1, 0]] and trace == []

    def test_r_clamped(self):
        B, _ = vote(np.array([[0.2], [-0.4]]), 3)
        assert B.tolist() == [[1, 1]]

    def test_boundary_tie_lower_index(self):
        B, trace = vote(np.array([[0.9], [0.8], [0.5], [0.5]]), 3, [1.0, 1.0, 1.0, 1.0])
        assert B.tolist() == [[1, 1, 1, 0]]
        assert trace == [{"stage": "vote", "channel": 0, "group": [2, 3], "selected": [2], "key": "weight_then_index"}]

    def test_boundary_tie_higher_weight(self):
        B, trace = vote(np.array([[0.9], [0.8], [0.5], [0.5]]), 3, [1.0, 1.0, 0.5, 0.7])
        assert B.tolist() == [[1, 1, 0, 1]]
        assert trace[0]["selected"] == [3]

    def test_invalid_r(self):
        with pytest.raises(ValueError):
            vote(np.zeros((2, 2)), 0)

    @given(arrays(np.float64, (5, 4), elements=st.sampled_from([-0.5, 0.0, 0.1, 0.3, 0.9])), st.integers(1, 7))
    def test_rows_have_min_r_ones(self, sim, r):
        B, _ = vote(sim, r)
        assert B.shape == (4, 5)
        assert np.all(B.sum(axis=1) == min(r, 5))
        # every marked model beats or ties every unmarked one in its channel
        for c in range(4):
            on, off = sim[B[c] == 1, c], sim[B[c] == 0, c]
            if off.size:
                assert on.min() >= off.max()

    @settings(max_examples=80)
    @given(arrays(np.float64, (5, 3), elements=st.floats(0, 1)), arrays(np.float64, 5, elements=st.floats(0.1, 1)),
           st.integers(0, 4), st.floats(1.01, 4), st.integers(1, 4))
    def test_weight_monotonicity(self, cos, w, m, factor, r):
        # non-negative cosines: a larger weight can only raise model m's similarity
        B0, _ = vote(w[:, None] * cos, r, w)
        w2 = w.copy()
        w2[m] *= factor
        B1, _ = vote(w2[:, None] * cos, r, w2)
        assert B1[:, m].sum() >= B0[:, m].sum()
        h0, _, _ = consensus_rank(B0)
        h1, _, _ = consensus_rank(B1)
        assert h1[m] <= h0[m]


class TestConsensus:
    def test_unanimous_first(self):
        B = np.array([[1, 0, 1], [1, 1, 0], [1, 0, 1]])
        h, order, _ = consensus_rank(B)
        assert h[0] == 0 and order[0] == 0

    def test_two_model_example(self):
        h, order, _ = consensus_rank(np.array([[1, 0], [1, 0], [0, 1]]))
        assert h.tolist() == [1, 2] and order == [0, 1]

    def test_tie_uses_similarity_then_index(self):
        B = np.array([[1, 1, 0], [0, 0, 1]])
        sim = np.array([[0.1, 0.0], [0.3, 0.0], [0.0, 0.9]])
        h, order, trace = consensus_rank(B, sim)
        assert h.tolist() == [1, 1, 1]
        assert order == [2, 1, 0]
        assert trace == [{"stage": "consensus", "hamming": 1, "group": [0, 1, 2], "key": "sim_sum"}]
        _, order, trace = consensus_rank(B)
        assert order == [0, 1, 2] and trace[0]["key"] == "index"

    def test_random_against_brute_force(self, rng):
        for _ in range(50):
            B = rng.integers(0, 2, size=(8, 6))
            sim = rng.integers(-4, 5, size=(6, 8)) / 8.0  # dyadic: sums are exact in any order
            h, order, _ = consensus_rank(B, sim)
            h2, order2 = brute_force_order(B.tolist(), sim.tolist())
            assert h.tolist() == h2 and order == order2

    def test_exhaustive_small(self):
        for c in range(1, 5):
            for m in range(1, 5):
                if c * m > 12:
                    continue
                for bits in itertools.product((0, 1), repeat=c * m):
                    B = np.array(bits).reshape(c, m)
                    h, order, _ = consensus_rank(B)
                    h2, order2 = brute_force_order(B.tolist(), [[0.0] * c] * m)
                    assert h.tolist() == h2 and order == order2

    def test_exhaustive_four_by_four_sampled_sims(self):
        # the 2^16 case is covered with a fixed similarity fixture to exercise the second key
        sim = np.array([[0.1], [0.4], [0.4], [0.2]])
        for bits in itertools.product((0, 1), repeat=16):
            B = np.array(bits).reshape(4, 4)
            h, order, _ = consensus_rank(B, sim)
            assert order == brute_force_order(B.tolist(), sim.tolist())[1]


class TestSelect:
    def test_forward_free(self, lib, ext, rng):
        task = TimeSeriesTask("t", rng.normal(size=(3, 150)).cumsum(axis=1), 12)
        with instrument.counting() as delta:
            res = select(lib, ext, task, seed=1)
        counts = delta()
        assert not any(k.startswith("forecast:") for k in counts)
        assert counts["embed"] == 15
        assert res.B.shape == (3, 5) and np.all(res.B.sum(axis=1) == 3)
        assert res.hamming.tolist() == (3 - res.B.sum(axis=0)).tolist()
        assert sorted(res.order) == list(range(5))
        assert all(a <= b for a, b in zip(res.hamming[res.order], res.hamming[res.order][1:]))

    def test_drift(self, lib, rng):
        task = TimeSeriesTask("t", rng.normal(size=(1, 80)), 12)
        with pytest.raises(LibraryDriftError):
            select(lib, Extractor.initialize(ExtractorConfig(seed=42)), task)

    @pytest.mark.parametrize("scale", [0.25, 8.0, 1024.0])
    def test_positive_rescaling_of_a_channel(self, lib, ext, rng, scale):
        values = rng.normal(size=(3, 120)).cumsum(axis=1)
        base = select(lib, ext, TimeSeriesTask("t", values, 12), seed=4)
        scaled = values.copy()
        scaled[1] *= scale
        again = select(lib, ext, TimeSeriesTask("t", scaled, 12), seed=4)
        np.testing.assert_array_equal(again.B, base.B)
        assert again.order == base.order

    def test_select_many_matches_select(self, lib, ext, rng):
        tasks = [TimeSeriesTask(f"t{i}", rng.normal(size=(c, 130)).cumsum(axis=1), 12) for i, c in enumerate([1, 3, 2])]
        seeds = [[5, i] for i in range(3)]
        many, timings = select_many(lib, ext, tasks, seeds=seeds, history=96)
        assert set(timings) == {"task_embedding", "similarity_and_ranking"}
        for task, seed, res in zip(tasks, seeds, many):
            one = select(lib, ext, task, seed=seed, history=96)
            np.testing.assert_allclose(res.sim, one.sim, atol=1e-12)
            assert res.order == one.order
            assert res.tie_break_trace == one.tie_break_trace

    def test_select_many_seed_count(self, lib, ext, rng):
        with pytest.raises(ValueError):
            select_many(lib, ext, [TimeSeriesTask("t", rng.normal(size=(1, 50)), 2)], seeds=[1, 2])

    def test_json(self, lib, ext, rng):
        res = select(lib, ext, TimeSeriesTask("t", rng.normal(size=(2, 60)), 12))
        d = res.to_dict()
        assert d["order"] == res.order and len(d["B"]) == 2
        assert "timings" not in d and "timings" in res.to_dict(with_timings=True)


register_kind("ConstantForTest", lambda spec, x, h: (np.full(h, float(spec.params["value"])), {}))


def constant_spec(mid, value):
    return ForecasterSpec(mid, "ConstantForTest", {"value": value})


class TestEnsemble:
    @pytest.fixture
    def task(self, rng):
        return TimeSeriesTask("t", rng.normal(size=(2, 60)).cumsum(axis=1) + 10, 6)

    def test_k_one_bit_identical(self, zoo, task):
        fc = topk_ensemble(zoo, [3, 0, 1, 2, 4], task, 1)
        np.testing.assert_array_equal(fc.values, forecast_task(zoo.specs[3], task).values)
        assert fc.producer_model == zoo.specs[3].model_id

    def test_constants_average(self, task):
        fc = topk_ensemble([constant_spec("two", 2.0), constant_spec("four", 4.0)], [0, 1], task, 2)
        assert np.all(fc.values == 3.0)

    def test_k_equals_m_is_order_free(self, zoo, task):
        direct = np.mean([forecast_task(s, task).values for s in zoo], axis=0)
        for order in ([0, 1, 2, 3, 4], [4, 2, 0, 3, 1]):
            np.testing.assert_allclose(topk_ensemble(zoo, order, task, 5).values, direct, atol=1e-12)

    def test_k_out_of_range(self, zoo, task):
        for k in (0, 6):
            with pytest.raises(ValueError):
                topk_ensemble(zoo, range(5), task, k)

    def test_failing_model_named(self, task):
        bad = ForecasterSpec("broken", "AR", {"order": 500})
        with pytest.raises(RuntimeError, match="'broken'"):
            topk_ensemble([bad, constant_spec("c", 1.0)], [0, 1], task, 2)

    def test_average_single_unchanged(self):
        x = np.array([[0.1, 0.2]])
        assert average_forecasts([x]) is not x
        np.testing.assert_array_equal(average_forecasts([x]), x)

    def test_report_json(self, zoo, task):
        fc = topk_ensemble(zoo, range(5), task, 2)
        d = SelectionReport("t", ["a", "b"], 2, fc).to_dict()
        assert d["ensemble_forecast"]["values"] == fc.values.tolist()
        assert d["delta_p"] is None and d["eta"] is None


class TestMetrics:
    def test_delta_p(self):
        assert delta_p(1.0, [1.0, 3.0]) == 0.0
        assert delta_p(0.5, [1.0, 2.0]) == 0.5
        assert delta_p(2.0, [1.0]) == -1.0

    def test_degenerate(self):
        with pytest.raises(DegenerateOracleError, match="degenerate oracle"):
            delta_p(0.3, [0.0, 1.0])

    def test_eta(self):
        assert eta(0.2, 4.0) == pytest.approx(0.05)
        assert eta(0.0, 3.0) == 0.0
        assert eta(0.2, 2.0) == pytest.approx(2 * eta(0.2, 4.0))
        with pytest.raises(ValueError):
            eta(0.1, 0.0)
