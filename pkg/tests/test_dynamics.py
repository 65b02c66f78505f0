import math

import numpy as np
import pytest

import consensuslab as cl
from consensuslab import dynamics as D
from consensuslab import graph as G
from consensuslab import topology as T


class TestDesignGainSchedule:
    def test_n3_delta0_constants(self):
        g = D.design_gain_schedule(3, 1, 1.0, 0.0)
        assert g.kind == "power" and g.exponent == 1.0
        assert g.alpha == pytest.approx(512 / 3, rel=1e-12)
        assert g.t_star == 682

    def test_n9_delta03_constants(self):
        g = D.design_gain_schedule(9, 1, 1.0, 0.3)
        assert g.alpha == pytest.approx(1179648 / 225, rel=1e-12)
        assert g.t_star == 83886
        assert g.exponent == pytest.approx(0.7)

    def test_delta_half_log_corrected(self):
        g = D.design_gain_schedule(4, 1, 1.0, 0.5)
        assert g.kind == "log_corrected"
        assert g.alpha == pytest.approx(64 * 4 * 81 / 25, rel=1e-12)

    def test_delta_above_half_rejected(self):
        with pytest.raises(ValueError):
            D.design_gain_schedule(3, 1, 1.0, 0.6)

    def test_stays_below_half_inverse_degree(self):
        # a(t) <= 1/(2 d_max) with d_max <= (n-1) a_max, from t = 1 on
        for n in (2, 3, 5, 9):
            for c in (1, 2, 5):
                for a_max in (1.0, 2.0):
                    for delta in (0.0, 0.25, 0.4, 0.5):
                        g = D.design_gain_schedule(n, c, a_max, delta)
                        bound = 1.0 / (2 * (n - 1) * a_max)
                        ts = np.arange(1, 50)
                        assert np.all(g.values(ts) <= bound + 1e-12)


class TestGainValue:
    def test_power_with_offset(self):
        g = cl.GainSchedule("power", alpha=1.0, t_star=30.0, exponent=0.99)
        assert D.gain_value(g, 1) == pytest.approx(1 / 31)

    def test_power_alpha_over_t(self):
        g = cl.GainSchedule("power", alpha=2.0, t_star=0.0, exponent=1.0)
        assert D.gain_value(g, 4) == pytest.approx(0.5)

    def test_log_corrected(self):
        g = cl.GainSchedule("log_corrected", alpha=1.0, t_star=0.0)
        t = round(math.e**2)
        assert D.gain_value(g, t) == pytest.approx(1 / (math.sqrt(t) * math.log(t)))
        assert D.gain_value(g, t) == pytest.approx(1 / (2 * math.sqrt(t)), rel=0.03)

    def test_log_corrected_rejects_log_of_one(self):
        g = cl.GainSchedule("log_corrected", alpha=1.0, t_star=0.0)
        with pytest.raises(ValueError):
            D.gain_value(g, 1)

    def test_table_bounds(self):
        g = cl.GainSchedule("table", table=np.array([0.3, 0.2, 0.1]))
        assert D.gain_value(g, 3) == pytest.approx(0.1)
        with pytest.raises(ValueError):
            D.gain_value(g, 4)

    def test_time_starts_at_one(self):
        g = cl.GainSchedule("constant", alpha=0.1)
        with pytest.raises(ValueError):
            D.gain_value(g, 0)


class TestMakeNoise:
    def test_uniform_variance_from_half_width(self):
        nm = D.make_noise("iid_uniform", half_width=1 / 16)
        assert nm.v == pytest.approx((1 / 16) ** 2 / 3)
        assert nm.v == pytest.approx(1.3021e-3, rel=1e-3)

    def test_gaussian_variance_from_std(self):
        nm = D.make_noise("iid_gaussian", std=0.05)
        assert nm.v == pytest.approx(2.5e-3)

    def test_zero_kind(self):
        nm = D.make_noise("zero")
        sampler = D.EdgeNoiseSampler(nm, 4, 0)
        assert not sampler.edge_matrix(5).any()

    @pytest.mark.parametrize("kind,kw", [
        ("iid_gaussian", {}),
        ("iid_uniform", {}),
        ("m_dependent_ma", {"m": 2}),
        ("martingale_difference", {}),
    ])
    def test_zero_mean_unit_scale(self, kind, kw):
        v = 0.04
        nm = D.make_noise(kind, v=v, **kw)
        sampler = D.EdgeNoiseSampler(nm, 2, 123)
        draws = np.array([sampler.edge_matrix(t)[0, 1] for t in range(1, 20001)])
        assert abs(draws.mean()) <= 4 * draws.std() / math.sqrt(len(draws))
        assert draws.var() == pytest.approx(v, rel=0.08)

    def test_ma_correlation_range(self):
        nm = D.make_noise("m_dependent_ma", v=1.0, theta=[1.0, 1.0, 1.0])
        sampler = D.EdgeNoiseSampler(nm, 2, 7)
        w = np.array([sampler.edge_matrix(t)[0, 1] for t in range(1, 30001)])
        corr1 = np.corrcoef(w[:-1], w[1:])[0, 1]
        corr3 = np.corrcoef(w[:-3], w[3:])[0, 1]
        assert corr1 == pytest.approx(2 / 3, abs=0.03)  # overlapping weights
        assert abs(corr3) <= 0.03  # beyond the m-dependence range

    def test_martingale_uncorrelated_but_bounded(self):
        nm = D.make_noise("martingale_difference", v=0.25)
        sampler = D.EdgeNoiseSampler(nm, 2, 11)
        w = np.array([sampler.edge_matrix(t)[0, 1] for t in range(1, 20001)])
        corr1 = np.corrcoef(w[:-1], w[1:])[0, 1]
        assert abs(corr1) <= 0.03
        assert w.var() == pytest.approx(0.25, rel=0.08)

    def test_bad_params_rejected(self):
        with pytest.raises(ValueError):
            D.make_noise("iid_gaussian", v=0.0)
        with pytest.raises(ValueError):
            D.make_noise("m_dependent_ma", v=1.0)
        with pytest.raises(ValueError):
            D.make_noise("white")


class TestAggregateNoise:
    def test_zero_noise_zero_vector(self):
        g = G.pair_graph(3)
        out = D.aggregate_noise(g, D.make_noise("zero"), 1, 0)
        np.testing.assert_array_equal(out, np.zeros(3))

    def test_pair_graph_covariance(self):
        g = G.pair_graph(3)
        nm = D.make_noise("iid_gaussian", v=1.0)
        sampler = D.EdgeNoiseSampler(nm, 3, 42)
        samples = np.array([sampler.aggregate(g, t) for t in range(1, 20001)])
        cov = np.cov(samples.T)
        np.testing.assert_allclose(np.diag(cov), [1.0, 1.0, 0.0], atol=0.06)
        assert abs(cov[0, 1]) <= 0.05

    def test_weight_scales_variance(self):
        g = G.from_edges(3, [(0, 1, 2.0)], a_max=2.0)  # one edge, weight 2
        nm = D.make_noise("iid_gaussian", v=1.0)
        sampler = D.EdgeNoiseSampler(nm, 3, 9)
        samples = np.array([sampler.aggregate(g, t)[1] for t in range(1, 20001)])
        assert samples.var() == pytest.approx(4.0, rel=0.08)

    def test_covariance_helper(self):
        g = G.from_edges(3, [(0, 1, 2.0)], a_max=2.0)
        C = D.aggregate_noise_covariance(g, D.make_noise("iid_gaussian", v=1.0))
        np.testing.assert_allclose(C, np.diag([0.0, 4.0, 0.0]))


class TestStep:
    def test_complete_graph_averaging(self):
        g = G.complete_graph(4)
        out = D.step(np.array([0.0, 1.0, 2.0, 5.0]), g, 0.25, np.zeros(4))
        np.testing.assert_allclose(out, [2.0, 2.0, 2.0, 2.0], atol=1e-14)

    def test_zero_gain_identity(self):
        g = G.pair_graph(2)
        x = np.array([3.0, -1.0])
        np.testing.assert_array_equal(D.step(x, g, 0.0, np.ones(2)), x)

    def test_two_node_hand_case(self):
        out = D.step(np.array([0.0, 1.0]), G.pair_graph(2), 0.25, np.zeros(2))
        np.testing.assert_allclose(out, [0.25, 0.75])


class TestRun:
    def test_zero_noise_monotone_V(self):
        proc = T.FixedProcess(G.cycle_graph(5))
        gains = cl.GainSchedule("power", alpha=2.0, t_star=10.0, exponent=1.0)
        tr = D.run(proc, gains, D.make_noise("zero"), np.linspace(0, 1, 5), 200, seed=0)
        assert np.all(np.diff(tr.disagreement) <= 1e-12)

    def test_consensus_state_is_fixed_point(self):
        proc = T.FixedProcess(G.complete_graph(3))
        gains = cl.GainSchedule("constant", alpha=0.1)
        tr = D.run(proc, gains, D.make_noise("zero"), [2.0, 2.0, 2.0], 50, seed=1)
        np.testing.assert_allclose(tr.states, 2.0)
        np.testing.assert_allclose(tr.disagreement, 0.0, atol=1e-30)

    def test_same_seed_identical(self):
        proc = T.PeriodicProcess(T.star_rotation_components(4), 4)
        gains = cl.GainSchedule("power", alpha=1.0, t_star=5.0, exponent=1.0)
        nm = D.make_noise("iid_uniform", v=0.01)
        tr1 = D.run(proc, gains, nm, np.linspace(0, 1, 4), 100, seed=7)
        tr2 = D.run(proc, gains, nm, np.linspace(0, 1, 4), 100, seed=7)
        np.testing.assert_array_equal(tr1.states, tr2.states)
        tr3 = D.run(proc, gains, nm, np.linspace(0, 1, 4), 100, seed=8)
        assert not np.array_equal(tr1.states, tr3.states)

    def test_balanced_zero_noise_preserves_average(self):
        proc = T.PeriodicProcess(T.cycle_edge_components(4), 4)
        gains = cl.GainSchedule("constant", alpha=0.3)
        tr = D.run(proc, gains, D.make_noise("zero"), [0.0, 1.0, 0.5, 0.25], 100, seed=0)
        means = tr.states.mean(axis=1)
        np.testing.assert_allclose(means, means[0], atol=1e-13)

    def test_records_graphs_when_asked(self):
        proc = T.FixedProcess(G.pair_graph(2))
        gains = cl.GainSchedule("constant", alpha=0.1)
        tr = D.run(proc, gains, D.make_noise("zero"), [0.0, 1.0], 5, 0, record_graphs=True)
        assert len(tr.realized_graphs) == 5


class TestTransitionProduct:
    def test_empty_product_identity(self):
        proc = T.FixedProcess(G.complete_graph(3))
        gains = cl.GainSchedule("constant", alpha=0.1)
        np.testing.assert_array_equal(D.transition_product(proc, gains, 5, 4), np.eye(3))

    def test_single_factor(self):
        proc = T.FixedProcess(G.pair_graph(3))
        gains = cl.GainSchedule("constant", alpha=0.2)
        expect = np.eye(3) - 0.2 * G.laplacian(G.pair_graph(3))
        np.testing.assert_allclose(D.transition_product(proc, gains, 4, 4), expect)

    def test_balanced_product_bistochastic(self):
        proc = T.PeriodicProcess(T.star_rotation_components(4), 4)
        gains = cl.GainSchedule("power", alpha=0.8, t_star=2.0, exponent=1.0)
        phi = D.transition_product(proc, gains, 1, 20)
        np.testing.assert_allclose(phi.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(phi.sum(axis=0), 1.0, atol=1e-12)


class TestExactSecondMoment:
    def test_hand_case(self):
        proc = T.FixedProcess(G.pair_graph(2))
        gains = cl.GainSchedule("constant", alpha=0.25)
        nm = D.make_noise("iid_gaussian", v=1.0)
        ts, EV = D.exact_second_moment(proc, gains, nm, [0.0, 1.0], 2)
        assert EV[0] == pytest.approx(0.5, abs=1e-15)
        assert EV[1] == pytest.approx(0.1875, abs=1e-15)

    def test_zero_noise_equals_transient(self):
        proc = T.PeriodicProcess(T.star_rotation_components(3), 3)
        gains = cl.GainSchedule("power", alpha=0.5, t_star=1.0, exponent=1.0)
        x1 = np.array([0.0, 1.0, 2.0])
        ts, EV = D.exact_second_moment(proc, gains, np.zeros((3, 3)), x1, 20)
        for t in (1, 5, 20):
            phi = D.transition_product(proc, gains, 1, t - 1)
            assert EV[t - 1] == pytest.approx(cl.disagreement(phi @ x1), rel=1e-12)

    def test_consensus_start_zero_noise_stays_zero(self):
        proc = T.FixedProcess(G.complete_graph(3))
        gains = cl.GainSchedule("constant", alpha=0.2)
        _, EV = D.exact_second_moment(proc, gains, np.zeros((3, 3)), [1.0, 1.0, 1.0], 10)
        np.testing.assert_allclose(EV, 0.0, atol=1e-28)

    def test_random_process_rejected(self):
        proc = T.RandomBlockProcess(2, 0.3, 1.0, 3, 0)
        gains = cl.GainSchedule("constant", alpha=0.1)
        with pytest.raises(ValueError):
            D.exact_second_moment(proc, gains, D.make_noise("iid_gaussian", v=1.0), [0, 0, 1], 5)

    def test_dependent_noise_rejected(self):
        proc = T.FixedProcess(G.pair_graph(2))
        gains = cl.GainSchedule("constant", alpha=0.1)
        nm = D.make_noise("m_dependent_ma", v=1.0, m=2)
        with pytest.raises(ValueError):
            D.exact_second_moment(proc, gains, nm, [0.0, 1.0], 5)


class TestAdversarialExactMoments:
    def test_matches_dense_recursion(self):
        gains = D.design_gain_schedule(4, 1, 1.0, 0.3)
        proc = T.AdversarialProcess(gains, 0.3, 1, 4, 2000)
        x1 = np.linspace(0, 1, 4)
        nm = D.make_noise("iid_gaussian", v=0.01)
        ts_d, EV_d = D.exact_second_moment(proc, gains, nm, x1, 2000)
        ts_f, EV_f = D.adversarial_exact_moments(proc, gains, 0.01, x1, 2000)
        np.testing.assert_allclose(EV_f, EV_d, rtol=1e-12)

    def test_record_grid_subset(self):
        gains = cl.GainSchedule("power", alpha=1.0, t_star=10.0, exponent=0.5)
        proc = T.AdversarialProcess(gains, 0.5, 1, 3, 500)
        x1 = np.array([0.0, 0.5, 1.0])
        grid = np.array([1, 7, 63, 200, 501])
        ts_all, EV_all = D.adversarial_exact_moments(proc, gains, 0.02, x1, 500)
        ts_g, EV_g = D.adversarial_exact_moments(proc, gains, 0.02, x1, 500, record_ts=grid)
        np.testing.assert_allclose(EV_g, EV_all[grid - 1], rtol=1e-12)


class TestMonteCarlo:
    def test_zero_noise_degenerate(self):
        proc = T.FixedProcess(G.cycle_graph(4))
        gains = cl.GainSchedule("constant", alpha=0.2)
        x1 = np.linspace(0, 1, 4)
        mc = D.monte_carlo_V(proc, gains, D.make_noise("zero"), x1, 30, 8, seed=0)
        tr = D.run(proc, gains, D.make_noise("zero"), x1, 30, seed=0)
        np.testing.assert_allclose(mc.mean_V, tr.disagreement, atol=1e-14)
        np.testing.assert_allclose(mc.stderr_V, 0.0, atol=1e-16)

    def test_matches_exact_oracle(self):
        proc = T.PeriodicProcess(T.star_rotation_components(3), 3)
        gains = cl.GainSchedule("power", alpha=1.0, t_star=4.0, exponent=1.0)
        nm = D.make_noise("iid_uniform", v=0.05)
        x1 = np.array([0.0, 1.0, 2.0])
        mc = D.monte_carlo_V(proc, gains, nm, x1, 40, 4000, seed=3)
        _, EV = D.exact_second_moment(proc, gains, nm, x1, 40)
        dev = np.abs(mc.mean_V - EV) / np.maximum(mc.stderr_V, 1e-300)
        assert dev[1:].max() <= 4.0

    def test_stderr_shrinks_with_replicas(self):
        proc = T.FixedProcess(G.complete_graph(3))
        gains = cl.GainSchedule("constant", alpha=0.1)
        nm = D.make_noise("iid_gaussian", v=0.1)
        x1 = np.zeros(3)
        mc1 = D.monte_carlo_V(proc, gains, nm, x1, 50, 2000, seed=1)
        mc2 = D.monte_carlo_V(proc, gains, nm, x1, 50, 4000, seed=2)
        ratio = (mc2.stderr_V[10:] / mc1.stderr_V[10:]).mean()
        assert ratio == pytest.approx(1 / math.sqrt(2), abs=0.08)

    def test_deterministic_given_seed(self):
        proc = T.PeriodicProcess(T.cycle_edge_components(3), 3)
        gains = cl.GainSchedule("power", alpha=1.0, t_star=2.0, exponent=1.0)
        nm = D.make_noise("iid_gaussian", v=0.01)
        a = D.monte_carlo_V(proc, gains, nm, [0, 0.5, 1], 30, 50, seed=5)
        b = D.monte_carlo_V(proc, gains, nm, [0, 0.5, 1], 30, 50, seed=5)
        np.testing.assert_array_equal(a.mean_V, b.mean_V)
        np.testing.assert_array_equal(a.final_states, b.final_states)

    def test_random_process_loop_path(self):
        proc = T.RandomBlockProcess(2, 0.3, 2.0, 3, seed=0)
        gains = cl.GainSchedule("power", alpha=1.0, t_star=2.0, exponent=0.7)
        nm = D.make_noise("iid_gaussian", v=0.01)
        a = D.monte_carlo_V(proc, gains, nm, [0, 0.5, 1], 40, 6, seed=9)
        b = D.monte_carlo_V(proc, gains, nm, [0, 0.5, 1], 40, 6, seed=9)
        np.testing.assert_array_equal(a.mean_V, b.mean_V)
        assert a.final_states.shape == (6, 3)

    def test_replica_floor(self):
        proc = T.FixedProcess(G.pair_graph(2))
        gains = cl.GainSchedule("constant", alpha=0.1)
        with pytest.raises(ValueError):
            D.monte_carlo_V(proc, gains, D.make_noise("zero"), [0, 1], 5, 1, seed=0)


class TestCsvWriters:
    def test_trace_roundtrip(self, tmp_path):
        proc = T.FixedProcess(G.pair_graph(2))
        gains = cl.GainSchedule("constant", alpha=0.2)
        tr = D.run(proc, gains, D.make_noise("iid_gaussian", v=0.01), [0, 1], 10, seed=0)
        path = tmp_path / "trace.csv"
        D.write_trace_csv(tr, path)
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "t,x_1,x_2,V,a"
        assert len(rows) == 12
        first = rows[1].split(",")
        assert first[0] == "1" and float(first[1]) == 0.0 and float(first[2]) == 1.0

    def test_monte_carlo_csv(self, tmp_path):
        proc = T.FixedProcess(G.pair_graph(2))
        gains = cl.GainSchedule("constant", alpha=0.2)
        mc = D.monte_carlo_V(proc, gains, D.make_noise("iid_gaussian", v=0.01),
                             [0, 1], 5, 10, seed=0)
        path = tmp_path / "mc.csv"
        D.write_monte_carlo_csv(mc, path)
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "t,meanV,stderrV,replicas"
        assert len(rows) == 7  # header plus t = 1..horizon+1
        assert rows[1].endswith(",10")
