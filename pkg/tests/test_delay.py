import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dasa.delay import (
    DelayModelSpec,
    DelaySchedule,
    delay_stats,
    generate_schedule,
    min_updates_bound,
    read_schedule_csv,
    simulate_arrivals,
    write_schedule_csv,
)
from dasa.errors import ConfigError


def naive_staleness(transit):
    """Re-derive the schedule by enumerating arrivals, agent by agent."""
    horizon, n_agents = transit.shape
    tau = np.zeros((horizon, n_agents), dtype=np.int64)
    for i in range(n_agents):
        for k in range(horizon):
            available = [0]
            for j in range(k + 1):
                if j + transit[j, i] <= k:
                    available.append(j)
            tau[k, i] = k - max(available)
    return tau


class TestSimulateArrivals:
    def test_zero_transit_is_zero_staleness(self):
        sched = simulate_arrivals(np.zeros((5, 3), dtype=int))
        assert sched.tau.max() == 0

    def test_hand_trace_single_agent(self):
        # dispatch at 1 takes 5 ticks: at k=1 the agent still shows j=0's report
        sched = simulate_arrivals(np.array([[0], [5], [0]]))
        assert sched.tau[:, 0].tolist() == [0, 1, 0]

    def test_constant_transit_clamps_at_warmup(self):
        sched = simulate_arrivals(np.full((6, 2), 2, dtype=int))
        expected = [min(k, 2) for k in range(6)]
        for i in range(2):
            assert sched.tau[:, i].tolist() == expected

    @settings(max_examples=100, derandomize=True)
    @given(
        arrays(
            np.int64,
            st.tuples(st.integers(1, 24), st.integers(1, 4)),
            elements=st.integers(0, 30),
        )
    )
    def test_matches_enumeration_oracle(self, transit):
        sched = simulate_arrivals(transit)
        np.testing.assert_array_equal(sched.tau, naive_staleness(transit))

    @settings(max_examples=100, derandomize=True)
    @given(
        arrays(
            np.int64,
            st.tuples(st.integers(1, 24), st.integers(1, 4)),
            elements=st.integers(0, 30),
        )
    )
    def test_never_references_unarrived_report(self, transit):
        sched = simulate_arrivals(transit)
        t = sched.compute_times()
        horizon = transit.shape[0]
        for i in range(transit.shape[1]):
            for k in range(horizon):
                j = t[k, i]
                assert j == 0 or j + transit[j, i] <= k


class TestScheduleInvariants:
    def test_rejects_staleness_above_iteration(self):
        with pytest.raises(ValueError, match="exceeds iteration"):
            DelaySchedule(tau=np.array([[0], [2]]))

    def test_rejects_regressing_compute_time(self):
        # t goes 0, 1, 0
        with pytest.raises(ValueError, match="regresses"):
            DelaySchedule(tau=np.array([[0], [0], [2]]))

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            DelaySchedule(tau=np.array([[0], [-1]]))


class TestGenerateSchedule:
    def test_constant_zero(self):
        sched = generate_schedule(DelayModelSpec(kind="constant", value=0), 3, 5, 0)
        assert sched.tau.max() == 0

    def test_constant_three_clamped(self):
        sched = generate_schedule(DelayModelSpec(kind="constant", value=3), 2, 7, 0)
        for k in range(7):
            assert sched.tau[k, 0] == min(k, 3)

    def test_uniform_deterministic_in_seed(self):
        spec = DelayModelSpec(kind="uniform", tau_max=50)
        a = generate_schedule(spec, 4, 40, 9)
        b = generate_schedule(spec, 4, 40, 9)
        np.testing.assert_array_equal(a.tau, b.tau)
        c = generate_schedule(spec, 4, 40, 10)
        assert (a.tau != c.tau).any()

    def test_straggler_extremes(self):
        never = generate_schedule(DelayModelSpec(kind="straggler", tau_max=9, p=0.0), 2, 6, 0)
        assert never.tau.max() == 0
        always = generate_schedule(DelayModelSpec(kind="straggler", tau_max=9, p=1.0), 2, 30, 0)
        assert always.tau[-1].max() == 9

    def test_invariants_hold_for_all_models(self):
        specs = [
            DelayModelSpec(kind="constant", value=7),
            DelayModelSpec(kind="uniform", tau_max=25),
            DelayModelSpec(kind="straggler", tau_max=40, p=0.3),
        ]
        for spec in specs:
            sched = generate_schedule(spec, 5, 60, 3)
            k = np.arange(60)[:, None]
            assert (sched.tau <= k).all()
            assert (np.diff(k - sched.tau, axis=0) >= 0).all()


class TestDelayStats:
    def test_all_zero(self):
        sched = simulate_arrivals(np.zeros((4, 2), dtype=int))
        assert delay_stats(sched).tau_avg == 0.0

    def test_hand_sum(self):
        sched = DelaySchedule(tau=np.array([[0], [1], [2], [3]]))
        stats = delay_stats(sched)
        assert stats.tau_avg == pytest.approx(1.5)
        assert stats.tau_max_observed == 3
        np.testing.assert_allclose(stats.per_iteration_mean, [0, 1, 2, 3])

    def test_mean_below_max(self):
        sched = generate_schedule(DelayModelSpec(kind="uniform", tau_max=20), 3, 50, 1)
        stats = delay_stats(sched)
        assert stats.tau_avg <= stats.tau_max_observed


class TestMinUpdatesBound:
    def test_no_delay(self):
        assert min_updates_bound(80, 0.0) == 10

    def test_direct_formula(self):
        assert min_updates_bound(100, 4.0) == 3

    def test_single_iteration(self):
        assert min_updates_bound(1, 123.0) == 1

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            min_updates_bound(0, 1.0)
        with pytest.raises(ValueError):
            min_updates_bound(10, -1.0)


class TestScheduleFile:
    def test_round_trip(self, tmp_path):
        sched = generate_schedule(DelayModelSpec(kind="uniform", tau_max=12), 3, 25, 5)
        path = tmp_path / "sched.csv"
        write_schedule_csv(sched, path)
        loaded = read_schedule_csv(path)
        np.testing.assert_array_equal(loaded.tau, sched.tau)

    def test_generate_from_file_crops(self, tmp_path):
        sched = generate_schedule(DelayModelSpec(kind="uniform", tau_max=5), 2, 30, 5)
        path = tmp_path / "sched.csv"
        write_schedule_csv(sched, path)
        loaded = generate_schedule(DelayModelSpec(kind="file", path=path), 2, 10, 0)
        assert loaded.horizon == 10
        np.testing.assert_array_equal(loaded.tau, sched.tau[:10])

    def test_parse_error_positions(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("k,agent0,agent1\n0,0,0\n1,x,0\n")
        with pytest.raises(ConfigError, match="row 2, column 1"):
            read_schedule_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            read_schedule_csv(tmp_path / "nope.csv")

    def test_wrong_agent_count(self, tmp_path):
        sched = generate_schedule(DelayModelSpec(kind="constant", value=1), 2, 10, 0)
        path = tmp_path / "sched.csv"
        write_schedule_csv(sched, path)
        with pytest.raises(ConfigError, match="agents"):
            generate_schedule(DelayModelSpec(kind="file", path=path), 3, 10, 0)

    def test_invalid_schedule_in_file(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("k,agent0\n0,0\n1,2\n")
        with pytest.raises(ConfigError, match="exceeds iteration"):
            read_schedule_csv(path)
