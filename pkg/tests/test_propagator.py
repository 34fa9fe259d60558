import math

import numpy as np
import pytest
from conftest import expm_taylor
from hypothesis import given
from hypothesis import strategies as st
from strategies import graph_families

from switchdiff import graph_core as gc
from switchdiff import propagator as pr
from switchdiff import semi_markov as sm

H = sm.HoldingDistribution
CYCLE = np.array([[0.0, 1.0], [1.0, 0.0]])


def traj_of(states, holdings):
    holdings = np.asarray(holdings, dtype=float)
    return sm.Trajectory(np.asarray(states), holdings, None, float(holdings.sum()))


def lap(n, edges, mu=None, m=None):
    return gc.laplacian(gc.build_graph(n, edges, m=m, mu=mu))


@pytest.fixture
def pair():
    a = lap(3, [(0, 1)], mu=[2.0])
    b = lap(3, [(1, 2), (0, 2)], mu=[1.0, 0.5])
    return pr.Ensemble([a, b])


class TestPropagate:
    def test_t0(self, pair):
        np.testing.assert_array_equal(pr.propagate(pair, traj_of([0, 1], [1.0]), 0.0), np.eye(3))

    def test_single_state(self, path3):
        op = gc.laplacian(path3)
        ens = pr.Ensemble([op])
        s = pr.propagate(ens, traj_of([0, 0], [5.0]), 2.5)
        np.testing.assert_allclose(s, expm_taylor(op.matrix, 2.5), atol=1e-12)

    def test_order(self, pair):
        a, b = (op.matrix for op in pair.operators)
        assert not np.allclose(a @ b, b @ a)
        s = pr.propagate(pair, traj_of([0, 1, 0], [1.0, 1.0]), 2.0)
        np.testing.assert_allclose(s, expm_taylor(b) @ expm_taylor(a), atol=1e-12)

    def test_mid_segment(self, pair):
        a, b = (op.matrix for op in pair.operators)
        s = pr.propagate(pair, traj_of([1, 0, 1], [0.5, 2.0]), 1.25)
        np.testing.assert_allclose(s, expm_taylor(a, 0.75) @ expm_taylor(b, 0.5), atol=1e-12)

    def test_state_out_of_range(self, pair):
        with pytest.raises(ValueError):
            pr.propagate(pair, traj_of([0, 2], [1.0]), 0.5)

    @given(graph_families(max_graphs=3, max_n=5, same_mass=True), st.integers(0, 1000), st.floats(0.0, 1.0))
    def test_cocycle_and_invariants(self, graphs, seed, frac):
        ens = pr.Ensemble([gc.laplacian(g) for g in graphs])
        k = len(ens)
        spec = sm.SemiMarkovSpec(np.full((k, k), 1 / k), [H.exponential(2.0)] * k)
        traj = sm.sample_trajectory(spec, 5.0, seed)
        t2 = 5.0
        t1 = t2 * frac
        s1, s2 = pr.propagate(ens, traj, t1), pr.propagate(ens, traj, t2)
        # S(t2) = U(t2, t1) S(t1), with U built from the segments inside [t1, t2]
        times = traj.renewal_times
        u = np.eye(ens.dim)
        for n in range(len(traj.holdings)):
            lo, hi = max(times[n], t1), min(times[n + 1], t2)
            if hi > lo:
                u = expm_taylor(ens.operators[traj.states[n]].matrix, hi - lo) @ u
        np.testing.assert_allclose(s2, u @ s1, atol=1e-10)
        p = ens.P_K.matrix
        assert ens.norm(s2) <= 1 + 1e-12
        np.testing.assert_allclose(s2 @ p, p, atol=1e-10)
        np.testing.assert_allclose(p @ s2, p, atol=1e-10)


class TestDeviationSeries:
    def test_t0(self, pair):
        ser = pr.deviation_series(pair, traj_of([0, 1], [1.0]), [0.0])
        assert ser.deviation[0] == pytest.approx(1.0)

    def test_single_graph(self, path3):
        ens = pr.Ensemble([gc.laplacian(path3)])
        ser = pr.deviation_series(ens, traj_of([0, 0], [3.0]), [0, 1, 2])
        np.testing.assert_allclose(ser.deviation, np.exp(-np.array([0.0, 1.0, 2.0])), rtol=1e-12)
        np.testing.assert_allclose(ser.bound, ser.deviation, rtol=1e-12)

    def test_zero_ensemble(self):
        z = gc.OperatorModel(np.zeros((3, 3)), np.ones(3))
        ser = pr.deviation_series(pr.Ensemble([z, z]), traj_of([0, 1, 0], [1.0, 1.0]), [0, 1, 2])
        assert np.all(ser.deviation == 0)

    def test_residual_monotone(self):
        ens = pr.Ensemble([lap(4, [(0, 1), (2, 3)]), lap(4, [(1, 2)])])
        spec = sm.SemiMarkovSpec(CYCLE, [H.exponential(1)] * 2)
        traj = sm.sample_trajectory(spec, 60.0, 1)
        ser = pr.deviation_series(ens, traj, np.linspace(0, 60, 301))
        assert np.all(np.diff(ser.residual_norm) <= 1e-9)
        assert ser.deviation[-1] < 1e-3

    def test_times_validated(self, pair):
        with pytest.raises(ValueError):
            pr.deviation_series(pair, traj_of([0, 1], [1.0]), [0.5, 0.2])
        with pytest.raises(ValueError):
            pr.deviation_series(pair, traj_of([0, 1], [1.0]), [0.0, 3.0])

    def test_csv_rows(self, path3):
        ens = pr.Ensemble([gc.laplacian(path3)])
        rows = list(pr.deviation_series(ens, traj_of([0, 0], [3.0]), [0, 1]).csv_rows())
        assert rows[0] == ("t", "state", "deviation", "residual", "bound")
        assert float(rows[2][2]) == pytest.approx(math.exp(-1), rel=1e-14)
        assert len(rows[2][2].split("e")[0]) == 18


class TestCoveringContraction:
    def test_path_and_zero(self, path3):
        z = gc.OperatorModel(np.zeros((3, 3)), np.ones(3))
        ens = pr.Ensemble([gc.laplacian(path3), z])
        assert pr.covering_contraction_norm(ens, [0, 1], 1.0) == pytest.approx(math.exp(-1), rel=1e-12)

    @pytest.mark.parametrize("delta", [0.01, 0.5, 3.0])
    def test_single_op(self, k3, delta):
        ens = pr.Ensemble([gc.laplacian(k3)])
        assert pr.covering_contraction_norm(ens, [0], delta) == pytest.approx(math.exp(-3 * delta), rel=1e-12)

    def test_trivial_kernel_large_delta(self):
        d = gc.OperatorModel(np.array([[-2.0, 1, 0], [1, -2, 1], [0, 1, -2]]), np.ones(3))
        ens = pr.Ensemble([d, d])
        assert pr.covering_contraction_norm(ens, [0, 1], 50.0) < 1e-20

    def test_must_cover(self, pair):
        with pytest.raises(ValueError, match="cover"):
            pr.covering_contraction_norm(pair, [0, 0], 1.0)

    @given(graph_families(max_graphs=3, max_n=6, same_mass=True), st.sampled_from([0.01, 0.1, 1.0]))
    def test_strict_contraction(self, graphs, delta):
        ens = pr.Ensemble([gc.laplacian(g) for g in graphs])
        if ens.P_K.rank == ens.dim:
            return
        norm = pr.covering_contraction_norm(ens, list(range(len(ens))), delta)
        assert norm < 1.0


class TestTheoreticalRate:
    def test_single_graph(self, path3):
        ens = pr.Ensemble([gc.laplacian(path3)])
        rep = pr.theoretical_rate(ens, sm.SemiMarkovSpec([[1.0]], [H.exponential(1)]))
        assert rep.averaged == pytest.approx(1.0)
        assert rep.conservative == pytest.approx(1.0)

    def test_path_k3(self, path3, k3):
        ens = pr.Ensemble([gc.laplacian(path3), gc.laplacian(k3)])
        rep = pr.theoretical_rate(ens, sm.SemiMarkovSpec(CYCLE, [H.exponential(1)] * 2))
        assert rep.averaged == pytest.approx(2.0)
        assert rep.conservative == pytest.approx(0.5)

    def test_only_first_qualifies(self):
        # state 0: single edge with mu = 2, spectrum {0, -4}; state 1: zero operator
        a = lap(2, [(0, 1)], mu=[2.0])
        z = gc.OperatorModel(np.zeros((2, 2)), np.ones(2))
        ens = pr.Ensemble([a, z])
        spec = sm.SemiMarkovSpec(CYCLE, [H.deterministic(1), H.deterministic(3)])
        rep = pr.theoretical_rate(ens, spec)
        assert rep.qualifying == [True, False]
        np.testing.assert_allclose(rep.occupation, [0.25, 0.75])
        assert rep.conservative == pytest.approx(1.0)
        assert rep.averaged == pytest.approx(1.0)

    def test_no_qualifying_state(self):
        ens = pr.Ensemble([lap(3, [(0, 1)]), lap(3, [(1, 2)])])
        rep = pr.theoretical_rate(ens, sm.SemiMarkovSpec(CYCLE, [H.exponential(1)] * 2))
        assert rep.conservative is None and rep.averaged == 0.0 and rep.note

    def test_state_mismatch(self, path3):
        with pytest.raises(ValueError):
            pr.theoretical_rate(pr.Ensemble([gc.laplacian(path3)]), sm.SemiMarkovSpec(CYCLE, [H.exponential(1)] * 2))


class TestEstimateRate:
    def test_exact_exponential(self):
        t = np.linspace(0, 10, 101)
        assert pr.fit_decay_rate(t, np.exp(-2 * t)) == pytest.approx(2.0, abs=1e-9)

    def test_constant(self):
        t = np.linspace(0, 10, 11)
        assert pr.fit_decay_rate(t, np.ones_like(t)) == pytest.approx(0.0, abs=1e-12)

    def test_single_graph_run(self, k3):
        ens = pr.Ensemble([gc.laplacian(k3)])
        spec = sm.SemiMarkovSpec([[1.0]], [H.exponential(1)])
        traj = sm.sample_trajectory(spec, 20.0, 0)
        ser = pr.deviation_series(ens, traj, np.linspace(0, 20, 81))
        assert pr.estimate_rate(ser, (1.0, 20.0)) == pytest.approx(3.0, abs=1e-6)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            pr.fit_decay_rate([0, 1, 2], [1, 0.5, 0.25], (1.5, 2))


class TestGronwall:
    def test_f_in_kernel(self, path3, k3):
        ens = pr.Ensemble([gc.laplacian(path3), gc.laplacian(k3)])
        traj = traj_of([0, 1, 0], [1.0, 2.0])
        rep = pr.gronwall_bound_check(ens, traj, np.ones(3), [0, 1, 2, 3])
        assert np.all(rep.lhs <= 1e-28) and np.all(rep.rhs == 0) and rep.ok

    def test_tight_on_gap_eigenvector(self, path3):
        ens = pr.Ensemble([gc.laplacian(path3)])
        rep = pr.gronwall_bound_check(ens, traj_of([0, 0], [4.0]), [1.0, 0.0, -1.0], np.linspace(0, 4, 9))
        np.testing.assert_allclose(rep.lhs, rep.rhs, rtol=1e-9)
        assert abs(rep.margin) <= 1e-9

    def test_random_mixed(self, path3, k3):
        ens = pr.Ensemble([gc.laplacian(path3), gc.laplacian(k3)])
        spec = sm.SemiMarkovSpec(CYCLE, [H.exponential(1)] * 2)
        for seed in range(100):
            traj = sm.sample_trajectory(spec, 10.0, seed)
            f = sm.make_rng(seed, 1).standard_normal(3)
            assert pr.gronwall_bound_check(ens, traj, f, np.linspace(0, 10, 21)).margin >= -1e-9

    def test_reference_must_qualify(self):
        ens = pr.Ensemble([lap(3, [(0, 1)]), lap(3, [(0, 1), (1, 2)])])
        with pytest.raises(ValueError):
            pr.gronwall_bound_check(ens, traj_of([0, 1], [1.0]), np.ones(3), [0.0], reference_state=0)


class TestUnitClock:
    def test_single_graph(self, k3):
        ens = pr.Ensemble([gc.laplacian(k3)])
        rep = pr.unit_clock_decay_check(ens, traj_of([0] * 11, [1.0] * 10))
        assert rep.delta == pytest.approx(math.exp(-3), rel=1e-12)
        np.testing.assert_allclose(rep.residual, rep.delta ** rep.steps, rtol=1e-9)
        assert rep.ok

    def test_first_step_trivial(self, k3):
        ens = pr.Ensemble([gc.laplacian(k3)])
        rep = pr.unit_clock_decay_check(ens, traj_of([0, 0], [1.0]))
        assert rep.bound.tolist() == [1.0] and rep.ok

    def test_alternating_strict(self, path3, k3):
        ens = pr.Ensemble([gc.laplacian(path3), gc.laplacian(k3)])
        rep = pr.unit_clock_decay_check(ens, traj_of([0, 1] * 10 + [0], [1.0] * 20))
        assert rep.ok
        assert np.all(rep.residual[1:] < rep.bound[1:])

    def test_requires_unit_clock(self, k3):
        with pytest.raises(ValueError):
            pr.unit_clock_decay_check(pr.Ensemble([gc.laplacian(k3)]), traj_of([0, 0], [0.5]))


class TestEnsemble:
    def test_rejects_positive_operator(self):
        with pytest.raises(ValueError):
            pr.Ensemble([gc.OperatorModel(np.eye(2), np.ones(2))])

    def test_rejects_mixed_mass(self):
        with pytest.raises(ValueError):
            pr.Ensemble([lap(2, [(0, 1)]), lap(2, [(0, 1)], m=[1, 2])])

    def test_exp_cached(self, pair):
        assert pair.exp(0, 0.5) is pair.exp(0, 0.5)
