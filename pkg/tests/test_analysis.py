import math

import numpy as np
import pytest

from formation_sim import (
    ControllerParams,
    FormationSpec,
    SimConfig,
    SimulationTrace,
    TargetModel,
    Topology,
    consensus_check,
    held_equilibrium_radii,
    lyapunov_traces,
    polar_map_discrepancy,
    report,
    run,
    sampled_polar_step_exact,
    sampled_polar_step_linear,
    sampled_stability_probe,
)
from helpers import (
    STANDARD_GAINS,
    dipper_case,
    disconnected_digraph,
    draw_box_positions,
    perturbed_formation_positions,
    random_admissible_case,
)

STATIC = TargetModel.static((0.0, 0.0))
TWO_PI = 2.0 * math.pi


def synthetic_trace(alpha_hat_offset=0.0, samples=11, radius=2.0):
    """Hand-built equilibrium trace around a static target at the origin."""
    topo = Topology.from_observations(2, [(1, 0)])
    spacing = math.pi / 2
    spec = FormationSpec(radii=[radius, radius], spacings={(1, 0): spacing})
    times = np.linspace(0.0, 10.0, samples)
    rate = -0.55
    alpha = rate * times[:, None] + np.array([0.0, -spacing])
    positions = radius * np.stack([np.cos(alpha), np.sin(alpha)], axis=-1)
    ahat = np.full((samples, 1), spacing + alpha_hat_offset)
    return SimulationTrace(
        times=times,
        positions=positions,
        rho=np.full((samples, 2), radius),
        alpha=alpha,
        alpha_hat=ahat,
        target_pos=np.zeros((samples, 2)),
        target_vel=np.zeros((samples, 2)),
        min_rho=np.full(samples, radius),
        min_pairwise_distance=np.full(samples, radius * math.sqrt(2.0)),
        observation_pairs=np.array([[1, 0]]),
        edge_weights=np.array([1.0]),
        edge_spacings=np.array([spacing]),
        radii=np.array([radius, radius]),
        metadata={"mode": "continuous", "step": 1.0, "output_every": 1},
    ), spec


class TestReport:
    def test_equilibrium_trace(self):
        trace, spec = synthetic_trace()
        rep = report(trace, spec)
        assert rep.converged
        assert np.allclose(rep.radial_errors_final, 0.0)
        assert np.allclose(rep.spacing_errors_final, 0.0)
        assert np.allclose(rep.radial_time_to_tolerance, 0.0)
        assert np.allclose(rep.steady_angular_rates, -0.55, atol=1e-12)
        assert rep.min_pairwise_distance == pytest.approx(2.0 * math.sqrt(2.0))

    def test_spacing_error_wraps_full_turns(self):
        trace, spec = synthetic_trace(alpha_hat_offset=TWO_PI)
        rep = report(trace, spec)
        assert np.allclose(rep.spacing_errors_final, 0.0, atol=1e-12)
        assert rep.converged

    def test_converged_run_reports_steady_rate(self):
        topology, spec, params = dipper_case()
        positions = draw_box_positions(np.random.default_rng(12), 7)
        config = SimConfig(t_end=80.0, dt=0.0025, positions=positions,
                           output_dt=0.05)
        trace = run(config, spec, topology, params, STATIC)
        rep = report(trace, spec, params)
        assert rep.converged
        expected = params.lam * params.mu * params.c
        assert np.all(np.abs(rep.steady_angular_rates - expected)
                      / abs(expected) < 0.01)
        assert np.all(np.isfinite(rep.radial_time_to_tolerance))
        assert np.all(np.isfinite(rep.spacing_time_to_tolerance))

    def test_short_trace_shrinks_window(self):
        trace, spec = synthetic_trace(samples=5)
        rep = report(trace, spec)
        assert rep.window_shrunk

    def test_empty_trace_rejected(self):
        trace, spec = synthetic_trace()
        empty = SimulationTrace(
            times=trace.times[:0], positions=trace.positions[:0],
            rho=trace.rho[:0], alpha=trace.alpha[:0],
            alpha_hat=trace.alpha_hat[:0], target_pos=trace.target_pos[:0],
            target_vel=trace.target_vel[:0], min_rho=trace.min_rho[:0],
            min_pairwise_distance=trace.min_pairwise_distance[:0],
            observation_pairs=trace.observation_pairs,
            edge_weights=trace.edge_weights,
            edge_spacings=trace.edge_spacings, radii=trace.radii,
        )
        with pytest.raises(ValueError):
            report(empty, spec)

    def test_unconverged_has_infinite_settling_time(self):
        trace, spec = synthetic_trace()
        bad = SimulationTrace(
            times=trace.times, positions=trace.positions,
            rho=trace.rho + 0.5, alpha=trace.alpha,
            alpha_hat=trace.alpha_hat, target_pos=trace.target_pos,
            target_vel=trace.target_vel, min_rho=trace.min_rho,
            min_pairwise_distance=trace.min_pairwise_distance,
            observation_pairs=trace.observation_pairs,
            edge_weights=trace.edge_weights,
            edge_spacings=trace.edge_spacings, radii=trace.radii,
        )
        rep = report(bad, spec)
        assert not rep.converged
        assert np.all(np.isinf(rep.radial_time_to_tolerance))


class TestConsensus:
    def test_ring_reaches_agreement(self):
        topology, _, params = dipper_case()
        rng = np.random.default_rng(77)
        xi0 = rng.uniform(-math.pi, math.pi, 7)
        spread = consensus_check(topology, params, xi0, t_end=200.0)
        assert spread < 1e-6

    def test_disconnected_components_disagree(self):
        rng = np.random.default_rng(78)
        topo = disconnected_digraph(rng, sizes=(2, 3))
        params = ControllerParams(**STANDARD_GAINS)
        xi0 = rng.uniform(-math.pi, math.pi, 5)
        xi0[2:] += TWO_PI + 1.0  # distinct component means
        spread = consensus_check(topo, params, xi0, t_end=200.0)
        assert spread >= 1e-2

    def test_agreement_is_invariant(self):
        topology, _, params = dipper_case()
        xi0 = np.full(7, 0.37)
        spread = consensus_check(topology, params, xi0, t_end=50.0)
        assert spread == 0.0

    def test_shape_validation(self):
        topology, _, params = dipper_case()
        with pytest.raises(ValueError):
            consensus_check(topology, params, np.zeros(3), t_end=1.0)


class TestHeldEquilibrium:
    def test_matches_fixed_point_of_exact_update(self):
        topology, spec, params = dipper_case(h=0.1)
        rho_star = held_equilibrium_radii(spec, params, h=0.1)
        for i in range(spec.n):
            rho = spec.radii[i]
            for _ in range(4000):
                rho, _ = sampled_polar_step_exact(rho, spec.radii[i],
                                                  params.c, params, h=0.1)
            assert rho == pytest.approx(rho_star[i], abs=1e-12)

    def test_oversized_period_has_no_fixed_point(self):
        topology, spec, params = dipper_case()
        assert held_equilibrium_radii(spec, params, h=2.0) is None

    def test_requires_period(self):
        topology, spec, params = dipper_case()
        with pytest.raises(ValueError):
            held_equilibrium_radii(spec, params)


class TestPolarStepPair:
    def test_zero_coupling_collapses_both_maps(self):
        params = ControllerParams(h=0.1, **STANDARD_GAINS)
        exact = sampled_polar_step_exact(1.5, 2.0, 0.0, params)
        linear = sampled_polar_step_linear(1.5, 2.0, 0.0, params)
        assert exact == (1.5, 0.0)
        assert linear == (1.5, 0.0)

    def test_gap_is_second_order_in_h(self):
        params = ControllerParams(**STANDARD_GAINS)
        gaps = []
        for h in (0.1, 0.05):
            e_rho, e_alpha = sampled_polar_step_exact(1.0, 2.0, 1.1, params, h=h)
            l_rho, l_alpha = sampled_polar_step_linear(1.0, 2.0, 1.1, params, h=h)
            gaps.append((abs(e_rho - l_rho), abs(e_alpha - l_alpha)))
        assert gaps[0][0] / gaps[1][0] == pytest.approx(4.0, abs=0.5)
        assert gaps[0][1] / gaps[1][1] == pytest.approx(4.0, abs=1.0)


class TestPolarMapDiscrepancy:
    def probe_trace(self, h):
        topo = Topology.from_observations(2, [(1, 0)])
        spec = FormationSpec(radii=[2.0, 2.0], spacings={(1, 0): math.pi / 2})
        params = ControllerParams(h=h, **STANDARD_GAINS)
        config = SimConfig(t_end=200.0, mode="sampled", h=h,
                           positions=[[1.0, 0.0], [0.0, 1.0]])
        return run(config, spec, topo, params, STATIC), params

    def test_hand_value_and_h_scaling(self):
        trace_h, params_h = self.probe_trace(0.1)
        gaps_h = polar_map_discrepancy(trace_h, params_h)
        # first interval of the probe agent: exact lands at
        # sqrt(1.165^2 + 0.055^2), linear at 1.165
        first_gap = abs(math.sqrt(1.165**2 + 0.055**2) - 1.165)
        assert first_gap == pytest.approx(1.3e-3, abs=5e-5)
        assert gaps_h.rho_gap[0] >= first_gap - 1e-12

        trace_half, params_half = self.probe_trace(0.05)
        gaps_half = polar_map_discrepancy(trace_half, params_half)
        ratio = gaps_h.max_rho_gap / gaps_half.max_rho_gap
        assert 3.5 <= ratio <= 4.5

    def test_validation(self):
        topology, spec, params = dipper_case()
        config = SimConfig(t_end=1.0, dt=0.01, seed=1, output_dt=0.05)
        continuous = run(config, spec, topology, params, STATIC)
        with pytest.raises(ValueError):
            polar_map_discrepancy(continuous, params)


class TestStabilityProbe:
    def test_small_period_converges_everywhere(self):
        rng = np.random.default_rng(55)
        topology, spec, params = random_admissible_case(rng, n=3)
        from formation_sim import sampling_bound
        h_max = sampling_bound(spec, topology, params)
        points = sampled_stability_probe(
            spec, topology, params, [h_max / 2], trials=3, seed=9, t_end=150.0
        )
        assert points[0].fraction_converged == 1.0

    def test_showcase_tolerates_twice_the_bound(self):
        # the conservative bound is well under the empirical stability edge;
        # near-formation starts still converge at h = 0.1
        topology, spec, params = dipper_case()
        points = sampled_stability_probe(
            spec, topology, params, [0.1], trials=3, seed=1, t_end=150.0
        )
        assert points[0].fraction_converged == 1.0

    def test_rejects_bad_inputs(self):
        topology, spec, params = dipper_case()
        with pytest.raises(ValueError):
            sampled_stability_probe(spec, topology, params, [0.0], trials=2)
        with pytest.raises(ValueError):
            sampled_stability_probe(spec, topology, params, [0.01], trials=0)

    def test_deterministic(self):
        rng = np.random.default_rng(56)
        topology, spec, params = random_admissible_case(rng, n=3)
        a = sampled_stability_probe(spec, topology, params, [0.01], trials=2,
                                    seed=3, t_end=50.0)
        b = sampled_stability_probe(spec, topology, params, [0.01], trials=2,
                                    seed=3, t_end=50.0)
        assert a == b


class TestLyapunov:
    def test_values(self):
        trace, spec = synthetic_trace()
        assert np.allclose(lyapunov_traces(trace, spec), 0.0)
        # direct evaluation away from the circle: (4 - 1)^2
        topo = Topology.from_observations(2, [(1, 0)])
        spec2 = FormationSpec(radii=[2.0, 2.0], spacings={(1, 0): 1.0})
        off = SimulationTrace(
            times=np.array([0.0]), positions=np.array([[[1.0, 0.0], [0.0, 1.0]]]),
            rho=np.array([[1.0, 1.0]]), alpha=np.zeros((1, 2)),
            alpha_hat=np.zeros((1, 1)), target_pos=np.zeros((1, 2)),
            target_vel=np.zeros((1, 2)), min_rho=np.array([1.0]),
            min_pairwise_distance=np.array([1.0]),
            observation_pairs=np.array([[1, 0]]), edge_weights=np.array([1.0]),
            edge_spacings=np.array([1.0]), radii=np.array([2.0, 2.0]),
        )
        assert np.allclose(lyapunov_traces(off, spec2), 9.0)

    def test_non_increasing_along_random_run(self):
        topology, spec, params = dipper_case()
        positions = draw_box_positions(np.random.default_rng(41), 7)
        config = SimConfig(t_end=30.0, dt=0.005, positions=positions,
                           output_dt=0.005)
        trace = run(config, spec, topology, params, STATIC)
        w = lyapunov_traces(trace, spec)
        assert np.all(np.diff(w, axis=0) <= 1e-9)
