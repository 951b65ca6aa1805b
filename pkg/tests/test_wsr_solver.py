import numpy as np
import pytest

from segpass import (
    BeamState,
    Scenario,
    SolverConfig,
    ao_wmmse,
    effective_channel,
    initial_beams,
    mmse_receivers,
    mse_eval,
    sensing_mse,
    sinr_eval,
    update_weights,
    wsr_eval,
    wsr_mmse_receivers,
    wsr_transmit_update,
)
from segpass.experiment import framework_channel
from segpass.geometry import draw_ues
from segpass.wsr_solver import surrogate

import oracles
from conftest import random_beams, random_channel, random_instance

PROTOCOLS = ["SS", "SA", "SM"]


def with_mmse(b, eff):
    z, u = mmse_receivers(b, eff)
    return BeamState(b.w, b.v, z, u)


def test_receivers_are_shared(rng):
    _, eff = random_instance(rng, "SM")
    b = random_beams(rng, 3, eff.dim, receivers=False)
    z1, u1 = wsr_mmse_receivers(b, eff)
    z2, u2 = mmse_receivers(b, eff)
    np.testing.assert_array_equal(z1, z2)
    np.testing.assert_array_equal(u1, u2)
    b.v[:] = 0
    assert np.all(wsr_mmse_receivers(b, eff)[1] == 0)


@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_weights_match_sinr(rng, protocol):
    for _ in range(10):
        _, eff = random_instance(rng, protocol)
        rx = with_mmse(random_beams(rng, 3, eff.dim, receivers=False), eff)
        beta = update_weights(rx, eff)
        np.testing.assert_allclose(beta * sensing_mse(rx, eff), 1.0, atol=1e-9)
        np.testing.assert_allclose(beta, 1 + sinr_eval(rx, eff), atol=1e-9, rtol=1e-12)
        assert np.all(beta >= 1)


def test_weights_silent_ue(rng):
    _, eff = random_instance(rng, "SS")
    b = random_beams(rng, 3, 1, receivers=False)
    b.v[0] = 0
    beta = update_weights(with_mmse(b, eff), eff)
    assert beta[0] == 1.0


def test_surrogate_equals_weight_sum_minus_rate(rng):
    _, eff = random_instance(rng, "SM")
    rx = with_mmse(random_beams(rng, 3, eff.dim, receivers=False), eff)
    theta = np.array([1.0, 2.0, 0.5])
    beta = update_weights(rx, eff)
    assert surrogate(rx, eff, beta, theta) == pytest.approx(
        theta.sum() - wsr_eval(rx, eff, theta), rel=1e-12)


def test_transmit_update_zero_weight_silences_computation(rng):
    _, eff = random_instance(rng, "SS")
    rx = with_mmse(random_beams(rng, 3, 1, receivers=False), eff)
    beta = update_weights(rx, eff)
    w, v, _ = wsr_transmit_update(rx, eff, beta, [0.0, 1.0, 1.0], 1.0, 10.0, method="closed_form")
    assert w[0] == 0
    assert np.all(np.abs(w) ** 2 + np.abs(v) ** 2 <= 1 + 1e-12)


def test_transmit_update_single_ue_direction():
    eff = effective_channel(np.array([[0.6 - 0.2j]]), "SS", 0.1)
    b = BeamState([0.3j], [0.4], [0.7 + 0.1j], [[0.2 - 0.5j]])
    w, v, _ = wsr_transmit_update(b, eff, [2.0], [1.0], 1.0, 10.0, method="closed_form")
    c = np.conj(b.z[0]) * eff.gains[0, 0]
    assert np.angle(w[0] * c) == pytest.approx(0.0, abs=1e-12)
    e = np.conj(b.u[0, 0]) * eff.gains[0, 0]
    assert np.angle(v[0] * e) == pytest.approx(0.0, abs=1e-12)
    assert abs(w[0]) ** 2 + abs(v[0]) ** 2 <= 1.0 + 1e-12


def test_transmit_update_does_not_increase_surrogate():
    rng = np.random.default_rng(50)
    for _ in range(50):
        _, eff = random_instance(rng, "SS", K=3, M=4)
        rx = with_mmse(random_beams(rng, 3, 1, receivers=False), eff)
        theta = rng.random(3) + 0.5
        beta = update_weights(rx, eff)
        before = surrogate(rx, eff, beta, theta)
        w, v, ok = wsr_transmit_update(rx, eff, beta, theta, 1.0, 10.0)
        after = surrogate(BeamState(w, v, rx.z, rx.u), eff, beta, theta)
        assert ok and after <= before + 1e-12


def test_transmit_update_respects_tight_mse_budget():
    rng = np.random.default_rng(51)
    for _ in range(10):
        _, eff = random_instance(rng, "SM", K=3, M=3)
        rx = with_mmse(random_beams(rng, 3, 3, receivers=False), eff)
        budget = 1.05 * mse_eval(rx, eff)
        beta = update_weights(rx, eff)
        w, v, ok = wsr_transmit_update(rx, eff, beta, 1.0, 1.0, budget)
        assert ok
        assert mse_eval(BeamState(w, v, rx.z, rx.u), eff) <= budget * (1 + 1e-9)
        assert np.all(np.abs(w) ** 2 + np.abs(v) ** 2 <= 1 + 1e-9)


def test_infinite_tolerance_single_iteration(rng):
    _, eff = random_instance(rng, "SM")
    rep = ao_wmmse(eff, 1.0, config=SolverConfig(tol_rel=np.inf))
    assert rep.iterations_used == 1 and rep.converged


@pytest.mark.parametrize("protocol", PROTOCOLS)
@pytest.mark.parametrize("method", ["joint", "closed_form"])
def test_ao_wmmse_traces(protocol, method):
    rng = np.random.default_rng(6)
    for _ in range(5):
        _, eff = random_instance(rng, protocol, K=4, M=5, noise=0.05)
        theta = rng.random(4) + 0.5
        rep = ao_wmmse(eff, 1.0, theta, 10.0, SolverConfig(max_iters=100, method=method))
        assert rep.final_beams.power_feasible(1.0)
        if method == "joint":
            assert np.all(np.diff(rep.surrogate_trace) <= 1e-9)
            assert np.all(np.diff(rep.wsr_trace) >= -1e-9)
            assert rep.mse_constraint_ok
        np.testing.assert_allclose(rep.surrogate_trace, theta.sum() - np.array(rep.wsr_trace),
                                   rtol=1e-9, atol=1e-9)
        assert rep.final_wsr == pytest.approx(wsr_eval(rep.final_beams, eff, theta), rel=1e-12)
        if rep.converged:
            assert rep.final_wsr == pytest.approx(np.sum(theta * np.log2(rep.weights)), abs=1e-6)


def test_multistart_never_worse(rng):
    _, eff = random_instance(rng, "SS", K=4, M=4, noise=0.05)
    single = ao_wmmse(eff, 1.0, n_init=1)
    multi = ao_wmmse(eff, 1.0, n_init=5)
    assert multi.final_wsr >= single.final_wsr - 1e-12


def test_common_phase_invariance(rng):
    _, eff = random_instance(rng, "SM")
    rep = ao_wmmse(eff, 1.0)
    b = rep.final_beams
    r = np.exp(0.7j)
    rot = BeamState(b.w * r, b.v * r, b.z, b.u)
    assert wsr_eval(rot, eff) == pytest.approx(rep.final_wsr, rel=1e-12)


def test_single_segment_protocols_agree(rng):
    H = random_channel(rng, 3, 1)
    traces = []
    for p in PROTOCOLS:
        eff = effective_channel(H, p, 0.1)
        rep = ao_wmmse(eff, 1.0, initial=initial_beams(eff, 1.0))
        traces.append(np.array(rep.wsr_trace))
    for t in traces[1:]:
        np.testing.assert_allclose(t, traces[0], atol=1e-9)


def test_mse_budget_validation(rng):
    _, eff = random_instance(rng, "SS")
    with pytest.raises(ValueError):
        ao_wmmse(eff, 1.0, mse_budget=0.0)


@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_default_scenario_converges(protocol):
    sc = Scenario()
    rng = np.random.default_rng(2024)
    for _ in range(5):
        eff = framework_channel(f"JCC-{protocol}", draw_ues(rng, sc), sc)
        rep = ao_wmmse(eff, sc.p_max, sc.theta, sc.mse_budget, n_init=sc.num_ues + 1)
        assert rep.converged and rep.iterations_used <= 30


def test_tiny_instance_matches_brute_force():
    sc = Scenario(num_segments=2, num_ues=2)
    rng = np.random.default_rng(78)
    eff = framework_channel("JCC-SM", draw_ues(rng, sc), sc)
    rep = ao_wmmse(eff, sc.p_max, n_init=3)
    _, bf = oracles.brute_force_tiny(eff.gains, eff.noise, sc.p_max, sc.rate_targets)
    assert rep.final_wsr >= 0.95 * bf
