import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segpass import (
    BeamState,
    DimensionMismatch,
    ProtocolKind,
    Scenario,
    effective_channel,
    evaluate,
    mse_eval,
    sensing_mse,
    sinr_eval,
    wsr_eval,
)
from segpass.geometry import ChannelSet

import oracles
from conftest import random_beams, random_channel, random_instance

PROTOCOLS = ["SS", "SA", "SM"]


# ---------------------------------------------------------------------------
# protocol kinds and effective channels

def test_protocol_kind_parsing():
    assert ProtocolKind.parse("SS:3").selected_segment == 3
    assert ProtocolKind.parse("sa") == ProtocolKind.aggregation()
    assert ProtocolKind.parse(ProtocolKind.multiplexing()) == ProtocolKind.multiplexing()
    with pytest.raises(ValueError):
        ProtocolKind.parse("XX")


def test_effective_channel_shapes_and_noise(rng):
    H = random_channel(rng, 3, 5)
    ss = effective_channel(H, "SS:2", 0.5)
    sa = effective_channel(H, "SA", 0.5)
    sm = effective_channel(ChannelSet(H), "SM", 0.5)
    np.testing.assert_array_equal(ss.gains[:, 0], H[:, 2])
    assert ss.noise == 0.5 and ss.segment == 2
    assert sa.noise == 5 * 0.5
    np.testing.assert_array_equal(sm.gains, H)
    assert sm.noise == 0.5


def test_ss_default_segment_is_strongest(rng):
    H = random_channel(rng, 3, 5)
    H[:, 3] *= 10
    assert effective_channel(H, "SS", 1.0).segment == 3
    with pytest.raises(DimensionMismatch):
        effective_channel(H, "SS:5", 1.0)


def test_sa_gain_matches_naive_sum(rng):
    H = random_channel(rng, 4, 6)
    g = effective_channel(H, "SA", 1.0).gains[:, 0]
    for k in range(4):
        total = 0j
        for m in range(6):
            total += H[k, m]
        assert g[k] == pytest.approx(total, abs=1e-14)


def test_sa_destructive_aggregation():
    H = np.array([[1 + 1j, -1 - 1j]])
    assert effective_channel(H, "SA", 1.0).gains[0, 0] == 0


def test_effective_channel_accepts_scenario_noise(rng):
    sc = Scenario(noise_watts=3e-12)
    assert effective_channel(random_channel(rng, 2, 8), "SA", sc).noise == pytest.approx(24e-12)


def test_single_segment_protocols_agree(rng):
    H = random_channel(rng, 3, 1)
    beams = random_beams(rng, 3, 1)
    vals = [evaluate(beams, effective_channel(H, p, 0.2)) for p in PROTOCOLS]
    for other in vals[1:]:
        assert other.mse == pytest.approx(vals[0].mse, rel=1e-12)
        np.testing.assert_allclose(other.sinr, vals[0].sinr, rtol=1e-12)


# ---------------------------------------------------------------------------
# beam state

def test_beam_state_validation_and_power():
    b = BeamState([1, 0], [0, 1j], np.zeros(2), np.zeros((2, 2)))
    np.testing.assert_allclose(b.power, [1, 1])
    assert b.power_feasible(1.0) and not b.power_feasible(0.5)
    assert b.tx_comp is b.w and b.rx_sense is b.u
    with pytest.raises(DimensionMismatch):
        BeamState([1, 2], [1])
    with pytest.raises(DimensionMismatch):
        BeamState([1, 2], [1, 2], np.zeros(3), np.zeros((2, 2)))


def test_evaluators_reject_wrong_dimensions(rng):
    _, eff = random_instance(rng, "SM", K=2, M=3)
    with pytest.raises(DimensionMismatch):
        mse_eval(random_beams(rng, 2, 1), eff)
    with pytest.raises(DimensionMismatch):
        sinr_eval(random_beams(rng, 3, 3), eff)


# ---------------------------------------------------------------------------
# MSE

def test_mse_zero_receiver_is_one(rng):
    _, eff = random_instance(rng, "SM")
    b = random_beams(rng, 3, eff.dim)
    b.z[:] = 0
    assert mse_eval(b, eff) == 1.0


def test_mse_perfect_aggregation():
    eff = effective_channel(np.array([[0.3 - 0.4j]]), "SS", 0.1)
    eff0 = type(eff)(eff.gains, 1e-300, eff.protocol, eff.segment)
    w = 2.0 + 1j
    z = np.conj(1.0 / (eff.gains[0, 0] * w))
    assert mse_eval(BeamState([w], [0.0], [z]), eff0) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_mse_matches_naive_loops(rng, protocol):
    for _ in range(10):
        H, eff = random_instance(rng, protocol)
        b = random_beams(rng, 3, eff.dim)
        expect = oracles.naive_mse(eff.gains, eff.noise, b.w, b.v, b.z)
        assert mse_eval(b, eff) == pytest.approx(expect, rel=1e-12)


@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_mse_matches_signal_level_monte_carlo(protocol):
    rng = np.random.default_rng({"SS": 1, "SA": 2, "SM": 3}[protocol])
    for _ in range(4):
        H, eff = random_instance(rng, protocol, K=3, M=3, noise=0.3)
        b = random_beams(rng, 3, eff.dim)
        b.z[:] *= 0.3
        mean, se = oracles.monte_carlo_mse(eff.gains, eff.noise, b.w, b.v, b.z, 10 ** 6, rng)
        val = mse_eval(b, eff)
        assert abs(val - mean) <= 1e-2 * val
        assert abs(val - mean) <= 4 * se


@given(phi=st.floats(0, 2 * math.pi), seed=st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_mse_common_phase_invariance(phi, seed):
    rng = np.random.default_rng(seed)
    _, eff = random_instance(rng, "SM")
    b = random_beams(rng, 3, eff.dim)
    r = np.exp(1j * phi)
    rot = BeamState(b.w * r, b.v * r, b.z * r, b.u)
    assert mse_eval(rot, eff) == pytest.approx(mse_eval(b, eff), rel=1e-12, abs=1e-15)


# ---------------------------------------------------------------------------
# SINR and WSR

@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_sinr_matches_naive_loops(rng, protocol):
    for _ in range(10):
        _, eff = random_instance(rng, protocol)
        b = random_beams(rng, 3, eff.dim)
        expect = oracles.naive_sinr(eff.gains, eff.noise, b.w, b.v, b.u)
        np.testing.assert_allclose(sinr_eval(b, eff), expect, rtol=1e-12)
        for k in range(3):
            assert sensing_mse(b, eff)[k] == pytest.approx(
                oracles.naive_sensing_mse(eff.gains, eff.noise, b.w, b.v, b.u, k), rel=1e-12)


def test_sinr_zero_sensing_power_and_zero_receiver(rng):
    _, eff = random_instance(rng, "SM")
    b = random_beams(rng, 3, eff.dim)
    b.v[1] = 0
    b.u[2] = 0
    s = sinr_eval(b, eff)
    assert s[1] == 0 and s[2] == 0


@given(seed=st.integers(0, 2 ** 32 - 1), mag=st.floats(1e-6, 1e6), phi=st.floats(0, 6.3))
@settings(max_examples=30, deadline=None)
def test_sinr_receiver_scale_invariance(seed, mag, phi):
    rng = np.random.default_rng(seed)
    _, eff = random_instance(rng, "SM")
    b = random_beams(rng, 3, eff.dim)
    scaled = BeamState(b.w, b.v, b.z, b.u * (mag * np.exp(1j * phi)))
    np.testing.assert_allclose(sinr_eval(scaled, eff), sinr_eval(b, eff), rtol=1e-12)


def test_wsr_values(rng):
    _, eff = random_instance(rng, "SM")
    b = random_beams(rng, 3, eff.dim)
    assert wsr_eval(b, eff, 2.0) == pytest.approx(2 * wsr_eval(b, eff), rel=1e-14)
    b.v[:] = 0
    assert wsr_eval(b, eff) == 0.0
    # single UE with SINR 3 gives 2 bit/s/Hz
    eff1 = effective_channel(np.array([[1.0]]), "SS", 1.0)
    b1 = BeamState([0.0], [math.sqrt(3.0)], [0.0], [[1.0]])
    assert sinr_eval(b1, eff1)[0] == pytest.approx(3.0)
    assert wsr_eval(b1, eff1) == pytest.approx(2.0)
    m = evaluate(b1, eff1)
    assert m.rate[0] == pytest.approx(2.0) and m.wsr == pytest.approx(2.0)
