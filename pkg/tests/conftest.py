import numpy as np
import pytest

from segpass import BeamState, effective_channel

ACCEPTANCE = {}


def random_channel(rng, K, M, scale=1.0):
    return scale * (rng.standard_normal((K, M)) + 1j * rng.standard_normal((K, M))) / np.sqrt(2)


def random_beams(rng, K, D, p_max=1.0, receivers=True):
    """Power-feasible random transmit pairs, optionally with random receivers."""
    split = rng.random(K)
    frac = rng.random(K)
    ph = np.exp(2j * np.pi * rng.random((2, K)))
    w = np.sqrt(p_max * frac * split) * ph[0]
    v = np.sqrt(p_max * frac * (1 - split)) * ph[1]
    if not receivers:
        return BeamState(w, v, np.zeros(D), np.zeros((K, D)))
    z = rng.standard_normal(D) + 1j * rng.standard_normal(D)
    u = rng.standard_normal((K, D)) + 1j * rng.standard_normal((K, D))
    return BeamState(w, v, z, u)


def random_instance(rng, protocol, K=3, M=4, noise=0.1):
    H = random_channel(rng, K, M)
    return H, effective_channel(H, protocol, noise)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def record_acceptance(number, passed, detail):
    ACCEPTANCE[number] = (passed, detail)


def acceptance_line(number):
    passed, detail = ACCEPTANCE[number]
    return f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(acceptance_line(number))
