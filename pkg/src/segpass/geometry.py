"""Deployment geometry and channel synthesis for a segmented pinching-antenna waveguide.

The waveguide runs parallel to the x-axis at ``y = area_half_y`` and
``z = height``. It is cut into ``num_segments`` equal segments, each with
its own feed point and exactly one activated pinching antenna (PA). UEs
sit on the ground plane inside ``[0, area_x] x [0, 2 * area_half_y]``.

All lengths are meters, powers watts, channel coefficients complex
baseband amplitudes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .exceptions import (
    ComplexRootWarning,
    ConfigError,
    DegenerateGeometry,
    OutOfSegment,
)

SPEED_OF_LIGHT = 299_792_458.0

# tolerance for "PA lies within its segment" checks, meters
_SEGMENT_TOL = 1e-9


def dbm_to_watts(dbm):
    """Convert a power in dBm to watts."""
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(np.asarray(watts, dtype=float)) + 30.0


PerUe = Union[float, Sequence[float]]


@dataclass(frozen=True)
class Scenario:
    """Deployment geometry, RF constants and per-UE budgets.

    Per-UE quantities (``p_max_watts``, ``rate_min_bps_hz``, ``weights``)
    accept either a scalar applied to every UE or one value per UE. The
    defaults follow the desk-scale setup: a 20 m x 20 m area, waveguide at
    3 m height, 28 GHz, 0.08 dB/m attenuation, 10 dBm per UE and -90 dBm
    noise, with 4 UEs and 8 segments.
    """

    area_x: float = 20.0
    area_half_y: float = 10.0
    height: float = 3.0
    num_segments: int = 8
    feed_x: Optional[tuple] = None
    carrier_freq: float = 28e9
    light_speed: float = SPEED_OF_LIGHT
    n_eff: float = 1.4
    kappa0_db_per_m: float = 0.08
    min_spacing: Optional[float] = None
    num_ues: int = 4
    p_max_watts: PerUe = 0.01
    noise_watts: float = 1e-12
    rate_min_bps_hz: PerUe = 0.1
    mse_budget: float = 10.0
    weights: PerUe = 1.0

    def __post_init__(self):
        for name in ("area_x", "area_half_y", "height", "carrier_freq",
                     "light_speed", "n_eff", "noise_watts", "mse_budget"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"must be a positive finite number, got {value!r}", name)
        if self.kappa0_db_per_m < 0 or not np.isfinite(self.kappa0_db_per_m):
            raise ConfigError("must be finite and >= 0", "kappa0_db_per_m")
        for name in ("num_segments", "num_ues"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"must be a positive integer, got {value!r}", name)
            object.__setattr__(self, name, int(value))
        if self.min_spacing is not None and self.min_spacing < 0:
            raise ConfigError("must be >= 0", "min_spacing")

        for name in ("p_max_watts", "rate_min_bps_hz", "weights"):
            value = getattr(self, name)
            if np.ndim(value) > 0:
                value = tuple(float(x) for x in value)
                if len(value) != self.num_ues:
                    raise ConfigError(
                        f"expected {self.num_ues} per-UE values, got {len(value)}", name)
                object.__setattr__(self, name, value)
        if np.any(self.p_max <= 0):
            raise ConfigError("per-UE power budgets must be > 0", "p_max_watts")
        if np.any(self.rate_min < 0):
            raise ConfigError("rate targets must be >= 0", "rate_min_bps_hz")
        if np.any(self.theta <= 0):
            raise ConfigError("weights must be > 0", "weights")

        if self.feed_x is not None:
            feeds = tuple(float(x) for x in self.feed_x)
            object.__setattr__(self, "feed_x", feeds)
            self._check_feeds(np.asarray(feeds))

    def _check_feeds(self, feeds):
        L = self.segment_length
        if feeds.shape != (self.num_segments,):
            raise ConfigError(
                f"expected {self.num_segments} feed positions, got {feeds.size}", "feed_x")
        if np.any(np.diff(feeds) < L - _SEGMENT_TOL):
            raise ConfigError("feeds must be increasing and at least one segment apart", "feed_x")
        if feeds[0] < -_SEGMENT_TOL or feeds[-1] + L > self.area_x + _SEGMENT_TOL:
            raise ConfigError("every segment must lie inside [0, area_x]", "feed_x")

    # derived quantities -------------------------------------------------

    @property
    def segment_length(self) -> float:
        return self.area_x / self.num_segments

    @property
    def feeds(self) -> np.ndarray:
        """Feed x-coordinates, one per segment (segment left edges by default)."""
        if self.feed_x is None:
            return self.segment_length * np.arange(self.num_segments)
        return np.asarray(self.feed_x, dtype=float)

    @property
    def wavelength(self) -> float:
        return self.light_speed / self.carrier_freq

    @property
    def guided_wavelength(self) -> float:
        return self.wavelength / self.n_eff

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def eta(self) -> float:
        """Free-space amplitude constant c / (4 pi f_c)."""
        return self.light_speed / (4.0 * math.pi * self.carrier_freq)

    @property
    def alpha(self) -> float:
        """Amplitude attenuation rate in nepers per meter."""
        return self.kappa0_db_per_m * math.log(10.0) / 20.0

    @property
    def spacing(self) -> float:
        return self.wavelength / 2.0 if self.min_spacing is None else self.min_spacing

    @property
    def p_max(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.p_max_watts, dtype=float), (self.num_ues,)).copy()

    @property
    def rate_min(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.rate_min_bps_hz, dtype=float), (self.num_ues,)).copy()

    @property
    def rate_targets(self) -> np.ndarray:
        """SINR targets 2**r_min - 1."""
        return np.exp2(self.rate_min) - 1.0

    @property
    def theta(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.weights, dtype=float), (self.num_ues,)).copy()

    @property
    def waveguide_y(self) -> float:
        return self.area_half_y

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)


class UePosition(NamedTuple):
    x: float
    y: float
    z: float = 0.0


@dataclass(frozen=True)
class PaPlacement:
    """x-coordinate of the activated PA in each segment (one PA per segment)."""

    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(-1))

    def validate(self, scenario: Scenario) -> "PaPlacement":
        if self.x.shape != (scenario.num_segments,):
            raise OutOfSegment(
                f"expected {scenario.num_segments} PA positions, got {self.x.size}")
        offset = self.x - scenario.feeds
        bad = np.flatnonzero((offset < -_SEGMENT_TOL)
                             | (offset > scenario.segment_length + _SEGMENT_TOL))
        if bad.size:
            raise OutOfSegment(f"PA of segment {bad[0]} at x={self.x[bad[0]]:.6g} m "
                               "is outside its segment")
        # one PA per segment, so the intra-segment spacing rule holds trivially
        return self


@dataclass(frozen=True)
class ChannelSet:
    """Uplink coefficients ``coefficients[k, m]`` from UE k into segment m's feed."""

    coefficients: np.ndarray
    placement: Optional[PaPlacement] = field(default=None, compare=False)

    @property
    def num_ues(self) -> int:
        return self.coefficients.shape[0]

    @property
    def num_segments(self) -> int:
        return self.coefficients.shape[1]

    def stacked(self, k: int) -> np.ndarray:
        """Length-M vector of UE k's coefficients in segment order."""
        return self.coefficients[k]


def as_positions(ues) -> np.ndarray:
    """Coerce UEs (UePosition, list of them, or an (K, 2|3) array) into a (K, 3) array."""
    if isinstance(ues, UePosition):
        ues = [ues]
    arr = np.asarray(ues, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        raise ValueError(f"UE positions must have shape (K, 2) or (K, 3), got {arr.shape}")
    if arr.shape[1] == 2:
        arr = np.column_stack([arr, np.zeros(len(arr))])
    return arr


def _distances(ues: np.ndarray, pa_x, scenario: Scenario) -> np.ndarray:
    """Distances (K, N) from each UE to antennas at (pa_x, waveguide_y, height)."""
    pa_x = np.atleast_1d(np.asarray(pa_x, dtype=float))
    dx = ues[:, 0, None] - pa_x[None, :]
    dy = ues[:, 1, None] - scenario.waveguide_y
    dz = ues[:, 2, None] - scenario.height
    return np.sqrt(dx * dx + dy * dy + dz * dz)


def _free_space(d, scenario: Scenario):
    if np.any(np.asarray(d) <= 0):
        raise DegenerateGeometry("UE coincides with an antenna")
    return scenario.eta * np.exp(-1j * scenario.wavenumber * d) / d


def _in_waveguide(offset, scenario: Scenario):
    offset = np.abs(offset)
    return (10.0 ** (-scenario.kappa0_db_per_m * offset / 20.0)
            * np.exp(-2j * np.pi * offset / scenario.guided_wavelength))


def free_space_channel(ue, pa_x: float, scenario: Scenario) -> complex:
    """Line-of-sight coefficient eta * exp(-j kappa d) / d between a UE and a PA."""
    d = _distances(as_positions(ue), pa_x, scenario)[0, 0]
    return complex(_free_space(d, scenario))


def in_waveguide_channel(pa_x: float, feed_x: float, scenario: Scenario) -> complex:
    """Attenuation and phase accumulated from the feed point to the PA."""
    offset = pa_x - feed_x
    if abs(offset) > scenario.segment_length + _SEGMENT_TOL:
        raise OutOfSegment(
            f"PA at {pa_x:.6g} m is {abs(offset):.6g} m from its feed; "
            f"segment length is {scenario.segment_length:.6g} m")
    return complex(_in_waveguide(offset, scenario))


def composite_channel(ues, placement: PaPlacement, scenario: Scenario) -> ChannelSet:
    """Per-UE, per-segment uplink coefficients h_in(PA, feed) * h_out(UE, PA)."""
    placement.validate(scenario)
    pos = as_positions(ues)
    h_out = _free_space(_distances(pos, placement.x, scenario), scenario)
    h_in = _in_waveguide(placement.x - scenario.feeds, scenario)
    return ChannelSet(h_out * h_in[None, :], placement)


def fixed_array_channel(ues, antenna_x, scenario: Scenario) -> ChannelSet:
    """Free-space coefficients to fixed antennas on the waveguide line (no guided stage)."""
    pos = as_positions(ues)
    return ChannelSet(_free_space(_distances(pos, antenna_x, scenario), scenario))


def draw_ues(rng: np.random.Generator, scenario: Scenario, num_ues: Optional[int] = None) -> np.ndarray:
    """Uniform UE positions over the service rectangle, shape (K, 3)."""
    k = scenario.num_ues if num_ues is None else num_ues
    unit = rng.random((k, 2))
    return np.column_stack([unit[:, 0] * scenario.area_x,
                            unit[:, 1] * 2.0 * scenario.area_half_y,
                            np.zeros(k)])


# ---------------------------------------------------------------------------
# average in-waveguide power gain

def _mean_exp_decay(u):
    """(1 - exp(-u)) / u, equal to 1 at u = 0."""
    u = np.asarray(u, dtype=float)
    safe = np.where(u == 0, 1.0, u)
    return np.where(u == 0, 1.0, -np.expm1(-safe) / safe)


def _gain_args(alpha, length, num_segments):
    if isinstance(alpha, Scenario):
        sc = alpha
        alpha = sc.alpha
        length = sc.area_x if length is None else length
        num_segments = sc.num_segments if num_segments is None else num_segments
    if length is None:
        raise TypeError("length is required unless a Scenario is given")
    return float(alpha), float(length), num_segments


def avg_gain_segmented(alpha, length=None, num_segments=None):
    """Mean power gain over one segment, (1 - exp(-2 alpha L)) / (2 alpha L), L = length / M.

    ``alpha`` may be a Scenario, in which case its attenuation, area_x and
    segment count are used.
    """
    alpha, length, num_segments = _gain_args(alpha, length, num_segments)
    M = np.asarray(num_segments, dtype=float)
    if np.any(M < 1):
        raise ValueError("num_segments must be >= 1")
    out = _mean_exp_decay(2.0 * alpha * length / M)
    return float(out) if out.ndim == 0 else out


def avg_gain_conventional(alpha, length=None):
    """Mean power gain along a single continuous waveguide of the given length."""
    alpha, length, _ = _gain_args(alpha, length, 1)
    return float(_mean_exp_decay(2.0 * alpha * length))


def gain_ratio(alpha, length=None, num_segments=None):
    """Segmented over continuous mean gain, M (1 - exp(-2 alpha D / M)) / (1 - exp(-2 alpha D))."""
    alpha, length, num_segments = _gain_args(alpha, length, num_segments)
    M = np.asarray(num_segments, dtype=float)
    if np.any(M < 1):
        raise ValueError("num_segments must be >= 1")
    u = 2.0 * alpha * length
    if u == 0:
        out = np.ones_like(M)
    else:
        out = M * np.expm1(-u / M) / np.expm1(-u)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# PA placement

def optimal_segment(ue, scenario: Scenario) -> int:
    """Zero-based index of the segment whose span contains the UE's x-coordinate.

    A UE exactly on a boundary belongs to the lower segment. The index
    is computed relative to the first feed, ceil((x - feed_0) / L) - 1,
    clamped into range.
    """
    x = as_positions(ue)[0, 0]
    L = scenario.segment_length
    ratio = (x - scenario.feeds[0]) / L
    m = math.ceil(ratio)
    # guard against round-off pushing an exact multiple one segment up
    if m - ratio > 1.0 - 1e-12:
        m -= 1
    return int(min(max(m, 1), scenario.num_segments)) - 1


def _segment_power_gain(ue_row, pa_x, feed, scenario):
    """|H|^2 up to the common eta^2 factor, for candidate PA positions."""
    dx = ue_row[0] - pa_x
    d2 = dx * dx + (ue_row[1] - scenario.waveguide_y) ** 2 + (ue_row[2] - scenario.height) ** 2
    return 10.0 ** (-scenario.kappa0_db_per_m * np.abs(pa_x - feed) / 10.0) / d2


def closed_form_pa_position(ue, scenario: Scenario, segment: Optional[int] = None) -> float:
    """PA position maximizing a single UE's channel gain within a segment.

    Writing the PA offset behind the UE as t = x_ue - x_pa, the log-gain
    -2 alpha (x_pa - feed) - log(t^2 + d0) is stationary where
    alpha t^2 - t + alpha d0 = 0; the smaller root is the interior
    maximum, giving x_pa = x_ue + (-1 + sqrt(1 - 4 alpha^2 d0)) / (2 alpha).
    The result is compared against the segment ends (and the UE
    projection) so it stays exact when the stationary point is clamped.
    """
    pos = as_positions(ue)[0]
    m = optimal_segment(pos, scenario) if segment is None else segment
    lo = scenario.feeds[m]
    hi = lo + scenario.segment_length
    x = pos[0]
    alpha = scenario.alpha
    d0 = (pos[1] - scenario.waveguide_y) ** 2 + (pos[2] - scenario.height) ** 2

    candidates = [lo, hi, min(max(x, lo), hi)]
    if alpha > 0:
        disc = 1.0 - 4.0 * alpha * alpha * d0
        if disc >= 0:
            # (1 - sqrt(disc)) / (2 alpha) without cancellation
            offset = 2.0 * alpha * d0 / (1.0 + math.sqrt(disc))
            candidates.append(min(max(x - offset, lo), hi))
        else:
            warnings.warn(
                f"no real stationary point (1 - 4 alpha^2 d0 = {disc:.3g}); "
                "gain is monotone toward the feed", ComplexRootWarning, stacklevel=2)
    candidates = np.asarray(candidates)
    gains = _segment_power_gain(pos, candidates, lo, scenario)
    return float(candidates[int(np.argmax(gains))])


def _segment_grid(lo, length, resolution):
    # power-of-two interval counts keep grids nested when the resolution halves
    n = max(1, int(2 ** math.ceil(math.log2(max(length / resolution, 1.0)))))
    return lo + length * np.arange(n + 1) / n


def place_pas(ues, scenario: Scenario, resolution: Optional[float] = None) -> PaPlacement:
    """Place each segment's PA by grid search maximizing sum_k |H[k, m]|^2.

    The grid step is at most ``resolution`` (default one eighth of a
    wavelength). Ties go to the position nearest the feed.
    """
    pos = as_positions(ues)
    res = scenario.wavelength / 8.0 if resolution is None else float(resolution)
    if res <= 0:
        raise ValueError("resolution must be positive")
    L = scenario.segment_length
    xs = np.empty(scenario.num_segments)
    for m, feed in enumerate(scenario.feeds):
        grid = _segment_grid(feed, L, res)
        total = np.zeros_like(grid)
        for row in pos:
            total += _segment_power_gain(row, grid, feed, scenario)
        xs[m] = grid[int(np.argmax(total))]
    return PaPlacement(xs).validate(scenario)


def placement_objective(ues, placement: PaPlacement, scenario: Scenario) -> np.ndarray:
    """Per-segment sum channel power sum_k |H[k, m]|^2."""
    H = composite_channel(ues, placement, scenario).coefficients
    return np.sum(np.abs(H) ** 2, axis=0)
