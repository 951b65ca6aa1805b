"""Uplink operating protocols and the MSE / SINR / WSR evaluators.

Every protocol is expressed through one effective channel matrix ``G`` of
shape (K, D). Row k holds UE k's coefficients as seen by the receiver:

* SS (segment selection): D = 1, the selected segment's column.
* SA (segment aggregation): D = 1, the row sums, with noise M * sigma^2.
* SM (segment multiplexing): D = M, the full matrix, noise sigma^2 per branch.

Receive beams are applied as inner products ``z^H y``, so the scalar
protocols are just the D = 1 case and a single-segment system gives
identical numbers under all three protocols.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from ._validation import check_channel_matrix, check_per_ue
from .exceptions import DimensionMismatch

# slack on the per-UE power budget
POWER_TOL = 1e-9


class Protocol(str, Enum):
    SS = "SS"
    SA = "SA"
    SM = "SM"


@dataclass(frozen=True)
class ProtocolKind:
    """A protocol plus, for SS, the zero-based selected segment.

    ``selected_segment=None`` under SS means "pick the segment with the
    largest total channel power" when the effective channel is built.
    """

    kind: Protocol
    selected_segment: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Protocol(self.kind))
        if self.selected_segment is not None:
            if self.kind is not Protocol.SS:
                raise ValueError("selected_segment only applies to SS")
            if int(self.selected_segment) != self.selected_segment or self.selected_segment < 0:
                raise ValueError("selected_segment must be a non-negative integer")
            object.__setattr__(self, "selected_segment", int(self.selected_segment))

    @classmethod
    def selection(cls, segment=None):
        return cls(Protocol.SS, segment)

    @classmethod
    def aggregation(cls):
        return cls(Protocol.SA)

    @classmethod
    def multiplexing(cls):
        return cls(Protocol.SM)

    @classmethod
    def parse(cls, text):
        """Parse ``"SS"``, ``"SS:3"`` (zero-based segment), ``"SA"`` or ``"SM"``."""
        if isinstance(text, ProtocolKind):
            return text
        if isinstance(text, Protocol):
            return cls(text)
        name, _, seg = str(text).strip().upper().partition(":")
        try:
            kind = Protocol(name)
        except ValueError:
            raise ValueError(f"unknown protocol {text!r}; expected SS, SA or SM") from None
        return cls(kind, int(seg) if seg else None)

    def __str__(self):
        if self.selected_segment is None:
            return self.kind.value
        return f"{self.kind.value}:{self.selected_segment}"


@dataclass(frozen=True)
class EffectiveChannel:
    """Protocol-specific channel seen by the receiver.

    ``gains`` has shape (K, D); ``noise`` is the noise power per receive
    branch. ``segment`` records the resolved SS segment.
    """

    gains: np.ndarray
    noise: float
    protocol: ProtocolKind
    segment: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "gains", check_channel_matrix(self.gains, name="gains"))
        if not (np.isfinite(self.noise) and self.noise > 0):
            raise ValueError("noise power must be positive and finite")
        object.__setattr__(self, "noise", float(self.noise))

    @property
    def num_ues(self) -> int:
        return self.gains.shape[0]

    @property
    def dim(self) -> int:
        return self.gains.shape[1]


def _coefficients(channels):
    return channels.coefficients if hasattr(channels, "coefficients") else np.asarray(channels)


def select_segment(H) -> int:
    """Segment with the largest total channel power sum_k |H[k, m]|^2."""
    return int(np.argmax(np.sum(np.abs(H) ** 2, axis=0)))


def effective_channel(channels, protocol, noise) -> EffectiveChannel:
    """Build the effective channel of a protocol.

    ``channels`` is a ChannelSet or a (K, M) array; ``noise`` is sigma^2 in
    watts or a Scenario (its ``noise_watts`` is used).
    """
    protocol = ProtocolKind.parse(protocol)
    sigma2 = float(getattr(noise, "noise_watts", noise))
    H = check_channel_matrix(_coefficients(channels))
    M = H.shape[1]
    if protocol.kind is Protocol.SS:
        seg = select_segment(H) if protocol.selected_segment is None else protocol.selected_segment
        if seg >= M:
            raise DimensionMismatch(f"selected segment {seg} out of range for M = {M}")
        return EffectiveChannel(H[:, [seg]], sigma2, protocol, seg)
    if protocol.kind is Protocol.SA:
        return EffectiveChannel(H.sum(axis=1, keepdims=True), M * sigma2, protocol)
    return EffectiveChannel(H, sigma2, protocol)


@dataclass
class BeamState:
    """Transmit pairs and receive beams.

    ``w`` and ``v`` are the per-UE computation and sensing transmit
    coefficients, ``z`` the computation receive beam (length D) and ``u``
    the per-UE sensing receive beams (shape (K, D)). For SS/SA, D = 1.
    """

    w: np.ndarray
    v: np.ndarray
    z: np.ndarray = None
    u: np.ndarray = None

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=complex).reshape(-1)
        self.v = np.asarray(self.v, dtype=complex).reshape(-1)
        if self.w.shape != self.v.shape:
            raise DimensionMismatch("w and v must have one entry per UE")
        K = self.w.size
        if self.z is None:
            self.z = np.zeros(1, dtype=complex)
        self.z = np.asarray(self.z, dtype=complex).reshape(-1)
        if self.u is None:
            self.u = np.zeros((K, self.z.size), dtype=complex)
        self.u = np.asarray(self.u, dtype=complex)
        if self.u.ndim == 1:
            self.u = self.u[:, None]
        if self.u.shape != (K, self.z.size):
            raise DimensionMismatch(
                f"u must have shape ({K}, {self.z.size}), got {self.u.shape}")

    # readable aliases
    tx_comp = property(lambda self: self.w)
    tx_sense = property(lambda self: self.v)
    rx_comp = property(lambda self: self.z)
    rx_sense = property(lambda self: self.u)

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.w) ** 2 + np.abs(self.v) ** 2

    def power_feasible(self, p_max, tol=POWER_TOL) -> bool:
        return bool(np.all(self.power <= np.asarray(p_max) + tol))

    def with_receivers(self, z, u) -> "BeamState":
        return BeamState(self.w.copy(), self.v.copy(), z, u)

    def copy(self) -> "BeamState":
        return BeamState(self.w.copy(), self.v.copy(), self.z.copy(), self.u.copy())


@dataclass(frozen=True)
class Metrics:
    mse: float
    sinr: np.ndarray
    rate: np.ndarray = field(init=False)
    wsr: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rate", np.log2(1.0 + self.sinr))


def check_beams(beams: BeamState, eff: EffectiveChannel):
    K, D = eff.gains.shape
    if beams.w.size != K:
        raise DimensionMismatch(f"beams have {beams.w.size} UEs, channel has {K}")
    if beams.z.size != D or beams.u.shape != (K, D):
        raise DimensionMismatch(
            f"receive beams must have dimension {D} under {eff.protocol}, "
            f"got z of size {beams.z.size} and u of shape {beams.u.shape}")


def comp_gains(z, G):
    """c_k = z^H h_k for every UE."""
    return G @ np.conj(z)


def cross_gains(u, G):
    """E[j, k] = u_j^H h_k, UE k's channel seen through UE j's sensing beam."""
    return np.conj(u) @ G.T


def mse_eval(beams: BeamState, eff: EffectiveChannel) -> float:
    """Computation MSE |sum_k c_k w_k - 1|^2 + sum_k |c_k v_k|^2 + sigma^2 ||z||^2."""
    check_beams(beams, eff)
    c = comp_gains(beams.z, eff.gains)
    bias = np.sum(c * beams.w) - 1.0
    leak = np.sum(np.abs(c * beams.v) ** 2)
    noise = eff.noise * np.real(np.vdot(beams.z, beams.z))
    return float(abs(bias) ** 2 + leak + noise)


def _sensing_terms(beams, eff):
    E = cross_gains(beams.u, eff.gains)
    E2 = np.abs(E) ** 2
    sig = np.diag(E2) * np.abs(beams.v) ** 2
    interf = E2 @ (np.abs(beams.v) ** 2 + np.abs(beams.w) ** 2) - sig
    noise = eff.noise * np.sum(np.abs(beams.u) ** 2, axis=1)
    return E, sig, interf + noise


def sinr_eval(beams: BeamState, eff: EffectiveChannel) -> np.ndarray:
    """Per-UE sensing SINR at the receive beams ``beams.u``; 0 where u_k = 0."""
    check_beams(beams, eff)
    _, sig, denom = _sensing_terms(beams, eff)
    out = np.zeros_like(sig)
    ok = denom > 0
    out[ok] = sig[ok] / denom[ok]
    return out


def sensing_mse(beams: BeamState, eff: EffectiveChannel) -> np.ndarray:
    """Per-UE sensing MSE a_k = E|u_k^H y - s'_k|^2."""
    check_beams(beams, eff)
    E, sig, denom = _sensing_terms(beams, eff)
    # |u^H h v - 1|^2 = sig - 2 Re(u^H h v) + 1
    cross = np.real(np.diag(E) * beams.v)
    return sig - 2.0 * cross + 1.0 + denom


def wsr_eval(beams: BeamState, eff: EffectiveChannel, weights=1.0) -> float:
    """Weighted sum rate sum_k theta_k log2(1 + SINR_k)."""
    theta = check_per_ue(weights, eff.num_ues, name="weights")
    return float(np.sum(theta * np.log2(1.0 + sinr_eval(beams, eff))))


def evaluate(beams: BeamState, eff: EffectiveChannel, weights=1.0) -> Metrics:
    sinr = sinr_eval(beams, eff)
    theta = check_per_ue(weights, eff.num_ues, name="weights")
    return Metrics(mse_eval(beams, eff), sinr, float(np.sum(theta * np.log2(1.0 + sinr))))
