"""scikit-learn style wrappers around placement and the two AO solvers.

``PinchingChannelTransformer`` learns PA positions from a set of UE
positions and maps UE positions to channel matrices.
``AOMMSEBeamformer`` and ``AOWMMSEBeamformer`` fit beams to a channel
matrix and expose the solver traces as fitted attributes.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_channel_matrix, check_per_ue
from .geometry import Scenario, as_positions, composite_channel, place_pas
from .mse_solver import SolverConfig, ao_mmse
from .protocols import effective_channel, evaluate
from .wsr_solver import ao_wmmse


def check_positions(X, scenario):
    """UE positions as a (K, 3) float array inside the service area."""
    pos = as_positions(X)
    if not np.all(np.isfinite(pos)):
        raise ValueError("UE positions must be finite")
    if np.any(pos[:, 0] < 0) or np.any(pos[:, 0] > scenario.area_x):
        raise ValueError(f"UE x-coordinates must lie in [0, {scenario.area_x}]")
    if np.any(pos[:, 1] < 0) or np.any(pos[:, 1] > 2 * scenario.area_half_y):
        raise ValueError(f"UE y-coordinates must lie in [0, {2 * scenario.area_half_y}]")
    return pos


class PinchingChannelTransformer(TransformerMixin, BaseEstimator):
    """Place one PA per segment for the given UEs, then emit channel matrices.

    Parameters
    ----------
    scenario : Scenario, optional
        Deployment; the default desk-scale scenario when omitted.
    resolution : float, optional
        Placement grid step in meters (default one eighth of a wavelength).

    Attributes
    ----------
    placement_ : PaPlacement
    pa_x_ : ndarray of shape (num_segments,)
    """

    def __init__(self, scenario=None, resolution=None):
        self.scenario = scenario
        self.resolution = resolution

    def _scenario(self):
        return Scenario() if self.scenario is None else self.scenario

    def fit(self, X, y=None):
        sc = self._scenario()
        pos = check_positions(X, sc)
        self.placement_ = place_pas(pos, sc, self.resolution)
        self.pa_x_ = self.placement_.x.copy()
        self.n_features_in_ = pos.shape[1]
        return self

    def transform(self, X):
        """Complex channel matrix of shape (num_ues, num_segments)."""
        check_is_fitted(self, "placement_")
        sc = self._scenario()
        return composite_channel(check_positions(X, sc), self.placement_, sc).coefficients


class _BeamformerBase(BaseEstimator):

    def _effective(self, H):
        H = check_channel_matrix(H)
        return effective_channel(H, self.protocol, self.noise_watts)

    def _check_shape(self, H):
        H = check_channel_matrix(H)
        if H.shape != self.channel_shape_:
            raise ValueError(f"channel shape {H.shape} differs from the fitted {self.channel_shape_}")
        return H

    def _store(self, eff, report):
        self.effective_channel_ = eff
        self.report_ = report
        self.beams_ = report.final_beams
        self.w_ = report.final_beams.w
        self.v_ = report.final_beams.v
        self.z_ = report.final_beams.z
        self.u_ = report.final_beams.u
        self.mse_trace_ = np.asarray(report.mse_trace)
        self.n_iter_ = report.iterations_used
        self.converged_ = report.converged
        self.sinr_ = report.final_sinr
        self.mse_ = report.final_mse

    def metrics(self, H):
        """Metrics of the fitted beams on channel ``H`` (same shape as at fit)."""
        check_is_fitted(self, "beams_")
        eff = self._effective(self._check_shape(H))
        return evaluate(self.beams_, eff, getattr(self, "weights", 1.0))


class AOMMSEBeamformer(_BeamformerBase):
    """Minimize the computation MSE subject to per-UE rate targets.

    Parameters
    ----------
    protocol : {"SS", "SA", "SM"} or ProtocolKind, default="SM"
    p_max_watts : float or array-like, default=0.01
    noise_watts : float, default=1e-12
    rate_min_bps_hz : float or array-like, default=0.1
    max_iters, tol_rel : stopping rule
    method : {"joint", "alternating", "closed_form"}, default="joint"
    infeasibility_policy : {"clamp", "error"}, default="clamp"
    """

    def __init__(self, protocol="SM", p_max_watts=0.01, noise_watts=1e-12, rate_min_bps_hz=0.1,
                 max_iters=100, tol_rel=1e-6, method="joint", infeasibility_policy="clamp"):
        self.protocol = protocol
        self.p_max_watts = p_max_watts
        self.noise_watts = noise_watts
        self.rate_min_bps_hz = rate_min_bps_hz
        self.max_iters = max_iters
        self.tol_rel = tol_rel
        self.method = method
        self.infeasibility_policy = infeasibility_policy

    def fit(self, H, y=None):
        eff = self._effective(H)
        K = eff.num_ues
        gamma = np.exp2(check_per_ue(self.rate_min_bps_hz, K, name="rate_min_bps_hz")) - 1.0
        cfg = SolverConfig(self.max_iters, self.tol_rel, gamma, self.infeasibility_policy, self.method)
        report = ao_mmse(eff, check_per_ue(self.p_max_watts, K, name="p_max_watts", positive=True), cfg)
        self.channel_shape_ = check_channel_matrix(H).shape
        self._store(eff, report)
        self.rate_feasible_ = report.rate_feasible
        return self

    def score(self, H, y=None):
        """Negative MSE of the fitted beams on ``H`` (higher is better)."""
        return -self.metrics(H).mse


class AOWMMSEBeamformer(_BeamformerBase):
    """Maximize the weighted sum rate subject to an MSE budget.

    Parameters
    ----------
    protocol : {"SS", "SA", "SM"} or ProtocolKind, default="SM"
    p_max_watts : float or array-like, default=0.01
    noise_watts : float, default=1e-12
    weights : float or array-like, default=1.0
    mse_budget : float, default=10.0
    max_iters, tol_rel : stopping rule
    n_init : int, default=None
        Number of starts (equal split, then one per UE); ``None`` uses K + 1.
    method : {"exact", "closed_form"}, default="exact"
    """

    def __init__(self, protocol="SM", p_max_watts=0.01, noise_watts=1e-12, weights=1.0,
                 mse_budget=10.0, max_iters=100, tol_rel=1e-6, n_init=None, method="exact"):
        self.protocol = protocol
        self.p_max_watts = p_max_watts
        self.noise_watts = noise_watts
        self.weights = weights
        self.mse_budget = mse_budget
        self.max_iters = max_iters
        self.tol_rel = tol_rel
        self.n_init = n_init
        self.method = method

    def fit(self, H, y=None):
        eff = self._effective(H)
        K = eff.num_ues
        method = "closed_form" if self.method == "closed_form" else "joint"
        if self.method not in ("exact", "closed_form"):
            raise ValueError(f"unknown method {self.method!r}")
        cfg = SolverConfig(self.max_iters, self.tol_rel, method=method)
        n_init = K + 1 if self.n_init is None else self.n_init
        report = ao_wmmse(eff, check_per_ue(self.p_max_watts, K, name="p_max_watts", positive=True),
                          check_per_ue(self.weights, K, name="weights", positive=True),
                          self.mse_budget, cfg, n_init=n_init)
        self.channel_shape_ = check_channel_matrix(H).shape
        self._store(eff, report)
        self.wsr_trace_ = np.asarray(report.wsr_trace)
        self.surrogate_trace_ = np.asarray(report.surrogate_trace)
        self.beta_ = report.weights
        self.mse_constraint_ok_ = report.mse_constraint_ok
        self.wsr_ = report.final_wsr
        return self

    def score(self, H, y=None):
        """Weighted sum rate of the fitted beams on ``H``."""
        return self.metrics(H).wsr
