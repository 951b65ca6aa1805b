"""AO-MMSE: alternating minimization of the computation MSE under rate constraints.

Each iteration updates the MMSE receive beams for fixed transmit beams,
then the transmit pairs (w_k, v_k) for fixed receive beams. The transmit
step is solved exactly: the rate constraints at equality fix the sensing
powers as an affine function of the squared computation amplitudes,
p = Q r^2 + q0, and what remains is a small convex problem in r. Both
blocks are exact minimizers, and the transmit step falls back to the
incumbent beams whenever the solver does not improve on them, so the
MSE trace never increases.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy import linalg, optimize

from ._validation import check_per_ue
from .exceptions import InfeasibleRates, SingularCovariance
from .protocols import (
    BeamState,
    EffectiveChannel,
    check_beams,
    comp_gains,
    cross_gains,
    mse_eval,
    sinr_eval,
)

# relative pivot threshold for the dense LU solves
PIVOT_RTOL = 1e-12
# relative slack accepted on the rate constraints
RATE_RTOL = 1e-9


class InfeasibilityPolicy(str, Enum):
    ERROR = "error"
    CLAMP = "clamp"


@dataclass
class SolverConfig:
    """Stopping rule and constraint handling shared by both AO solvers.

    ``rate_targets`` are SINR targets gamma_k = 2**r_min - 1 (scalar or per
    UE, ``None`` for no rate constraints). ``method`` selects the transmit
    step of AO-MMSE: ``"joint"`` optimizes the transmit pairs together with
    the computation receive beam (see ``solve_transmit_block``),
    ``"alternating"`` keeps z fixed during the transmit step, and
    ``"closed_form"`` applies the scaled closed-form directions without
    re-optimizing the amplitudes. AO-WMMSE reads ``"closed_form"`` the same
    way and treats the other two as its exact update.
    """

    max_iters: int = 100
    tol_rel: float = 1e-6
    rate_targets: Optional[object] = None
    infeasibility_policy: InfeasibilityPolicy = InfeasibilityPolicy.CLAMP
    method: str = "joint"

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError("max_iters must be an integer >= 1")
        self.max_iters = int(self.max_iters)
        if not self.tol_rel > 0:
            raise ValueError("tol_rel must be > 0")
        self.infeasibility_policy = InfeasibilityPolicy(self.infeasibility_policy)
        if self.method not in ("joint", "alternating", "closed_form"):
            raise ValueError(f"unknown method {self.method!r}")

    def gammas(self, num_ues):
        if self.rate_targets is None:
            return np.zeros(num_ues)
        return check_per_ue(self.rate_targets, num_ues, name="rate_targets")


@dataclass
class SolverReport:
    iterations_used: int
    mse_trace: list
    sinr_trace: list
    final_beams: BeamState
    converged: bool
    rate_feasible: np.ndarray
    final_mse: float = float("nan")
    final_sinr: np.ndarray = None
    wsr_trace: list = field(default_factory=list)
    surrogate_trace: list = field(default_factory=list)
    weights: Optional[np.ndarray] = None
    mse_constraint_ok: Optional[bool] = None
    mse_constraint_trace: list = field(default_factory=list)

    @property
    def final_wsr(self):
        return self.wsr_trace[-1] if self.wsr_trace else float("nan")


# ---------------------------------------------------------------------------
# receivers

def lu_solve_checked(A, B, what="covariance"):
    """Solve A X = B by LU with partial pivoting, rejecting near-singular A."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu, piv = linalg.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= PIVOT_RTOL * max(pivots.max(), np.finfo(float).tiny):
        raise SingularCovariance(f"{what} matrix is numerically singular")
    return linalg.lu_solve((lu, piv), B, check_finite=False)


def _receivers(beams, eff):
    """MMSE computation beam z, sensing beams u and unit-free directions Omega^-1 h_k."""
    G = eff.gains
    D = G.shape[1]
    eye = eff.noise * np.eye(D)
    a = G.T @ beams.w
    pv = np.abs(beams.v) ** 2
    R = np.outer(a, a.conj()) + (G.T * pv) @ G.conj() + eye
    z = lu_solve_checked(R, a, "computation covariance")
    omega = (G.T * (pv + np.abs(beams.w) ** 2)) @ G.conj() + eye
    dirs = lu_solve_checked(omega, G.T, "sensing covariance").T
    u = dirs * beams.v[:, None]
    return z, u, dirs


def mmse_receivers(beams: BeamState, eff: EffectiveChannel):
    """MMSE receive beams (z, u) for fixed transmit beams.

    z = R^-1 sum_k h_k w_k with R the received covariance, and
    u_k = Omega^-1 h_k v_k with Omega = sum_i h_i h_i^H (|v_i|^2 + |w_i|^2) + sigma^2 I.
    """
    check_beams(_with_dims(beams, eff), eff)
    z, u, _ = _receivers(beams, eff)
    return z, u


def _with_dims(beams, eff):
    # transmit-only states may carry placeholder receivers of the wrong size
    if beams.z.size != eff.dim:
        return BeamState(beams.w, beams.v, np.zeros(eff.dim), np.zeros((beams.w.size, eff.dim)))
    return beams


# ---------------------------------------------------------------------------
# sensing powers from the rate constraints

def _rate_matrices(eff, dirs, gamma):
    """Affine map p = Q r^2 + q0 meeting every active rate constraint with equality.

    Returns (Q, q0, ok); ok is False when no nonnegative solution exists.
    """
    K = eff.num_ues
    E2 = np.abs(cross_gains(dirs, eff.gains)) ** 2
    n = eff.noise * np.sum(np.abs(dirs) ** 2, axis=1)
    Q = np.zeros((K, K))
    q0 = np.zeros(K)
    act = np.flatnonzero(gamma > 0)
    if act.size == 0:
        return Q, q0, True
    diag = np.diag(E2)[act]
    if np.any(diag <= 0):
        return Q, q0, False
    A = -E2[np.ix_(act, act)]
    A[np.diag_indices_from(A)] = diag / gamma[act]
    try:
        Ainv = lu_solve_checked(A, np.eye(act.size), "rate system")
    except SingularCovariance:
        return Q, q0, False
    # a nonnegative inverse is exactly the condition for a nonnegative solution
    if np.any(Ainv < -1e-12 * np.abs(Ainv).max()):
        return Q, q0, False
    Ainv = np.maximum(Ainv, 0.0)
    Q[act] = Ainv @ E2[act]
    q0[act] = Ainv @ n[act]
    return Q, q0, True


def rate_power_system(beams: BeamState, eff: EffectiveChannel, rate_targets, p_max,
                      policy=InfeasibilityPolicy.ERROR):
    """Sensing powers |v_k|^2 meeting the rate targets with equality at the beams' receivers.

    Solves (|u_k^H h_k|^2 / gamma_k) p_k - sum_{i != k} |u_k^H h_i|^2 p_i
    = sum_i |u_k^H h_i|^2 |w_i|^2 + sigma^2 ||u_k||^2 for the UEs with
    gamma_k > 0; the others get p_k = 0. Returns ``(p, feasible)`` where
    ``feasible`` flags UEs whose power lies in [0, P_k].
    """
    check_beams(beams, eff)
    K = eff.num_ues
    gamma = check_per_ue(rate_targets, K, name="rate_targets")
    p_max = check_per_ue(p_max, K, name="p_max", positive=True)
    Q, q0, ok = _rate_matrices(eff, beams.u, gamma)
    if ok:
        p = Q @ np.abs(beams.w) ** 2 + q0
        feasible = p <= p_max * (1 + RATE_RTOL)
    else:
        p = np.where(gamma > 0, p_max, 0.0)
        feasible = gamma <= 0
    if not np.all(feasible):
        if InfeasibilityPolicy(policy) is InfeasibilityPolicy.ERROR:
            bad = np.flatnonzero(~feasible)
            raise InfeasibleRates(f"rate targets of UEs {bad.tolist()} exceed the power budget")
        p = np.clip(p, 0.0, p_max)
    return p, feasible


# ---------------------------------------------------------------------------
# transmit updates

def _phase_of(x):
    out = np.ones_like(x, dtype=complex)
    nz = np.abs(x) > 0
    out[nz] = x[nz] / np.abs(x[nz])
    return out


def _sensing_phase(dirs, eff):
    """Phase making u_k^H h_k v_k real and positive."""
    e = np.einsum("kd,kd->k", np.conj(dirs), eff.gains)
    return np.conj(_phase_of(e))


def _min_norm_amplitudes(a, R):
    """Smallest-norm r in [0, R] with a.r = 1, or r = R when that is unreachable."""
    if a @ R <= 1.0:
        return R.copy()
    # a.clip(tau a, 0, R) is piecewise linear and increasing in tau
    lo, hi = 0.0, np.max(np.where(a > 0, R / np.where(a > 0, a, 1.0), 0.0))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if a @ np.minimum(mid * a, R) < 1.0:
            lo = mid
        else:
            hi = mid
    return np.minimum(hi * a, R)


def transmit_update(beams: BeamState, eff: EffectiveChannel, sensing_powers, p_max,
                    method="exact"):
    """Transmit pairs for fixed receive beams and fixed sensing powers.

    Computation beams are phase aligned with c_k = z^H h_k. With
    ``method="exact"`` the amplitudes are the smallest vector that makes
    sum_k |c_k| r_k = 1 within the residual budgets P_k - p_k (or the full
    residual budgets when 1 is out of reach), which minimizes the MSE for
    the given powers. ``method="closed_form"`` uses the direction
    conj(c_k) / sum_i |c_i|^2 scaled by sqrt((P_k - p_k) / sum_i |w~_i|^2).
    """
    check_beams(beams, eff)
    K = eff.num_ues
    p_max = check_per_ue(p_max, K, name="p_max", positive=True)
    p = check_per_ue(sensing_powers, K, name="sensing_powers")
    resid = np.maximum(p_max - p, 0.0)
    c = comp_gains(beams.z, eff.gains)
    a = np.abs(c)
    if method == "exact":
        r = _min_norm_amplitudes(a, np.sqrt(resid))
        w = r * np.conj(_phase_of(c))
    elif method == "closed_form":
        denom = np.sum(a ** 2)
        if denom == 0:
            w = np.zeros(K, dtype=complex)
        else:
            w_dir = np.conj(c) / denom
            rho = np.sqrt(resid / np.sum(np.abs(w_dir) ** 2))
            w = rho * w_dir
    else:
        raise ValueError(f"unknown method {method!r}")
    dirs = beams.u
    silent = ~np.any(dirs != 0, axis=1)
    if np.any(silent):
        dirs = dirs.copy()
        dirs[silent] = _receivers(beams, eff)[2][silent]
    v = np.sqrt(p) * _sensing_phase(dirs, eff)
    return w, v


def _rates_ok(beams, eff, gamma):
    sinr = sinr_eval(beams, eff)
    return bool(np.all(sinr >= gamma * (1 - RATE_RTOL) - 1e-15))


def solve_transmit_block(beams: BeamState, eff: EffectiveChannel, dirs, gamma, p_max,
                         policy=InfeasibilityPolicy.CLAMP, joint=True):
    """Transmit pairs minimizing the MSE with the sensing directions fixed.

    The rate constraints at equality on the directions ``dirs`` give the
    sensing powers p = Q r^2 + q0 as a function of the computation
    amplitudes r = |w|. What remains depends on ``joint``:

    * ``joint=False``: z fixed. The MSE is the convex quadratic
      (a.r - 1)^2 + lam.r^2 + const under (I + Q) r^2 <= P - q0, solved
      to optimality.
    * ``joint=True``, single receive branch: the scale kappa of z joins the
      block. In y = kappa r, s = kappa^2 the problem stays convex and is
      solved to optimality.
    * ``joint=True``, several branches: z is eliminated through its closed
      form, MSE = 1 / (1 + a^H N^-1 a) with a = sum_k h_k w_k and N the
      sensing-plus-noise covariance, and the complex w is optimized
      locally from the incumbent.

    Optimizing z on its own and w on its own makes the alternation crawl
    along a nearly flat valley, which is why the default is joint.

    Returns ``(w, v, z, feasible)``. The incumbent beams are returned
    unchanged when the solution does not improve on them.
    """
    K = eff.num_ues
    z = beams.z
    probe = BeamState(beams.w, beams.v, z, dirs)
    inc_ok = beams.power_feasible(p_max) and _rates_ok(probe, eff, gamma)
    inc_mse = mse_eval(beams, eff)
    keep = (beams.w.copy(), beams.v.copy(), z.copy())

    Q, q0, ok = _rate_matrices(eff, dirs, gamma)
    slack = p_max - q0
    if not ok or np.any(slack < 0):
        if InfeasibilityPolicy(policy) is InfeasibilityPolicy.ERROR:
            raise InfeasibleRates("rate targets are unreachable within the power budgets")
        p = np.clip(q0 + Q @ np.abs(beams.w) ** 2, 0.0, p_max) if ok else np.where(gamma > 0, p_max, 0.0)
        w, v = transmit_update(BeamState(beams.w, beams.v, z, dirs), eff, p, p_max)
        if mse_eval(BeamState(w, v, z, beams.u), eff) > inc_mse:
            return keep + (False,)
        return w, v, z.copy(), False

    C = (np.eye(K) + Q) * p_max[None, :] / p_max[:, None]
    e = slack / p_max
    if joint and eff.dim > 1:
        w, z_new = _eliminated_program(beams, eff, Q, q0, C, e, p_max)
    else:
        w, z_new = _amplitude_program(beams, eff, Q, q0, C, e, p_max, joint)
    p = np.clip(Q @ np.abs(w) ** 2 + q0, 0.0, None)
    v = np.sqrt(p) * _sensing_phase(dirs, eff)
    if z_new is None:
        z_new, _, _ = _receivers(BeamState(w, v, z, beams.u), eff)
    if inc_ok and mse_eval(BeamState(w, v, z_new, beams.u), eff) > inc_mse:
        return keep + (True,)
    return w, v, z_new, True


def _amplitude_program(beams, eff, Q, q0, C, e, p_max, free_scale):
    K = eff.num_ues
    z = beams.z
    c = comp_gains(z, eff.gains)
    a = np.abs(c)
    sq = np.sqrt(p_max)
    As = a * sq
    lam_s = ((a ** 2) @ Q) * p_max
    n0 = (a ** 2) @ q0 + eff.noise * np.real(np.vdot(z, z))

    def fun(xs):
        x, s = xs[:K], xs[K]
        t = As @ x - 1.0
        f = t * t + lam_s @ (x * x) + n0 * s
        return f, np.append(2.0 * t * As + 2.0 * lam_s * x, n0)

    cons = {"type": "ineq",
            "fun": lambda xs: e * xs[K] - C @ (xs[:K] ** 2),
            "jac": lambda xs: np.column_stack([-2.0 * C * xs[None, :K], e])}

    x0 = _shrink_to_feasible(np.clip(np.abs(beams.w) / sq, 0.0, 1.0), C, e)
    s_bounds = (0.0, None) if free_scale else (1.0, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(fun, np.append(x0, 1.0), jac=True, method="SLSQP",
                                bounds=[(0.0, None)] * K + [s_bounds], constraints=[cons],
                                options={"ftol": 1e-15, "maxiter": 500})
    x = np.clip(res.x[:K], 0.0, None)
    s = max(res.x[K], 0.0) if free_scale else 1.0
    if s > 0:
        kappa = np.sqrt(s)
        x = _shrink_to_feasible(x / kappa, C, e)
    else:
        kappa, x = 0.0, np.zeros(K)
    return sq * x * np.conj(_phase_of(c)), kappa * z


def _eliminated_program(beams, eff, Q, q0, C, e, p_max):
    G = eff.gains
    K, D = G.shape
    sq = np.sqrt(p_max)
    eye = eff.noise * np.eye(D)

    def fun(xy):
        w = (xy[:K] + 1j * xy[K:]) * sq
        p = Q @ (np.abs(w) ** 2) + q0
        a = G.T @ w
        N = (G.T * p) @ G.conj() + eye
        g = linalg.solve(N, a, assume_a="her", check_finite=False)
        q = np.real(np.vdot(a, g))
        gh = G @ np.conj(g)            # g^H h_k
        t = (np.abs(gh) ** 2) @ Q      # sum_k |g^H h_k|^2 Q_ki
        # dq/dRe(w), dq/dIm(w)
        gx = 2.0 * np.real(gh) - 2.0 * np.real(w) * t
        gy = -2.0 * np.imag(gh) - 2.0 * np.imag(w) * t
        f = 1.0 / (1.0 + q)
        return f, -f * f * np.concatenate([gx * sq, gy * sq])

    cons = {"type": "ineq",
            "fun": lambda xy: e - C @ (xy[:K] ** 2 + xy[K:] ** 2),
            "jac": lambda xy: np.hstack([-2.0 * C * xy[None, :K], -2.0 * C * xy[None, K:]])}
    x0 = beams.w / sq
    scale = _shrink_to_feasible(np.abs(x0), C, e)
    with np.errstate(invalid="ignore", divide="ignore"):
        x0 = np.where(np.abs(x0) > 0, x0 * scale / np.abs(x0), 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(fun, np.concatenate([x0.real, x0.imag]), jac=True,
                                method="SLSQP", constraints=[cons],
                                options={"ftol": 1e-15, "maxiter": 1000})
    x = res.x[:K] + 1j * res.x[K:]
    mag = _shrink_to_feasible(np.abs(x), C, e)
    with np.errstate(invalid="ignore", divide="ignore"):
        x = np.where(np.abs(x) > 0, x * mag / np.abs(x), 0.0)
    return x * sq, None


def _shrink_to_feasible(x, C, e):
    load = C @ (x * x)
    over = load > e
    if np.any(over):
        x = x * np.sqrt(np.min(np.where(over, e / load, 1.0)))
    return x


# ---------------------------------------------------------------------------
# driver

def initial_beams(eff: EffectiveChannel, p_max, strategy="equal") -> BeamState:
    """Feasible starting point.

    ``"equal"`` splits each budget evenly between w_k and v_k, both phase
    aligned with the UE's summed channel. ``("single", k)`` gives UE k its
    whole budget as sensing power and silences everyone else.
    """
    K, D = eff.gains.shape
    p_max = check_per_ue(p_max, K, name="p_max", positive=True)
    phase = np.conj(_phase_of(eff.gains.sum(axis=1)))
    if strategy == "equal":
        amp = np.sqrt(p_max / 2.0)
        w = amp * phase
        v = amp * phase
    elif isinstance(strategy, tuple) and strategy[0] == "single":
        k = int(strategy[1])
        w = np.zeros(K, dtype=complex)
        v = np.zeros(K, dtype=complex)
        v[k] = np.sqrt(p_max[k]) * phase[k]
    else:
        raise ValueError(f"unknown initialization {strategy!r}")
    return BeamState(w, v, np.zeros(D, dtype=complex), np.zeros((K, D), dtype=complex))


def ao_mmse(eff: EffectiveChannel, p_max, config: Optional[SolverConfig] = None,
            initial: Optional[BeamState] = None,
            callback: Optional[Callable[[int, BeamState], None]] = None) -> SolverReport:
    """Alternate MMSE receivers and exact transmit updates until the MSE settles.

    Stops when the relative MSE change over one iteration is at most
    ``config.tol_rel`` or after ``config.max_iters`` iterations.
    ``callback(n_done, beams)`` runs after every receiver update, where
    ``n_done`` counts completed transmit updates.
    """
    config = SolverConfig() if config is None else config
    K = eff.num_ues
    p_max = check_per_ue(p_max, K, name="p_max", positive=True)
    gamma = config.gammas(K)
    beams = initial_beams(eff, p_max) if initial is None else _with_dims(initial.copy(), eff)
    check_beams(beams, eff)

    mse_trace, sinr_trace = [], []
    converged = False
    z, u, dirs = _receivers(beams, eff)
    iters = 0
    for iters in range(1, config.max_iters + 1):
        beams = beams.with_receivers(z, u)
        if callback is not None:
            callback(iters - 1, beams)
        ref = mse_trace[-1] if mse_trace else mse_eval(beams, eff)
        if config.method in ("joint", "alternating"):
            w, v, z, _ = solve_transmit_block(beams, eff, dirs, gamma, p_max,
                                              config.infeasibility_policy,
                                              joint=config.method == "joint")
        else:
            p, _ = rate_power_system(beams.with_receivers(z, dirs), eff, gamma, p_max,
                                     config.infeasibility_policy)
            w, v = transmit_update(beams, eff, p, p_max, method="closed_form")
        beams = BeamState(w, v, z, u)
        mse = mse_eval(beams, eff)
        mse_trace.append(mse)
        z, u, dirs = _receivers(beams, eff)
        sinr_trace.append(sinr_eval(beams.with_receivers(z, u), eff))
        if abs(ref - mse) <= config.tol_rel * max(abs(ref), np.finfo(float).tiny):
            converged = True
            break

    final = beams.with_receivers(z, u)
    if callback is not None:
        callback(iters, final)
    final_sinr = sinr_eval(final, eff)
    return SolverReport(
        iterations_used=iters,
        mse_trace=mse_trace,
        sinr_trace=sinr_trace,
        final_beams=final,
        converged=converged,
        rate_feasible=final_sinr >= gamma * (1 - 1e-6),
        final_mse=mse_eval(final, eff),
        final_sinr=final_sinr,
    )
