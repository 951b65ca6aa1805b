"""AO-WMMSE: weighted-sum-rate maximization through the weighted-MMSE surrogate.

With MMSE sensing receivers the per-UE sensing MSE is a_k = 1 / (1 + SINR_k),
so maximizing sum_k theta_k log(1 + SINR_k) is the same as minimizing
sum_k theta_k (beta_k a_k - log beta_k) over beams, receivers and weights
beta_k. Each block (receivers, weights, transmit pairs) is minimized
exactly, which makes the rate trace monotone. The computation MSE is kept
below ``mse_budget`` inside the transmit block.
"""

from __future__ import annotations

import warnings
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from ._validation import check_per_ue
from .mse_solver import (
    SolverConfig,
    SolverReport,
    _phase_of,
    _receivers,
    _with_dims,
    initial_beams,
    mmse_receivers,
)
from .protocols import (
    BeamState,
    EffectiveChannel,
    check_beams,
    comp_gains,
    cross_gains,
    mse_eval,
    sensing_mse,
    sinr_eval,
)

# MSE budget slack
MSE_RTOL = 1e-9

# same closed form as the MSE solver
wsr_mmse_receivers = mmse_receivers


def update_weights(beams: BeamState, eff: EffectiveChannel) -> np.ndarray:
    """beta_k = 1 / a_k at the current receivers, floored at 1."""
    a = sensing_mse(beams, eff)
    with np.errstate(divide="ignore"):
        beta = np.where(a > 0, 1.0 / a, np.inf)
    return np.maximum(beta, 1.0)


def surrogate(beams: BeamState, eff: EffectiveChannel, beta, weights) -> float:
    """Weighted-MMSE objective sum_k theta_k (beta_k a_k - log2 beta_k)."""
    a = sensing_mse(beams, eff)
    return float(np.sum(weights * (beta * a - np.log2(beta))))


def _weighted_terms(beams, eff, beta, theta):
    E = cross_gains(beams.u, eff.gains)
    tb = theta * beta
    D = tb @ (np.abs(E) ** 2)
    b = tb * np.diag(E)
    return D, b


def _tx_objective(w, v, D, b):
    return float(np.sum(D * (np.abs(w) ** 2 + np.abs(v) ** 2)) - 2.0 * np.sum(np.real(b * v)))


def wsr_transmit_update(beams: BeamState, eff: EffectiveChannel, beta, weights, p_max,
                        mse_budget, method="exact"):
    """Transmit pairs minimizing sum_k theta_k beta_k a_k for fixed receivers.

    ``method="exact"`` solves the block under the power budgets and
    MSE <= ``mse_budget`` (at the current z). When the budget is slack the
    solution is closed form: w = 0 and v_k = theta_k beta_k (u_k^H h_k)^* / (D_k + mu_k),
    with mu_k >= 0 the smallest multiplier meeting the power budget.
    Otherwise a small convex program in the amplitudes is solved.
    ``method="closed_form"`` applies the scaled KKT direction for w_k and
    full-amplitude v_k, then scales each pair jointly into the budget.

    Returns ``(w, v, mse_ok)``.
    """
    check_beams(beams, eff)
    K = eff.num_ues
    theta = check_per_ue(weights, K, name="weights")
    beta = check_per_ue(beta, K, name="beta")
    p_max = check_per_ue(p_max, K, name="p_max", positive=True)
    if method == "closed_form":
        w, v = _closed_form_tx(beams, eff, beta, theta, p_max, mse_budget)
        ok = mse_eval(BeamState(w, v, beams.z, beams.u), eff) <= mse_budget * (1 + MSE_RTOL)
        return w, v, ok
    if method != "exact":
        raise ValueError(f"unknown method {method!r}")

    D, b = _weighted_terms(beams, eff, beta, theta)
    s = np.sqrt(p_max)
    v_phase = np.conj(_phase_of(b))
    absb = np.abs(b)

    # budget slack: w = 0, v at the capped unconstrained optimum
    with np.errstate(divide="ignore", invalid="ignore"):
        amp = np.where(D > 0, absb / np.where(D > 0, D, 1.0), np.where(absb > 0, np.inf, 0.0))
    amp = np.minimum(amp, s)
    w = np.zeros(K, dtype=complex)
    v = amp * v_phase
    cand = BeamState(w, v, beams.z, beams.u)
    if mse_eval(cand, eff) <= mse_budget * (1 + MSE_RTOL):
        return w, v, True

    c = comp_gains(beams.z, eff.gains)
    a = np.abs(c)
    w_phase = np.conj(_phase_of(c))
    noise = eff.noise * np.real(np.vdot(beams.z, beams.z))
    As = a * s
    Cs = (a * s) ** 2
    Ds = D * p_max
    bs = absb * s
    scale = max(np.sum(Ds) + np.sum(bs), np.finfo(float).tiny)

    def fun(xy):
        x, y = xy[:K], xy[K:]
        f = (Ds @ (x * x + y * y) - 2.0 * bs @ y) / scale
        g = np.concatenate([2.0 * Ds * x, 2.0 * Ds * y - 2.0 * bs]) / scale
        return f, g

    def mse_slack(xy):
        x, y = xy[:K], xy[K:]
        t = As @ x - 1.0
        return mse_budget - (t * t + Cs @ (y * y) + noise)

    def mse_slack_jac(xy):
        x, y = xy[:K], xy[K:]
        t = As @ x - 1.0
        return -np.concatenate([2.0 * t * As, 2.0 * Cs * y])

    cons = [
        {"type": "ineq", "fun": mse_slack, "jac": mse_slack_jac},
        {"type": "ineq",
         "fun": lambda xy: 1.0 - xy[:K] ** 2 - xy[K:] ** 2,
         "jac": lambda xy: np.hstack([-2.0 * np.diag(xy[:K]), -2.0 * np.diag(xy[K:])])},
    ]
    x0 = np.concatenate([np.abs(beams.w) / s, np.abs(beams.v) / s])
    x0 = np.clip(x0, 0.0, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(fun, x0, jac=True, method="SLSQP", bounds=[(0.0, 1.0)] * (2 * K),
                                constraints=cons, options={"ftol": 1e-15, "maxiter": 500})
    xy = np.clip(res.x, 0.0, 1.0)
    norm = np.sqrt(xy[:K] ** 2 + xy[K:] ** 2)
    xy = xy / np.concatenate([np.maximum(norm, 1.0)] * 2)
    w = s * xy[:K] * w_phase
    v = s * xy[K:] * v_phase
    cand = BeamState(w, v, beams.z, beams.u)
    ok = mse_eval(cand, eff) <= mse_budget * (1 + MSE_RTOL)

    inc_ok = (beams.power_feasible(p_max)
              and mse_eval(beams, eff) <= mse_budget * (1 + MSE_RTOL))
    if inc_ok and (not ok or _tx_objective(beams.w, beams.v, D, b) < _tx_objective(w, v, D, b)):
        return beams.w.copy(), beams.v.copy(), True
    return w, v, ok


def _closed_form_tx(beams, eff, beta, theta, p_max, mse_budget):
    K = eff.num_ues
    c = comp_gains(beams.z, eff.gains)
    E = cross_gains(beams.u, eff.gains)
    e_diag = np.diag(E)
    tb = theta * beta
    if eff.dim == 1:
        # |z|^2 sum_i theta_i beta_i |g_i|^2 |u_i| in the scalar protocols
        g = eff.gains[:, 0]
        u = beams.u[:, 0]
        z2 = abs(beams.z[0]) ** 2
        denom = z2 * np.sum(tb * np.abs(g) ** 2 * np.abs(u))
        num = tb * np.abs(u) * np.abs(beams.z[0]) * np.abs(g)
    else:
        # (1 + sqrt(zeta)) / ((sum_i |c_i|^2 / sum theta) beta_k |e_kk|^2) / sum_j theta_j beta_j |e_jj|^2
        lead = np.sum(np.abs(c) ** 2) / np.sum(theta) * beta * np.abs(e_diag) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            first = np.where(lead > 0, (1.0 + np.sqrt(mse_budget)) / lead, 0.0)
        denom = np.sum(tb * np.abs(e_diag) ** 2)
        num = first * np.abs(c)
    mag = num / denom if denom > 0 else np.zeros(K)
    w = mag * np.conj(_phase_of(c))
    v = np.sqrt(p_max) * np.conj(_phase_of(e_diag))
    v = np.where(np.abs(e_diag) > 0, v, 0.0)
    power = np.abs(w) ** 2 + np.abs(v) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(power > p_max, np.sqrt(p_max / power), 1.0)
    return w * scale, v * scale


def _run(eff, p_max, theta, mse_budget, config, initial, callback):
    K = eff.num_ues
    beams = initial_beams(eff, p_max) if initial is None else _with_dims(initial.copy(), eff)
    check_beams(beams, eff)

    wsr_trace, sur_trace, mse_trace, sinr_trace, mse_ok_trace = [], [], [], [], []
    converged = False
    z, u, _ = _receivers(beams, eff)
    beta = np.ones(K)
    ref = None
    iters = 0
    for iters in range(1, config.max_iters + 1):
        beams = beams.with_receivers(z, u)
        if callback is not None:
            callback(iters - 1, beams)
        beta = update_weights(beams, eff)
        if ref is None:
            ref = surrogate(beams, eff, beta, theta)
        method = "closed_form" if config.method == "closed_form" else "exact"
        w, v, _ = wsr_transmit_update(beams, eff, beta, theta, p_max, mse_budget, method)
        beams = BeamState(w, v, z, u)
        mse = mse_eval(beams, eff)
        z, u, _ = _receivers(beams, eff)
        rx = beams.with_receivers(z, u)
        sinr = sinr_eval(rx, eff)
        beta_next = update_weights(rx, eff)
        sur = surrogate(rx, eff, beta_next, theta)
        wsr_trace.append(float(np.sum(theta * np.log2(1.0 + sinr))))
        sur_trace.append(sur)
        mse_trace.append(mse)
        sinr_trace.append(sinr)
        mse_ok_trace.append(bool(mse <= mse_budget * (1 + MSE_RTOL)))
        if abs(ref - sur) <= config.tol_rel * max(abs(ref), np.sum(theta)):
            converged = True
            break
        ref = sur

    final = beams.with_receivers(z, u)
    if callback is not None:
        callback(iters, final)
    final_mse = mse_eval(final, eff)
    final_sinr = sinr_eval(final, eff)
    return SolverReport(
        iterations_used=iters,
        mse_trace=mse_trace,
        sinr_trace=sinr_trace,
        final_beams=final,
        converged=converged,
        rate_feasible=final_sinr >= config.gammas(K) * (1 - 1e-6),
        final_mse=final_mse,
        final_sinr=final_sinr,
        wsr_trace=wsr_trace,
        surrogate_trace=sur_trace,
        weights=update_weights(final, eff),
        mse_constraint_ok=bool(final_mse <= mse_budget * (1 + MSE_RTOL)),
        mse_constraint_trace=mse_ok_trace,
    )


def ao_wmmse(eff: EffectiveChannel, p_max, weights=1.0, mse_budget=10.0,
             config: Optional[SolverConfig] = None, initial: Optional[BeamState] = None,
             callback: Optional[Callable[[int, BeamState], None]] = None,
             n_init: int = 1) -> SolverReport:
    """Maximize the weighted sum rate subject to MSE <= ``mse_budget``.

    Alternates receivers, weights and transmit pairs until the relative
    change of the surrogate objective is at most ``config.tol_rel``.
    ``surrogate_trace`` holds sum_k theta_k (beta_k a_k - log2 beta_k)
    after each iteration's weight refresh, which equals
    sum_k theta_k - WSR and so never increases.

    With ``n_init > 1`` and no explicit ``initial``, the run is repeated
    from the equal-split start plus single-UE starts (UE 0, 1, ...) and the
    report with the highest final WSR is returned. The rate objective is
    not concave, and under the single-branch protocols its best point
    often serves one UE only.
    """
    config = SolverConfig() if config is None else config
    K = eff.num_ues
    p_max = check_per_ue(p_max, K, name="p_max", positive=True)
    theta = check_per_ue(weights, K, name="weights", positive=True)
    if not mse_budget > 0:
        raise ValueError("mse_budget must be > 0")
    if initial is not None or n_init <= 1:
        return _run(eff, p_max, theta, mse_budget, config, initial, callback)
    starts = ["equal"] + [("single", k) for k in range(K)]
    best = None
    for strategy in starts[:n_init]:
        rep = _run(eff, p_max, theta, mse_budget, config,
                   initial_beams(eff, p_max, strategy), callback)
        if best is None or rep.final_wsr > best.final_wsr + 1e-12:
            best = rep
    return best
