"""Closed-loop equilibrium: the common utility at which the equal-utility
rates exhaust the channel, plus the accumulator and buffer values that make
it a fixed point of the controlled system."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .control import ControlMode, ControllerGains
from .errors import InfeasibleError, NumericError, UtilityRangeError
from .plant import KBIT, PlantConfig
from .sources import ModelFamily, SourceParams, eval_utility, inverse_rate, utility_cap

__all__ = [
    "EquilibriumPoint",
    "rate_residual",
    "check_feasibility",
    "solve_equilibrium",
]

MAX_DOUBLINGS = 60


@dataclass(frozen=True)
class EquilibriumPoint:
    u_eq: float
    r_eq: np.ndarray
    Rc: float
    b_eq: np.ndarray | None = None
    pi_eq: np.ndarray | None = None
    phi_eq: np.ndarray | None = None

    @property
    def n_streams(self) -> int:
        return self.r_eq.size


def _rate_at(p: SourceParams, u: float) -> float:
    # continuous extension: AtanSSIM rate is 0 below U = 0 and +inf at the cap
    if p.model is ModelFamily.ATAN_SSIM:
        if u <= 0.0:
            return 0.0
        if u >= utility_cap(p):
            return math.inf
    try:
        return inverse_rate(p, u)
    except UtilityRangeError:
        return math.inf


def rate_residual(params: Sequence[SourceParams], u: float, Rc: float) -> float:
    """``sum_i f^{-1}(a_i, u) - Rc``; non-decreasing in ``u``."""
    return math.fsum(_rate_at(p, u) for p in params) - Rc


def _upper_limit(params):
    return min(utility_cap(p) for p in params)


def _bracket(params, Rc):
    n = len(params)
    mean = SourceParams(params[0].model, float(np.mean([p.a1 for p in params])),
                        float(np.mean([p.a2 for p in params])))
    u0 = eval_utility(mean, Rc / n)
    cap = _upper_limit(params)
    if u0 >= cap:
        u0 = 0.5 * cap
    step = max(1.0, abs(u0)) * 1e-2
    lo = hi = u0
    g_lo = g_hi = rate_residual(params, u0, Rc)
    k = 0
    while g_lo > 0:
        k += 1
        if k > MAX_DOUBLINGS:
            raise InfeasibleError("could not bracket the equilibrium utility from below")
        hi, g_hi = lo, g_lo
        lo = u0 - step * 2.0 ** k
        g_lo = rate_residual(params, lo, Rc)
    k = 0
    while g_hi < 0:
        k += 1
        if k > MAX_DOUBLINGS:
            raise InfeasibleError("channel rate exceeds what the characteristics can absorb")
        lo, g_lo = hi, g_hi
        cand = u0 + step * 2.0 ** k
        if cand >= cap:
            # approach the asymptote geometrically instead of jumping past it
            cand = hi + 0.5 * (cap - hi)
            if cand <= hi:
                raise InfeasibleError("utility cap reached before the rate sum met the channel rate")
        hi = cand
        g_hi = rate_residual(params, hi, Rc)
    return lo, hi


def check_feasibility(params: Sequence[SourceParams], Rc: float) -> tuple[bool, str]:
    """Whether ``sum f^{-1}(a_i, U) = Rc`` has a numerically attainable root."""
    if not params:
        return False, "no streams"
    if not Rc > 0:
        return False, f"channel rate must be positive, got {Rc}"
    if all(p.model is ModelFamily.LOG_PSNR for p in params):
        return True, "LogPSNR inverses are unbounded"
    try:
        eq = solve_equilibrium(params, Rc)
    except InfeasibleError as exc:
        return False, str(exc)
    return True, f"equilibrium utility {eq.u_eq:.6g}"


def solve_equilibrium(
    params: Sequence[SourceParams],
    Rc: float,
    gains: ControllerGains | None = None,
    plant: PlantConfig | None = None,
    rtol: float = 1e-9,
) -> EquilibriumPoint:
    """Common utility and per-stream rates at equilibrium.

    Bisection on ``U`` runs until the bracket can no longer shrink, which is
    well past the ``|residual| < rtol * Rc`` acceptance test. With ``gains``
    and ``plant`` the accumulator and buffer equilibria are added.
    """
    params = list(params)
    if not params:
        raise InfeasibleError("no streams")
    if not Rc > 0:
        raise InfeasibleError(f"channel rate must be positive, got {Rc}")
    lo, hi = _bracket(params, Rc)
    g_lo = rate_residual(params, lo, Rc)
    g_hi = rate_residual(params, hi, Rc)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g = rate_residual(params, mid, Rc)
        if g == 0.0:
            lo = hi = mid
            g_lo = g_hi = 0.0
            break
        if g < 0:
            lo, g_lo = mid, g
        else:
            hi, g_hi = mid, g
    u = lo if abs(g_lo) <= abs(g_hi) else hi
    resid = min(abs(g_lo), abs(g_hi))
    if not resid < rtol * Rc and np.nextafter(lo, math.inf) >= hi:
        # adjacent floats straddle the root: only happens against a utility cap
        raise InfeasibleError(
            f"channel rate {Rc:.6g} cannot be met to {rtol:g} relative below the utility cap"
        )
    if not resid < rtol * Rc:
        raise NumericError(f"bisection stalled with residual {resid:.3g} kbit/s", partial=u)
    try:
        r = np.array([inverse_rate(p, u) for p in params])
    except UtilityRangeError as exc:
        raise InfeasibleError(f"no equal-utility point with positive rates: {exc}") from None
    if np.any(r <= 0):
        raise InfeasibleError(f"equal-utility point at U = {u:.6g} leaves a stream with zero rate")

    b_eq = pi_eq = phi_eq = None
    if gains is not None and plant is not None:
        gains.check_qf()
        n = len(params)
        R0 = Rc / n
        if gains.mode is ControlMode.BUFFERING_DELAY:
            b_eq = plant.tau0 * r * KBIT
            pi_eq = (R0 - r) * plant.T / gains.ki_e
        else:
            b_eq = np.full(n, plant.B0)
            pi_eq = (R0 - r) * plant.T * KBIT / gains.ki_e
        phi_eq = (r - R0) / gains.ki_t
    return EquilibriumPoint(u, r, Rc, b_eq, pi_eq, phi_eq)
