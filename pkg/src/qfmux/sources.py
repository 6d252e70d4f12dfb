"""Parametric rate-utility models for encoded video units.

Two families are supported, both strictly increasing in the encoding rate
``R`` (kbit/s):

* ``LogPSNR``  : ``U = a1 * ln(a2 * R)``   (PSNR-like, natural log)
* ``AtanSSIM`` : ``U = a1 * atan(a2 * R)`` (SSIM-like, saturating at ``a1*pi/2``)

The module also fits the two parameters from (rate, utility) samples and
generates synthetic parameter trajectories (random walks inside an
admissible box).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DomainError, FitError, UtilityRangeError

__all__ = [
    "ModelFamily",
    "SourceParams",
    "RateUtilitySample",
    "ParamNoiseSpec",
    "REFERENCE_PSNR_PARAMS",
    "REFERENCE_SSIM_PARAMS",
    "REFERENCE_SIGMA1_SQ",
    "REFERENCE_SIGMA2_SQ",
    "eval_utility",
    "inverse_rate",
    "utility_rate_slope",
    "utility_param_gradient",
    "utility_cap",
    "fit_model",
    "correlation_r2",
    "step_params",
    "random_characteristics",
]


class ModelFamily(str, enum.Enum):
    LOG_PSNR = "LogPSNR"
    ATAN_SSIM = "AtanSSIM"


@dataclass(frozen=True)
class SourceParams:
    """Parameter vector ``(a1, a2)`` of one rate-utility characteristic."""

    model: ModelFamily
    a1: float
    a2: float

    def __post_init__(self):
        object.__setattr__(self, "model", ModelFamily(self.model))
        if not (self.a1 > 0 and self.a2 > 0) or not (math.isfinite(self.a1) and math.isfinite(self.a2)):
            raise DomainError(f"parameters must be positive and finite, got a1={self.a1}, a2={self.a2}")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.a1, self.a2])


@dataclass(frozen=True)
class RateUtilitySample:
    rate: float
    utility: float

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError(f"sample rate must be positive, got {self.rate}")


@dataclass(frozen=True)
class ParamNoiseSpec:
    """Gaussian increments of ``(a1, a2)`` and the admissible clamp box.

    ``reversion`` pulls the parameters back toward ``anchor`` by that
    fraction each slot before the increment is added; the default 0 gives a
    pure random walk.
    """

    sigma1_sq: float = 0.0
    sigma2_sq: float = 0.0
    a1_bounds: tuple[float, float] = (0.01, 10.0)
    a2_bounds: tuple[float, float] = (0.001, 1.0)
    reversion: float = 0.0

    def __post_init__(self):
        if self.sigma1_sq < 0 or self.sigma2_sq < 0:
            raise ValueError("noise variances must be non-negative")
        for name, (lo, hi) in (("a1_bounds", self.a1_bounds), ("a2_bounds", self.a2_bounds)):
            if not (0 < lo < hi):
                raise ValueError(f"{name} must satisfy 0 < min < max, got {(lo, hi)}")
        if not 0.0 <= self.reversion <= 1.0:
            raise ValueError("reversion must lie in [0, 1]")


def _p(model, a1, a2):
    return SourceParams(ModelFamily(model), a1, a2)


# First-GoP fits of the six reference programs.
REFERENCE_PSNR_PARAMS = (
    _p("LogPSNR", 1.11, 0.15),
    _p("LogPSNR", 1.90, 0.17),
    _p("LogPSNR", 0.76, 0.17),
    _p("LogPSNR", 0.09, 0.24),
    _p("LogPSNR", 2.50, 0.17),
    _p("LogPSNR", 0.07, 0.20),
)
REFERENCE_SSIM_PARAMS = (
    _p("AtanSSIM", 0.64, 0.037),
    _p("AtanSSIM", 0.61, 0.029),
    _p("AtanSSIM", 0.64, 0.034),
    _p("AtanSSIM", 0.62, 0.017),
    _p("AtanSSIM", 0.64, 0.22),
    _p("AtanSSIM", 0.64, 0.044),
)
REFERENCE_SIGMA1_SQ = 6.25e-2
REFERENCE_SIGMA2_SQ = 2.25e-4


def utility_cap(p: SourceParams) -> float:
    """Supremum of the utility over rates (``inf`` for LogPSNR)."""
    if p.model is ModelFamily.LOG_PSNR:
        return math.inf
    return p.a1 * math.pi / 2


def eval_utility(p: SourceParams, rate: float) -> float:
    """Utility of a video unit encoded at ``rate`` kbit/s."""
    if p.model is ModelFamily.LOG_PSNR:
        if not rate > 0:
            raise DomainError(f"LogPSNR needs rate > 0, got {rate}")
        return p.a1 * math.log(p.a2 * rate)
    if rate < 0:
        raise DomainError(f"AtanSSIM needs rate >= 0, got {rate}")
    return p.a1 * math.atan(p.a2 * rate)


def inverse_rate(p: SourceParams, utility: float) -> float:
    """Rate (kbit/s) at which the characteristic reaches ``utility``."""
    if p.model is ModelFamily.LOG_PSNR:
        x = utility / p.a1
        if x > 709.0:
            raise UtilityRangeError(f"utility {utility} needs a rate beyond float range")
        return math.exp(x) / p.a2
    if not 0.0 <= utility < utility_cap(p):
        raise UtilityRangeError(
            f"utility {utility} outside [0, {utility_cap(p)}) for AtanSSIM a=({p.a1}, {p.a2})"
        )
    return math.tan(utility / p.a1) / p.a2


def utility_rate_slope(p: SourceParams, rate: float) -> float:
    """Derivative of the utility with respect to the rate."""
    if p.model is ModelFamily.LOG_PSNR:
        if not rate > 0:
            raise DomainError(f"slope needs rate > 0, got {rate}")
        return p.a1 / rate
    # atan slope is finite at R = 0
    if rate < 0:
        raise DomainError(f"slope needs rate >= 0, got {rate}")
    x = p.a2 * rate
    return p.a1 * p.a2 / (1.0 + x * x)


def utility_param_gradient(p: SourceParams, rate: float) -> tuple[float, float]:
    """Partial derivatives ``(dU/da1, dU/da2)`` at ``rate``."""
    if p.model is ModelFamily.LOG_PSNR:
        if not rate > 0:
            raise DomainError(f"LogPSNR needs rate > 0, got {rate}")
        return math.log(p.a2 * rate), p.a1 / p.a2
    if rate < 0:
        raise DomainError(f"AtanSSIM needs rate >= 0, got {rate}")
    x = p.a2 * rate
    return math.atan(x), p.a1 * rate / (1.0 + x * x)


def _atan_sse(a2, rates, utils):
    g = np.arctan(a2 * rates)
    gg = float(g @ g)
    if gg == 0.0:
        return math.inf, 0.0
    a1 = float(g @ utils) / gg
    r = utils - a1 * g
    return float(r @ r), a1


def fit_model(
    family: ModelFamily | str,
    samples: Sequence[RateUtilitySample],
    a2_bracket: tuple[float, float] = (1e-6, 10.0),
    grid_points: int = 400,
) -> SourceParams:
    """Least-squares fit of ``(a1, a2)`` to rate-utility samples.

    LogPSNR is linear in ``ln R`` and is solved exactly. For AtanSSIM the
    optimal ``a1`` is closed-form for a given ``a2``, so only ``a2`` is
    searched: a log-spaced grid over ``a2_bracket`` locates the basin and a
    golden-section search refines it until the bracket is narrower than
    ``1e-8 * a2``.
    """
    family = ModelFamily(family)
    if len(samples) < 2:
        raise FitError("at least two samples are required")
    rates = np.array([s.rate for s in samples], dtype=float)
    utils = np.array([s.utility for s in samples], dtype=float)
    if np.ptp(rates) == 0.0:
        raise FitError("all samples share the same rate")

    if family is ModelFamily.LOG_PSNR:
        x = np.log(rates)
        xm, um = x.mean(), utils.mean()
        sxx = float(((x - xm) ** 2).sum())
        a1 = float(((x - xm) * (utils - um)).sum()) / sxx
        c = um - a1 * xm
        if not a1 > 0:
            raise FitError(f"fitted a1={a1} is not positive")
        a2 = math.exp(c / a1)
        if not (a2 > 0 and math.isfinite(a2)):
            raise FitError(f"fitted a2={a2} is not a positive finite number")
        return SourceParams(family, a1, a2)

    lo, hi = a2_bracket
    if not 0 < lo < hi:
        raise FitError(f"bad a2 bracket {a2_bracket}")
    grid = np.geomspace(lo, hi, grid_points)
    sse = np.array([_atan_sse(g, rates, utils)[0] for g in grid])
    k = int(np.argmin(sse))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid_points - 1)]

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = _atan_sse(c, rates, utils)[0]
    fd = _atan_sse(d, rates, utils)[0]
    for _ in range(500):
        if b - a < 1e-8 * 0.5 * (a + b):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _atan_sse(c, rates, utils)[0]
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _atan_sse(d, rates, utils)[0]
    a2 = 0.5 * (a + b)
    _, a1 = _atan_sse(a2, rates, utils)
    if not (a1 > 0 and a2 > 0):
        raise FitError(f"fit produced non-positive parameters a1={a1}, a2={a2}")
    return SourceParams(family, a1, a2)


def correlation_r2(observed: Sequence[float], predicted: Sequence[float]) -> float:
    """Squared correlation coefficient between two equal-length series."""
    x = np.asarray(observed, dtype=float)
    y = np.asarray(predicted, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("observed and predicted must be 1-D with equal length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("r^2 is undefined for a constant series")
    sxy = float(dx @ dy)
    return min(1.0, sxy * sxy / (sxx * syy))


def step_params(
    p: SourceParams,
    noise: ParamNoiseSpec,
    rng: np.random.Generator,
    anchor: SourceParams | None = None,
) -> SourceParams:
    """Advance a parameter vector by one slot of its random walk."""
    z1, z2 = rng.standard_normal(2)
    a1, a2 = p.a1, p.a2
    if noise.reversion and anchor is not None:
        a1 += noise.reversion * (anchor.a1 - a1)
        a2 += noise.reversion * (anchor.a2 - a2)
    a1 += math.sqrt(noise.sigma1_sq) * z1
    a2 += math.sqrt(noise.sigma2_sq) * z2
    a1 = min(max(a1, noise.a1_bounds[0]), noise.a1_bounds[1])
    a2 = min(max(a2, noise.a2_bounds[0]), noise.a2_bounds[1])
    return replace(p, a1=a1, a2=a2)


def random_characteristics(
    reference: Sequence[SourceParams],
    n_streams: int,
    rng: np.random.Generator,
    sigma1_sq: float = REFERENCE_SIGMA1_SQ,
    sigma2_sq: float = REFERENCE_SIGMA2_SQ,
    floor: tuple[float, float] = (1e-3, 1e-4),
) -> list[SourceParams]:
    """Draw ``n_streams`` characteristics around the mean of ``reference``.

    Each component is the reference mean plus a zero-mean Gaussian draw.
    Draws are floored at small positive values so every characteristic
    stays strictly increasing.
    """
    if not reference:
        raise ValueError("reference set is empty")
    model = reference[0].model
    m1 = float(np.mean([p.a1 for p in reference]))
    m2 = float(np.mean([p.a2 for p in reference]))
    out = []
    for _ in range(n_streams):
        e1, e2 = rng.standard_normal(2)
        a1 = max(m1 + math.sqrt(sigma1_sq) * e1, floor[0])
        a2 = max(m2 + math.sqrt(sigma2_sq) * e2, floor[1])
        out.append(SourceParams(model, a1, a2))
    return out
