"""Rate-allocation policies: quality-fair (QF) coupled PI control and the
two baselines, transmission-rate fair (TRF) and utility max-min fair (UMMF).

Gain units (rates are kbit/s throughout):

* ``kp_t``, ``ki_t``: kbit/s of transmission rate per utility unit.
* ``kp_e``, ``ki_e`` in buffering-delay mode: kbit (``K/T * delta_tau``
  is a rate in kbit/s).
* ``kp_e``, ``ki_e`` in buffer-level mode: dimensionless; ``K/T`` maps a
  buffer discrepancy in kbit to a rate correction in kbit/s, so ``K`` is
  the fraction of the discrepancy corrected per slot.
* UMMF ``kp_t``: kbit/s per kbit of buffer discrepancy.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AllocationError
from .plant import KBIT
from .sources import SourceParams

__all__ = [
    "ControlMode",
    "Policy",
    "ControllerGains",
    "RateCommand",
    "RATE_FLOOR",
    "REFERENCE_DELAY_GAINS",
    "REFERENCE_BUFFER_GAINS",
    "trf_gains",
    "utility_discrepancies",
    "qf_transmission_rates",
    "enforce_sum",
    "update_phi",
    "qf_encoding_rate",
    "update_pi_acc",
    "trf_rates",
    "ummf_encoding_rates",
    "ummf_transmission_rates",
]

RATE_FLOOR = 1.0


class ControlMode(str, enum.Enum):
    BUFFER_LEVEL = "BufferLevel"
    BUFFERING_DELAY = "BufferingDelay"


class Policy(str, enum.Enum):
    QF = "QF"
    TRF = "TRF"
    UMMF = "UMMF"


@dataclass(frozen=True)
class ControllerGains:
    kp_t: float
    ki_t: float
    kp_e: float
    ki_e: float
    mode: ControlMode = ControlMode.BUFFERING_DELAY

    def __post_init__(self):
        object.__setattr__(self, "mode", ControlMode(self.mode))
        for name in ("kp_t", "ki_t", "kp_e", "ki_e"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"gain {name} must be finite")
            object.__setattr__(self, name, v)

    @property
    def k_t(self) -> float:
        return self.kp_t + self.ki_t

    @property
    def k_e(self) -> float:
        return self.kp_e + self.ki_e

    def check_qf(self) -> None:
        """Raise unless both integral gains are non-zero (needed for a
        unique equilibrium)."""
        if self.ki_t == 0 or self.ki_e == 0:
            raise ValueError("QF control needs ki_t != 0 and ki_e != 0")


@dataclass(frozen=True)
class RateCommand:
    transmission_rates: np.ndarray
    encoding_targets: np.ndarray


# Reference gains read with rates in bit/s, hence the 1/1000 factor.
REFERENCE_DELAY_GAINS = ControllerGains(
    kp_t=66.0, ki_t=2.6, kp_e=66.0, ki_e=1.3, mode=ControlMode.BUFFERING_DELAY
)
REFERENCE_BUFFER_GAINS = ControllerGains(
    kp_t=66.0, ki_t=1.3, kp_e=0.666, ki_e=0.033, mode=ControlMode.BUFFER_LEVEL
)


def trf_gains(gains: ControllerGains) -> ControllerGains:
    """TRF keeps the proportional encoding gain and drops everything else."""
    return ControllerGains(0.0, 0.0, gains.kp_e, 0.0, gains.mode)


def utility_discrepancies(udd: Sequence[float]) -> np.ndarray:
    """``mean(udd) - udd_i`` for every stream; the entries sum to zero."""
    u = np.asarray(udd, dtype=float)
    if u.size == 0:
        raise ValueError("need at least one stream")
    delta = math.fsum(u) / u.size - u
    # fold the rounding residue back so the sum is zero to the last ulp
    return delta - math.fsum(delta) / u.size


def enforce_sum(rates: np.ndarray, total: float, floor: float = RATE_FLOOR) -> np.ndarray:
    """Clamp at ``floor`` and rescale the unclamped entries proportionally
    so the rates add up to ``total``."""
    x = np.array(rates, dtype=float)
    n = x.size
    if total < n * floor:
        raise AllocationError(f"total {total} cannot cover {n} floors of {floor}")
    clamped = np.zeros(n, dtype=bool)
    for _ in range(n + 1):
        low = (x < floor) & ~clamped
        clamped |= low
        x[clamped] = floor
        free = ~clamped
        if not free.any():
            raise AllocationError("every stream hit the rate floor")
        budget = total - floor * clamped.sum()
        s = math.fsum(x[free])
        if s <= 0:
            x[free] = budget / free.sum()
        else:
            x[free] *= budget / s
        if not ((x < floor) & ~clamped).any():
            break
    # land exactly on the total; the residue is rounding only
    free = ~clamped
    k = int(np.argmax(np.where(free, x, -np.inf)))
    x[k] += total - math.fsum(x)
    return x


def qf_transmission_rates(
    udd: Sequence[float],
    phi: Sequence[float],
    R0: float,
    gains: ControllerGains,
    total: float | None = None,
    floor: float = RATE_FLOOR,
) -> np.ndarray:
    """Drain rates ``R0 + (Kp+Ki) dU + Ki phi`` forced to sum to ``total``.

    ``total`` defaults to ``N * R0`` (the channel rate).
    """
    delta = utility_discrepancies(udd)
    raw = R0 + gains.k_t * delta + gains.ki_t * np.asarray(phi, dtype=float)
    if total is None:
        total = R0 * raw.size
    return enforce_sum(raw, total, floor)


def update_phi(phi: Sequence[float], delta_u: Sequence[float], j: int) -> np.ndarray:
    """Cumulated utility discrepancy at slot ``j + 1``.

    Held at zero while ``j <= 2``. The result is projected onto the
    zero-sum subspace, which the exact recursion never leaves.
    """
    phi = np.asarray(phi, dtype=float)
    if j <= 2:
        return np.zeros_like(phi)
    out = phi + np.asarray(delta_u, dtype=float)
    return out - math.fsum(out) / out.size


def qf_encoding_rate(
    discrepancy,
    pi_acc,
    R0: float,
    gains: ControllerGains,
    T: float,
    floor: float = RATE_FLOOR,
    ceiling: float = math.inf,
):
    """Encoding-rate target from the buffer (bits) or delay (s) discrepancy.

    Returns ``(raw, applied)``: the PI output and its clamp to
    ``[floor, ceiling]``. Works elementwise on arrays.
    """
    d = np.asarray(discrepancy, dtype=float)
    p = np.asarray(pi_acc, dtype=float)
    if gains.mode is ControlMode.BUFFER_LEVEL:
        d = d / KBIT
        p = p / KBIT
    raw = R0 - gains.k_e / T * d - gains.ki_e / T * p
    applied = np.clip(raw, floor, ceiling)
    if raw.ndim == 0:
        return float(raw), float(applied)
    return raw, applied


def update_pi_acc(pi_acc, discrepancy, j: int):
    """Cumulated buffer/delay discrepancy at slot ``j + 1`` (zero while ``j <= 3``)."""
    p = np.asarray(pi_acc, dtype=float)
    if j <= 3:
        out = np.zeros_like(p)
    else:
        out = p + np.asarray(discrepancy, dtype=float)
    return float(out) if out.ndim == 0 else out


def trf_rates(n: int, Rc: float) -> np.ndarray:
    if n < 1:
        raise ValueError("need at least one stream")
    return np.full(n, Rc / n)


def ummf_encoding_rates(delayed_params: Sequence[SourceParams], Rc: float) -> np.ndarray:
    """Encoding rates equalizing the utilities predicted from the
    previous slot's characteristics, under ``sum R = Rc``."""
    from .equilibrium import solve_equilibrium

    return solve_equilibrium(delayed_params, Rc).r_eq


def ummf_transmission_rates(
    buffer_bits: Sequence[float],
    B0: float,
    kp_t: float,
    R0: float,
    floor: float = RATE_FLOOR,
) -> np.ndarray:
    """Proportional drain control ``R0 + Kp (B - B0)``; the sum is not
    renormalized."""
    if kp_t < 0:
        raise ValueError("kp_t must be non-negative")
    b = np.asarray(buffer_bits, dtype=float)
    return np.maximum(R0 + kp_t * (b - B0) / KBIT, floor)
