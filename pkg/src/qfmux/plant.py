"""Per-stream aggregator buffer, server/aggregator delay lines and the
buffering-delay estimators.

Units: rates in kbit/s, buffer contents in bits, durations in seconds.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NumericError

KBIT = 1000.0

__all__ = [
    "KBIT",
    "PlantConfig",
    "VURecord",
    "StreamState",
    "BufferLog",
    "new_stream_state",
    "buffer_step",
    "update_rate_estimate",
    "smoothed_rate_sequence",
    "estimate_delay",
    "exact_delay",
    "shift_delay_lines",
    "push_enc_rate",
    "push_utility",
]


@dataclass(frozen=True)
class PlantConfig:
    """Aggregator-side constants shared by every stream."""

    T: float = 1.0 / 3.0
    B_max: float = 4e6
    B0: float = 400e3
    tau0: float = 1.5
    alpha: float = 0.2
    initial_buffer_vus: int = 3

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not self.tau0 > 0:
            raise ValueError("tau0 must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 <= self.B0 < self.B_max:
            raise ValueError("B0 must satisfy 0 <= B0 < B_max")
        if self.initial_buffer_vus < 0:
            raise ValueError("initial_buffer_vus must be >= 0")


@dataclass
class VURecord:
    """One video unit waiting in the buffer (possibly partially drained)."""

    size_bits: float
    remaining_bits: float
    enc_rate: float
    utility: float


@dataclass
class StreamState:
    """Dynamic state of one stream.

    ``enc_rate_line`` holds ``[R^e(j-1), R^e(j-2)]`` and ``utility_line``
    holds ``[U(j-1), U(j-2)]``; index 1 of each is the twice-delayed value
    the controllers see at slot ``j``.
    """

    buffer_bits: float
    enc_rate_line: list[float]
    utility_line: list[float]
    rate_estimate: float
    phi: float = 0.0
    pi_acc: float = 0.0
    vu_queue: deque = field(default_factory=deque)
    underflows: int = 0
    overflows: int = 0

    @property
    def r_ed(self) -> float:
        return self.enc_rate_line[0]

    @property
    def r_edd(self) -> float:
        return self.enc_rate_line[1]

    @property
    def u_d(self) -> float:
        return self.utility_line[0]

    @property
    def u_dd(self) -> float:
        return self.utility_line[1]

    def queue_bits(self) -> float:
        return float(sum(v.remaining_bits for v in self.vu_queue))


@dataclass(frozen=True)
class BufferLog:
    arrived_bits: float
    drained_bits: float
    dropped_bits: float
    underflow: bool
    overflow: bool


def new_stream_state(rate: float, utility: float, n_vus: int, T: float) -> StreamState:
    """Bootstrap state: ``n_vus`` whole VUs encoded at ``rate``, delay lines
    filled with the same rate and utility."""
    vu_bits = rate * T * KBIT
    queue = deque(VURecord(vu_bits, vu_bits, rate, utility) for _ in range(n_vus))
    return StreamState(
        buffer_bits=vu_bits * n_vus,
        enc_rate_line=[rate, rate],
        utility_line=[utility, utility],
        rate_estimate=rate,
        vu_queue=queue,
    )


def buffer_step(
    state: StreamState,
    enc_rate_arriving: float,
    drain_rate: float,
    T: float,
    B_max: float = np.inf,
    utility: float = float("nan"),
) -> BufferLog:
    """Deposit one VU and drain the buffer for one slot, in place.

    The arriving VU (``enc_rate_arriving * T`` kbit) lands at slot start;
    the drain takes at most what the buffer holds. Bits beyond ``B_max``
    are dropped from the tail VU.
    """
    if enc_rate_arriving < 0 or drain_rate < 0:
        raise ValueError("rates must be non-negative")
    arrived = enc_rate_arriving * T * KBIT
    requested = drain_rate * T * KBIT
    available = state.buffer_bits + arrived

    if arrived > 0:
        state.vu_queue.append(VURecord(arrived, arrived, enc_rate_arriving, utility))

    underflow = requested > available
    drained = available if underflow else requested
    level = available - drained

    overflow = level > B_max
    dropped = level - B_max if overflow else 0.0
    if overflow:
        level = B_max

    # head-of-line drain with partial-VU tracking
    todo = drained
    q = state.vu_queue
    while todo > 0 and q:
        head = q[0]
        if head.remaining_bits <= todo:
            todo -= head.remaining_bits
            q.popleft()
        else:
            head.remaining_bits -= todo
            todo = 0.0
    todo = dropped
    while todo > 0 and q:
        tail = q[-1]
        if tail.remaining_bits <= todo:
            todo -= tail.remaining_bits
            q.pop()
        else:
            tail.remaining_bits -= todo
            tail.size_bits -= todo
            todo = 0.0

    state.buffer_bits = level
    if underflow:
        state.underflows += 1
    if overflow:
        state.overflows += 1
    return BufferLog(arrived, drained, dropped, underflow, overflow)


def update_rate_estimate(state: StreamState, j: int, alpha: float, current_target: float) -> float:
    """Advance the smoothed encoding-rate estimate to slot ``j + 1``.

    Uses ``R~(j+1) = alpha * R^edd(j) + (1 - alpha) * R~(j)``; while
    ``j + 1 <= 2`` the estimate is bootstrapped with ``current_target``.
    """
    if j + 1 <= 2:
        state.rate_estimate = current_target
    else:
        state.rate_estimate = alpha * state.r_edd + (1.0 - alpha) * state.rate_estimate
    return state.rate_estimate


def smoothed_rate_sequence(targets: Sequence[float], alpha: float) -> np.ndarray:
    """Estimates ``R~(1..n)`` for encoding targets ``R^e(1..n)``.

    ``R~(j) = R^e(j)`` for ``j <= 2`` and
    ``R~(j) = alpha R^e(j-2) + (1 - alpha) R~(j-1)`` afterwards.
    """
    r = np.asarray(targets, dtype=float)
    out = np.empty_like(r)
    for k in range(r.size):
        j = k + 1
        if j <= 2:
            out[k] = r[k]
        else:
            out[k] = alpha * r[k - 2] + (1.0 - alpha) * out[k - 1]
    return out


def estimate_delay(state: StreamState) -> float:
    """Buffering delay estimate ``B / R~`` in seconds."""
    if not state.rate_estimate > 0:
        raise NumericError(f"rate estimate must be positive, got {state.rate_estimate}")
    return state.buffer_bits / (state.rate_estimate * KBIT)


def exact_delay(state: StreamState, T: float) -> float:
    """Buffering delay ``h * T`` with ``h`` counting whole VUs plus the
    remaining fraction of a partially drained one."""
    h = 0.0
    for vu in state.vu_queue:
        if vu.size_bits > 0:
            h += vu.remaining_bits / vu.size_bits
    return h * T


def shift_delay_lines(state: StreamState, new_enc_rate: float, new_utility: float) -> None:
    """Push the newest encoding rate and utility; the oldest entries drop out."""
    state.enc_rate_line = [new_enc_rate, state.enc_rate_line[0]]
    state.utility_line = [new_utility, state.utility_line[0]]


def push_enc_rate(state: StreamState, rate: float) -> None:
    state.enc_rate_line = [rate, state.enc_rate_line[0]]


def push_utility(state: StreamState, utility: float) -> None:
    state.utility_line = [utility, state.utility_line[0]]
