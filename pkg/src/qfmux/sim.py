"""Closed-loop slot-by-slot simulation of N streams sharing one channel.

Slot ``j`` runs, in order:

1. stream joins/leaves and the channel rate for the slot take effect;
2. source parameters evolve, ``a^d(j) = a(j-1)``;
3. each server encodes VU ``j-1`` at the rate commanded last slot and
   reports its utility ``U(j-1) = f(a^d(j), R^ed(j))``;
4. the aggregator receives VU ``j-2`` (rate ``R^edd(j)``, utility
   ``U^dd(j)``);
5. controllers compute ``R^t(j)`` and ``R^e(j)``;
6. accumulators ``phi``, ``Pi`` advance;
7. buffers fill with VU ``j-2`` and drain at ``R^t(j)``;
8. the smoothed rate estimate advances and the delay lines shift.

Every time-series row holds end-of-slot values.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import control as ctl
from .control import ControlMode, ControllerGains, Policy
from .equilibrium import solve_equilibrium
from .errors import ConfigError, QFError, SimulationError
from .plant import (
    KBIT,
    PlantConfig,
    StreamState,
    VURecord,
    buffer_step,
    estimate_delay,
    exact_delay,
    new_stream_state,
    push_enc_rate,
    push_utility,
    update_rate_estimate,
)
from .sources import ParamNoiseSpec, SourceParams, eval_utility, step_params

__all__ = [
    "COLUMNS",
    "StreamSpec",
    "Scenario",
    "World",
    "TimeSeries",
    "MetricsSummary",
    "RunResult",
    "init_world",
    "step",
    "run",
    "compute_metrics",
    "alpha_sweep",
    "write_alpha_sweep_csv",
]

COLUMNS = (
    "slot",
    "stream_id",
    "enc_target",
    "enc_applied",
    "trans_rate",
    "buffer_bits",
    "tau_exact",
    "tau_est",
    "utility",
    "phi",
    "pi_acc",
    "underflow",
    "overflow",
)

# first local slot index at which neither accumulator is held at zero
_STEADY_SLOT = 4


@dataclass(frozen=True)
class StreamSpec:
    """One stream: initial characteristic, optional random walk, lifetime.

    The stream is active for slots ``join_slot <= j < leave_slot``.
    """

    params: SourceParams
    noise: ParamNoiseSpec | None = None
    join_slot: int = 1
    leave_slot: int | None = None

    def active(self, j: int) -> bool:
        return self.join_slot <= j and (self.leave_slot is None or j < self.leave_slot)


@dataclass(frozen=True)
class Scenario:
    streams: tuple[StreamSpec, ...]
    channel: tuple[tuple[int, float], ...]
    horizon: int
    policy: Policy = Policy.QF
    gains: ControllerGains = ctl.REFERENCE_DELAY_GAINS
    plant: PlantConfig = PlantConfig()
    seed: int = 0
    ummf_kp_t: float = 3.0
    init: str = "bootstrap"

    def __post_init__(self):
        object.__setattr__(self, "streams", tuple(self.streams))
        object.__setattr__(self, "channel", tuple((int(s), float(r)) for s, r in self.channel))
        object.__setattr__(self, "policy", Policy(self.policy))
        if self.horizon < 4:
            raise ConfigError(f"horizon must be at least 4 slots, got {self.horizon}")
        if not self.streams:
            raise ConfigError("scenario has no streams")
        if not self.channel or self.channel[0][0] != 1:
            raise ConfigError("channel schedule must start at slot 1")
        slots = [s for s, _ in self.channel]
        if slots != sorted(set(slots)):
            raise ConfigError("channel schedule slots must be strictly increasing")
        for s, r in self.channel:
            if not (r > 0 and math.isfinite(r)):
                raise ConfigError(f"channel rate must be positive, got {r} at slot {s}")
        for k, sp in enumerate(self.streams):
            if sp.join_slot < 1:
                raise ConfigError(f"stream {k}: join_slot must be >= 1")
            if sp.leave_slot is not None and sp.leave_slot <= sp.join_slot:
                raise ConfigError(f"stream {k}: leave_slot must come after join_slot")
        for j in range(1, self.horizon + 1):
            n = sum(sp.active(j) for sp in self.streams)
            if n == 0:
                raise ConfigError(f"no active stream at slot {j}")
            if self.channel_rate(j) < n * ctl.RATE_FLOOR:
                raise ConfigError(f"channel rate at slot {j} cannot cover {n} rate floors")
        if self.init not in ("bootstrap", "equilibrium"):
            raise ConfigError(f"init must be 'bootstrap' or 'equilibrium', got {self.init!r}")
        if self.init == "equilibrium":
            if any(sp.join_slot != 1 or sp.leave_slot is not None for sp in self.streams):
                raise ConfigError("equilibrium init needs every stream active for the whole run")
            if self.policy is not Policy.QF:
                raise ConfigError("equilibrium init is defined for QF only")

    @property
    def mode(self) -> ControlMode:
        return self.gains.mode

    def channel_rate(self, j: int) -> float:
        rate = self.channel[0][1]
        for s, r in self.channel:
            if s > j:
                break
            rate = r
        return rate


@dataclass
class _Stream:
    sid: int
    spec: StreamSpec
    state: StreamState
    a: SourceParams
    a_d: SourceParams
    rng: np.random.Generator
    offset: int  # local slot index = j + offset


@dataclass
class World:
    scenario: Scenario
    streams: dict[int, _Stream] = field(default_factory=dict)
    slot: int = 1
    rows: list = field(default_factory=list)
    enc_impulses: Mapping[tuple[int, int], float] = field(default_factory=dict)
    utility_impulses: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def active_ids(self) -> list[int]:
        return sorted(self.streams)


def _stream_rng(seed: int, sid: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(sid,)))


def _equilibrium_state(r, u, b, phi, pi, T) -> StreamState:
    # buffer content as whole VUs behind one partially drained head VU
    vu = r * T * KBIT
    whole, frac = divmod(b / vu, 1.0)
    q = []
    if frac > 0:
        q.append(VURecord(vu, frac * vu, r, u))
    q += [VURecord(vu, vu, r, u) for _ in range(int(whole))]
    st = StreamState(
        buffer_bits=b, enc_rate_line=[r, r], utility_line=[u, u], rate_estimate=r, phi=phi, pi_acc=pi
    )
    st.vu_queue.extend(q)
    return st


def init_world(
    scenario: Scenario,
    enc_impulses: Mapping[tuple[int, int], float] | None = None,
    utility_impulses: Mapping[tuple[int, int], float] | None = None,
) -> World:
    """Fresh world before slot 1.

    ``enc_impulses[(j, sid)]`` is added to the applied encoding rate of
    slot ``j``; ``utility_impulses[(k, sid)]`` to the utility of VU ``k``.
    """
    w = World(scenario, enc_impulses=dict(enc_impulses or {}), utility_impulses=dict(utility_impulses or {}))
    if scenario.init == "equilibrium":
        params = [sp.params for sp in scenario.streams]
        eq = solve_equilibrium(params, scenario.channel_rate(1), scenario.gains, scenario.plant)
        if np.any(eq.b_eq > scenario.plant.B_max):
            raise ConfigError(
                f"equilibrium buffer {eq.b_eq.max():.6g} bits exceeds B_max = {scenario.plant.B_max:.6g}"
            )
        for sid, sp in enumerate(scenario.streams):
            st = _equilibrium_state(
                float(eq.r_eq[sid]), eq.u_eq, float(eq.b_eq[sid]), float(eq.phi_eq[sid]),
                float(eq.pi_eq[sid]), scenario.plant.T,
            )
            w.streams[sid] = _Stream(sid, sp, st, sp.params, sp.params, _stream_rng(scenario.seed, sid),
                                     _STEADY_SLOT - 1)
    return w


def _join(w: World, sid: int, j: int, n_active: int) -> None:
    sc = w.scenario
    sp = sc.streams[sid]
    rate = sc.channel_rate(j) / n_active
    u = eval_utility(sp.params, rate)
    st = new_stream_state(rate, u, sc.plant.initial_buffer_vus, sc.plant.T)
    w.streams[sid] = _Stream(sid, sp, st, sp.params, sp.params, _stream_rng(sc.seed, sid), 1 - j)


def step(w: World) -> World:
    """Advance the world by one slot (in place) and append its rows."""
    j = w.slot
    try:
        _step(w, j)
    except SimulationError:
        raise
    except (QFError, ValueError, ZeroDivisionError, FloatingPointError) as exc:
        raise SimulationError(str(exc), slot=j) from exc
    w.slot += 1
    return w


def _step(w: World, j: int) -> None:
    sc = w.scenario
    plant, gains, T = sc.plant, sc.gains, sc.plant.T

    # 1. events at slot start
    for sid in list(w.streams):
        if not sc.streams[sid].active(j):
            del w.streams[sid]
    joining = [sid for sid, sp in enumerate(sc.streams) if sp.active(j) and sid not in w.streams]
    n = len(w.streams) + len(joining)
    for sid in joining:
        _join(w, sid, j, n)
    ids = w.active_ids()
    S = [w.streams[i] for i in ids]
    Rc = sc.channel_rate(j)
    R0 = Rc / n

    # 2. parameter random walk (skipped in a stream's first slot)
    for s in S:
        if j + s.offset > 1:
            s.a_d = s.a
            if s.spec.noise is not None:
                s.a = step_params(s.a, s.spec.noise, s.rng, anchor=s.spec.params)

    # 3. servers encode VU j-1 with the rate commanded last slot
    for s in S:
        u = eval_utility(s.a_d, s.state.r_ed) + w.utility_impulses.get((j - 1, s.sid), 0.0)
        push_utility(s.state, u)

    # 4-5. controllers see the twice-delayed rate and utility
    udd = np.array([s.state.u_dd for s in S])
    redd = np.array([s.state.r_edd for s in S])
    buf = np.array([s.state.buffer_bits for s in S])
    rtil = np.array([s.state.rate_estimate for s in S])
    phi = np.array([s.state.phi for s in S])
    pi = np.array([s.state.pi_acc for s in S])

    if gains.mode is ControlMode.BUFFERING_DELAY:
        disc = buf / (KBIT * rtil) - plant.tau0
    else:
        disc = buf - plant.B0

    if sc.policy is Policy.QF:
        rt = ctl.qf_transmission_rates(udd, phi, R0, gains, total=Rc)
        e_raw, e_app = ctl.qf_encoding_rate(disc, pi, R0, gains, T, ceiling=Rc)
    elif sc.policy is Policy.TRF:
        rt = ctl.trf_rates(n, Rc)
        e_raw, e_app = ctl.qf_encoding_rate(disc, pi, R0, ctl.trf_gains(gains), T, ceiling=Rc)
    else:
        rt = ctl.ummf_transmission_rates(buf, plant.B0, sc.ummf_kp_t, R0)
        e_raw = ctl.ummf_encoding_rates([s.a_d for s in S], Rc)
        e_app = np.clip(e_raw, ctl.RATE_FLOOR, Rc)
    e_raw = np.atleast_1d(np.asarray(e_raw, dtype=float))
    e_app = np.atleast_1d(np.asarray(e_app, dtype=float)).copy()
    for k, s in enumerate(S):
        e_app[k] += w.enc_impulses.get((j, s.sid), 0.0)

    # 6. accumulators
    delta_u = ctl.utility_discrepancies(udd)
    local = np.array([j + s.offset for s in S])
    if sc.policy is Policy.QF:
        # gate per stream: a stream still warming up keeps phi at zero
        new_phi = ctl.update_phi(phi, delta_u, _STEADY_SLOT)
        for k, s in enumerate(S):
            s.state.phi = float(new_phi[k]) if local[k] > 2 else 0.0
            s.state.pi_acc = float(ctl.update_pi_acc(s.state.pi_acc, disc[k], int(local[k])))

    # 7-8. buffers, rate estimates, delay lines
    for k, s in enumerate(S):
        st = s.state
        log = buffer_step(st, st.r_edd, float(rt[k]), T, plant.B_max, utility=st.u_dd)
        update_rate_estimate(st, int(local[k]), plant.alpha, float(e_app[k]))
        push_enc_rate(st, float(e_app[k]))
        w.rows.append((
            j, s.sid, float(e_raw[k]), float(e_app[k]), float(rt[k]), st.buffer_bits,
            exact_delay(st, T), estimate_delay(st), st.utility_line[0], st.phi, st.pi_acc,
            int(log.underflow), int(log.overflow),
        ))


@dataclass(frozen=True)
class TimeSeries:
    """Column-major view of the per-slot rows."""

    columns: Mapping[str, np.ndarray]

    @classmethod
    def from_rows(cls, rows: Sequence[tuple]) -> "TimeSeries":
        if rows:
            cols = list(zip(*rows))
        else:
            cols = [()] * len(COLUMNS)
        out = {}
        for name, col in zip(COLUMNS, cols):
            dtype = int if name in ("slot", "stream_id", "underflow", "overflow") else float
            out[name] = np.asarray(col, dtype=dtype)
        return cls(out)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def __len__(self) -> int:
        return self.columns["slot"].size

    def stream(self, sid: int) -> "TimeSeries":
        m = self.columns["stream_id"] == sid
        return TimeSeries({k: v[m] for k, v in self.columns.items()})

    def pivot(self, name: str) -> np.ndarray:
        """``slots x streams`` array of one column, NaN where inactive."""
        slots = self.columns["slot"]
        sids = self.columns["stream_id"]
        out = np.full((slots.max(), sids.max() + 1), np.nan)
        out[slots - 1, sids] = self.columns[name]
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(COLUMNS)
            cols = [self.columns[c] for c in COLUMNS]
            for row in zip(*cols):
                wr.writerow([repr(float(v)) if isinstance(v, np.floating) else int(v) for v in row])


@dataclass(frozen=True)
class MetricsSummary:
    delta_B: float
    sigma2_B: float
    delta_P: float
    sigma2_P: float
    delta_tau: float
    sigma2_tau: float
    underflows: int
    overflows: int
    n_samples: int


def compute_metrics(ts: TimeSeries, B0: float, tau0: float, skip: int = 0) -> MetricsSummary:
    """Buffer, utility and delay discrepancy statistics over all
    (stream, slot) samples with ``slot > skip``.

    Buffer figures are in kbit. The utility discrepancy of a sample is its
    utility minus the mean over streams active in the same slot;
    ``delta_P`` is the mean absolute discrepancy and ``sigma2_P`` its mean
    square (the signed mean is zero by construction).
    """
    keep = ts["slot"] > skip
    if not keep.any():
        raise ValueError("no samples left after the warm-up cut")
    slots = ts["slot"][keep]
    b = (ts["buffer_bits"][keep] - B0) / KBIT
    tau = ts["tau_exact"][keep] - tau0
    u = ts["utility"][keep]

    # per-slot mean utility over the active streams
    uniq, inv = np.unique(slots, return_inverse=True)
    sums = np.bincount(inv, weights=u)
    counts = np.bincount(inv)
    dev = u - (sums / counts)[inv]

    d_b = float(b.mean())
    d_tau = float(tau.mean())
    return MetricsSummary(
        delta_B=d_b,
        sigma2_B=float(((b - d_b) ** 2).mean()),
        delta_P=float(np.abs(dev).mean()),
        sigma2_P=float((dev ** 2).mean()),
        delta_tau=d_tau,
        sigma2_tau=float(((tau - d_tau) ** 2).mean()),
        underflows=int(ts["underflow"][keep].sum()),
        overflows=int(ts["overflow"][keep].sum()),
        n_samples=int(keep.sum()),
    )


@dataclass(frozen=True)
class RunResult:
    series: TimeSeries
    metrics: MetricsSummary


def run(
    scenario: Scenario,
    enc_impulses: Mapping[tuple[int, int], float] | None = None,
    utility_impulses: Mapping[tuple[int, int], float] | None = None,
    metrics_skip: int = 0,
) -> RunResult:
    w = init_world(scenario, enc_impulses, utility_impulses)
    for _ in range(scenario.horizon):
        step(w)
    ts = TimeSeries.from_rows(w.rows)
    return RunResult(ts, compute_metrics(ts, scenario.plant.B0, scenario.plant.tau0, metrics_skip))


def alpha_sweep(
    scenario: Scenario,
    alphas: Iterable[float] = tuple(np.round(np.arange(0.05, 0.951, 0.05), 2)),
    skip: int = 10,
) -> list[tuple[float, float]]:
    """Mean squared error between estimated and exact buffering delay for
    each smoothing factor, all other settings held fixed."""
    out = []
    for a in alphas:
        sc = replace(scenario, plant=replace(scenario.plant, alpha=float(a)))
        ts = run(sc).series
        m = ts["slot"] > skip
        err = ts["tau_est"][m] - ts["tau_exact"][m]
        out.append((float(a), float(np.mean(err ** 2))))
    return out


def write_alpha_sweep_csv(curve: Sequence[tuple[float, float]], path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(("alpha", "mse"))
        for a, e in curve:
            wr.writerow((repr(a), repr(e)))
