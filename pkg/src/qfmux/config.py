"""YAML run configuration: schema check with line context, conversion to
a :class:`~qfmux.sim.Scenario`, and a normalized echo that re-parses to
the same configuration."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import yaml

from . import control as ctl
from .control import ControllerGains, ControlMode, Policy
from .errors import ConfigError, DomainError
from .plant import PlantConfig
from .sim import Scenario, StreamSpec
from .sources import ParamNoiseSpec, SourceParams

__all__ = ["CONFIG_VERSION", "RunConfig", "TuningSettings", "load_config", "parse_config", "config_to_dict"]

CONFIG_VERSION = 1

_LEAF = None
_NOISE = {"sigma1_sq": _LEAF, "sigma2_sq": _LEAF, "a1_bounds": _LEAF, "a2_bounds": _LEAF, "reversion": _LEAF}
_STREAM = {"model": _LEAF, "a1": _LEAF, "a2": _LEAF, "join_slot": _LEAF, "leave_slot": _LEAF, "noise": _NOISE}
_SCHEMA = {
    "version": _LEAF,
    "seed": _LEAF,
    "policy": _LEAF,
    "horizon": _LEAF,
    "init": _LEAF,
    "channel": ("rate-or-list", [{"slot": _LEAF, "rate": _LEAF}]),
    "gains": {"preset": _LEAF, "kp_t": _LEAF, "ki_t": _LEAF, "kp_e": _LEAF, "ki_e": _LEAF, "mode": _LEAF},
    "plant": {f: _LEAF for f in ("T", "B_max", "B0", "tau0", "alpha", "initial_buffer_vus")},
    "ummf_kp_t": _LEAF,
    "streams": [_STREAM],
    "tuning": {"n_streams": _LEAF, "realizations": _LEAF, "budget": _LEAF},
    "output": {"out_dir": _LEAF},
}
_REQUIRED = ("version", "streams", "channel")

GAIN_PRESETS = {"reference-delay": ctl.REFERENCE_DELAY_GAINS, "reference-buffer": ctl.REFERENCE_BUFFER_GAINS}


@dataclass(frozen=True)
class TuningSettings:
    n_streams: int | None = None
    realizations: int = 10
    budget: int = 200


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    tuning: TuningSettings = TuningSettings()
    out_dir: str = "out"
    gains_preset: str | None = field(default=None, compare=False)


def _where(node) -> str:
    return f"line {node.start_mark.line + 1}"


def _check(node, schema, path: str) -> None:
    if schema is _LEAF:
        if isinstance(node, yaml.MappingNode):
            raise ConfigError(f"{_where(node)}: '{path}' must be a value, not a mapping")
        return
    if isinstance(schema, tuple):
        # a bare scalar is accepted in place of the list
        if isinstance(node, yaml.ScalarNode):
            return
        schema = schema[1]
    if isinstance(schema, list):
        if not isinstance(node, yaml.SequenceNode):
            raise ConfigError(f"{_where(node)}: '{path}' must be a list")
        for k, item in enumerate(node.value):
            _check(item, schema[0], f"{path}[{k}]")
        return
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"{_where(node)}: '{path}' must be a mapping")
    seen = set()
    for knode, vnode in node.value:
        key = knode.value
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"{_where(knode)}: unknown key '{where}'")
        if key in seen:
            raise ConfigError(f"{_where(knode)}: duplicate key '{where}'")
        seen.add(key)
        _check(vnode, schema[key], where)


def load_config(path) -> RunConfig:
    """Read, schema-check and parse a YAML config file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config_text(text)


def parse_config_text(text: str) -> RunConfig:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    if node is None:
        raise ConfigError("config is empty")
    _check(node, _SCHEMA, "")
    return parse_config(data)


def _get(d: dict, key: str, path: str, default: Any = ..., kind=None):
    v = d.get(key)
    if v is None:
        if default is ...:
            raise ConfigError(f"missing required field '{path}{key}'")
        return default
    if kind is not None:
        try:
            if kind is int and (isinstance(v, bool) or float(v) != int(v)):
                raise ValueError
            v = kind(v)
        except (TypeError, ValueError):
            raise ConfigError(f"field '{path}{key}' has invalid value {v!r}") from None
    return v


def _gains(d) -> tuple[ControllerGains, str | None]:
    if d is None:
        return ctl.REFERENCE_DELAY_GAINS, "reference-delay"
    preset = d.get("preset")
    if preset is not None:
        extra = [k for k in d if k != "preset"]
        if extra:
            raise ConfigError(f"gains: 'preset' cannot be combined with {extra}")
        if preset not in GAIN_PRESETS:
            raise ConfigError(f"gains.preset must be one of {sorted(GAIN_PRESETS)}, got {preset!r}")
        return GAIN_PRESETS[preset], preset
    vals = [_get(d, k, "gains.", kind=float) for k in ("kp_t", "ki_t", "kp_e", "ki_e")]
    try:
        mode = ControlMode(_get(d, "mode", "gains."))
    except ValueError:
        raise ConfigError(f"gains.mode must be one of {[m.value for m in ControlMode]}") from None
    try:
        return ControllerGains(*vals, mode=mode), None
    except ValueError as exc:
        raise ConfigError(f"gains: {exc}") from None


def _stream(d: dict, k: int) -> StreamSpec:
    p = f"streams[{k}]."
    try:
        params = SourceParams(_get(d, "model", p), _get(d, "a1", p, kind=float), _get(d, "a2", p, kind=float))
    except (DomainError, ValueError) as exc:
        raise ConfigError(f"{p[:-1]}: {exc}") from None
    noise = None
    if d.get("noise") is not None:
        n = d["noise"]
        q = p + "noise."
        kw = {
            "sigma1_sq": _get(n, "sigma1_sq", q, 0.0, float),
            "sigma2_sq": _get(n, "sigma2_sq", q, 0.0, float),
            "reversion": _get(n, "reversion", q, 0.0, float),
        }
        for b in ("a1_bounds", "a2_bounds"):
            if n.get(b) is not None:
                v = n[b]
                if not (isinstance(v, list) and len(v) == 2):
                    raise ConfigError(f"field '{q}{b}' must be a two-element list")
                kw[b] = (float(v[0]), float(v[1]))
        try:
            noise = ParamNoiseSpec(**kw)
        except ValueError as exc:
            raise ConfigError(f"{q[:-1]}: {exc}") from None
    return StreamSpec(
        params,
        noise,
        _get(d, "join_slot", p, 1, int),
        _get(d, "leave_slot", p, None, int),
    )


def parse_config(data: dict) -> RunConfig:
    """Build a :class:`RunConfig` from an already-loaded mapping."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    for key in _REQUIRED:
        if data.get(key) is None:
            raise ConfigError(f"missing required field '{key}'")
    version = _get(data, "version", "", kind=int)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version} (expected {CONFIG_VERSION})")

    ch = data["channel"]
    if isinstance(ch, (int, float)) and not isinstance(ch, bool):
        channel = ((1, float(ch)),)
    elif isinstance(ch, list) and ch:
        channel = tuple(
            (_get(e, "slot", f"channel[{k}].", kind=int), _get(e, "rate", f"channel[{k}].", kind=float))
            for k, e in enumerate(ch)
        )
    else:
        raise ConfigError("field 'channel' must be a rate or a non-empty list of {slot, rate}")

    streams = data["streams"]
    if not isinstance(streams, list) or not streams:
        raise ConfigError("field 'streams' must be a non-empty list")
    specs = tuple(_stream(s or {}, k) for k, s in enumerate(streams))

    gains, preset = _gains(data.get("gains"))
    pd = data.get("plant") or {}
    try:
        plant = PlantConfig(**{k: (int(v) if k == "initial_buffer_vus" else float(v)) for k, v in pd.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"plant: {exc}") from None

    try:
        policy = Policy(_get(data, "policy", "", "QF"))
    except ValueError:
        raise ConfigError(f"policy must be one of {[p.value for p in Policy]}") from None

    scenario = Scenario(
        streams=specs,
        channel=channel,
        horizon=_get(data, "horizon", "", 300, int),
        policy=policy,
        gains=gains,
        plant=plant,
        seed=_get(data, "seed", "", 0, int),
        ummf_kp_t=_get(data, "ummf_kp_t", "", 3.0, float),
        init=_get(data, "init", "", "bootstrap", str),
    )
    td = data.get("tuning") or {}
    tuning = TuningSettings(
        _get(td, "n_streams", "tuning.", None, int),
        _get(td, "realizations", "tuning.", 10, int),
        _get(td, "budget", "tuning.", 200, int),
    )
    out_dir = _get(data.get("output") or {}, "out_dir", "output.", "out", str)
    return RunConfig(scenario, tuning, out_dir, preset)


def config_to_dict(cfg: RunConfig) -> dict:
    """Normalized document for ``cfg`` with every default spelled out."""
    sc = cfg.scenario
    g = sc.gains
    streams = []
    for sp in sc.streams:
        s = {
            "model": sp.params.model.value,
            "a1": sp.params.a1,
            "a2": sp.params.a2,
            "join_slot": sp.join_slot,
            "leave_slot": sp.leave_slot,
        }
        if sp.noise is not None:
            n = sp.noise
            s["noise"] = {
                "sigma1_sq": n.sigma1_sq,
                "sigma2_sq": n.sigma2_sq,
                "a1_bounds": list(n.a1_bounds),
                "a2_bounds": list(n.a2_bounds),
                "reversion": n.reversion,
            }
        streams.append(s)
    p = sc.plant
    return {
        "version": CONFIG_VERSION,
        "seed": sc.seed,
        "policy": sc.policy.value,
        "horizon": sc.horizon,
        "init": sc.init,
        "channel": [{"slot": s, "rate": r} for s, r in sc.channel],
        "gains": {"kp_t": g.kp_t, "ki_t": g.ki_t, "kp_e": g.kp_e, "ki_e": g.ki_e, "mode": g.mode.value},
        "plant": {
            "T": p.T,
            "B_max": p.B_max,
            "B0": p.B0,
            "tau0": p.tau0,
            "alpha": p.alpha,
            "initial_buffer_vus": p.initial_buffer_vus,
        },
        "ummf_kp_t": sc.ummf_kp_t,
        "streams": streams,
        "tuning": {
            "n_streams": cfg.tuning.n_streams,
            "realizations": cfg.tuning.realizations,
            "budget": cfg.tuning.budget,
        },
        "output": {"out_dir": cfg.out_dir},
    }
