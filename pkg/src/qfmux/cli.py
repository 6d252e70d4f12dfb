"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 infeasible
problem or solver failure, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import yaml

from .config import RunConfig, config_to_dict, load_config
from .control import Policy
from .equilibrium import solve_equilibrium
from .errors import (
    ConfigError,
    DomainError,
    FitError,
    ModelAssemblyError,
    NumericError,
    QFError,
    SimulationError,
    TuningError,
)
from .eigen import spectrum_residuals
from .linearization import classify_stability, decay_oracle, eigenvalues, linear_model, tune_gains
from .sim import run
from .sources import ModelFamily, RateUtilitySample, correlation_r2, eval_utility, fit_model

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_NUMERIC = 0, 2, 3, 4


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, SimulationError) and exc.__cause__ is not None:
        return _exit_code(exc.__cause__)
    if isinstance(exc, (ConfigError, DomainError, FitError)):
        return EXIT_CONFIG
    if isinstance(exc, (NumericError, TuningError, ModelAssemblyError)):
        return EXIT_NUMERIC
    return EXIT_SOLVER


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    sc = cfg.scenario
    if getattr(args, "seed", None) is not None:
        sc = replace(sc, seed=args.seed)
    if getattr(args, "policy", None) is not None:
        sc = replace(sc, policy=Policy(args.policy))
    out_dir = args.out_dir if getattr(args, "out_dir", None) else cfg.out_dir
    tuning = cfg.tuning
    if getattr(args, "budget", None) is not None:
        tuning = replace(tuning, budget=args.budget)
    if getattr(args, "realizations", None) is not None:
        tuning = replace(tuning, realizations=args.realizations)
    return replace(cfg, scenario=sc, out_dir=out_dir, tuning=tuning)


def _plain(x):
    # numpy scalars are not representable by the safe dumper
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def _dump(doc, fh=None) -> None:
    text = yaml.safe_dump(_plain(doc), sort_keys=False)
    (fh or sys.stdout).write(text)


def _floats(x) -> list[float]:
    return [float(v) for v in np.asarray(x).ravel()]


def cmd_simulate(cfg: RunConfig, args) -> int:
    result = run(cfg.scenario)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.series.write_csv(out / "timeseries.csv")
    doc = {
        "seed": cfg.scenario.seed,
        "metrics": asdict(result.metrics),
        "config": config_to_dict(cfg),
    }
    with open(out / "summary.yaml", "w") as fh:
        _dump(doc, fh)
    m = result.metrics
    print(
        f"{len(result.series)} rows written to {out}; "
        f"delta_P={m.delta_P:.4g} sigma2_P={m.sigma2_P:.4g} delta_tau={m.delta_tau:.4g}"
    )
    return EXIT_OK


def cmd_equilibrium(cfg: RunConfig, args) -> int:
    sc = cfg.scenario
    params = [s.params for s in sc.streams]
    eq = solve_equilibrium(params, sc.channel_rate(1), sc.gains, sc.plant)
    _dump({
        "channel_rate": eq.Rc,
        "utility": float(eq.u_eq),
        "rates": _floats(eq.r_eq),
        "buffer_bits": _floats(eq.b_eq),
        "pi_acc": _floats(eq.pi_eq),
        "phi": _floats(eq.phi_eq),
    })
    return EXIT_OK


def cmd_stability(cfg: RunConfig, args) -> int:
    sc = cfg.scenario
    params = [s.params for s in sc.streams]
    model, eq = linear_model(params, sc.channel_rate(1), sc.gains, sc.plant)
    ev = eigenvalues(model.A)
    rep = classify_stability(model, ev)
    tr_err, det_err = spectrum_residuals(model.A, ev)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "eigenvalues.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(("re", "im", "modulus", "structural"))
        for z, s in zip(rep.eigenvalues, rep.structural):
            wr.writerow((repr(float(z.real)), repr(float(z.imag)), repr(float(abs(z))), int(s)))
    _dump({
        "stable": bool(rep.stable),
        "margin": rep.margin,
        "spectral_radius_excl": rep.spectral_radius_excl,
        "structural_unit_count": rep.structural_unit_count,
        "state_dim": model.state_dim,
        "decay_oracle": decay_oracle(model, rng=np.random.default_rng(sc.seed)),
        "trace_residual": tr_err,
        "det_residual": det_err,
    })
    return EXIT_OK


def cmd_tune_gains(cfg: RunConfig, args) -> int:
    sc = cfg.scenario
    t = cfg.tuning
    reference = [s.params for s in sc.streams]
    n = t.n_streams or len(reference)
    rep = tune_gains(
        sc.gains.mode, n, t.realizations, t.budget, np.random.default_rng(sc.seed),
        Rc=sc.channel_rate(1), reference=reference, plant=sc.plant,
    )
    g = rep.gains
    doc = {
        "gains": {"kp_t": g.kp_t, "ki_t": g.ki_t, "kp_e": g.kp_e, "ki_e": g.ki_e, "mode": g.mode.value},
        "margins": _floats(rep.margins),
        "candidates_evaluated": rep.evaluated,
        "stable_candidates": rep.n_stable_candidates,
        "seed": sc.seed,
        "realizations": [
            [{"model": p.model.value, "a1": p.a1, "a2": p.a2} for p in s] for s in rep.realizations
        ],
    }
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "gains.yaml", "w") as fh:
        _dump(doc, fh)
    _dump({k: doc[k] for k in ("gains", "margins", "candidates_evaluated", "stable_candidates")})
    return EXIT_OK


def _read_samples(path) -> list[RateUtilitySample]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read samples: {exc}") from exc
    out = []
    for k, r in enumerate(rows, start=2):
        try:
            out.append(RateUtilitySample(float(r["rate"]), float(r["utility"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}:{k}: expected numeric 'rate' and 'utility' columns ({exc})") from None
    return out


def cmd_fit_model(args) -> int:
    samples = _read_samples(args.samples)
    p = fit_model(args.family, samples)
    pred = [eval_utility(p, s.rate) for s in samples]
    r2 = correlation_r2([s.utility for s in samples], pred)
    _dump({"model": p.model.value, "a1": p.a1, "a2": p.a2, "r2": r2, "n_samples": len(samples)})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qfmux", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out-dir", help="override the configured output directory")
        return p

    p = with_config("simulate", "run the closed-loop simulation")
    p.add_argument("--policy", choices=[x.value for x in Policy])
    with_config("equilibrium", "solve the equilibrium point")
    with_config("stability", "linearize and classify stability")
    p = with_config("tune-gains", "random search for robust gains")
    p.add_argument("--budget", type=int)
    p.add_argument("--realizations", type=int)

    p = sub.add_parser("fit-model", help="fit rate-utility parameters to samples")
    p.add_argument("samples", help="CSV with 'rate' and 'utility' columns")
    p.add_argument("--family", choices=[m.value for m in ModelFamily], default=ModelFamily.LOG_PSNR.value)
    return ap


_COMMANDS = {
    "simulate": cmd_simulate,
    "equilibrium": cmd_equilibrium,
    "stability": cmd_stability,
    "tune-gains": cmd_tune_gains,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fit-model":
            return cmd_fit_model(args)
        cfg = _apply_overrides(load_config(args.config), args)
        return _COMMANDS[args.command](cfg, args)
    except QFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
