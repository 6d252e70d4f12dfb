"""Sweep the delay estimator's smoothing factor on a 4-stream QF run and
write the MSE curve to ``demos/out/alpha_sweep.csv``."""

from __future__ import annotations

from pathlib import Path

from qfmux.control import Policy
from qfmux.scenarios import anchor_set, noise_box
from qfmux.sim import Scenario, StreamSpec, alpha_sweep, write_alpha_sweep_csv

streams = tuple(StreamSpec(p, noise_box(0.0)) for p in anchor_set(4, 7))
sc = Scenario(streams, ((1, 4000.0),), 300, policy=Policy.QF, seed=0)
curve = alpha_sweep(sc)

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)
write_alpha_sweep_csv(curve, out / "alpha_sweep.csv")

best = min(curve, key=lambda c: c[1])
for a, e in curve:
    bar = "#" * int(40 * e / max(x for _, x in curve))
    print(f"{a:4.2f} {e:.3e} {bar}{'  <- minimum' if (a, e) == best else ''}")
