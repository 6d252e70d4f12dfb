"""Linearized closed-loop model around an equilibrium, stability verdicts and
random gain search.

State layout (each block stacked over streams ``i = 1..N``)::

    a (N*n_a), a^d (N*n_a), phi, Pi, R~ (delay mode only), R^ed, R^edd, U^dd, B

Units follow the simulator: rates in kbit/s, buffers in bits, ``Pi`` in
seconds (delay mode) or bits (buffer mode).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .control import ControlMode, ControllerGains
from .eigen import eigenvalues as _eigvals
from .eigen import spectrum_residuals
from .equilibrium import EquilibriumPoint, solve_equilibrium
from .errors import ModelAssemblyError, NumericError, TuningError
from .plant import KBIT, PlantConfig
from .sources import (
    REFERENCE_PSNR_PARAMS,
    REFERENCE_SIGMA1_SQ,
    REFERENCE_SIGMA2_SQ,
    SourceParams,
    random_characteristics,
    utility_param_gradient,
    utility_rate_slope,
)

__all__ = [
    "N_A",
    "LinearModel",
    "StabilityReport",
    "TuningReport",
    "DEFAULT_GAIN_RANGES",
    "build_xi",
    "build_gamma",
    "assemble_A",
    "linear_model",
    "eigenvalues",
    "classify_stability",
    "decay_oracle",
    "tune_gains",
]

N_A = 2
STRUCTURAL_GATE = 1e-6
STABLE_TOL = 1e-9

# log-uniform search box per gain, native units (see control module docstring)
DEFAULT_GAIN_RANGES: dict[ControlMode, dict[str, tuple[float, float]]] = {
    ControlMode.BUFFERING_DELAY: {
        "kp_t": (1e-1, 1e3),
        "ki_t": (1e-3, 1e2),
        "kp_e": (1e-1, 1e3),
        "ki_e": (1e-3, 1e2),
    },
    ControlMode.BUFFER_LEVEL: {
        "kp_t": (1e-1, 1e3),
        "ki_t": (1e-3, 1e2),
        "kp_e": (1e-4, 1e0),
        "ki_e": (1e-6, 1e-1),
    },
}


@dataclass(frozen=True)
class LinearModel:
    mode: ControlMode
    n_streams: int
    n_a: int
    A: np.ndarray
    index: Mapping[str, slice]

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def structural_count(self) -> int:
        return self.n_streams * self.n_a

    @property
    def controlled(self) -> slice:
        """States driven by the loop; the parameter blocks come first and
        are not influenced by anything else."""
        return slice(2 * self.n_streams * self.n_a, self.state_dim)


@dataclass(frozen=True)
class StabilityReport:
    eigenvalues: np.ndarray
    structural: np.ndarray  # boolean mask over ``eigenvalues``
    structural_unit_count: int
    spectral_radius_excl: float
    margin: float
    stable: bool


@dataclass(frozen=True)
class TuningReport:
    gains: ControllerGains
    margins: np.ndarray
    evaluated: int
    n_stable_candidates: int
    realizations: list = field(repr=False, default_factory=list)


def build_xi(params: Sequence[SourceParams], r_eq) -> np.ndarray:
    """Block-diagonal utility sensitivities to the parameter vectors."""
    r = np.asarray(r_eq, dtype=float)
    n = len(params)
    if r.shape != (n,):
        raise ModelAssemblyError(f"{n} parameter sets but {r.size} rates")
    xi = np.zeros((n, n * N_A))
    for i, (p, ri) in enumerate(zip(params, r)):
        xi[i, N_A * i:N_A * (i + 1)] = utility_param_gradient(p, float(ri))
    return xi


def build_gamma(params: Sequence[SourceParams], r_eq) -> np.ndarray:
    """Diagonal utility sensitivities to the encoding rate."""
    r = np.asarray(r_eq, dtype=float)
    if r.shape != (len(params),):
        raise ModelAssemblyError(f"{len(params)} parameter sets but {r.size} rates")
    return np.diag([utility_rate_slope(p, float(ri)) for p, ri in zip(params, r)])


def _layout(n: int, mode: ControlMode) -> dict[str, slice]:
    names = ["a", "ad", "phi", "pi"]
    if mode is ControlMode.BUFFERING_DELAY:
        names.append("rtil")
    names += ["red", "redd", "udd", "b"]
    out, pos = {}, 0
    for name in names:
        width = n * N_A if name in ("a", "ad") else n
        out[name] = slice(pos, pos + width)
        pos += width
    return out


def assemble_A(
    gains: ControllerGains,
    equilibrium: EquilibriumPoint,
    params: Sequence[SourceParams],
    plant: PlantConfig = PlantConfig(),
) -> LinearModel:
    """Closed-loop state matrix linearized at ``equilibrium``.

    The ``phi`` block is ``L = I - 11^T/N`` rather than ``I``: the simulator
    keeps ``phi`` on the zero-sum subspace (which the unprojected recursion
    never leaves from a zero start), and this removes a spurious unit root
    along ``1``.
    """
    mode = ControlMode(gains.mode)
    n = len(params)
    r = np.asarray(equilibrium.r_eq, dtype=float)
    if r.shape != (n,):
        raise ModelAssemblyError(f"equilibrium has {r.size} streams, params have {n}")
    if np.any(r <= 0):
        raise ModelAssemblyError("equilibrium rates must be positive")
    T, alpha, tau0 = plant.T, plant.alpha, plant.tau0

    idx = _layout(n, mode)
    dim = next(reversed(idx.values())).stop
    A = np.zeros((dim, dim))
    I = np.eye(n)
    L = I - np.ones((n, n)) / n

    def put(row, col, block):
        A[idx[row], idx[col]] += block

    put("a", "a", np.eye(n * N_A))
    put("ad", "a", np.eye(n * N_A))
    put("phi", "phi", L)
    put("phi", "udd", -L)

    if mode is ControlMode.BUFFERING_DELAY:
        V = np.diag(1.0 / (KBIT * r))  # d(tau)/dB
        W = np.diag(tau0 / r)  # -d(tau)/dR~
        put("pi", "pi", I)
        put("pi", "rtil", -W)
        put("pi", "b", V)
        put("rtil", "rtil", (1.0 - alpha) * I)
        put("rtil", "redd", alpha * I)
        put("red", "pi", -gains.ki_e / T * I)
        put("red", "rtil", gains.k_e / T * W)
        put("red", "b", -gains.k_e / T * V)
    else:
        put("pi", "pi", I)
        put("pi", "b", I)
        put("red", "pi", -gains.ki_e / (T * KBIT) * I)
        put("red", "b", -gains.k_e / (T * KBIT) * I)

    put("redd", "red", I)
    put("udd", "ad", build_xi(params, r))
    put("udd", "red", build_gamma(params, r))
    put("b", "phi", -gains.ki_t * KBIT * T * I)
    put("b", "redd", KBIT * T * I)
    put("b", "udd", gains.k_t * KBIT * T * L)
    put("b", "b", I)
    return LinearModel(mode, n, N_A, A, idx)


def linear_model(
    params: Sequence[SourceParams],
    Rc: float,
    gains: ControllerGains,
    plant: PlantConfig = PlantConfig(),
) -> tuple[LinearModel, EquilibriumPoint]:
    """Solve the equilibrium and linearize around it.

    Without integral action the integrator states have no unique resting
    value. The Jacobian only depends on the rates and utilities, so the
    returned point then carries the rate equilibrium alone.
    """
    if gains.ki_t == 0 or gains.ki_e == 0:
        eq = solve_equilibrium(params, Rc)
    else:
        eq = solve_equilibrium(params, Rc, gains, plant)
    return assemble_A(gains, eq, params, plant), eq


def eigenvalues(A, check: bool = True, tol: float = 1e-8) -> np.ndarray:
    """Eigenvalues from the in-repo QR solver, guarded by the trace and
    determinant identities."""
    ev = _eigvals(A)
    if check:
        tr_err, det_err = spectrum_residuals(A, ev)
        if tr_err > tol or det_err > tol:
            raise NumericError(
                f"eigenvalues fail trace/determinant check ({tr_err:.2e}, {det_err:.2e})",
                partial=ev,
            )
    return ev


def _report(ev: np.ndarray, n_struct: int) -> StabilityReport:
    ev = np.asarray(ev, dtype=complex)
    dist = np.abs(ev - 1.0)
    order = np.argsort(dist, kind="stable")
    chosen = order[:n_struct]
    if n_struct and dist[chosen].max() > STRUCTURAL_GATE:
        raise ModelAssemblyError(
            f"expected {n_struct} structural roots at z = 1, "
            f"only {int((dist <= STRUCTURAL_GATE).sum())} found"
        )
    mask = np.zeros(ev.size, dtype=bool)
    mask[chosen] = True
    rest = np.abs(ev[~mask])
    rho = float(rest.max()) if rest.size else 0.0
    return StabilityReport(ev, mask, n_struct, rho, 1.0 - rho, rho < 1.0 - STABLE_TOL)


def classify_stability(model: LinearModel, ev=None) -> StabilityReport:
    """Drop the ``N * n_a`` roots nearest ``z = 1`` and test the rest."""
    if ev is None:
        ev = eigenvalues(model.A)
    ev = np.asarray(ev, dtype=complex)
    if ev.size != model.state_dim:
        raise ModelAssemblyError(f"{ev.size} eigenvalues for a {model.state_dim}-state model")
    return _report(ev, model.structural_count)


def _controlled_margin(model: LinearModel) -> float:
    # the parameter blocks are block-triangular, so the non-structural
    # spectrum is the spectrum of the controlled block
    c = model.controlled
    ev = _eigvals(model.A[c, c])
    return 1.0 - float(np.abs(ev).max())


def decay_oracle(
    model,
    trials: int = 8,
    horizon: int = 2**20,
    rng: np.random.Generator | None = None,
    fit_points: int = 4,
    slope_tol: float = 1e-12,
) -> bool:
    """Independent contraction check by direct propagation of ``x(j+1) = A x(j)``.

    Random unit perturbations are drawn with zero parameter components,
    a subspace that ``A`` maps into itself and which carries none of the
    structural unit roots. ``A`` is raised to dyadic powers with log-scale
    renormalization up to ``horizon`` steps, and a line is fitted to
    ``log ||x(h)||`` over the last ``fit_points`` dyadic horizons. The
    system contracts when every trial gives a slope below ``-slope_tol``.
    """
    if isinstance(model, LinearModel):
        c = model.controlled
        A = model.A[c, c]
    else:
        A = np.asarray(model, dtype=float)
    if A.size == 0:
        return True
    rng = np.random.default_rng(0) if rng is None else rng
    X = rng.standard_normal((A.shape[0], trials))
    X /= np.linalg.norm(X, axis=0)

    levels = max(int(math.ceil(math.log2(max(horizon, 2)))), 1)
    M = A.copy()
    log_scale = 0.0
    hs, ys = [], []
    for k in range(levels + 1):
        with np.errstate(divide="ignore"):
            ys.append(log_scale + np.log(np.linalg.norm(M @ X, axis=0)))
        hs.append(float(2**k))
        M = M @ M
        log_scale *= 2.0
        s = np.linalg.norm(M)
        if s == 0.0 or not np.isfinite(s):
            if s == 0.0:  # nilpotent: contracts trivially
                return True
            return False
        M /= s
        log_scale += math.log(s)
    h = np.array(hs[-fit_points:])
    Y = np.array(ys[-fit_points:])
    if np.any(np.isneginf(Y)):
        # exact annihilation of a trial vector counts as decay
        Y = np.where(np.isneginf(Y), -1e300, Y)
    hc = h - h.mean()
    slopes = (hc @ (Y - Y.mean(axis=0))) / (hc @ hc)
    return bool(np.all(slopes < -slope_tol))


def _draw_candidates(mode, budget, rng, ranges):
    keys = ("kp_t", "ki_t", "kp_e", "ki_e")
    lo = np.log10([ranges[k][0] for k in keys])
    hi = np.log10([ranges[k][1] for k in keys])
    u = rng.random((budget, 4))
    vals = 10.0 ** (lo + u * (hi - lo))
    return [ControllerGains(*row, mode=mode) for row in vals]


def tune_gains(
    mode: ControlMode,
    n_streams: int,
    realizations: int,
    budget: int,
    rng: np.random.Generator,
    Rc: float = 4000.0,
    reference: Sequence[SourceParams] = REFERENCE_PSNR_PARAMS,
    sigma1_sq: float = REFERENCE_SIGMA1_SQ,
    sigma2_sq: float = REFERENCE_SIGMA2_SQ,
    plant: PlantConfig = PlantConfig(),
    ranges: Mapping[str, tuple[float, float]] | None = None,
) -> TuningReport:
    """Random search for gains stable on every drawn characteristic set.

    Draws ``realizations`` sets of ``n_streams`` characteristics around the
    mean of ``reference``, then ``budget`` log-uniform gain candidates (all
    drawn up front, so the result depends only on the seed). The winner
    maximizes the smallest stability margin over the sets.
    """
    mode = ControlMode(mode)
    if budget < 1:
        raise TuningError("search budget must be at least 1")
    if realizations < 1:
        raise TuningError("need at least one realization")
    ranges = dict(DEFAULT_GAIN_RANGES[mode] if ranges is None else ranges)

    sets = [
        random_characteristics(reference, n_streams, rng, sigma1_sq, sigma2_sq)
        for _ in range(realizations)
    ]
    eqs = [solve_equilibrium(s, Rc) for s in sets]
    candidates = _draw_candidates(mode, budget, rng, ranges)

    best, best_min, best_margins = None, -math.inf, None
    n_stable = 0
    for g in candidates:
        margins = np.full(realizations, -math.inf)
        for k, (s, e) in enumerate(zip(sets, eqs)):
            full = EquilibriumPoint(e.u_eq, e.r_eq, Rc)
            m = _controlled_margin(assemble_A(g, full, s, plant))
            margins[k] = m
            if m <= STABLE_TOL:
                break  # unstable somewhere: cannot be selected
        worst = float(margins.min())
        if worst > STABLE_TOL:
            n_stable += 1
        if worst > best_min and worst > STABLE_TOL:
            best, best_min, best_margins = g, worst, margins
    if best is None:
        raise TuningError(
            f"no candidate stable on all {realizations} realizations "
            f"(best worst-case margin {best_min:.3g})",
            best=best,
        )
    return TuningReport(best, best_margins, len(candidates), n_stable, sets)
