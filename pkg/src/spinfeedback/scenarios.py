"""Packaged experiments: parameter sweeps and scans, plus lockpoint dragging."""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import probe
from .dicke import ConfigError, EnsembleModel, ManifoldSpec
from .engine import Ablations, FeedbackConfig, TauSchedule, drag_lockpoint, run_sequence

log = logging.getLogger(__name__)

SWEEP_PARAMETERS = ("tau_max", "T", "phi", "tau_fixed", "delta_schedule")

#: Window fraction for distribution-engineering scans.  Wide enough that the
#: thermal start spans several capture ranges at long tau, narrow enough that
#: at phi = pi only the two central lockpoints are populated at tau = 40 ns.
SCENARIO_WINDOW_FRACTION = 0.2

#: Steady-state repetitions of the full sequence per drag step.
DRAG_REPEATS = 3


def scenario_model(window_fraction: float = SCENARIO_WINDOW_FRACTION, **kw) -> EnsembleModel:
    return EnsembleModel.nominal(window_fraction=window_fraction, **kw)


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple
    base: FeedbackConfig = FeedbackConfig()
    ablations: Ablations | None = None

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ConfigError(f"unknown sweep parameter {self.parameter!r}; "
                              f"expected one of {', '.join(SWEEP_PARAMETERS)}")
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ConfigError("sweep grid is empty")
        d = np.diff(vals)
        if d.size and not (np.all(d > 0) or np.all(d < 0)):
            raise ConfigError("sweep grid must be strictly monotone")
        object.__setattr__(self, "values", vals)

    def config_for(self, value: float) -> FeedbackConfig:
        cfg = self.base
        if self.ablations is not None:
            cfg = cfg.replace(ablations=self.ablations)
        p = self.parameter
        if p == "tau_max":
            return cfg.replace(tau_schedule=TauSchedule.linear(cfg.tau_schedule.tau_min, value))
        if p == "tau_fixed":
            return cfg.replace(tau_schedule=TauSchedule.fixed(value))
        if p == "T":
            return cfg.replace(T=value)
        if p == "phi":
            return cfg.replace(phi=value)
        return cfg.replace(delta=value)


@dataclass
class SweepRow:
    value: float
    T2_star: float = math.nan
    alpha: float = math.nan
    S_p: float = math.nan
    fwhm: float = math.nan
    converged: bool = False
    error: str = ""


@dataclass
class SweepTable:
    parameter: str
    rows: list = field(default_factory=list)

    def columns(self) -> dict:
        return {
            self.parameter: [r.value for r in self.rows],
            "T2_star_ns": [r.T2_star for r in self.rows],
            "alpha": [r.alpha for r in self.rows],
            "S_p": [r.S_p for r in self.rows],
            "fwhm_MHz": [r.fwhm for r in self.rows],
            "converged": [r.converged for r in self.rows],
            "error": [r.error.replace(",", ";") for r in self.rows],
        }

    def argmax(self, key: str = "T2_star") -> float:
        vals = np.array([getattr(r, key) for r in self.rows], dtype=float)
        if np.all(np.isnan(vals)):
            raise ValueError("no finite values in sweep")
        return self.rows[int(np.nanargmax(vals))].value


def _measure(model, cfg, threads, backend, grid):
    res = run_sequence(model, cfg, threads=threads, backend=backend)
    p = probe.extract_p(res)
    s = probe.analyse(p)
    width = probe.fwhm(p if grid is None else probe.extract_p(res, grid)).fwhm
    return s, width


def sweep(spec: SweepSpec, model: EnsembleModel | None = None, *, threads: int | None = None,
          backend: str | None = None, grid=None) -> SweepTable:
    """One feedback run per grid value, reduced to ``(T2*, alpha, S_p, FWHM)``.

    Failures at a point are recorded in its row and the sweep continues.
    """
    model = model or EnsembleModel.nominal()
    table = SweepTable(spec.parameter)
    for v in spec.values:
        row = SweepRow(v)
        try:
            s, width = _measure(model, spec.config_for(v), threads, backend, grid)
            row.T2_star, row.alpha, row.S_p, row.fwhm = s.T2_star, s.alpha, s.entropy, width
            row.converged = s.fit.converged
        except (ConfigError, probe.NumericalError, ValueError, FloatingPointError) as exc:
            row.error = f"{type(exc).__name__}: {exc}"
            log.warning("sweep %s=%g failed: %s", spec.parameter, v, exc)
        table.rows.append(row)
    return table


def _require_fixed(config: FeedbackConfig) -> float:
    if config.tau_schedule.kind != "fixed":
        raise ConfigError("scan requires a fixed-tau schedule")
    return config.tau_schedule.tau_min


@dataclass
class BimodalRow:
    phi: float
    splitting: float      # MHz, between the two tallest modes
    weight_ratio: float   # larger / smaller of the two tallest modes
    S_p: float
    n_modes: int


@dataclass
class ScanResult:
    rows: list
    maps: list            # [(x, SpectralDistribution)] for long-format output

    def map_columns(self, xname: str) -> dict:
        xs, fs, ds = [], [], []
        for x, p in self.maps:
            xs.extend([x] * p.freqs.size)
            fs.extend(p.freqs)
            ds.extend(p.dens)
        return {xname: xs, "freq_MHz": fs, "density_per_MHz": ds}


def two_mode_summary(modes) -> tuple[float, float]:
    """Splitting and weight ratio of the two tallest modes (nan / inf if fewer)."""
    if not modes:
        return math.nan, math.nan
    top = sorted(modes, key=lambda m: -m.height)[:2]
    if len(top) < 2:
        return math.nan, math.inf
    a, b = sorted(top, key=lambda m: m.center)
    hi, lo = max(a.weight, b.weight), min(a.weight, b.weight)
    return b.center - a.center, (hi / lo if lo > 0 else math.inf)


def bimodal_scan(phis, config: FeedbackConfig, model: EnsembleModel | None = None, *,
                 threads: int | None = None, backend: str | None = None) -> ScanResult:
    """Sense-phase scan at fixed tau: two-mode splitting, balance and entropy."""
    _require_fixed(config)
    model = model or scenario_model()
    rows, maps = [], []
    for phi in phis:
        res = run_sequence(model, config.replace(phi=float(phi)), threads=threads, backend=backend)
        p = probe.extract_p(res)
        modes = probe.find_modes(p)
        split, ratio = two_mode_summary(modes)
        rows.append(BimodalRow(float(phi), split, ratio, probe.lddp_entropy(p), len(modes)))
        maps.append((float(phi), p))
    return ScanResult(rows, maps)


def bimodal_columns(rows) -> dict:
    return {
        "phi_rad": [r.phi for r in rows],
        "splitting_MHz": [r.splitting for r in rows],
        "weight_ratio": [r.weight_ratio for r in rows],
        "S_p": [r.S_p for r in rows],
        "n_modes": [r.n_modes for r in rows],
    }


@dataclass
class MultistabilityRow:
    tau: float
    n_modes: int
    spacing: float        # MHz, mean distance between neighbouring mode centres
    spacing_ratio: float  # spacing * tau (1 when spacing = 1/tau)
    widths: tuple         # MHz, per-mode FWHM
    S_p: float


def multistability_scan(taus, config: FeedbackConfig | None = None,
                        model: EnsembleModel | None = None, *, threads: int | None = None,
                        backend: str | None = None) -> ScanResult:
    """Fixed-tau runs from the thermal state, counting lockpoint modes."""
    config = config or FeedbackConfig()
    model = model or scenario_model()
    rows, maps = [], []
    for tau in taus:
        cfg = config.replace(tau_schedule=TauSchedule.fixed(float(tau)))
        res = run_sequence(model, cfg, threads=threads, backend=backend)
        p = probe.extract_p(res)
        modes = probe.find_modes(p)
        centers = np.array([m.center for m in modes])
        spacing = float(np.mean(np.diff(centers))) if centers.size > 1 else math.nan
        rows.append(MultistabilityRow(float(tau), len(modes), spacing, spacing * float(tau) * 1e-3,
                                      tuple(m.width for m in modes), probe.lddp_entropy(p)))
        maps.append((float(tau), p))
    return ScanResult(rows, maps)


def multistability_columns(rows) -> dict:
    return {
        "tau_ns": [r.tau for r in rows],
        "n_modes": [r.n_modes for r in rows],
        "spacing_MHz": [r.spacing for r in rows],
        "spacing_times_tau": [r.spacing_ratio for r in rows],
        "mean_mode_width_MHz": [float(np.mean(r.widths)) if r.widths else math.nan for r in rows],
        "S_p": [r.S_p for r in rows],
    }


def drag_model(model: EnsembleModel, lockpoints, margin: int) -> EnsembleModel:
    """Keep only manifolds whose window holds every lockpoint with ``margin``.

    Weights of the survivors are renormalized.  Stands in for the full
    ensemble when the lockpoint is moved away from the window centres.
    """
    lo, hi = min(lockpoints), max(lockpoints)
    keep = [s for s in model.manifolds
            if s.iz_lo + margin <= lo and hi <= s.iz_hi - margin and s.weight > 0]
    if not keep:
        raise ConfigError(f"no manifold window holds lockpoints [{lo:g}, {hi:g}] with margin {margin}")
    total = math.fsum(s.weight for s in keep)
    out = dataclasses.replace(model)
    out.manifolds = [ManifoldSpec(s.I, s.iz_lo, s.iz_hi, s.weight / total) for s in keep]
    return out


def drag_schedule(shift_sites: float, steps: int, A_c: float, repeats: int = DRAG_REPEATS) -> tuple:
    """``(delta, repeats)`` pairs: a settling step at 0 then ``steps`` equal moves."""
    return ((0.0, repeats),) + tuple(
        (-A_c * shift_sites * k / steps, repeats) for k in range(1, steps + 1))


@dataclass
class DragRow:
    delta: float       # MHz
    lockpoint: float   # I_z
    mean_iz: float     # mean of p(I_z)
    mode_iz: float     # centre of the dominant mode, in I_z
    fwhm: float        # MHz


def drag_scenario(config: FeedbackConfig, model: EnsembleModel | None = None, *,
                  threads: int | None = None, backend: str | None = None) -> list[DragRow]:
    """Run a drag schedule on the window-filtered ensemble and track p."""
    model = model or EnsembleModel.nominal()
    locks = [config.lockpoint(model.A_c, d) for d, _ in config.drag]
    m = drag_model(model, locks, config.lock_margin)
    rows = []

    def summarize(res):
        iz, prob = probe.macrostate_distribution(res)
        p = probe.lattice_distribution(iz, prob, m.A_c)
        top = max(probe.find_modes(p), key=lambda x: x.height)
        return float(np.dot(iz, prob)), top.center / m.A_c, probe.fwhm(p).fwhm

    for d, lock, (mean, mode, width) in drag_lockpoint(m, config, threads=threads,
                                                      backend=backend, extract=summarize):
        rows.append(DragRow(d, lock, mean, mode, width))
    return rows


def drag_columns(rows) -> dict:
    return {
        "delta_MHz": [r.delta for r in rows],
        "lockpoint_Iz": [r.lockpoint for r in rows],
        "mean_Iz": [r.mean_iz for r in rows],
        "mode_Iz": [r.mode_iz for r in rows],
        "fwhm_MHz": [r.fwhm for r in rows],
    }
