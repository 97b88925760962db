"""TOML run configuration with units in key names.

Every dimensional key carries its unit as a suffix (``tau_min_ns``,
``A_c_MHz``, ``Gamma_d_Hz``).  Unknown keys are rejected; a dimensional key
given without its suffix gets a pointed error.
"""
from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .channels import NoiseParams
from .dicke import ConfigError, EnsembleModel, Species, sample_manifolds
from .engine import Ablations, FeedbackConfig, TauSchedule
from .probe import uniform_grid
from .scenarios import SCENARIO_WINDOW_FRACTION, SweepSpec
from .semiclassical import SemiclassicalParams

# section -> key -> default.  The suffix of each key is its unit.
DEFAULTS = {
    "model": {
        "N": 49_000,
        "A_c_MHz": 0.63,
        "A_nc_MHz": 0.156,
        "xi": 0.42,
        "manifold_count": 46,
        "manifold_spacing": 14,
        "window_fraction": 1 / 14,
        "species_MHz": {"As": 25.3, "In": 32.7},
    },
    "noise": {
        "Gamma_MHz": 6.0,
        "Gamma_opt_MHz": 1.7,
        "angular_rates": True,
    },
    "feedback": {
        "n_cycles": 44,
        "tau_schedule": "linear",
        "tau_min_ns": 30.0,
        "tau_max_ns": 98.0,
        "tau_fixed_ns": 30.0,
        "T_ns": 86.0,
        "delta_MHz": 0.0,
        "phi_rad": 0.0,
        "lock_margin": 2,
        "coupling_scale": 0.5,
        "single_species_omega_n_MHz": 29.0,
        "ablations": [],
    },
    "probe": {
        "grid_min_MHz": -250.0,
        "grid_max_MHz": 250.0,
        "grid_points": 1024,
        "omega_serr_MHz": 60.0,
        "fid_points": 600,
    },
    "sweep": {
        "tau_max_ns": [40.0 + 20.0 * k for k in range(20)],
    },
    "scan": {
        "window_fraction": SCENARIO_WINDOW_FRACTION,
        "bimodal_tau_ns": 40.0,
        "phi_rad": [float(x) for x in np.linspace(0, 2 * math.pi, 13)],
        "tau_ns": [30.0, 35.0, 40.0, 60.0, 80.0, 100.0, 125.0, 150.0, 200.0, 250.0],
    },
    "drag": {
        "shift_sites": 10.0,
        "steps": 5,
        "repeats": 3,
        "delta_MHz": [],
        "repeats_list": [],
    },
    "semiclassical": {
        "tau_ns": 250 / 0.63,
        "Gamma_d_Hz": 0.0,
        "Iz_lock": 0.0,
        "iz_min": -20.0,
        "iz_max": 20.0,
        "curve_points": 401,
        "iz0": [1.0, 1.5, 3.0, 7.0],
        "t_end_ns": 2.0e5,
        "dt_ns": 100.0,
    },
}

SWEEP_KEYS = {"tau_max_ns": "tau_max", "T_ns": "T", "phi_rad": "phi",
              "tau_fixed_ns": "tau_fixed", "delta_MHz": "delta_schedule"}
UNIT_SUFFIXES = ("_MHz", "_ns", "_Hz", "_rad")


def _base(key: str) -> str:
    for s in UNIT_SUFFIXES:
        if key.endswith(s):
            return key[: -len(s)]
    return key


def _check_keys(section: str, given: dict, allowed) -> None:
    allowed = set(allowed)
    by_base = {_base(k): k for k in allowed if _base(k) != k}
    for k in given:
        if k in allowed:
            continue
        if k in by_base:
            raise ConfigError(f"{section}.{k}: missing units suffix (expected {by_base[k]})")
        stem = k.rsplit("_", 1)[0]
        if stem != k and stem in by_base:
            raise ConfigError(f"{section}.{k}: wrong units suffix (expected {by_base[stem]})")
        raise ConfigError(f"{section}.{k}: unknown key")


def _number(path, v, *, integer=False, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{path}: must be finite")
    if positive and v <= 0:
        raise ConfigError(f"{path}: must be positive")
    if nonneg and v < 0:
        raise ConfigError(f"{path}: must be non-negative")
    return int(v) if integer else float(v)


def _numbers(path, v, **kw):
    if not isinstance(v, list):
        raise ConfigError(f"{path}: expected a list")
    return [_number(f"{path}[{i}]", x, **kw) for i, x in enumerate(v)]


@dataclass
class ProbeSettings:
    grid: np.ndarray
    omega_serr: float = 60.0
    fid_points: int = 600


@dataclass
class ScanSettings:
    window_fraction: float
    bimodal_tau: float
    phis: list
    taus: list


@dataclass
class DragSettings:
    schedule: tuple


@dataclass
class SemiclassicalSettings:
    params: SemiclassicalParams
    iz_range: tuple
    curve_points: int
    iz0: list
    t_end: float
    dt: float


@dataclass
class RunConfig:
    model: EnsembleModel
    feedback: FeedbackConfig
    sweep: SweepSpec
    probe: ProbeSettings
    scan: ScanSettings
    drag: DragSettings
    semiclassical: SemiclassicalSettings
    resolved: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        text = json.dumps(self.resolved, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def with_ablations(self, flags) -> "RunConfig":
        abl = Ablations.from_flags(flags)
        merged = sorted(set(abl.active()) | set(self.feedback.ablations.active()))
        fb = self.feedback.replace(ablations=Ablations.from_flags(merged))
        res = json.loads(json.dumps(self.resolved))
        res["feedback"]["ablations"] = merged
        return RunConfig(self.model, fb, SweepSpec(self.sweep.parameter, self.sweep.values, fb),
                         self.probe, self.scan, self.drag, self.semiclassical, res)


def load_config(path=None) -> RunConfig:
    """Parse ``path`` (or nothing, for defaults) into a validated :class:`RunConfig`."""
    if path is None:
        return parse_config({})
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = tomllib.loads(p.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    return parse_config(data)


def parse_config(data: dict) -> RunConfig:
    _check_keys("<root>", data, DEFAULTS)
    sec = {}
    for name, defaults in DEFAULTS.items():
        given = data.get(name, {})
        if not isinstance(given, dict):
            raise ConfigError(f"{name}: expected a table")
        if name == "sweep":
            _check_keys(name, given, SWEEP_KEYS)
            sec[name] = dict(given) if given else dict(defaults)
            continue
        _check_keys(name, given, defaults)
        merged = dict(defaults)
        merged.update(given)
        sec[name] = merged

    m = sec["model"]
    sp = m["species_MHz"]
    if not isinstance(sp, dict) or not sp:
        raise ConfigError("model.species_MHz: expected a non-empty table of label = omega_n")
    species = tuple(Species(str(k), _number(f"model.species_MHz.{k}", v, positive=True))
                    for k, v in sp.items())
    try:
        model = EnsembleModel(
            N=_number("model.N", m["N"], integer=True, positive=True),
            A_c=_number("model.A_c_MHz", m["A_c_MHz"], positive=True),
            A_nc=_number("model.A_nc_MHz", m["A_nc_MHz"], nonneg=True),
            xi=_number("model.xi", m["xi"], positive=True),
            species=species,
        )
        model.manifolds = sample_manifolds(
            model.N,
            _number("model.manifold_count", m["manifold_count"], integer=True, positive=True),
            _number("model.manifold_spacing", m["manifold_spacing"], integer=True, positive=True),
            _number("model.window_fraction", m["window_fraction"], positive=True),
        )
    except ConfigError as exc:
        raise ConfigError(f"model: {exc}") from None

    nz = sec["noise"]
    if not isinstance(nz["angular_rates"], bool):
        raise ConfigError("noise.angular_rates: expected true or false")
    noise = NoiseParams(
        Gamma=_number("noise.Gamma_MHz", nz["Gamma_MHz"], nonneg=True),
        Gamma_opt=_number("noise.Gamma_opt_MHz", nz["Gamma_opt_MHz"], nonneg=True),
        A_nc=model.A_nc,
        angular_rates=nz["angular_rates"],
    )

    f = sec["feedback"]
    kind = f["tau_schedule"]
    tmin = _number("feedback.tau_min_ns", f["tau_min_ns"], positive=True)
    tmax = _number("feedback.tau_max_ns", f["tau_max_ns"], positive=True)
    if kind == "linear":
        if tmin > tmax:
            raise ConfigError("feedback.tau_min_ns: must not exceed feedback.tau_max_ns")
        sched = TauSchedule.linear(tmin, tmax)
    elif kind == "fixed":
        sched = TauSchedule.fixed(_number("feedback.tau_fixed_ns", f["tau_fixed_ns"], positive=True))
    else:
        raise ConfigError(f"feedback.tau_schedule: expected 'linear' or 'fixed', got {kind!r}")
    if not isinstance(f["ablations"], list):
        raise ConfigError("feedback.ablations: expected a list of flag names")
    try:
        abl = Ablations.from_flags([str(x) for x in f["ablations"]])
    except ConfigError as exc:
        raise ConfigError(f"feedback.ablations: {exc}") from None
    fb = FeedbackConfig(
        n_cycles=_number("feedback.n_cycles", f["n_cycles"], integer=True, positive=True),
        tau_schedule=sched,
        T=_number("feedback.T_ns", f["T_ns"], nonneg=True),
        delta=_number("feedback.delta_MHz", f["delta_MHz"]),
        phi=_number("feedback.phi_rad", f["phi_rad"]),
        noise=noise,
        ablations=abl,
        single_species_omega_n=_number("feedback.single_species_omega_n_MHz",
                                       f["single_species_omega_n_MHz"], positive=True),
        lock_margin=_number("feedback.lock_margin", f["lock_margin"], integer=True, nonneg=True),
        coupling_scale=_number("feedback.coupling_scale", f["coupling_scale"], positive=True),
    )

    sw = sec["sweep"]
    if len(sw) != 1:
        raise ConfigError(f"sweep: give exactly one of {', '.join(SWEEP_KEYS)}")
    (skey, svals), = sw.items()
    try:
        sweep = SweepSpec(SWEEP_KEYS[skey], tuple(_numbers(f"sweep.{skey}", svals)), fb)
    except ConfigError as exc:
        raise ConfigError(f"sweep.{skey}: {exc}") from None

    pr = sec["probe"]
    gmin = _number("probe.grid_min_MHz", pr["grid_min_MHz"])
    gmax = _number("probe.grid_max_MHz", pr["grid_max_MHz"])
    gpts = _number("probe.grid_points", pr["grid_points"], integer=True, positive=True)
    if gmax <= gmin or gpts < 2:
        raise ConfigError("probe.grid_max_MHz: grid needs grid_max_MHz > grid_min_MHz and >= 2 points")
    probe = ProbeSettings(uniform_grid(gmin, gmax, gpts),
                          _number("probe.omega_serr_MHz", pr["omega_serr_MHz"]),
                          _number("probe.fid_points", pr["fid_points"], integer=True, positive=True))
    if probe.fid_points < 20:
        raise ConfigError("probe.fid_points: need at least 20 samples")

    sc = sec["scan"]
    scan = ScanSettings(
        _number("scan.window_fraction", sc["window_fraction"], positive=True),
        _number("scan.bimodal_tau_ns", sc["bimodal_tau_ns"], positive=True),
        _numbers("scan.phi_rad", sc["phi_rad"]),
        _numbers("scan.tau_ns", sc["tau_ns"], positive=True),
    )
    if scan.window_fraction > 1:
        raise ConfigError("scan.window_fraction: must lie in (0, 1]")

    dr = sec["drag"]
    deltas = _numbers("drag.delta_MHz", dr["delta_MHz"])
    reps = _numbers("drag.repeats_list", dr["repeats_list"], integer=True, positive=True)
    if deltas:
        if reps and len(reps) != len(deltas):
            raise ConfigError("drag.repeats_list: must match drag.delta_MHz in length")
        default_rep = _number("drag.repeats", dr["repeats"], integer=True, positive=True)
        schedule = tuple(zip(deltas, reps or [default_rep] * len(deltas)))
    else:
        from .scenarios import drag_schedule
        schedule = drag_schedule(_number("drag.shift_sites", dr["shift_sites"]),
                                 _number("drag.steps", dr["steps"], integer=True, positive=True),
                                 model.A_c,
                                 _number("drag.repeats", dr["repeats"], integer=True, positive=True))

    s = sec["semiclassical"]
    try:
        sparams = SemiclassicalParams.from_model(
            model.A_c, model.A_nc,
            _number("semiclassical.tau_ns", s["tau_ns"], positive=True),
            _number("semiclassical.Gamma_d_Hz", s["Gamma_d_Hz"], nonneg=True),
            _number("semiclassical.Iz_lock", s["Iz_lock"]),
        )
    except ConfigError as exc:
        raise ConfigError(f"semiclassical: {exc}") from None
    lo = _number("semiclassical.iz_min", s["iz_min"])
    hi = _number("semiclassical.iz_max", s["iz_max"])
    if hi <= lo:
        raise ConfigError("semiclassical.iz_max: must exceed semiclassical.iz_min")
    semi = SemiclassicalSettings(
        sparams, (lo, hi),
        _number("semiclassical.curve_points", s["curve_points"], integer=True, positive=True),
        _numbers("semiclassical.iz0", s["iz0"]),
        _number("semiclassical.t_end_ns", s["t_end_ns"], nonneg=True),
        _number("semiclassical.dt_ns", s["dt_ns"], positive=True),
    )
    if semi.dt > 0.01 * sparams.cycle:
        raise ConfigError(f"semiclassical.dt_ns: must not exceed 1% of the cycle time "
                          f"({0.01 * sparams.cycle:.6g} ns)")

    resolved = json.loads(json.dumps(sec, default=float))
    resolved["feedback"]["ablations"] = abl.active()
    return RunConfig(model, fb, sweep, probe, scan, DragSettings(schedule), semi, resolved)
