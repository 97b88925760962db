"""Composition of gates and channels into cycles, sequences and drag runs."""
from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import channels as ch
from . import gates
from .dicke import ConfigError, EnsembleModel, ManifoldSpec, ManifoldState, Species, thermal_manifold
from .kernels import get_cycle

log = logging.getLogger(__name__)

ABLATION_FLAGS = ("no_transverse_noise", "no_optical_relaxation",
                  "no_nuclear_dephasing", "single_species")


@dataclass(frozen=True)
class TauSchedule:
    """Sensing times per cycle: a linear ramp (inclusive) or a fixed value, in ns."""

    kind: str = "linear"
    tau_min: float = 30.0
    tau_max: float = 98.0

    def __post_init__(self):
        if self.kind not in ("linear", "fixed"):
            raise ConfigError(f"unknown tau schedule {self.kind!r}")
        if self.tau_min <= 0 or self.tau_max <= 0:
            raise ConfigError("sensing times must be positive")
        if self.kind == "linear" and self.tau_min > self.tau_max:
            raise ConfigError("tau_min must not exceed tau_max")

    @classmethod
    def linear(cls, tau_min: float, tau_max: float) -> "TauSchedule":
        return cls("linear", tau_min, tau_max)

    @classmethod
    def fixed(cls, tau: float) -> "TauSchedule":
        return cls("fixed", tau, tau)

    def taus(self, n_cycles: int) -> np.ndarray:
        if self.kind == "fixed" or n_cycles == 1:
            return np.full(n_cycles, float(self.tau_min))
        j = np.arange(n_cycles)
        return self.tau_min + j * (self.tau_max - self.tau_min) / (n_cycles - 1)


@dataclass(frozen=True)
class Ablations:
    no_transverse_noise: bool = False
    no_optical_relaxation: bool = False
    no_nuclear_dephasing: bool = False
    single_species: bool = False

    @classmethod
    def from_flags(cls, flags) -> "Ablations":
        flags = [f.strip() for f in flags if f.strip()]
        bad = [f for f in flags if f not in ABLATION_FLAGS]
        if bad:
            raise ConfigError(f"unknown ablation flag(s): {', '.join(bad)}")
        return cls(**{f: True for f in flags})

    @classmethod
    def all(cls) -> "Ablations":
        return cls(True, True, True, True)

    def active(self) -> list[str]:
        return [f for f in ABLATION_FLAGS if getattr(self, f)]


@dataclass(frozen=True)
class FeedbackConfig:
    """Knobs of one feedback run.  Times in ns, frequencies in MHz."""

    n_cycles: int = 44
    tau_schedule: TauSchedule = TauSchedule()
    T: float = 86.0
    delta: float = 0.0
    drag: tuple = ()                     # ((delta, repeats), ...)
    phi: float = 0.0
    noise: ch.NoiseParams = ch.NoiseParams()
    ablations: Ablations = Ablations()
    single_species_omega_n: float = 29.0
    lock_margin: int = 2
    coupling_scale: float = gates.FLIPFLOP_SCALE

    def __post_init__(self):
        if self.n_cycles < 1:
            raise ConfigError("n_cycles must be >= 1")
        if self.T < 0:
            raise ConfigError("T must be non-negative")
        for item in self.drag:
            if len(item) != 2 or int(item[1]) < 1:
                raise ConfigError(f"bad drag step {item!r}; expected (delta, repeats>=1)")

    def replace(self, **kw) -> "FeedbackConfig":
        return dataclasses.replace(self, **kw)

    def lockpoint(self, A_c: float, delta: float | None = None) -> float:
        """Target macrostate ``-delta / A_c``."""
        d = self.delta if delta is None else delta
        if A_c == 0:
            if d != 0:
                raise ConfigError("a detuning needs A_c > 0 to define a lockpoint")
            return 0.0
        return -d / A_c

    def active_species(self, model: EnsembleModel) -> tuple:
        if self.ablations.single_species:
            return (Species("single", self.single_species_omega_n),)
        return model.species

    def noise_for(self, species: Species, model: EnsembleModel) -> ch.NoiseParams:
        a = self.ablations
        return dataclasses.replace(
            self.noise,
            omega_n=species.omega_n,
            A_nc=0.0 if a.no_transverse_noise else model.A_nc,
            Gamma=self.noise.Gamma,
            Gamma_opt=0.0 if a.no_optical_relaxation else self.noise.Gamma_opt,
        )


@dataclass
class ManifoldRecord:
    """Per-manifold diagnostics emitted with every sequence run."""

    species: str
    I: int
    weight: float
    trace: float
    trace_leakage: float
    n_clamped: int

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SequenceResult:
    model: EnsembleModel
    config: FeedbackConfig
    species: tuple
    states: dict = field(default_factory=dict)   # label -> [ManifoldState] ordered by I
    diagnostics: list = field(default_factory=list)
    lockpoint: float = 0.0


@dataclass
class _Prepared:
    spec: ManifoldSpec
    iz: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    opt_gamma: float
    pd: float
    ff: tuple
    n_clamped: int
    omega_n: float
    A_c: float
    noise: ch.NoiseParams
    ablate_tn: bool


def _prepare(spec: ManifoldSpec, species: Species, cfg: FeedbackConfig,
             model: EnsembleModel) -> _Prepared:
    params = gates.GateParams(T=cfg.T, omega_n=species.omega_n, A_c=model.A_c,
                              A_nc=model.A_nc, xi=model.xi,
                              coupling_scale=cfg.coupling_scale)
    blocks = gates.build_actuation_blocks(spec, params)
    noise = cfg.noise_for(species, model)
    a = cfg.ablations
    return _Prepared(
        spec=spec,
        iz=spec.iz.astype(float),
        r1=gates.sense_pulse_matrix(cfg.phi),
        r2=gates.rotation_matrix(np.pi / 2, gates.MINUS_Y),
        opt_gamma=ch.optical_relaxation_gamma(cfg.T, noise.Gamma_opt),
        pd=1.0 if a.no_nuclear_dephasing else ch.nuclear_dephasing_factor(cfg.T, noise.Gamma),
        ff=blocks.propagator_coefficients(cfg.T),
        n_clamped=blocks.n_clamped,
        omega_n=species.omega_n,
        A_c=model.A_c,
        noise=noise,
        ablate_tn=a.no_transverse_noise,
    )


def _evolve(rho: np.ndarray, prep: _Prepared, taus, deltas, kernel) -> np.ndarray:
    spec = prep.spec
    W = spec.width
    I2 = float(spec.I) ** 2
    for tau, delta in zip(taus, deltas):
        phase = gates.sense_phases(spec, tau, delta, prep.A_c, prep.omega_n)
        B = 0.0 if prep.ablate_tn else ch.noise_bracket(tau, prep.noise)
        rho = kernel(rho, W, prep.iz, prep.r1, phase, I2, B, prep.r2, prep.opt_gamma,
                     prep.ff[0], prep.ff[1], prep.ff[2], prep.pd)
    return rho


def check_windows(model: EnsembleModel, lockpoints, margin: int) -> None:
    """Refuse lockpoints outside a window or within ``margin`` sites of its edge.

    Windows too narrow to hold the margin on both sides only need to contain
    the lockpoint.  Zero-weight manifolds are ignored.
    """
    for spec in model.manifolds:
        if spec.weight == 0:
            continue
        roomy = spec.width >= 2 * margin + 1
        lo = spec.iz_lo + (margin if roomy else 0)
        hi = spec.iz_hi - (margin if roomy else 0)
        for lock in lockpoints:
            if not (lo - 1e-9 <= lock <= hi + 1e-9):
                raise ConfigError(
                    f"lockpoint {lock:.3f} too close to the edge of window "
                    f"[{spec.iz_lo}, {spec.iz_hi}] of manifold I={spec.I} (margin {margin})"
                )


def run_cycle(state: ManifoldState, cycle_index: int, config: FeedbackConfig,
              species: Species, model: EnsembleModel,
              delta: float | None = None) -> ManifoldState:
    """One cycle built from the public gate and channel functions.

    Reference composition; :func:`run_sequence` uses the fused kernel.
    """
    taus = config.tau_schedule.taus(config.n_cycles)
    tau = float(taus[cycle_index])
    delta = config.delta if delta is None else delta
    noise = config.noise_for(species, model)
    a = config.ablations
    s = gates.apply_rotation(state, np.pi / 2, config.phi + gates.SENSE_AXIS_OFFSET)
    s = gates.apply_sense(s, tau, delta, model.A_c, species.omega_n)
    if not a.no_transverse_noise:
        s = ch.transverse_noise_channel(s, tau, noise)
    s = gates.apply_rotation(s, np.pi / 2, gates.MINUS_Y)
    s = ch.optical_relaxation_channel(s, config.T, noise.Gamma_opt)
    params = gates.GateParams(T=config.T, omega_n=species.omega_n, A_c=model.A_c,
                              A_nc=model.A_nc, xi=model.xi,
                              coupling_scale=config.coupling_scale)
    s = gates.apply_flipflop(s, gates.build_actuation_blocks(state.spec, params), config.T)
    if not a.no_nuclear_dephasing:
        s = ch.nuclear_dephasing_channel(s, config.T, noise.Gamma)
    return ch.reset_channel(s)


def _map(fn, items, threads):
    if threads is None or threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_sequence(model: EnsembleModel, config: FeedbackConfig, *,
                 initial: SequenceResult | None = None, repeats: int = 1,
                 delta: float | None = None, threads: int | None = None,
                 backend: str | None = None, check: bool = True) -> SequenceResult:
    """Evolve every (species, manifold) pair through the cycle sequence.

    Starts from :func:`thermal_manifold` unless ``initial`` is given; the
    whole ``n_cycles`` schedule is applied ``repeats`` times.
    """
    if not model.manifolds:
        raise ConfigError("model has no manifolds")
    delta = config.delta if delta is None else delta
    lock = config.lockpoint(model.A_c, delta)
    if check:
        check_windows(model, [lock], config.lock_margin)
    kernel = get_cycle(backend)
    species = config.active_species(model)
    taus = np.tile(config.tau_schedule.taus(config.n_cycles), repeats)
    deltas = np.full(taus.size, delta)

    tasks = []
    for sp in species:
        for k, spec in enumerate(model.manifolds):
            start = (initial.states[sp.label][k].rho if initial is not None
                     else thermal_manifold(spec).rho)
            tasks.append((sp, spec, start))

    def work(task):
        sp, spec, rho0 = task
        prep = _prepare(spec, sp, config, model)
        rho = _evolve(rho0, prep, taus, deltas, kernel)
        return ManifoldState(spec, rho), prep.n_clamped

    outs = _map(work, tasks, threads)
    res = SequenceResult(model=model, config=config, species=species, lockpoint=lock)
    for (sp, spec, _), (state, n_clamped) in zip(tasks, outs):
        res.states.setdefault(sp.label, []).append(state)
        tr = state.trace
        res.diagnostics.append(ManifoldRecord(sp.label, spec.I, spec.weight, tr,
                                              1.0 - tr, n_clamped))
    return res


def drag_lockpoint(model: EnsembleModel, config: FeedbackConfig, *,
                   threads: int | None = None, backend: str | None = None,
                   extract=None) -> list:
    """Step the detuning through ``config.drag`` carrying the state along.

    Returns ``[(delta, lockpoint, SequenceResult), ...]``, one entry per step,
    each after its ``repeats`` full sequences.  ``extract`` may map each
    result to something lighter (e.g. a distribution) before it is stored.
    """
    if not config.drag:
        raise ConfigError("config has no drag schedule")
    locks = [config.lockpoint(model.A_c, d) for d, _ in config.drag]
    check_windows(model, locks, config.lock_margin)
    out = []
    state = None
    for (d, reps), lock in zip(config.drag, locks):
        state = run_sequence(model, config, initial=state, repeats=int(reps), delta=d,
                             threads=threads, backend=backend, check=False)
        out.append((d, lock, extract(state) if extract else state))
    return out
