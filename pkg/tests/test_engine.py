import dataclasses
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import expm

from spinfeedback import gates, kernels
from spinfeedback.channels import NoiseParams
from spinfeedback.dicke import (ConfigError, EnsembleModel, ManifoldSpec, ManifoldState,
                                Species, thermal_manifold)
from spinfeedback.engine import (Ablations, FeedbackConfig, TauSchedule, _evolve, _prepare,
                                 check_windows, run_cycle, run_sequence)

from conftest import random_density

SX = np.array([[0, 1], [1, 0]]) / 2
SY = np.array([[0, -1j], [1j, 0]]) / 2
SZ = np.diag([0.5, -0.5])
UP_UP = np.array([[1, 0], [0, 0]])
UP_DN = np.array([[0, 1], [0, 0]])


def dense_cycle(rho, spec, j, cfg: FeedbackConfig, sp: Species, model: EnsembleModel, delta=None):
    """Whole cycle from dense propagators and dense Kraus sums."""
    delta = cfg.delta if delta is None else delta
    W = spec.width
    n = 2 * W
    e = np.eye(W)
    m = spec.iz.astype(float)
    Iz = np.kron(np.eye(2), np.diag(m))
    Sz = np.kron(SZ, e)
    tau = cfg.tau_schedule.taus(cfg.n_cycles)[j] * 1e-3
    T = cfg.T * 1e-3
    a = cfg.ablations
    noise = cfg.noise

    def rot(angle, phi):
        return np.kron(expm(-1j * angle * (math.cos(phi) * SX + math.sin(phi) * SY)), e)

    def kraus(ops, r):
        return sum(K @ r @ K.conj().T for K in ops)

    U1 = expm(-2j * np.pi * ((delta * Sz + model.A_c * Iz @ Sz) + sp.omega_n * Iz) * tau)
    rho = U1 @ rot(np.pi / 2, cfg.phi + gates.SENSE_AXIS_OFFSET) @ rho
    rho = rho @ (U1 @ rot(np.pi / 2, cfg.phi + gates.SENSE_AXIS_OFFSET)).conj().T
    if not a.no_transverse_noise:
        g, w = 2 * np.pi * noise.Gamma, 2 * np.pi * sp.omega_n
        integral = quad(lambda s: (tau - s) * math.exp(-g * s / 2) * math.cos(w * s), 0, tau,
                        epsabs=1e-15, limit=200)[0]
        iz2 = float(np.real(np.trace(Iz @ Iz @ rho)) / np.real(np.trace(rho)))
        sigma2 = (spec.I**2 - iz2) * (2 * np.pi * model.A_nc) ** 2 * integral
        Wt = math.exp(-sigma2 / 2)
        s = math.sqrt(1 - Wt)
        rho = kraus([math.sqrt(Wt) * np.eye(n), np.kron(s * UP_DN.T, e), np.kron(s * UP_DN, e)], rho)
    R2 = rot(np.pi / 2, -np.pi / 2)
    rho = R2 @ rho @ R2.conj().T
    G = 0.0 if a.no_optical_relaxation else noise.Gamma_opt
    gam = 1 - math.exp(-G * T)
    h = math.sqrt(0.5)
    rho = kraus([np.kron(h * np.diag([1, math.sqrt(1 - gam)]), e),
                 np.kron(h * math.sqrt(gam) * UP_DN, e),
                 np.kron(h * np.diag([math.sqrt(1 - gam), 1]), e),
                 np.kron(h * math.sqrt(gam) * UP_DN.T, e)], rho)
    I_eff = math.sqrt(model.xi) * spec.I
    Ip = np.zeros((W, W))
    for k in range(W - 1):
        Ip[k + 1, k] = math.sqrt(max(I_eff * (I_eff + 1) - m[k] * (m[k] + 1), 0))
    H = (sp.omega_n * Sz + sp.omega_n * Iz
         - cfg.coupling_scale * model.A_nc / 4 * (np.kron(UP_DN, Ip.T) + np.kron(UP_DN.T, Ip)))
    U3 = expm(-2j * np.pi * H * T)
    rho = U3 @ rho @ U3.conj().T
    if not a.no_nuclear_dephasing:
        d = math.exp(-noise.Gamma * T / 2)
        projs = [np.kron(np.eye(2), np.diag(np.eye(W)[k])) for k in range(W)]
        rho = kraus([math.sqrt(d) * np.eye(n)] + [math.sqrt(1 - d) * P for P in projs], rho)
    return kraus([np.kron(UP_UP, e), np.kron(UP_DN, e)], rho)


MODEL = EnsembleModel(manifolds=[ManifoldSpec(56, -4, 4, 0.5), ManifoldSpec(28, -2, 2, 0.5)])
CONFIGS = [
    FeedbackConfig(n_cycles=4),
    FeedbackConfig(n_cycles=4, phi=1.1, delta=-1.26, T=120.0),
    FeedbackConfig(n_cycles=4, ablations=Ablations(no_transverse_noise=True,
                                                   no_nuclear_dephasing=True)),
    FeedbackConfig(n_cycles=4, ablations=Ablations(no_optical_relaxation=True), coupling_scale=1.0),
]


@pytest.mark.parametrize("cfg", CONFIGS)
@pytest.mark.parametrize("j", [0, 3])
def test_run_cycle_matches_dense_oracle(cfg, j, rng):
    spec = MODEL.manifolds[0]
    sp = MODEL.species[1]
    s = random_density(spec, rng)
    got = run_cycle(s, j, cfg, sp, MODEL)
    ref = dense_cycle(s.rho, spec, j, cfg, sp, MODEL)
    np.testing.assert_allclose(got.rho, ref, atol=1e-12)


@pytest.mark.parametrize("backend", ["python", "cython"])
@pytest.mark.parametrize("cfg", CONFIGS)
def test_kernels_match_reference_composition(backend, cfg, rng):
    if backend == "cython" and kernels.compiled_cycle is None:
        pytest.skip("compiled kernel not built")
    kernel = kernels.get_cycle(backend)
    spec = MODEL.manifolds[0]
    sp = MODEL.species[0]
    s = random_density(spec, rng)
    prep = _prepare(spec, sp, cfg, MODEL)
    taus = cfg.tau_schedule.taus(cfg.n_cycles)
    got = _evolve(s.rho, prep, taus, [cfg.delta] * len(taus), kernel)
    ref = s
    for j in range(cfg.n_cycles):
        ref = run_cycle(ref, j, cfg, sp, MODEL)
    np.testing.assert_allclose(got, ref.rho, atol=1e-12)


def test_backend_selection():
    assert kernels.get_cycle("python") is kernels.python_cycle
    assert kernels.get_cycle(None) is kernels.cycle
    with pytest.raises(ValueError):
        kernels.get_cycle("fortran")


def test_single_cycle_sequence_equals_run_cycle():
    cfg = FeedbackConfig(n_cycles=1, tau_schedule=TauSchedule.fixed(55.0))
    res = run_sequence(MODEL, cfg)
    for sp in MODEL.species:
        for spec, st in zip(MODEL.manifolds, res.states[sp.label]):
            ref = run_cycle(thermal_manifold(spec), 0, cfg, sp, MODEL)
            np.testing.assert_allclose(st.rho, ref.rho, atol=1e-13)


def test_linear_schedule_inclusive():
    taus = TauSchedule.linear(30, 98).taus(44)
    assert taus[0] == 30 and taus[-1] == pytest.approx(98, abs=1e-12)
    assert np.allclose(np.diff(taus), 68 / 43)
    with pytest.raises(ConfigError):
        TauSchedule.linear(98, 30)
    with pytest.raises(ConfigError):
        TauSchedule.fixed(0)
    with pytest.raises(ConfigError):
        FeedbackConfig(n_cycles=0)


def test_trivial_couplings_leave_nuclei_alone(rng):
    model = EnsembleModel(A_c=0.0, A_nc=0.0, manifolds=[ManifoldSpec(20, -3, 3)])
    cfg = FeedbackConfig(n_cycles=1, noise=NoiseParams(Gamma=0.0, Gamma_opt=0.0))
    s = random_density(model.manifolds[0], rng)
    out = run_cycle(s, 0, cfg, model.species[0], model)
    # only the nuclear Zeeman phase acts on the nuclei: I_z populations are untouched
    np.testing.assert_allclose(np.diag(out.nuclear_marginal()), np.diag(s.nuclear_marginal()),
                               atol=1e-14)
    np.testing.assert_allclose(out.spin_expectation(), [0, 0, 0.5], atol=1e-14)


def limit_cycle_setup():
    """Ideal single-manifold feedback: no noise, tau = 1/(4 A_c), T = swap time."""
    A_c, A_nc = 0.63, 0.156
    spec = ManifoldSpec(300, -4, 4)
    model = EnsembleModel(A_c=A_c, A_nc=A_nc, xi=1.0, manifolds=[spec],
                          species=(Species("X", 29.0),))
    T = gates.swap_time(spec.I, 0, A_nc)
    cfg = FeedbackConfig(n_cycles=1, tau_schedule=TauSchedule.fixed(1e3 / (4 * A_c)), T=T,
                         noise=NoiseParams(Gamma=0.0, Gamma_opt=0.0),
                         ablations=Ablations(no_transverse_noise=True))
    return model, cfg


def nuclear_basis_state(spec, iz):
    W = spec.width
    rho = np.zeros((2 * W, 2 * W), complex)
    rho[iz - spec.iz_lo, iz - spec.iz_lo] = 1
    return ManifoldState(spec, rho)


@pytest.mark.parametrize("start", [-1, 1])
def test_limit_cycle_corrects_single_error(start):
    model, cfg = limit_cycle_setup()
    spec = model.manifolds[0]
    out = run_cycle(nuclear_basis_state(spec, start), 0, cfg, model.species[0], model)
    assert out.populations()[0 - spec.iz_lo] >= 0.99


def test_limit_cycle_from_lockpoint_splits():
    model, cfg = limit_cycle_setup()
    spec = model.manifolds[0]
    out = run_cycle(nuclear_basis_state(spec, 0), 0, cfg, model.species[0], model)
    pop = out.populations()
    assert pop[-1 - spec.iz_lo] == pytest.approx(0.5, abs=0.02)
    assert pop[1 - spec.iz_lo] == pytest.approx(0.5, abs=0.02)


SMALL = EnsembleModel.nominal(count=10, spacing=42)


def test_sequence_trace_and_diagnostics():
    cfg = FeedbackConfig(n_cycles=12)
    res = run_sequence(SMALL, cfg)
    assert len(res.diagnostics) == 2 * len(SMALL.manifolds)
    for d in res.diagnostics:
        assert 1 - 12 * 1e-6 <= d.trace <= 1 + 1e-12
        assert d.trace_leakage == pytest.approx(1 - d.trace)
    labels = [d.species for d in res.diagnostics]
    assert labels == ["As"] * 10 + ["In"] * 10


def test_phase_periodicity():
    cfg = FeedbackConfig(n_cycles=6, phi=0.4)
    a = run_sequence(SMALL, cfg)
    b = run_sequence(SMALL, cfg.replace(phi=0.4 + 2 * np.pi))
    for x, y in zip(a.states["In"], b.states["In"]):
        np.testing.assert_allclose(x.rho, y.rho, atol=1e-12)


def test_species_permutation():
    cfg = FeedbackConfig(n_cycles=5)
    a = run_sequence(SMALL, cfg)
    swapped = dataclasses.replace(SMALL, species=SMALL.species[::-1])
    swapped.manifolds = SMALL.manifolds
    b = run_sequence(swapped, cfg)
    for label in ("As", "In"):
        for x, y in zip(a.states[label], b.states[label]):
            np.testing.assert_array_equal(x.rho, y.rho)


def test_deterministic_and_thread_independent():
    cfg = FeedbackConfig(n_cycles=8)
    a = run_sequence(SMALL, cfg, threads=1)
    b = run_sequence(SMALL, cfg, threads=3)
    for x, y in zip(a.states["As"], b.states["As"]):
        np.testing.assert_array_equal(x.rho, y.rho)


def test_steady_state_under_doubling():
    cfg = FeedbackConfig(n_cycles=400, tau_schedule=TauSchedule.fixed(40.0))
    a = run_sequence(SMALL, cfg)
    b = run_sequence(SMALL, cfg.replace(n_cycles=800))
    from spinfeedback.probe import macrostate_distribution
    pa = macrostate_distribution(a)[1]
    pb = macrostate_distribution(b)[1]
    assert np.max(np.abs(pa - pb)) < 0.01 * np.max(pa)


def test_repeats_equal_longer_schedule():
    cfg = FeedbackConfig(n_cycles=5, tau_schedule=TauSchedule.fixed(50.0))
    a = run_sequence(SMALL, cfg, repeats=2)
    b = run_sequence(SMALL, cfg.replace(n_cycles=10))
    for x, y in zip(a.states["As"], b.states["As"]):
        np.testing.assert_allclose(x.rho, y.rho, atol=1e-14)


def test_initial_state_continues_evolution():
    cfg = FeedbackConfig(n_cycles=5, tau_schedule=TauSchedule.fixed(50.0))
    first = run_sequence(SMALL, cfg)
    cont = run_sequence(SMALL, cfg, initial=first)
    both = run_sequence(SMALL, cfg, repeats=2)
    for x, y in zip(cont.states["In"], both.states["In"]):
        np.testing.assert_allclose(x.rho, y.rho, atol=1e-14)


def test_window_margin_rule():
    model = EnsembleModel(manifolds=[ManifoldSpec(0, 0, 0, 0.0), ManifoldSpec(14, -1, 1, 0.3),
                                     ManifoldSpec(70, -5, 5, 0.7)])
    check_windows(model, [0.0], 2)
    check_windows(model, [1.0], 2)   # narrow window only needs to contain it
    with pytest.raises(ConfigError):
        check_windows(model, [1.5], 2)
    wide = EnsembleModel(manifolds=[ManifoldSpec(70, -5, 5, 1.0)])
    check_windows(wide, [3.0], 2)
    with pytest.raises(ConfigError):
        check_windows(wide, [3.5], 2)
    with pytest.raises(ConfigError):
        run_sequence(model, FeedbackConfig(n_cycles=1, delta=-0.63 * 2))


def test_single_species_ablation_uses_one_species():
    cfg = FeedbackConfig(n_cycles=2, ablations=Ablations(single_species=True))
    res = run_sequence(SMALL, cfg)
    assert list(res.states) == ["single"]
    assert res.species[0].omega_n == 29.0


def test_ablation_flags():
    assert Ablations.from_flags(["single_species", " no_nuclear_dephasing"]).active() == \
        ["no_nuclear_dephasing", "single_species"]
    with pytest.raises(ConfigError):
        Ablations.from_flags(["no_such_thing"])


def test_all_ablations_give_unitary_limit(rng):
    """With every flag set, all channels except reset are the identity."""
    model = MODEL
    cfg = FeedbackConfig(n_cycles=1, ablations=Ablations.all())
    spec = model.manifolds[0]
    sp = cfg.active_species(model)[0]
    s = random_density(spec, rng)
    got = run_cycle(s, 0, cfg, sp, model)
    r = s
    r = gates.apply_rotation(r, np.pi / 2, cfg.phi + gates.SENSE_AXIS_OFFSET)
    r = gates.apply_sense(r, 30.0, 0.0, model.A_c, sp.omega_n)
    p = gates.GateParams(T=cfg.T, omega_n=sp.omega_n, A_c=model.A_c, A_nc=model.A_nc, xi=model.xi)
    r = gates.apply_actuate(r, p)
    from spinfeedback.channels import reset_channel
    np.testing.assert_allclose(got.rho, reset_channel(r).rho, atol=1e-13)
