"""Fast invariant checks runnable from an installed package (``spinfeedback selftest``)."""
from __future__ import annotations

import math
import time

import numpy as np

from . import channels as ch
from . import gates, probe, semiclassical
from .dicke import ManifoldSpec, ManifoldState, degeneracy, thermal_manifold
from .engine import FeedbackConfig, TauSchedule, run_cycle
from .kernels import compiled_cycle, python_cycle


def _random_state(spec, rng):
    n = spec.dim
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return ManifoldState(spec, rho / np.trace(rho).real)


def check_completeness():
    for N in range(0, 25, 2):
        total = sum((2 * I + 1) * degeneracy(I, N) for I in range(N // 2 + 1))
        assert total == 2**N, N


def check_channels_cptp():
    rng = np.random.default_rng(7)
    spec = ManifoldSpec(6, -3, 3)
    params = ch.NoiseParams()
    maps = [
        ch.reset_channel,
        lambda s: ch.transverse_noise_channel(s, 60.0, params),
        lambda s: ch.optical_relaxation_channel(s, 86.0, 1.7),
        lambda s: ch.nuclear_dephasing_channel(s, 86.0, 6.0),
    ]
    for _ in range(20):
        s = _random_state(spec, rng)
        for f in maps:
            out = f(s)
            assert abs(out.trace - 1) < 1e-12
            assert out.hermiticity_error() < 1e-12
            assert out.min_eigenvalue() > -1e-12


def check_noise_limit():
    p = ch.NoiseParams()
    assert ch.transverse_noise_factor(0.0, 10, 0.0, p) == 1.0
    assert ch.transverse_noise_factor(50.0, 0, 0.0, p) == 1.0


def check_kernels_agree():
    spec = ManifoldSpec(42, -5, 5)
    cfg = FeedbackConfig(n_cycles=1, tau_schedule=TauSchedule.fixed(50.0))
    from .dicke import EnsembleModel
    model = EnsembleModel(manifolds=[spec])
    from .engine import _evolve, _prepare
    prep = _prepare(spec, model.species[0], cfg, model)
    rho0 = thermal_manifold(spec).rho
    ref = run_cycle(thermal_manifold(spec), 0, cfg, model.species[0], model).rho
    for k in (python_cycle, compiled_cycle):
        if k is None:
            continue
        got = _evolve(rho0, prep, [50.0], [0.0], k)
        assert np.max(np.abs(got - ref)) < 1e-12


def check_probe():
    grid = probe.uniform_grid(-250, 250, 400)
    uni = probe.SpectralDistribution(grid, np.full(400, 1 / 500))
    assert abs(probe.lddp_entropy(uni) - math.log(400)) < 1e-9
    g = probe.gaussian_distribution(5.0, np.arange(-60, 60.01, 0.25))
    fid = probe.synthesize_fid(g, np.arange(0, 200, 0.5))
    assert fid.values[0] == 0.5
    fit = probe.fit_stretched_exponential(fid)
    assert abs(fit.alpha - 2) < 0.05
    assert abs(fit.T2_star / (1e3 * math.sqrt(2) / (2 * math.pi * 5.0)) - 1) < 0.01


def check_semiclassical():
    A0 = 0.63
    p = semiclassical.SemiclassicalParams(A0, 0.039, 250 / A0)
    assert abs(p.T0 * semiclassical.rate(1.0, p) + 1) < 1e-12


def check_swap_gate():
    spec = ManifoldSpec(1, -1, 1)
    b = gates.build_actuation_blocks(spec, gates.GateParams(A_nc=1.0))
    U = b.propagator(100.0)
    assert np.allclose(U.conj().T @ U, np.eye(spec.dim), atol=1e-12)


CHECKS = [check_completeness, check_channels_cptp, check_noise_limit, check_kernels_agree,
          check_probe, check_semiclassical, check_swap_gate]


def run(stream=None) -> int:
    """Run every check; returns the number of failures."""
    failures = 0
    for check in CHECKS:
        t = time.perf_counter()
        try:
            check()
            status = "ok"
        except Exception as exc:  # noqa: BLE001 - report and continue
            failures += 1
            status = f"FAIL ({type(exc).__name__}: {exc})"
        if stream is not None:
            print(f"{check.__name__:28s} {status}  [{time.perf_counter() - t:.2f}s]", file=stream)
    return failures
