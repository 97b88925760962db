"""Non-unitary steps of the cycle as Kraus maps on a :class:`ManifoldState`.

Rates are ordinary rates in MHz used directly in exponents (``exp(-Gamma t)``,
t in microseconds), except inside the transverse-noise transfer function
where frequencies enter as angular quantities (see ``angular_rates``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dicke import ManifoldState
from .gates import TWO_PI, ns_to_us


#: Tolerances every channel meets on valid input states (checked in the tests).
TRACE_TOL = 1e-12
HERMITICITY_TOL = 1e-12
POSITIVITY_TOL = 1e-12


@dataclass(frozen=True)
class NoiseParams:
    Gamma: float = 6.0       # pure nuclear dephasing, MHz
    Gamma_opt: float = 1.7   # optically induced electron relaxation, MHz
    omega_n: float = 29.0    # MHz
    A_nc: float = 0.156      # MHz
    # multiply Gamma by 2 pi inside W(tau); omega_n and A_nc always are
    angular_rates: bool = True

    def __post_init__(self):
        for name in ("Gamma", "Gamma_opt", "omega_n", "A_nc"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def correlator_integral(tau: float, Gamma: float, omega: float) -> float:
    """``0.5 * int_0^tau int_0^tau exp(-Gamma|t1-t2|/2) cos(omega (t1-t2))``.

    All arguments in consistent units (tau in us, rates in rad/us).
    """
    g, w = Gamma, omega
    if tau == 0:
        return 0.0
    if max(g * tau, abs(w) * tau) < 1e-3:
        # Taylor series of 2 int_0^tau (tau-s) k(s) ds, halved
        return 0.5 * 2 * (tau**2 / 2 - (g / 2) * tau**3 / 6
                          + (g * g / 8 - w * w / 2) * tau**4 / 12)
    L = g * g / 4 + w * w
    e = math.exp(-g * tau / 2)
    lin = (g / 2) * tau / L
    osc = (g * w * e * math.sin(w * tau)
           + (g * g / 4 - w * w) * (1 - e * math.cos(w * tau))) / L**2
    return lin - osc


def noise_bracket(tau: float, params: NoiseParams) -> float:
    """``A_nc^2 * correlator_integral`` in rad^2 (tau in ns)."""
    g = TWO_PI * params.Gamma if params.angular_rates else params.Gamma
    w = TWO_PI * params.omega_n
    a = TWO_PI * params.A_nc
    return a * a * correlator_integral(ns_to_us(tau), g, w)


def transverse_noise_variance(tau: float, I: float, iz_second_moment: float,
                              params: NoiseParams) -> float:
    """Phase variance ``sigma_tau^2`` accumulated during sensing."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    amp = max(I * I - iz_second_moment, 0.0)
    return amp * noise_bracket(tau, params)


def transverse_noise_factor(tau: float, I: float, iz_second_moment: float,
                            params: NoiseParams) -> float:
    """Coherence transfer function ``W = exp(-sigma_tau^2 / 2)``."""
    return math.exp(-0.5 * transverse_noise_variance(tau, I, iz_second_moment, params))


# -- block-level maps (rho is 2W x 2W, electron-major) ------------------------

def _blocks(rho, W):
    return rho[:W, :W], rho[:W, W:], rho[W:, :W], rho[W:, W:]


def _assemble(uu, ud, du, dd):
    return np.block([[uu, ud], [du, dd]])


def reset_blocks(rho: np.ndarray, W: int) -> np.ndarray:
    uu, _, _, dd = _blocks(rho, W)
    out = np.zeros_like(rho)
    out[:W, :W] = uu + dd
    return out


def phase_flip_blocks(rho: np.ndarray, W: int, w: float) -> np.ndarray:
    uu, ud, du, dd = _blocks(rho, W)
    return _assemble(w * uu + (1 - w) * dd, w * ud, w * du, w * dd + (1 - w) * uu)


def gad_blocks(rho: np.ndarray, W: int, gamma: float) -> np.ndarray:
    """Generalized amplitude damping toward the maximally mixed electron."""
    uu, ud, du, dd = _blocks(rho, W)
    mix = 0.5 * gamma * (uu + dd)
    s = math.sqrt(1.0 - gamma)
    return _assemble((1 - gamma) * uu + mix, s * ud, s * du, (1 - gamma) * dd + mix)


def nuclear_dephasing_mask(iz: np.ndarray, factor: float) -> np.ndarray:
    m2 = np.concatenate([iz, iz])
    return np.where(m2[:, None] == m2[None, :], 1.0, factor)


# -- public channels -----------------------------------------------------------

def reset_channel(state: ManifoldState) -> ManifoldState:
    """Pump the electron to up; the nuclear marginal is kept exactly."""
    return ManifoldState(state.spec, reset_blocks(state.rho, state.spec.width))


def transverse_noise_channel(state: ManifoldState, tau: float, params: NoiseParams,
                             w: float | None = None) -> ManifoldState:
    """Electronic channel with Kraus set sqrt(W) 1, sqrt(1-W)|d><u|, sqrt(1-W)|u><d|.

    ``W`` is evaluated from the state's own ``<I_z^2>`` unless given.
    """
    if w is None:
        w = transverse_noise_factor(tau, state.spec.I, state.iz_moment(2), params)
    return ManifoldState(state.spec, phase_flip_blocks(state.rho, state.spec.width, w))


def optical_relaxation_gamma(T: float, Gamma_opt: float) -> float:
    if T < 0 or Gamma_opt < 0:
        raise ValueError("T and Gamma_opt must be non-negative")
    return -math.expm1(-Gamma_opt * ns_to_us(T))


def optical_relaxation_channel(state: ManifoldState, T: float,
                               Gamma_opt: float) -> ManifoldState:
    gamma = optical_relaxation_gamma(T, Gamma_opt)
    return ManifoldState(state.spec, gad_blocks(state.rho, state.spec.width, gamma))


def nuclear_dephasing_factor(T: float, Gamma: float) -> float:
    if T < 0 or Gamma < 0:
        raise ValueError("T and Gamma must be non-negative")
    return math.exp(-Gamma * ns_to_us(T) / 2)


def nuclear_dephasing_channel(state: ManifoldState, T: float, Gamma: float) -> ManifoldState:
    """Scale every I_z-off-diagonal element by ``exp(-Gamma T / 2)``."""
    d = nuclear_dephasing_factor(T, Gamma)
    mask = nuclear_dephasing_mask(state.spec.iz, d)
    return ManifoldState(state.spec, state.rho * mask)


# -- explicit Kraus sets (electron part; identity on the nuclei) ---------------

def reset_kraus() -> list[np.ndarray]:
    return [np.array([[1, 0], [0, 0]], complex), np.array([[0, 1], [0, 0]], complex)]


def transverse_noise_kraus(w: float) -> list[np.ndarray]:
    s = math.sqrt(1 - w)
    return [math.sqrt(w) * np.eye(2, dtype=complex),
            np.array([[0, 0], [s, 0]], complex),
            np.array([[0, s], [0, 0]], complex)]


def optical_relaxation_kraus(T: float, Gamma_opt: float) -> list[np.ndarray]:
    """Textbook generalized amplitude damping set with equilibrium 1/2."""
    g = optical_relaxation_gamma(T, Gamma_opt)
    p = 0.5
    a, b = math.sqrt(p), math.sqrt(1 - p)
    return [a * np.array([[1, 0], [0, math.sqrt(1 - g)]], complex),
            a * np.array([[0, math.sqrt(g)], [0, 0]], complex),
            b * np.array([[math.sqrt(1 - g), 0], [0, 1]], complex),
            b * np.array([[0, 0], [math.sqrt(g), 0]], complex)]


def nuclear_dephasing_kraus(T: float, Gamma: float, W: int) -> list[np.ndarray]:
    """Full-space (2W x 2W) Kraus set of the nuclear phase-damping channel."""
    e = math.exp(-Gamma * ns_to_us(T) / 2)
    ops = [math.sqrt(e) * np.eye(2 * W, dtype=complex)]
    s = math.sqrt(1 - e)
    for i in range(W):
        proj = np.zeros((W, W), complex)
        proj[i, i] = 1
        ops.append(s * np.kron(np.eye(2), proj))
    return ops
