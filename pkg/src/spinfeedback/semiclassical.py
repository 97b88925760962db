"""Coarse-grained mean-field rate equation for the macrostate ``<I_z>``.

Times are in ns throughout (rates in 1/ns); couplings in MHz; the diffusion
rate ``Gamma_d`` is given in Hz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .dicke import ConfigError

_MHZ_NS = 1e-3   # MHz * ns -> cycles
_HZ_NS = 1e-9    # Hz -> 1/ns


@dataclass(frozen=True)
class SemiclassicalParams:
    A0: float             # sensing coupling, MHz
    A_ff: float           # flip-flop coupling, MHz
    tau: float            # sensing time, ns
    Gamma_d: float = 0.0  # nuclear diffusion, Hz
    Iz_lock: float = 0.0

    def __post_init__(self):
        if self.A0 <= 0 or self.A_ff <= 0:
            raise ConfigError("A0 and A_ff must be positive")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.Gamma_d < 0:
            raise ConfigError("Gamma_d must be non-negative")

    @classmethod
    def from_model(cls, A_c: float, A_nc: float, tau: float, Gamma_d: float = 0.0,
                   Iz_lock: float = 0.0) -> "SemiclassicalParams":
        return cls(A_c, A_nc / 4.0, tau, Gamma_d, Iz_lock)

    @property
    def T0(self) -> float:
        """Cycle time at the optimal gain, ``1/(4 A0) + 1/(2 A_ff)``, in ns."""
        return (1.0 / (4 * self.A0) + 1.0 / (2 * self.A_ff)) / _MHZ_NS

    @property
    def optimal_tau(self) -> float:
        return 1.0 / (4 * self.A0) / _MHZ_NS

    @property
    def cycle(self) -> float:
        """``tau + 1/(2 A_ff)`` in ns."""
        return self.tau + 1.0 / (2 * self.A_ff) / _MHZ_NS

    @property
    def lattice_spacing(self) -> float:
        """Distance ``1/(A0 tau)`` between neighbouring stable points, in I_z."""
        return 1.0 / (self.A0 * self.tau * _MHZ_NS)


def _phase(delta_iz, p: SemiclassicalParams):
    return 2 * np.pi * p.A0 * p.tau * _MHZ_NS * np.asarray(delta_iz, dtype=float)


def directional_rates(delta_iz, params: SemiclassicalParams):
    """``W_pm = (1 -+ sin(2 pi A0 dIz tau)) / (2 tau + 1/A_ff)`` in 1/ns."""
    s = np.sin(_phase(delta_iz, params))
    den = 2 * params.cycle
    return (1 - s) / den, (1 + s) / den


def rate(iz_mean, params: SemiclassicalParams):
    """``d<I_z>/dt`` in 1/ns."""
    iz = np.asarray(iz_mean, dtype=float)
    out = (-np.sin(_phase(iz - params.Iz_lock, params)) / params.cycle
           - params.Gamma_d * _HZ_NS * iz)
    return float(out) if out.ndim == 0 else out


def rate_slope(iz_mean, params: SemiclassicalParams):
    k = 2 * np.pi * params.A0 * params.tau * _MHZ_NS
    iz = np.asarray(iz_mean, dtype=float)
    out = -k * np.cos(k * (iz - params.Iz_lock)) / params.cycle - params.Gamma_d * _HZ_NS
    return float(out) if out.ndim == 0 else out


class FixedPoint(NamedTuple):
    iz: float
    stable: bool


def find_stable_points(params: SemiclassicalParams, iz_range, points_per_period: int = 20,
                       xtol: float = 1e-13) -> list[FixedPoint]:
    """Zero crossings of :func:`rate` in ``iz_range`` (both kinds), sorted.

    A grid with at most ``1/(points_per_period A0 tau)`` spacing is scanned for
    sign changes, each refined by bracketing root search; stable iff the
    slope is negative.
    """
    lo, hi = map(float, iz_range)
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise ConfigError("iz_range must be a finite increasing pair")
    if points_per_period < 20:
        raise ConfigError("points_per_period must be at least 20")
    step = params.lattice_spacing / points_per_period
    n = int(math.ceil((hi - lo) / step)) + 1
    grid = np.linspace(lo, hi, max(n, 2))
    vals = rate(grid, params)
    roots = []
    for i in range(grid.size - 1):
        a, b = grid[i], grid[i + 1]
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0:
            roots.append(a)
        elif fa * fb < 0:
            roots.append(brentq(rate, a, b, args=(params,), xtol=xtol, rtol=4 * np.finfo(float).eps))
    if vals[-1] == 0.0:
        roots.append(grid[-1])
    return [FixedPoint(float(r), bool(rate_slope(r, params) < 0)) for r in roots]


class Trajectory(NamedTuple):
    times: np.ndarray  # ns
    iz: np.ndarray


def integrate_trajectory(iz0: float, params: SemiclassicalParams, t_end: float,
                         dt: float) -> Trajectory:
    """Fixed-step classical Runge-Kutta integration of :func:`rate` (ns)."""
    if dt <= 0 or t_end < 0:
        raise ConfigError("dt must be positive and t_end non-negative")
    if dt > 0.01 * params.cycle * (1 + 1e-12):
        raise ConfigError(f"dt={dt} ns exceeds 1% of the cycle time {params.cycle:.6g} ns")
    n = int(math.ceil(t_end / dt - 1e-9))
    times = np.arange(n + 1) * dt
    y = np.empty(n + 1)
    y[0] = x = float(iz0)
    for k in range(n):
        k1 = rate(x, params)
        k2 = rate(x + 0.5 * dt * k1, params)
        k3 = rate(x + 0.5 * dt * k2, params)
        k4 = rate(x + dt * k3, params)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        y[k + 1] = x
    return Trajectory(times, y)
