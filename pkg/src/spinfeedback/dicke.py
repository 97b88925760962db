"""Dicke-manifold bookkeeping for an ensemble of N spin-1/2 nuclei.

The ensemble Hilbert space splits into manifolds of total angular momentum
``I`` (integer, ``0 <= I <= N/2`` for even ``N``), each repeated
``degeneracy(I, N)`` times.  Only a handful of manifolds are simulated; each
one carries a statistical weight and a truncated ``I_z`` window.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

#: Largest N for which degeneracies are computed with exact integers.
EXACT_N_MAX = 24

#: Above this N the closed-form approximate weights are used when sampling.
APPROX_WEIGHT_N_MIN = 30_000


class ConfigError(ValueError):
    """Invalid model or run configuration."""


def _check_domain(I: int, N: int) -> None:
    if N < 0 or N % 2:
        raise ValueError(f"N must be a non-negative even integer, got {N}")
    if I < 0 or I > N // 2 or int(I) != I:
        raise ValueError(f"I must be an integer in [0, N/2], got I={I}, N={N}")


def log_degeneracy(I: int, N: int) -> float:
    """Natural log of the number of copies of the spin-``I`` manifold."""
    _check_domain(I, N)
    h = N // 2
    return float(
        gammaln(N + 1) + math.log(2 * I + 1) - gammaln(h - I + 1) - gammaln(h + I + 2)
    )


def degeneracy(I: int, N: int) -> int | float:
    """Multiplicity ``N!(2I+1)/((N/2-I)!(N/2+I+1)!)`` of manifold ``I``.

    Exact integer for ``N <= 24``; a float from log-gamma otherwise (may be
    ``inf`` for very large N, use :func:`log_degeneracy` there).
    """
    _check_domain(I, N)
    if N <= EXACT_N_MAX:
        h = N // 2
        num = math.factorial(N) * (2 * I + 1)
        den = math.factorial(h - I) * math.factorial(h + I + 1)
        q, r = divmod(num, den)
        assert r == 0
        return q
    return math.exp(log_degeneracy(I, N))


def weight_exact(I: int, N: int) -> float:
    """Combined weight ``w' = (2I+1) D_{I,N} / 2^N`` (probability of manifold I)."""
    _check_domain(I, N)
    if N <= EXACT_N_MAX:
        return (2 * I + 1) * degeneracy(I, N) / 2**N
    return math.exp(math.log(2 * I + 1) + log_degeneracy(I, N) - N * math.log(2.0))


def weight_approx(I, N):
    """Large-N closed form ``2^(5/2) I (2I+1) / (sqrt(pi) N^(3/2)) exp(-2 I^2 / N)``.

    Accepts scalars or arrays.
    """
    I = np.asarray(I, dtype=float)
    w = 2**2.5 * I * (2 * I + 1) / (math.sqrt(math.pi) * N**1.5) * np.exp(-2 * I**2 / N)
    return float(w) if w.ndim == 0 else w


@dataclass(frozen=True)
class ManifoldSpec:
    """One simulated manifold: total spin ``I``, ``I_z`` window and weight."""

    I: int
    iz_lo: int
    iz_hi: int
    weight: float = 1.0

    def __post_init__(self):
        if self.I < 0:
            raise ConfigError(f"I must be non-negative, got {self.I}")
        if not (-self.I <= self.iz_lo <= self.iz_hi <= self.I):
            raise ConfigError(
                f"invalid window [{self.iz_lo}, {self.iz_hi}] for I={self.I}"
            )
        if not (0.0 <= self.weight <= 1.0):
            raise ConfigError(f"weight must lie in [0, 1], got {self.weight}")

    @property
    def width(self) -> int:
        return self.iz_hi - self.iz_lo + 1

    @property
    def dim(self) -> int:
        return 2 * self.width

    @property
    def iz(self) -> np.ndarray:
        return np.arange(self.iz_lo, self.iz_hi + 1)


@dataclass
class ManifoldState:
    """Electron (x) nuclear density matrix restricted to one manifold window.

    Basis index is ``e * W + (I_z - iz_lo)`` with ``e = 0`` for electron up.
    """

    spec: ManifoldSpec
    rho: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        if self.rho.shape != (self.spec.dim, self.spec.dim):
            raise ValueError(
                f"rho has shape {self.rho.shape}, expected {(self.spec.dim,) * 2}"
            )

    def copy(self) -> "ManifoldState":
        return ManifoldState(self.spec, self.rho.copy())

    def blocks(self):
        """Views ``(uu, ud, du, dd)`` of the four electron blocks."""
        W = self.spec.width
        r = self.rho
        return r[:W, :W], r[:W, W:], r[W:, :W], r[W:, W:]

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.rho)))

    def nuclear_marginal(self) -> np.ndarray:
        """Partial trace over the electron (W x W)."""
        uu, _, _, dd = self.blocks()
        return uu + dd

    def electron_marginal(self) -> np.ndarray:
        uu, ud, du, dd = self.blocks()
        return np.array(
            [[np.trace(uu), np.trace(ud)], [np.trace(du), np.trace(dd)]]
        )

    def populations(self) -> np.ndarray:
        """Diagonal of the nuclear marginal, indexed by ``I_z - iz_lo``."""
        return np.real(np.diag(self.nuclear_marginal())).copy()

    def iz_moment(self, k: int = 1) -> float:
        p = self.populations()
        return float(np.dot(p, self.spec.iz.astype(float) ** k) / p.sum())

    def spin_expectation(self) -> np.ndarray:
        """``(<S_x>, <S_y>, <S_z>)`` of the electron."""
        e = self.electron_marginal()
        return np.array([e[0, 1].real, -e[0, 1].imag, 0.5 * (e[0, 0] - e[1, 1]).real])

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    def min_eigenvalue(self) -> float:
        h = 0.5 * (self.rho + self.rho.conj().T)
        return float(np.linalg.eigvalsh(h)[0])


@dataclass(frozen=True)
class Species:
    label: str
    omega_n: float  # MHz

    def __post_init__(self):
        if self.omega_n <= 0:
            raise ConfigError(f"omega_n must be positive for species {self.label}")


DEFAULT_SPECIES = (Species("As", 25.3), Species("In", 32.7))


@dataclass
class EnsembleModel:
    """Global ensemble constants plus the list of sampled manifolds."""

    N: int = 49_000
    A_c: float = 0.63
    A_nc: float = 0.156
    xi: float = 0.42
    species: tuple = DEFAULT_SPECIES
    manifolds: list = field(default_factory=list)

    def __post_init__(self):
        if self.N <= 0 or self.N % 2:
            raise ConfigError(f"N must be a positive even integer, got {self.N}")
        if self.A_c < 0:
            raise ConfigError("A_c must be non-negative")
        if self.A_nc < 0:
            raise ConfigError("A_nc must be non-negative")
        if not (0 < self.xi <= 1):
            raise ConfigError("xi must lie in (0, 1]")
        self.species = tuple(self.species)
        if not self.species:
            raise ConfigError("at least one species is required")

    @classmethod
    def nominal(cls, count: int = 46, spacing: int = 14, window_fraction: float = 1 / 14,
                **kw) -> "EnsembleModel":
        model = cls(**kw)
        model.manifolds = sample_manifolds(model.N, count, spacing, window_fraction)
        return model


def sample_manifolds(N: int, count: int, spacing: int, window_fraction: float,
                     exact: bool | None = None) -> list[ManifoldSpec]:
    """Manifolds ``I = 0, spacing, 2*spacing, ...`` with renormalized weights.

    Windows are ``I_z in [-floor(I*f), floor(I*f)]``.  Weights come from the
    closed-form approximation for ``N >= APPROX_WEIGHT_N_MIN`` and from the
    exact log-space expression otherwise (override with ``exact``); the
    sampled weights are rescaled to sum to one, preserving ratios.
    """
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    if spacing < 1:
        raise ConfigError(f"spacing must be >= 1, got {spacing}")
    if not (0 < window_fraction <= 1):
        raise ConfigError(f"window_fraction must lie in (0, 1], got {window_fraction}")
    if N % 2 or N <= 0:
        raise ConfigError(f"N must be a positive even integer, got {N}")
    Is = [k * spacing for k in range(count)]
    if Is[-1] > N // 2:
        raise ConfigError(f"largest manifold I={Is[-1]} exceeds N/2={N // 2}")
    if exact is None:
        exact = N < APPROX_WEIGHT_N_MIN
    if exact:
        raw = np.array([weight_exact(I, N) for I in Is])
    else:
        raw = weight_approx(np.array(Is, dtype=float), N)
    total = math.fsum(raw)
    if total <= 0:
        raise ConfigError("sampled manifolds carry zero total weight")
    out = []
    for I, w in zip(Is, raw):
        h = math.floor(I * window_fraction + 1e-12)
        out.append(ManifoldSpec(I, -h, h, float(w / total)))
    return out


def thermal_manifold(spec: ManifoldSpec) -> ManifoldState:
    """Electron up, nuclei maximally mixed over the window."""
    W = spec.width
    rho = np.zeros((2 * W, 2 * W), dtype=complex)
    rho[np.arange(W), np.arange(W)] = 1.0 / W
    return ManifoldState(spec, rho)
