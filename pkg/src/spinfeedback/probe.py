"""Observables derived from evolved states: p(A_c dI_z), FID, T2*, entropy."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks

TWO_PI = 2.0 * np.pi
LDDP_RANGE = (-250.0, 250.0)
LDDP_POINTS = 400
LDDP_MEASURE = 1.0 / (LDDP_RANGE[1] - LDDP_RANGE[0])  # 2 GHz^-1 in 1/MHz


class NumericalError(RuntimeError):
    """A numerical stage (fit, transform) could not produce a usable result."""


@dataclass
class SpectralDistribution:
    """Density on a uniform frequency grid (MHz, 1/MHz).

    Each grid point stands for a cell of width ``step`` centred on it.
    """

    freqs: np.ndarray
    dens: np.ndarray

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.dens = np.asarray(self.dens, dtype=float)
        if self.freqs.shape != self.dens.shape or self.freqs.ndim != 1:
            raise ValueError("freqs and dens must be 1-D arrays of equal length")
        if self.freqs.size >= 2:
            d = np.diff(self.freqs)
            if not np.allclose(d, d[0], rtol=1e-9, atol=1e-12) or d[0] <= 0:
                raise ValueError("frequency grid must be uniform and increasing")

    @property
    def step(self) -> float:
        return float(self.freqs[1] - self.freqs[0]) if self.freqs.size > 1 else 1.0

    @property
    def masses(self) -> np.ndarray:
        return self.dens * self.step

    def integral(self) -> float:
        return float(np.trapezoid(self.dens, self.freqs))

    def normalized(self) -> "SpectralDistribution":
        return SpectralDistribution(self.freqs, self.dens / self.masses.sum())

    def mean(self) -> float:
        m = self.masses
        return float(np.dot(m, self.freqs) / m.sum())

    def std(self) -> float:
        m = self.masses / self.masses.sum()
        mu = np.dot(m, self.freqs)
        return float(math.sqrt(max(np.dot(m, (self.freqs - mu) ** 2), 0.0)))


def uniform_grid(fmin: float, fmax: float, n: int) -> np.ndarray:
    if n < 2 or fmax <= fmin:
        raise ValueError("grid needs n >= 2 points and fmax > fmin")
    return np.linspace(fmin, fmax, n)


def rebin(p: SpectralDistribution, grid: np.ndarray, cell: float | None = None) -> SpectralDistribution:
    """Mass-conserving transfer onto ``grid`` by exact cell overlap.

    Source points are boxes of width ``cell`` (default ``p.step``); mass
    falling outside the target range is dropped and the result renormalized.
    """
    grid = np.asarray(grid, dtype=float)
    h = float(grid[1] - grid[0])
    edges = np.concatenate([grid - h / 2, [grid[-1] + h / 2]])
    w = p.step if cell is None else cell
    lo = p.freqs - w / 2
    hi = p.freqs + w / 2
    mass = p.masses
    keep = mass > 0
    lo, hi, mass = lo[keep], hi[keep], mass[keep]
    # cumulative mass function of the piecewise-constant source, at the edges
    cum = np.zeros(edges.size)
    for a, b, m in zip(lo, hi, mass):
        cum += m * np.clip((edges - a) / (b - a), 0.0, 1.0)
    out = np.diff(cum)
    total = out.sum()
    if total <= 0:
        raise ValueError("distribution has no mass inside the target grid")
    return SpectralDistribution(grid, out / total / h)


def macrostate_distribution(result) -> tuple[np.ndarray, np.ndarray]:
    """Weighted, species-averaged ``p(I_z)`` on the integer lattice.

    Sum over manifolds of ``w'_I <I,I_z|rho_I|I,I_z>``, equal-weight average
    over species.  Returns ``(iz, prob)`` with ``prob`` summing to one.
    """
    if not result.states:
        raise ValueError("no evolved states")
    lo = min(s.spec.iz_lo for sts in result.states.values() for s in sts)
    hi = max(s.spec.iz_hi for sts in result.states.values() for s in sts)
    iz = np.arange(lo, hi + 1)
    prob = np.zeros(iz.size)
    nsp = len(result.states)
    for label in result.states:
        for s in result.states[label]:
            prob[s.spec.iz_lo - lo: s.spec.iz_hi - lo + 1] += s.spec.weight * s.populations() / nsp
    total = prob.sum()
    if total <= 0:
        raise ValueError("evolved states carry no weight")
    return iz, prob / total


def lattice_distribution(iz, prob, A_c: float, lock: float = 0.0,
                         pad: int = 1) -> SpectralDistribution:
    """Point masses at ``A_c (I_z - lock)`` as a density with step ``A_c``.

    ``pad`` zero cells are added on each side so that the trapezoid integral
    equals the point-mass sum.
    """
    if A_c <= 0:
        raise ValueError("A_c must be positive to map I_z onto frequency")
    iz = np.asarray(iz)
    prob = np.asarray(prob, dtype=float)
    full = np.arange(iz[0] - pad, iz[-1] + pad + 1)
    dens = np.zeros(full.size)
    dens[pad:pad + iz.size] = prob / A_c
    return SpectralDistribution(A_c * (full - lock), dens)


def extract_p(result, grid: np.ndarray | None = None) -> SpectralDistribution:
    """Frequency distribution ``p(A_c dI_z)`` of an evolved sequence.

    Without ``grid`` the native lattice (step ``A_c``) is returned, which is
    exact for FID synthesis; with a grid each macrostate is spread over a
    cell of width ``A_c`` and transferred by exact overlap.
    """
    model = result.model
    iz, prob = macrostate_distribution(result)
    p = lattice_distribution(iz, prob, model.A_c, result.lockpoint)
    return p if grid is None else rebin(p, grid)


def gaussian_distribution(sigma: float, grid: np.ndarray, mu: float = 0.0) -> SpectralDistribution:
    """Gaussian cell masses on ``grid`` (exact via erf over each cell)."""
    from scipy.special import erf

    grid = np.asarray(grid, dtype=float)
    h = grid[1] - grid[0]
    edges = np.concatenate([grid - h / 2, [grid[-1] + h / 2]])
    cdf = 0.5 * (1 + erf((edges - mu) / (sigma * math.sqrt(2))))
    mass = np.diff(cdf)
    return SpectralDistribution(grid, mass / mass.sum() / h)


def thermal_distribution(N: int, A_c: float, grid: np.ndarray | None = None,
                         spin: float = 1.5) -> SpectralDistribution:
    """Untruncated infinite-temperature ``p`` with variance ``N j(j+1)/3``.

    ``spin = 3/2`` gives the ``5N/4`` variance used for the measured ensemble.
    """
    sigma = A_c * math.sqrt(N * spin * (spin + 1) / 3)
    if grid is None:
        grid = np.arange(-8 * sigma, 8 * sigma + A_c / 2, A_c / 2)
    return gaussian_distribution(sigma, grid)


@dataclass
class FidTrace:
    times: np.ndarray      # ns
    values: np.ndarray     # <S_z>
    omega_serr: float = 60.0  # MHz

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have equal length")
        if np.any(np.abs(self.values) > 0.5 + 1e-9):
            raise ValueError("|<S_z>| exceeds 1/2")

    def is_uniform(self) -> bool:
        d = np.diff(self.times)
        return d.size > 0 and d[0] > 0 and bool(np.allclose(d, d[0], rtol=1e-6, atol=1e-12))


def synthesize_fid(p: SpectralDistribution, times, omega_serr: float = 60.0) -> FidTrace:
    """``<S_z(t)> = 1/2 sum_k m_k cos(2 pi (f_k + omega_serr) t)`` (t in ns)."""
    t = np.asarray(times, dtype=float) * 1e-3
    m = p.masses
    nz = m != 0
    m = m[nz] / m[nz].sum()
    f = p.freqs[nz] + omega_serr
    vals = np.empty(t.size)
    for start in range(0, t.size, 256):
        tt = t[start:start + 256]
        vals[start:start + 256] = 0.5 * np.cos(TWO_PI * np.outer(tt, f)) @ m
    vals = np.clip(vals, -0.5, 0.5)
    return FidTrace(np.asarray(times, dtype=float), vals, omega_serr)


def probe_times(p: SpectralDistribution, n: int = 600, span: float = 5.0,
                omega_serr: float = 60.0) -> np.ndarray:
    """Uniform probe delays (ns) covering ``span`` Gaussian-equivalent T2*.

    The step resolves both the carrier and the distribution's extent.
    """
    sd = max(p.std(), 1e-6)
    t2 = 1e3 / (math.sqrt(2) * math.pi * sd)
    fmax = omega_serr + max(abs(p.freqs[0]), abs(p.freqs[-1]))
    t_end = span * t2
    dt = min(t_end / (n - 1), 1e3 / (8 * fmax))
    m = int(math.ceil(t_end / dt)) + 1
    return np.arange(m) * dt


class FitResult(NamedTuple):
    T2_star: float    # ns
    alpha: float
    amplitude: float
    residual_norm: float
    converged: bool

    def as_dict(self) -> dict:
        return {k: (bool(v) if k == "converged" else float(v)) for k, v in self._asdict().items()}


def _envelope_guess(fid: FidTrace) -> float:
    t = fid.times
    c = np.cos(TWO_PI * fid.omega_serr * t * 1e-3)
    ok = np.abs(c) >= 0.5
    env = np.where(ok, fid.values / (0.5 * np.where(ok, c, 1.0)), np.nan)
    idx = np.flatnonzero(ok & (env < 1 / math.e))
    if idx.size == 0:
        return float(t[-1])
    k = idx[0]
    prev = np.flatnonzero(ok[:k])
    if prev.size == 0:
        return float(max(t[k], t[1] if t.size > 1 else 1.0))
    j = prev[-1]
    e0, e1 = env[j], env[k]
    frac = (e0 - 1 / math.e) / (e0 - e1) if e0 != e1 else 0.0
    return float(max(t[j] + frac * (t[k] - t[j]), 1e-6))


def fit_stretched_exponential(fid: FidTrace, max_nfev: int = 2000) -> FitResult:
    """Least squares of ``A cos(2 pi w t) exp(-(t/T2)^alpha)`` with known ``w``."""
    t = fid.times
    y = fid.values
    if t.size < 20:
        raise NumericalError("need at least 20 samples to fit")
    carrier = np.cos(TWO_PI * fid.omega_serr * t * 1e-3)
    scale = float(t[-1]) if t[-1] > 0 else 1.0
    ts = t / scale

    def resid(x):
        A, T2, a = x
        return A * carrier * np.exp(-np.power(ts / T2, a)) - y

    g0 = _envelope_guess(fid) / scale
    best = None
    for f in (1.0, 0.5, 2.0):
        x0 = [0.5, min(max(g0 * f, 1e-6), 1e3), 1.5]
        try:
            r = least_squares(resid, x0, bounds=([-np.inf, 1e-9, 0.3], [np.inf, np.inf, 4.0]),
                              x_scale=[0.5, max(x0[1], 1e-3), 1.0], max_nfev=max_nfev,
                              xtol=1e-12, ftol=1e-12, gtol=1e-12)
        except ValueError:
            continue
        if best is None or r.cost < best.cost:
            best = r
    if best is None:
        return FitResult(float("nan"), float("nan"), float("nan"), float("inf"), False)
    A, T2, a = best.x
    return FitResult(float(T2 * scale), float(a), float(A),
                     float(np.linalg.norm(best.fun)), bool(best.success))


def fft_to_distribution(fid: FidTrace) -> SpectralDistribution:
    """Even-extended cosine transform of the FID, shifted by the serrodyne.

    Grid step is ``1/(n dt)``; the returned axis spans ``[-omega_serr,
    nyquist - omega_serr)``.  Requires ``omega_serr`` to exceed the half-width
    of the distribution so the mirror image stays separate.
    """
    if not fid.is_uniform():
        raise ValueError("FID must be sampled on a uniform time grid")
    n = fid.times.size
    dt = (fid.times[1] - fid.times[0]) * 1e-3
    v = fid.values.copy()
    if fid.times[0] != 0:
        raise ValueError("FID must start at zero delay")
    spec = 2 * np.real(np.fft.fft(v)) - v[0]
    nu = np.fft.fftfreq(n, d=dt)
    half = nu >= 0
    nu, spec = nu[half], spec[half]
    f = nu - fid.omega_serr
    dens = np.abs(spec)
    p = SpectralDistribution(f, dens)
    return SpectralDistribution(f, dens / p.masses.sum())


def lddp_entropy(p: SpectralDistribution, m_density: float = LDDP_MEASURE,
                 n_points: int = LDDP_POINTS, frange=LDDP_RANGE) -> float:
    """``log N - int p log(p/m) df`` with p rebinned to ``n_points`` cells over ``frange``."""
    width = frange[1] - frange[0]
    h = width / n_points
    grid = frange[0] + h * (np.arange(n_points) + 0.5)
    q = rebin(p, grid)
    d = q.dens
    nz = d > 0
    return float(math.log(n_points) - np.sum(d[nz] * np.log(d[nz] / m_density)) * h)


class Width(NamedTuple):
    fwhm: float
    multimodal: bool


def fwhm(p: SpectralDistribution) -> Width:
    """Full width at half of the global maximum, linearly interpolated."""
    d = p.dens
    f = p.freqs
    k = int(np.argmax(d))
    half = d[k] / 2
    i = k
    while i > 0 and d[i - 1] >= half:
        i -= 1
    j = k
    while j < d.size - 1 and d[j + 1] >= half:
        j += 1
    if i > 0:
        left = f[i - 1] + (half - d[i - 1]) / (d[i] - d[i - 1]) * (f[i] - f[i - 1])
    else:
        left = f[0] - p.step / 2
    if j < d.size - 1:
        right = f[j] + (d[j] - half) / (d[j] - d[j + 1]) * (f[j + 1] - f[j])
    else:
        right = f[-1] + p.step / 2
    outside = np.concatenate([d[:max(i - 1, 0)], d[j + 2:]])
    multimodal = bool(outside.size and outside.max() >= half)
    return Width(float(right - left), multimodal)


@dataclass
class Mode:
    peak: float       # MHz, location of the local maximum
    center: float     # MHz, centroid of the contiguous part above half height
    centroid: float   # MHz, mass centroid over the mode's basin
    height: float
    weight: float     # probability mass of the basin
    width: float      # FWHM of the mode, MHz


def _core_center(p: SpectralDistribution, k: int) -> float:
    d = p.dens
    half = d[k] / 2
    i = j = k
    while i > 0 and d[i - 1] >= half:
        i -= 1
    while j < d.size - 1 and d[j + 1] >= half:
        j += 1
    seg = slice(i, j + 1)
    return float(np.dot(d[seg], p.freqs[seg]) / d[seg].sum())


def find_modes(p: SpectralDistribution, rel_height: float = 0.05,
               rel_prominence: float = 0.5) -> list[Mode]:
    """Local maxima above ``rel_height`` of the global max with prominence
    at least ``rel_prominence`` of their own height.  Basins split at the
    minima between neighbouring modes.  Sorted by frequency.

    ``center`` is robust to the lattice quantization of ``peak`` and to the
    skewed tails that truncated windows leave in ``centroid``.
    """
    d = np.concatenate([[0.0], p.dens, [0.0]])
    peaks, props = find_peaks(d, height=rel_height * d.max(), prominence=0)
    keep = props["prominences"] >= rel_prominence * props["peak_heights"]
    peaks = peaks[keep] - 1
    if peaks.size == 0:
        return []
    dens = p.dens
    bounds = [0]
    for a, b in zip(peaks[:-1], peaks[1:]):
        bounds.append(a + int(np.argmin(dens[a:b + 1])))
    bounds.append(dens.size)
    out = []
    m = p.masses / p.masses.sum()
    for k, pk in enumerate(peaks):
        lo, hi = bounds[k], bounds[k + 1]
        seg = slice(lo, hi)
        mass = m[seg].sum()
        cen = float(np.dot(m[seg], p.freqs[seg]) / mass) if mass > 0 else float(p.freqs[pk])
        sub = SpectralDistribution(p.freqs[seg], dens[seg])
        out.append(Mode(float(p.freqs[pk]), _core_center(p, pk), cen, float(dens[pk]),
                        float(mass), fwhm(sub).fwhm))
    return out


def estimate_N(T2_star: float, A_c: float, spin: float = 1.5) -> float:
    """Ensemble size from a thermal Gaussian T2* (ns) and A_c (MHz)."""
    if T2_star <= 0 or A_c <= 0:
        raise ValueError("T2_star and A_c must be positive")
    sigma = 1.0 / (math.sqrt(2) * math.pi * A_c * T2_star * 1e-3)
    return sigma**2 * 3 / (spin * (spin + 1))


@dataclass
class ProbeSummary:
    T2_star: float
    alpha: float
    fwhm: float
    entropy: float
    fit: FitResult
    fid: FidTrace
    p: SpectralDistribution


def analyse(p: SpectralDistribution, omega_serr: float = 60.0, times=None) -> ProbeSummary:
    """FID synthesis, stretched-exponential fit, FWHM and LDDP entropy of ``p``."""
    if times is None:
        times = probe_times(p, omega_serr=omega_serr)
    fid = synthesize_fid(p, times, omega_serr)
    fit = fit_stretched_exponential(fid)
    return ProbeSummary(fit.T2_star, fit.alpha, fwhm(p).fwhm, lddp_entropy(p), fit, fid, p)
