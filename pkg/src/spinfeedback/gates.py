"""Unitary primitives of one feedback cycle.

Units: frequencies in MHz (ordinary, not angular), times in ns at the API
and in microseconds internally; every propagator is ``exp(-2j*pi*H*t)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dicke import ManifoldSpec, ManifoldState

TWO_PI = 2.0 * np.pi

#: Axis-phase offset of the sensing pulse.  With right-handed rotations and
#: the up/down ordering used here, a bare R_x(pi/2) gives <S_x> = +sin/2 and
#: the loop anti-corrects; the offset restores <S_x> = -sin(2 pi A dIz tau)/2.
SENSE_AXIS_OFFSET = np.pi

#: Multiplier on the (A_nc/4) f flip-flop element.  0.5 puts full transfer at
#: T = 1/(2 f A_ff) = 2/(A_nc f) under exp(-2j pi H t).
FLIPFLOP_SCALE = 0.5

#: Axis phase of R_{-y}.
MINUS_Y = -np.pi / 2


def ns_to_us(t_ns: float) -> float:
    return t_ns * 1e-3


def rotation_matrix(angle: float, axis_phase: float = 0.0) -> np.ndarray:
    """``exp(-i angle/2 (cos(phi) sx + sin(phi) sy))`` on the electron."""
    c = np.cos(angle / 2)
    s = np.sin(angle / 2)
    return np.array(
        [[c, -1j * s * np.exp(-1j * axis_phase)],
         [-1j * s * np.exp(1j * axis_phase), c]],
        dtype=complex,
    )


def sense_pulse_matrix(phi: float = 0.0) -> np.ndarray:
    """Opening pi/2 pulse of the cycle for a programmed phase ``phi``."""
    return rotation_matrix(np.pi / 2, phi + SENSE_AXIS_OFFSET)


def rotate_blocks(rho: np.ndarray, r: np.ndarray, W: int) -> np.ndarray:
    """Conjugate ``rho`` by ``r (x) 1`` using the 2x2 block structure."""
    b = [[rho[:W, :W], rho[:W, W:]], [rho[W:, :W], rho[W:, W:]]]
    rc = r.conj()
    out = np.empty_like(rho)
    for a in range(2):
        for d in range(2):
            acc = 0
            for c in range(2):
                for e in range(2):
                    coef = r[a, c] * rc[d, e]
                    if coef != 0:
                        acc = acc + coef * b[c][e]
            out[a * W:(a + 1) * W, d * W:(d + 1) * W] = acc
    return out


def apply_rotation(state: ManifoldState, angle: float, axis_phase: float = 0.0) -> ManifoldState:
    r = rotation_matrix(angle, axis_phase)
    return ManifoldState(state.spec, rotate_blocks(state.rho, r, state.spec.width))


def sense_energies(spec: ManifoldSpec, delta: float, A_c: float, omega_n: float) -> np.ndarray:
    """Diagonal of ``(delta + A_c I_z) S_z + omega_n I_z`` in MHz, length 2W."""
    m = spec.iz.astype(float)
    shift = delta + A_c * m
    return np.concatenate([0.5 * shift + omega_n * m, -0.5 * shift + omega_n * m])


def sense_phases(spec: ManifoldSpec, tau: float, delta: float, A_c: float,
                 omega_n: float) -> np.ndarray:
    """``exp(-2j pi E tau)`` for the diagonal sensing Hamiltonian (tau in ns)."""
    E = sense_energies(spec, delta, A_c, omega_n)
    return np.exp(-1j * TWO_PI * E * ns_to_us(tau))


def apply_sense(state: ManifoldState, tau: float, delta: float, A_c: float,
                omega_n: float) -> ManifoldState:
    if tau < 0:
        raise ValueError("tau must be non-negative")
    ph = sense_phases(state.spec, tau, delta, A_c, omega_n)
    return ManifoldState(state.spec, ph[:, None] * state.rho * ph.conj()[None, :])


@dataclass(frozen=True)
class GateParams:
    delta: float = 0.0     # MHz
    tau: float = 30.0      # ns
    phi: float = 0.0       # rad
    T: float = 86.0        # ns
    omega_n: float = 29.0  # MHz
    A_c: float = 0.63
    A_nc: float = 0.156
    xi: float = 1.0
    coupling_scale: float = FLIPFLOP_SCALE

    def __post_init__(self):
        if self.tau < 0 or self.T < 0:
            raise ValueError("tau and T must be non-negative")


def enhancement_factor(I_eff: float, iz) -> tuple[np.ndarray, np.ndarray]:
    """Collective ``f = sqrt(I_eff(I_eff+1) - I_z(I_z+1))`` and a clamp mask."""
    iz = np.asarray(iz, dtype=float)
    arg = I_eff * (I_eff + 1) - iz * (iz + 1)
    clamped = arg < 0
    return np.sqrt(np.where(clamped, 0.0, arg)), clamped


def swap_time(I_eff: float, m: float, A_nc: float,
              coupling_scale: float = FLIPFLOP_SCALE) -> float:
    """Resonant full-transfer time (ns) between ``|up, m>`` and ``|down, m+1>``."""
    f, clamped = enhancement_factor(I_eff, [m])
    g = coupling_scale * A_nc / 4.0 * f[0]
    if g <= 0:
        raise ValueError("no flip-flop coupling at this I_z")
    return 1e3 / (4.0 * g)


@dataclass(frozen=True)
class BlockEigen:
    """Eigen-decomposition of the 2x2 flip-flop blocks of one manifold.

    Block ``k`` couples ``|up, iz_lo+k>`` and ``|down, iz_lo+k+1>``;
    ``eig_plus[k]`` belongs to eigenvector ``(cos theta, sin theta)``.
    ``single_up`` / ``single_down`` are the energies of the two unpaired
    edge states ``|up, iz_hi>`` and ``|down, iz_lo>``.
    """

    spec: ManifoldSpec
    eig_plus: np.ndarray
    eig_minus: np.ndarray
    theta: np.ndarray
    coupling: np.ndarray
    single_up: float
    single_down: float
    n_clamped: int

    def eigenvectors(self) -> np.ndarray:
        c, s = np.cos(self.theta), np.sin(self.theta)
        return np.stack([np.stack([c, s], -1), np.stack([-s, c], -1)], -1)

    def propagator_coefficients(self, T: float):
        """Sparse form of ``exp(-2j pi H T)`` (T in ns).

        Returns ``(diag, off, partner)``: row ``i`` of U has ``diag[i]`` at
        column ``i`` and ``off[i]`` at column ``partner[i]``.
        """
        W = self.spec.width
        t = ns_to_us(T)
        ep = np.exp(-1j * TWO_PI * self.eig_plus * t)
        em = np.exp(-1j * TWO_PI * self.eig_minus * t)
        c2 = np.cos(self.theta) ** 2
        s2 = np.sin(self.theta) ** 2
        cs = np.cos(self.theta) * np.sin(self.theta)
        diag = np.empty(2 * W, dtype=complex)
        off = np.zeros(2 * W, dtype=complex)
        partner = np.arange(2 * W, dtype=np.intp)
        k = np.arange(W - 1)
        a = k
        b = W + k + 1
        diag[a] = c2 * ep + s2 * em
        diag[b] = s2 * ep + c2 * em
        off[a] = cs * (ep - em)
        off[b] = cs * (ep - em)
        partner[a] = b
        partner[b] = a
        diag[W - 1] = np.exp(-1j * TWO_PI * self.single_up * t)
        diag[W] = np.exp(-1j * TWO_PI * self.single_down * t)
        return diag, off, partner

    def propagator(self, T: float) -> np.ndarray:
        """Dense propagator, for checks and small problems."""
        diag, off, partner = self.propagator_coefficients(T)
        n = diag.size
        U = np.zeros((n, n), dtype=complex)
        U[np.arange(n), np.arange(n)] = diag
        U[np.arange(n), partner] += np.where(partner != np.arange(n), off, 0)
        return U


def build_actuation_blocks(spec: ManifoldSpec, params: GateParams) -> BlockEigen:
    """Blocks of ``Omega S_z + omega_n I_z - (A_nc/4)(S+ I- + S- I+)`` at Omega = omega_n.

    ``I`` is replaced by ``sqrt(xi) I`` inside the enhancement factor.
    """
    W = spec.width
    wn = params.omega_n
    omega = wn  # Hartmann-Hahn resonance imposed
    m = spec.iz[:-1].astype(float)
    I_eff = np.sqrt(params.xi) * spec.I
    f, clamped = enhancement_factor(I_eff, m)
    g = -params.coupling_scale * params.A_nc / 4.0 * f
    e_up = 0.5 * omega + wn * m
    e_dn = -0.5 * omega + wn * (m + 1)
    mean = 0.5 * (e_up + e_dn)
    half = 0.5 * (e_up - e_dn)
    r = np.hypot(half, g)
    theta = 0.5 * np.arctan2(2 * g, e_up - e_dn)
    return BlockEigen(
        spec=spec,
        eig_plus=mean + r,
        eig_minus=mean - r,
        theta=theta,
        coupling=g,
        single_up=0.5 * omega + wn * spec.iz_hi,
        single_down=-0.5 * omega + wn * spec.iz_lo,
        n_clamped=int(clamped.sum()),
    ) if W > 1 else BlockEigen(
        spec=spec,
        eig_plus=np.zeros(0), eig_minus=np.zeros(0), theta=np.zeros(0),
        coupling=np.zeros(0),
        single_up=0.5 * omega + wn * spec.iz_hi,
        single_down=-0.5 * omega + wn * spec.iz_lo,
        n_clamped=0,
    )


def conjugate_sparse(rho: np.ndarray, diag, off, partner) -> np.ndarray:
    """``U rho U^dagger`` for U with at most one off-diagonal entry per row."""
    left = diag[:, None] * rho + off[:, None] * rho[partner, :]
    return left * diag.conj()[None, :] + left[:, partner] * off.conj()[None, :]


def apply_flipflop(state: ManifoldState, blocks: BlockEigen, T: float) -> ManifoldState:
    diag, off, partner = blocks.propagator_coefficients(T)
    return ManifoldState(state.spec, conjugate_sparse(state.rho, diag, off, partner))


def apply_actuate(state: ManifoldState, params: GateParams,
                  blocks: BlockEigen | None = None) -> ManifoldState:
    """``R_{-y}(pi/2)`` followed by the flip-flop propagator for time ``params.T``."""
    if blocks is None:
        blocks = build_actuation_blocks(state.spec, params)
    rotated = apply_rotation(state, np.pi / 2, MINUS_Y)
    return apply_flipflop(rotated, blocks, params.T)
