"""Pure numpy implementation of one fused feedback cycle.

Reference path and fallback for the compiled kernel in ``_cycle.pyx``; both
expose ``cycle`` with the same signature and semantics.
"""
from __future__ import annotations

import math

import numpy as np

from .channels import gad_blocks, phase_flip_blocks, reset_blocks
from .gates import conjugate_sparse, rotate_blocks


def nuclear_second_moment(rho: np.ndarray, W: int, iz: np.ndarray) -> float:
    p = np.real(np.diagonal(rho)[:W] + np.diagonal(rho)[W:])
    return float(np.dot(p, iz * iz) / p.sum())


def cycle(rho, W, iz, r1, phase, tn_I2, tn_B, r2, opt_gamma,
          ff_diag, ff_off, ff_partner, pd):
    """Apply sense, noise, rotate, relax, flip-flop, dephase and reset.

    ``tn_B`` is the noise bracket so that ``W = exp(-(I^2 - <I_z^2>) B / 2)``;
    the electron unitaries leave ``<I_z^2>`` unchanged, so it is taken from
    the input state.  Returns a new array.
    """
    w = 1.0
    if tn_B != 0.0:
        iz2 = nuclear_second_moment(rho, W, iz)
        w = math.exp(-0.5 * max(tn_I2 - iz2, 0.0) * tn_B)
    rho = rotate_blocks(rho, r1, W)
    rho = phase[:, None] * rho * phase.conj()[None, :]
    if w != 1.0:
        rho = phase_flip_blocks(rho, W, w)
    rho = rotate_blocks(rho, r2, W)
    if opt_gamma != 0.0:
        rho = gad_blocks(rho, W, opt_gamma)
    rho = conjugate_sparse(rho, ff_diag, ff_off, ff_partner)
    if pd != 1.0:
        m2 = np.concatenate([iz, iz])
        rho = rho * np.where(m2[:, None] == m2[None, :], 1.0, pd)
    return reset_blocks(rho, W)
