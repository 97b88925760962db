# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled fused feedback cycle; same contract as ``_cycle_py.cycle``."""
import numpy as np

from libc.math cimport exp

ctypedef double complex cplx


cdef inline void _rot4(cplx[:, ::1] r, cplx* x) noexcept nogil:
    # x = [uu, ud, du, dd]  ->  r x r^dagger on the electron index
    cdef cplx t0 = r[0, 0] * x[0] + r[0, 1] * x[2]
    cdef cplx t1 = r[0, 0] * x[1] + r[0, 1] * x[3]
    cdef cplx t2 = r[1, 0] * x[0] + r[1, 1] * x[2]
    cdef cplx t3 = r[1, 0] * x[1] + r[1, 1] * x[3]
    cdef cplx c00 = r[0, 0].conjugate()
    cdef cplx c01 = r[0, 1].conjugate()
    cdef cplx c10 = r[1, 0].conjugate()
    cdef cplx c11 = r[1, 1].conjugate()
    x[0] = t0 * c00 + t1 * c01
    x[1] = t0 * c10 + t1 * c11
    x[2] = t2 * c00 + t3 * c01
    x[3] = t2 * c10 + t3 * c11


def cycle(rho_in, Py_ssize_t W, iz_in, r1_in, phase_in, double tn_I2, double tn_B,
          r2_in, double opt_gamma, diag_in, off_in, partner_in, double pd):
    cdef cplx[:, ::1] rho = np.array(rho_in, dtype=np.complex128, order="C", copy=True)
    cdef double[::1] iz = np.ascontiguousarray(iz_in, dtype=np.float64)
    cdef cplx[:, ::1] r1 = np.ascontiguousarray(r1_in, dtype=np.complex128)
    cdef cplx[:, ::1] r2 = np.ascontiguousarray(r2_in, dtype=np.complex128)
    cdef cplx[::1] ph = np.ascontiguousarray(phase_in, dtype=np.complex128)
    cdef cplx[::1] ud_ = np.ascontiguousarray(diag_in, dtype=np.complex128)
    cdef cplx[::1] uo = np.ascontiguousarray(off_in, dtype=np.complex128)
    cdef Py_ssize_t[::1] partner = np.ascontiguousarray(partner_in, dtype=np.intp)
    cdef Py_ssize_t n = 2 * W
    cdef Py_ssize_t i, j, a, b
    cdef double w = 1.0, s = 1.0, ptot = 0.0, pm2 = 0.0, p
    cdef double amp
    cdef cplx x[4]
    cdef cplx mix, xa, xb, da, db, oa, ob
    out_arr = np.zeros((n, n), dtype=np.complex128)
    cdef cplx[:, ::1] out = out_arr

    with nogil:
        if tn_B != 0.0:
            for i in range(W):
                p = rho[i, i].real + rho[W + i, W + i].real
                ptot += p
                pm2 += p * iz[i] * iz[i]
            amp = tn_I2 - pm2 / ptot
            if amp < 0.0:
                amp = 0.0
            w = exp(-0.5 * amp * tn_B)
        if opt_gamma != 0.0:
            s = (1.0 - opt_gamma) ** 0.5

        # electron-local steps, one 2x2 quadruple at a time
        for i in range(W):
            for j in range(W):
                x[0] = rho[i, j]
                x[1] = rho[i, W + j]
                x[2] = rho[W + i, j]
                x[3] = rho[W + i, W + j]
                _rot4(r1, x)
                x[0] = x[0] * ph[i] * ph[j].conjugate()
                x[1] = x[1] * ph[i] * ph[W + j].conjugate()
                x[2] = x[2] * ph[W + i] * ph[j].conjugate()
                x[3] = x[3] * ph[W + i] * ph[W + j].conjugate()
                if w != 1.0:
                    xa = x[0]
                    x[0] = w * xa + (1.0 - w) * x[3]
                    x[3] = w * x[3] + (1.0 - w) * xa
                    x[1] = w * x[1]
                    x[2] = w * x[2]
                _rot4(r2, x)
                if opt_gamma != 0.0:
                    mix = 0.5 * opt_gamma * (x[0] + x[3])
                    x[0] = (1.0 - opt_gamma) * x[0] + mix
                    x[3] = (1.0 - opt_gamma) * x[3] + mix
                    x[1] = s * x[1]
                    x[2] = s * x[2]
                rho[i, j] = x[0]
                rho[i, W + j] = x[1]
                rho[W + i, j] = x[2]
                rho[W + i, W + j] = x[3]

        # flip-flop: U rho
        for a in range(n):
            b = partner[a]
            if b == a:
                da = ud_[a]
                for j in range(n):
                    rho[a, j] = da * rho[a, j]
            elif a < b:
                da = ud_[a]
                oa = uo[a]
                db = ud_[b]
                ob = uo[b]
                for j in range(n):
                    xa = rho[a, j]
                    xb = rho[b, j]
                    rho[a, j] = da * xa + oa * xb
                    rho[b, j] = ob * xa + db * xb
        # (U rho) U^dagger, row-major for cache locality
        for i in range(n):
            for a in range(n):
                b = partner[a]
                if b == a:
                    rho[i, a] = rho[i, a] * ud_[a].conjugate()
                elif a < b:
                    xa = rho[i, a]
                    xb = rho[i, b]
                    rho[i, a] = xa * ud_[a].conjugate() + xb * uo[a].conjugate()
                    rho[i, b] = xa * uo[b].conjugate() + xb * ud_[b].conjugate()

        # nuclear dephasing and reset
        for i in range(W):
            for j in range(W):
                if i == j:
                    out[i, j] = rho[i, j] + rho[W + i, W + j]
                else:
                    out[i, j] = (rho[i, j] + rho[W + i, W + j]) * pd
    return out_arr
