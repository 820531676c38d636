# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled RK4 kernel for the 11-compartment model (plus two cumulative
counters). The infection-rate curve is supplied pre-sampled on the half-step
grid so the kernel never evaluates transcendentals in the hot loop."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

NSTATE = 13


cdef inline void _deriv(double* x, double beta, double sigma, double r_i,
                        double r_r, double r_d, double r_rh, double r_dh,
                        double p_d, double f_ur, double f_ud, double f_dhr,
                        double f_dhd, double f_dqr, double f_dqd,
                        double n_pop, double* dx) noexcept nogil:
    cdef double inf_flow = beta * x[0] * x[2] / n_pop
    cdef double e_out = sigma * x[1]
    cdef double i_out = r_i * x[2]
    dx[0] = -inf_flow
    dx[1] = inf_flow - e_out
    dx[2] = e_out - i_out
    dx[3] = i_out * f_ur - r_r * x[3]
    dx[4] = i_out * f_ud - r_d * x[4]
    dx[5] = i_out * f_dhr - r_rh * x[5]
    dx[6] = i_out * f_dhd - r_dh * x[6]
    dx[7] = i_out * f_dqr - r_r * x[7]
    dx[8] = i_out * f_dqd - r_d * x[8]
    dx[9] = r_r * (x[3] + x[7]) + r_rh * x[5]
    dx[10] = r_d * (x[4] + x[8]) + r_dh * x[6]
    dx[11] = i_out * p_d
    dx[12] = r_d * x[8] + r_dh * x[6]


def rk4_trajectory(double[::1] x0, double[::1] beta_half, double sigma,
                   double r_i, double r_r, double r_d, double r_rh,
                   double r_dh, double p_d, double p_h, double m,
                   double n_pop, double h, int nsteps, double clamp_tol):
    """Integrate the compartment ODE with fixed-step RK4.

    beta_half holds the effective infection rate (baseline rate times the
    response multiplier) at t0, t0+h/2, t0+h, ... (2*nsteps+1 values).
    Returns an (nsteps+1, 13) array. Raises ArithmeticError if any
    compartment undershoots below -clamp_tol (undershoots inside the
    tolerance band are clamped to zero).
    """
    if beta_half.shape[0] != 2 * nsteps + 1:
        raise ValueError("beta_half must have 2*nsteps+1 samples")
    out_arr = np.empty((nsteps + 1, 13), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double x[13]
    cdef double xt[13]
    cdef double k1[13]
    cdef double k2[13]
    cdef double k3[13]
    cdef double k4[13]
    cdef double f_ur = (1.0 - p_d) * (1.0 - m)
    cdef double f_ud = (1.0 - p_d) * m
    cdef double f_dhr = p_d * p_h * (1.0 - m)
    cdef double f_dhd = p_d * p_h * m
    cdef double f_dqr = p_d * (1.0 - p_h) * (1.0 - m)
    cdef double f_dqd = p_d * (1.0 - p_h) * m
    cdef Py_ssize_t i, j
    cdef int bad_step = -1
    cdef double b0, b1, b2

    for j in range(13):
        x[j] = x0[j]
        out[0, j] = x[j]

    with nogil:
        for i in range(nsteps):
            b0 = beta_half[2 * i]
            b1 = beta_half[2 * i + 1]
            b2 = beta_half[2 * i + 2]
            _deriv(x, b0, sigma, r_i, r_r, r_d, r_rh, r_dh, p_d,
                   f_ur, f_ud, f_dhr, f_dhd, f_dqr, f_dqd, n_pop, k1)
            for j in range(13):
                xt[j] = x[j] + 0.5 * h * k1[j]
            _deriv(xt, b1, sigma, r_i, r_r, r_d, r_rh, r_dh, p_d,
                   f_ur, f_ud, f_dhr, f_dhd, f_dqr, f_dqd, n_pop, k2)
            for j in range(13):
                xt[j] = x[j] + 0.5 * h * k2[j]
            _deriv(xt, b1, sigma, r_i, r_r, r_d, r_rh, r_dh, p_d,
                   f_ur, f_ud, f_dhr, f_dhd, f_dqr, f_dqd, n_pop, k3)
            for j in range(13):
                xt[j] = x[j] + h * k3[j]
            _deriv(xt, b2, sigma, r_i, r_r, r_d, r_rh, r_dh, p_d,
                   f_ur, f_ud, f_dhr, f_dhd, f_dqr, f_dqd, n_pop, k4)
            for j in range(13):
                x[j] = x[j] + (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            for j in range(11):
                if x[j] < 0.0:
                    if x[j] < -clamp_tol:
                        bad_step = <int>i
                        break
                    x[j] = 0.0
            if bad_step >= 0:
                break
            for j in range(13):
                out[i + 1, j] = x[j]

    if bad_step >= 0:
        raise ArithmeticError(
            "compartment went negative beyond tolerance at step %d; "
            "reduce the step size" % bad_step)
    return out_arr
