"""Pure-Python twin of the compiled RK4 kernel.

Kept arithmetically identical to ``_rk4.pyx`` (same expressions, same
operation order) so the two backends agree to rounding error. Used when the
compiled extension is unavailable, and by the backend benchmark.
"""

import numpy as np

NSTATE = 13


def _deriv(x, beta, sigma, r_i, r_r, r_d, r_rh, r_dh, p_d,
           f_ur, f_ud, f_dhr, f_dhd, f_dqr, f_dqd, n_pop):
    inf_flow = beta * x[0] * x[2] / n_pop
    e_out = sigma * x[1]
    i_out = r_i * x[2]
    return (
        -inf_flow,
        inf_flow - e_out,
        e_out - i_out,
        i_out * f_ur - r_r * x[3],
        i_out * f_ud - r_d * x[4],
        i_out * f_dhr - r_rh * x[5],
        i_out * f_dhd - r_dh * x[6],
        i_out * f_dqr - r_r * x[7],
        i_out * f_dqd - r_d * x[8],
        r_r * (x[3] + x[7]) + r_rh * x[5],
        r_d * (x[4] + x[8]) + r_dh * x[6],
        i_out * p_d,
        r_d * x[8] + r_dh * x[6],
    )


def rk4_trajectory(x0, beta_half, sigma, r_i, r_r, r_d, r_rh, r_dh,
                   p_d, p_h, m, n_pop, h, nsteps, clamp_tol):
    """See the compiled kernel's docstring; behavior is identical."""
    beta_half = np.ascontiguousarray(beta_half, dtype=np.float64)
    if beta_half.shape[0] != 2 * nsteps + 1:
        raise ValueError("beta_half must have 2*nsteps+1 samples")
    out = np.empty((nsteps + 1, NSTATE), dtype=np.float64)
    x = [float(v) for v in x0]
    out[0] = x

    f_ur = (1.0 - p_d) * (1.0 - m)
    f_ud = (1.0 - p_d) * m
    f_dhr = p_d * p_h * (1.0 - m)
    f_dhd = p_d * p_h * m
    f_dqr = p_d * (1.0 - p_h) * (1.0 - m)
    f_dqd = p_d * (1.0 - p_h) * m

    for i in range(nsteps):
        b0 = beta_half[2 * i]
        b1 = beta_half[2 * i + 1]
        b2 = beta_half[2 * i + 2]
        k1 = _deriv(x, b0, sigma, r_i, r_r, r_d, r_rh, r_dh, p_d,
                    f_ur, f_ud, f_dhr, f_dhd, f_dqr, f_dqd, n_pop)
        xt = [x[j] + 0.5 * h * k1[j] for j in range(NSTATE)]
        k2 = _deriv(xt, b1, sigma, r_i, r_r, r_d, r_rh, r_dh, p_d,
                    f_ur, f_ud, f_dhr, f_dhd, f_dqr, f_dqd, n_pop)
        xt = [x[j] + 0.5 * h * k2[j] for j in range(NSTATE)]
        k3 = _deriv(xt, b1, sigma, r_i, r_r, r_d, r_rh, r_dh, p_d,
                    f_ur, f_ud, f_dhr, f_dhd, f_dqr, f_dqd, n_pop)
        xt = [x[j] + h * k3[j] for j in range(NSTATE)]
        k4 = _deriv(xt, b2, sigma, r_i, r_r, r_d, r_rh, r_dh, p_d,
                    f_ur, f_ud, f_dhr, f_dhd, f_dqr, f_dqd, n_pop)
        x = [x[j] + (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
             for j in range(NSTATE)]
        for j in range(11):
            if x[j] < 0.0:
                if x[j] < -clamp_tol:
                    raise ArithmeticError(
                        "compartment went negative beyond tolerance at step "
                        "%d; reduce the step size" % i)
                x[j] = 0.0
        out[i + 1] = x
    return out
