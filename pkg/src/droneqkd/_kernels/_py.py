"""Pure-numpy implementations of the hot per-pulse kernels.

This module mirrors the compiled extension in droneqkd._kernels._core.
The floating-point operations are arranged element-for-element in the
same order as the C loops (phase accumulation is a plain running sum),
so the two backends agree to a few ulp; integer results are identical.
"""

import numpy as np

TWO_PI = 2.0 * np.pi

BACKEND = "python"


def propagate_block(x, p, amp, drift_incr, doppler_incr, z_chx, z_chp,
                    z_dx, z_dp, drift0, doppler0, xi_sqrt, eta_sqrt,
                    det_sigma):
    """Run n pulses through rotation, attenuation and heterodyne detection.

    Per pulse i (phases accumulate before use, matching the scalar
    channel-stepping order):

        drift_i   = drift0   + sum(drift_incr[:i+1])
        doppler_i = doppler0 + (i+1) * doppler_incr
        theta     = drift_i + doppler_i
        (xr, pr)  = R(theta) @ (x_i, p_i)
        xc        = amp_i * (xr + xi_sqrt * z_chx_i)     # amp = sqrt(T)
        s2_i      = eta_sqrt * xc + det_sigma * z_dx_i
        (p arm symmetric)

    All noise draws are supplied as arrays so the caller owns the RNG
    stream. Returns (s2, s3, drift_end, doppler_end) with the end phases
    wrapped to [0, 2*pi).
    """
    n = x.shape[0]
    drift = np.empty(n + 1)
    drift[0] = drift0
    drift[1:] = drift_incr
    np.cumsum(drift, out=drift)  # running sum: same add order as the C loop
    dop = np.empty(n + 1)
    dop[0] = doppler0
    dop[1:] = doppler_incr
    np.cumsum(dop, out=dop)
    theta = drift[1:] + dop[1:]
    c = np.cos(theta)
    s = np.sin(theta)
    xr = c * x - s * p
    pr = s * x + c * p
    s2 = eta_sqrt * (amp * (xr + xi_sqrt * z_chx)) + det_sigma * z_dx
    s3 = eta_sqrt * (amp * (pr + xi_sqrt * z_chp)) + det_sigma * z_dp
    return s2, s3, float(drift[-1] % TWO_PI), float(dop[-1] % TWO_PI)


def match_pattern(u, signs, threshold):
    """Slide a sign-pattern correlator over a sample stream.

    A slot reads 1 when u > +threshold, 0 when u < -threshold and is
    invalid otherwise; an offset matches when all pattern slots agree.
    Returns (first_offset, best_score, match_count): first_offset is -1
    when nothing matches, best_score the maximum number of agreeing
    slots over all offsets, match_count the number of fully matching
    (possibly overlapping) offsets.
    """
    u = np.asarray(u, dtype=np.float64)
    k = len(signs)
    n_off = u.shape[0] - k + 1
    if n_off <= 0:
        return -1, 0, 0
    pos = u > threshold
    neg = u < -threshold
    score = np.zeros(n_off, dtype=np.int64)
    for j in range(k):
        slot = pos[j:j + n_off] if signs[j] > 0 else neg[j:j + n_off]
        score += slot
    full = np.flatnonzero(score == k)
    offset = int(full[0]) if full.size else -1
    return offset, int(score.max()), int(full.size)
