"""Parameter estimation and the finite-size secure-key-rate accounting.

Rate formula (f = repetition rate, n = pulses kept for key, N = block
size, beta = reverse reconciliation efficiency):

    K = f * (n / N) * max(0, beta * I_AB - chi_BE - Delta_n)

I_AB and the Holevo bound chi_BE are the standard Gaussian-modulation
heterodyne expressions, evaluated at the worst-case parameter-estimation
bounds (t_lo, xi_hi). The entanglement-based covariance matrix is

    gamma = [[V I2, c sz], [c sz, b I2]],
    c = sqrt(T (V^2 - 1)),  b = T (V - 1) + 1 + T xi,  V = v1 + 1,

with heterodyne conditioning gamma_A|b = gamma_A - sig (gamma_B + I2)^-1 sig^T.
Detector efficiency and electronic noise are trusted: they enter I_AB
through chi_het but not the eavesdropper's covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from droneqkd.channel import ReceiverConfig

# Gaussian tail coefficient for the default eps_PE = 1e-10
# (P(|N(0,1)| > 6.5) ~ 8e-11).
Z_CONF = 6.5


class EstimationError(ValueError):
    """Parameter estimation produced a value no key can be built on."""


class NonphysicalCovarianceError(ValueError):
    """A symplectic eigenvalue fell below 1 beyond numerical tolerance."""


@dataclass(frozen=True)
class SessionConfig:
    """Per-block protocol parameters."""

    block_size: int
    reveal_fraction: float = 0.5
    beta: float = 0.95
    eps_pe: float = 1e-10
    eps_bar: float = 1e-10
    eps_pa: float = 1e-10
    v1: float = 4.0
    pulse_rate_hz: float = 1e7

    def __post_init__(self):
        if self.block_size < 10_000:
            raise ValueError(f"block_size must be >= 10^4, got {self.block_size}")
        if not 0.0 < self.reveal_fraction < 1.0:
            raise ValueError(f"reveal_fraction must lie in (0, 1), got {self.reveal_fraction}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        for name in ("eps_pe", "eps_bar", "eps_pa"):
            val = getattr(self, name)
            if not 0.0 < val < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {val}")
        if self.v1 <= 0.0:
            raise ValueError(f"v1 must be positive, got {self.v1}")
        if self.pulse_rate_hz <= 0.0:
            raise ValueError(f"pulse_rate_hz must be > 0, got {self.pulse_rate_hz}")

    @property
    def n_reveal(self) -> int:
        return round(self.block_size * self.reveal_fraction)

    @property
    def n_kept(self) -> int:
        return self.block_size - self.n_reveal


@dataclass(frozen=True)
class CovarianceEstimate:
    """Estimated sqrt(eta*T) and excess noise with worst-case bounds."""

    t_hat: float
    xi_hat: float
    n_used: int
    t_lo: float
    xi_hi: float


@dataclass(frozen=True)
class KeyRateInputs:
    est: CovarianceEstimate
    cfg: SessionConfig
    i_ab: float
    chi_be: float
    delta_n: float


@dataclass(frozen=True)
class KeyRateReport:
    key_rate_bps: float
    i_ab: float
    chi_be: float
    delta_n: float
    bracket: float
    clamped: bool
    n: int
    block_size: int
    pulse_rate_hz: float


def compensate_polarization(sent_x, sent_p, meas_x, meas_p) -> float:
    """Least-squares rotation aligning measured (s2, s3) to the sent pair.

    Solves argmin_theta sum |meas - s R(theta) sent|^2 via the closed
    form theta = atan2(sum sent x meas, sum sent . meas). Returns 0 for
    degenerate (all-zero) inputs; apply as a counter-rotation R(-theta)
    to subsequent measurements.
    """
    sent_x = np.asarray(sent_x, dtype=np.float64)
    sent_p = np.asarray(sent_p, dtype=np.float64)
    meas_x = np.asarray(meas_x, dtype=np.float64)
    meas_p = np.asarray(meas_p, dtype=np.float64)
    if sent_x.size < 100:
        raise ValueError(f"need at least 100 paired samples, got {sent_x.size}")
    dot = float(np.dot(sent_x, meas_x) + np.dot(sent_p, meas_p))
    cross = float(np.dot(sent_x, meas_p) - np.dot(sent_p, meas_x))
    if dot == 0.0 and cross == 0.0:
        return 0.0
    return math.atan2(cross, dot)


def rotate_quadratures(x, p, theta: float):
    """Apply R(theta) to quadrature arrays; returns rotated (x, p)."""
    c, s = math.cos(theta), math.sin(theta)
    return c * x - s * p, s * x + c * p


def estimate_parameters(sent_x, sent_p, meas_x, meas_p, cfg: SessionConfig,
                        rcv: ReceiverConfig) -> CovarianceEstimate:
    """Estimate sqrt(eta*T) and excess noise from revealed pairs.

    t_hat is cov(sent, measured)/var(sent) per quadrature, averaged.
    The residual variance eta*T*xi + 1 + v_el yields xi_hat after the
    receiver-calibrated shot and electronic noise are removed (clamped
    at zero). Worst-case bounds use the Z_CONF Gaussian tail.
    """
    sent_x = np.asarray(sent_x, dtype=np.float64)
    sent_p = np.asarray(sent_p, dtype=np.float64)
    meas_x = np.asarray(meas_x, dtype=np.float64)
    meas_p = np.asarray(meas_p, dtype=np.float64)
    m = sent_x.size
    if m < 1_000:
        raise ValueError(f"need at least 10^3 pairs, got {m}")

    sx = sent_x - sent_x.mean()
    sp = sent_p - sent_p.mean()
    mx = meas_x - meas_x.mean()
    mp = meas_p - meas_p.mean()
    var_x = float(np.dot(sx, sx)) / m
    var_p = float(np.dot(sp, sp)) / m
    t_x = float(np.dot(sx, mx)) / m / var_x
    t_p = float(np.dot(sp, mp)) / m / var_p
    t_hat = 0.5 * (t_x + t_p)
    if t_hat <= 0.0:
        raise EstimationError(f"nonpositive transmittance estimate t_hat={t_hat}")

    rx = mx - t_hat * sx
    rp = mp - t_hat * sp
    resid_var = (float(np.dot(rx, rx)) + float(np.dot(rp, rp))) / (2 * m)
    xi_hat = max(0.0, (resid_var - 1.0 - rcv.electronic_noise) / t_hat ** 2)

    v_sent = 0.5 * (var_x + var_p)
    sigma_t = math.sqrt(resid_var / (2 * m * v_sent))
    sigma_xi = resid_var * math.sqrt(1.0 / m) / t_hat ** 2
    return CovarianceEstimate(
        t_hat=t_hat,
        xi_hat=xi_hat,
        n_used=m,
        t_lo=t_hat - Z_CONF * sigma_t,
        xi_hi=xi_hat + Z_CONF * sigma_xi,
    )


def covariance_matrix(v1: float, t_channel: float, xi: float) -> np.ndarray:
    """Entanglement-based 4x4 covariance matrix of the Alice/Bob state."""
    v = v1 + 1.0
    c = math.sqrt(t_channel * (v * v - 1.0))
    b = t_channel * (v - 1.0) + 1.0 + t_channel * xi
    gamma = np.zeros((4, 4))
    gamma[0, 0] = gamma[1, 1] = v
    gamma[2, 2] = gamma[3, 3] = b
    gamma[0, 2] = gamma[2, 0] = c
    gamma[1, 3] = gamma[3, 1] = -c
    return gamma


def symplectic_eigenvalues(gamma: np.ndarray):
    """Closed-form symplectic spectrum of a two-mode covariance matrix."""
    a_blk = gamma[:2, :2]
    b_blk = gamma[2:, 2:]
    c_blk = gamma[:2, 2:]
    delta = (np.linalg.det(a_blk) + np.linalg.det(b_blk)
             + 2.0 * np.linalg.det(c_blk))
    det = np.linalg.det(gamma)
    disc = max(delta * delta - 4.0 * det, 0.0)
    root = math.sqrt(disc)
    nu1 = math.sqrt(max((delta + root) / 2.0, 0.0))
    nu2 = math.sqrt(max((delta - root) / 2.0, 0.0))
    return nu1, nu2


def g_entropy(nu: float) -> float:
    """Bosonic entropy term G(nu) in bits; G(1) = 0."""
    if nu < 1.0 - 1e-9:
        raise NonphysicalCovarianceError(f"symplectic eigenvalue {nu} < 1")
    if nu <= 1.0:
        return 0.0
    up = (nu + 1.0) / 2.0
    dn = (nu - 1.0) / 2.0
    out = up * math.log2(up)
    if dn > 0.0:
        out -= dn * math.log2(dn)
    return out


def _channel_params_from(est: CovarianceEstimate, rcv: ReceiverConfig,
                         worst_case: bool):
    t = est.t_lo if worst_case else est.t_hat
    xi = est.xi_hi if worst_case else est.xi_hat
    if t <= 0.0:
        raise EstimationError(f"nonpositive sqrt(eta*T) bound: {t}")
    t_channel = t * t / rcv.detection_efficiency
    return t_channel, xi


def mutual_information(est: CovarianceEstimate, cfg: SessionConfig,
                       rcv: ReceiverConfig, worst_case: bool = True) -> float:
    """Heterodyne mutual information I(A:B) in bits per pulse."""
    t_channel, xi = _channel_params_from(est, rcv, worst_case)
    return mutual_information_raw(t_channel, xi, cfg.v1, rcv)


def mutual_information_raw(t_channel: float, xi: float, v1: float,
                           rcv: ReceiverConfig) -> float:
    """I_AB = log2((V + chi_tot) / (1 + chi_tot)) with V = v1 + 1."""
    eta = rcv.detection_efficiency
    v_el = rcv.electronic_noise
    chi_line = 1.0 / t_channel - 1.0 + xi
    chi_het = (1.0 + (1.0 - eta) + 2.0 * v_el) / eta
    chi_tot = chi_line + chi_het / t_channel
    v = v1 + 1.0
    return math.log2((v + chi_tot) / (1.0 + chi_tot))


def holevo_bound(est: CovarianceEstimate, cfg: SessionConfig,
                 rcv: ReceiverConfig, worst_case: bool = True) -> float:
    """Holevo bound chi(B:E) in bits per pulse for collective attacks."""
    t_channel, xi = _channel_params_from(est, rcv, worst_case)
    return holevo_bound_raw(t_channel, xi, cfg.v1)


def holevo_bound_raw(t_channel: float, xi: float, v1: float) -> float:
    """chi_BE = S(gamma_AB) - S(gamma_A|b), heterodyne conditioning on B."""
    gamma = covariance_matrix(v1, t_channel, xi)
    nu1, nu2 = symplectic_eigenvalues(gamma)
    s_ab = g_entropy(nu1) + g_entropy(nu2)
    gamma_cond = conditional_gamma_a(gamma)
    nu_c = math.sqrt(max(np.linalg.det(gamma_cond), 0.0))
    return s_ab - g_entropy(nu_c)


def conditional_gamma_a(gamma: np.ndarray) -> np.ndarray:
    """Alice's covariance conditioned on a heterodyne measurement of B."""
    a_blk = gamma[:2, :2]
    b_blk = gamma[2:, 2:]
    c_blk = gamma[:2, 2:]
    return a_blk - c_blk @ np.linalg.inv(b_blk + np.eye(2)) @ c_blk.T


def finite_size_delta(n: int, cfg: SessionConfig) -> float:
    """Finite-size penalty Delta(n) in bits per pulse."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return (7.0 * math.sqrt(math.log2(2.0 / cfg.eps_bar) / n)
            + (2.0 / n) * math.log2(1.0 / cfg.eps_pa))


def secure_key_rate(inputs: KeyRateInputs) -> KeyRateReport:
    """Assemble the clamped secure key rate in bits per second."""
    cfg = inputs.cfg
    n = cfg.n_kept
    bracket = cfg.beta * inputs.i_ab - inputs.chi_be - inputs.delta_n
    clamped = bracket < 0.0
    rate = cfg.pulse_rate_hz * (n / cfg.block_size) * max(0.0, bracket)
    return KeyRateReport(
        key_rate_bps=rate,
        i_ab=inputs.i_ab,
        chi_be=inputs.chi_be,
        delta_n=inputs.delta_n,
        bracket=bracket,
        clamped=clamped,
        n=n,
        block_size=cfg.block_size,
        pulse_rate_hz=cfg.pulse_rate_hz,
    )


def compute_key_rate(est: CovarianceEstimate, cfg: SessionConfig,
                     rcv: ReceiverConfig) -> KeyRateReport:
    """Worst-case I_AB, chi_BE and Delta(n) folded into one report."""
    i_ab = mutual_information(est, cfg, rcv)
    chi_be = holevo_bound(est, cfg, rcv)
    delta_n = finite_size_delta(cfg.n_kept, cfg)
    return secure_key_rate(KeyRateInputs(est, cfg, i_ab, chi_be, delta_n))
