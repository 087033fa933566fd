"""Parametric free-space channel and heterodyne Stokes receiver.

The channel applies a fixed dB attenuation, a slow polarization-drift
random walk and a residual Doppler phase ramp (both rotate the (s2, s3)
plane), excess noise referred to the channel input, and a Gaussian
far-field pointing fade. The receiver splits 90:10 (the 10% arm only
monitors LO power as s1) and measures both transverse Stokes components
at one shot-noise unit per quadrature plus electronic noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from droneqkd import _kernels
from droneqkd.stokes import TWO_PI, QuadraturePair, wrap_phase


@dataclass(frozen=True)
class ChannelParams:
    """Static link impairments; noise quantities in shot-noise units."""

    loss_db: float
    excess_noise: float = 0.02
    drift_rate: float = 0.0          # polarization random walk, rad/sqrt(s)
    doppler_residual_hz: float = 0.0  # uncompensated frequency offset
    pulse_rate_hz: float = 1e7
    timing_jitter_s: float = 200e-12

    def __post_init__(self):
        if self.loss_db < 0.0:
            raise ValueError(f"loss_db must be >= 0, got {self.loss_db}")
        if self.excess_noise < 0.0:
            raise ValueError(f"excess_noise must be >= 0, got {self.excess_noise}")
        if self.drift_rate < 0.0:
            raise ValueError(f"drift_rate must be >= 0, got {self.drift_rate}")
        if self.pulse_rate_hz <= 0.0:
            raise ValueError(f"pulse_rate_hz must be > 0, got {self.pulse_rate_hz}")
        if self.timing_jitter_s < 0.0:
            raise ValueError(f"timing_jitter_s must be >= 0, got {self.timing_jitter_s}")


@dataclass
class ChannelState:
    """Accumulated channel phases; single-owner mutable."""

    drift_phase: float = 0.0
    doppler_phase: float = 0.0
    pulse_index: int = 0


@dataclass(frozen=True)
class ReceiverConfig:
    split_ratio: float = 0.10          # fraction routed to the s1 monitor arm
    detection_efficiency: float = 0.55
    electronic_noise: float = 0.10
    extinction_db: float = 70.0

    def __post_init__(self):
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError(f"split_ratio must lie in (0, 1), got {self.split_ratio}")
        if not 0.0 < self.detection_efficiency <= 1.0:
            raise ValueError(
                f"detection_efficiency must lie in (0, 1], got {self.detection_efficiency}")
        if self.electronic_noise < 0.0:
            raise ValueError(f"electronic_noise must be >= 0, got {self.electronic_noise}")
        if self.extinction_db < 0.0:
            raise ValueError(f"extinction_db must be >= 0, got {self.extinction_db}")


@dataclass(frozen=True)
class HeterodyneSample:
    s1_meas: float
    s2_meas: float
    s3_meas: float
    pulse_index: int = 0


def db_to_transmittance(loss_db: float) -> float:
    """T = 10^(-loss_db / 10), in (0, 1]."""
    if loss_db < 0.0:
        raise ValueError(f"loss_db must be >= 0, got {loss_db}")
    return 10.0 ** (-loss_db / 10.0)


def pointing_fade(residual_urad: float, beam_divergence_urad: float) -> float:
    """Gaussian far-field fade exp(-2 (residual/divergence)^2), in (0, 1]."""
    if residual_urad < 0.0 or beam_divergence_urad <= 0.0:
        raise ValueError("residual must be >= 0 and divergence > 0")
    return math.exp(-2.0 * (residual_urad / beam_divergence_urad) ** 2)


def step_channel(state: ChannelState, params: ChannelParams,
                 rng: np.random.Generator) -> ChannelState:
    """Advance the channel by one pulse period.

    The drift phase performs a normal random walk with per-step variance
    drift_rate^2 * dt; the Doppler phase advances deterministically by
    2*pi*doppler_residual_hz*dt. One standard-normal draw is consumed
    per step regardless of drift_rate so streams stay aligned.
    """
    dt = 1.0 / params.pulse_rate_hz
    inc = rng.standard_normal() * params.drift_rate * math.sqrt(dt)
    state.drift_phase = wrap_phase(state.drift_phase + inc)
    state.doppler_phase = wrap_phase(
        state.doppler_phase + TWO_PI * params.doppler_residual_hz * dt)
    state.pulse_index += 1
    return state


def propagate(target: QuadraturePair, state: ChannelState, params: ChannelParams,
              rng: np.random.Generator, fade: float = 1.0) -> QuadraturePair:
    """Rotate by the accumulated phases, attenuate, add excess noise.

    Output variance of the added noise is T * excess_noise per
    quadrature (noise referred to the channel input). fade multiplies
    the static transmittance.
    """
    theta = state.drift_phase + state.doppler_phase
    c, s = math.cos(theta), math.sin(theta)
    xr = c * target.x1 - s * target.p1
    pr = s * target.x1 + c * target.p1
    t = db_to_transmittance(params.loss_db) * fade
    amp = math.sqrt(t)
    noise = rng.standard_normal(2) * math.sqrt(t * params.excess_noise)
    return QuadraturePair(amp * xr + noise[0], amp * pr + noise[1])


def heterodyne_measure(q: QuadraturePair, rcv: ReceiverConfig,
                       rng: np.random.Generator, pulse_index: int = 0,
                       lo_power: float = 1.0) -> HeterodyneSample:
    """Heterodyne detection of both transverse Stokes components.

    s2/s3 pick up sqrt(eta) scaling and Normal(0, 1 + v_el) noise (one
    shot-noise unit per quadrature plus electronic noise). s1 is the
    10% calibration tap: the constant LO-power reading plus the same
    noise floor, used only for monitoring. Three standard-normal draws
    are consumed per call (s1, s2, s3 order).
    """
    n = rng.standard_normal(3)
    sigma = math.sqrt(1.0 + rcv.electronic_noise)
    root_eta = math.sqrt(rcv.detection_efficiency)
    return HeterodyneSample(
        s1_meas=rcv.split_ratio * lo_power + sigma * n[0],
        s2_meas=root_eta * q.x1 + sigma * n[1],
        s3_meas=root_eta * q.p1 + sigma * n[2],
        pulse_index=pulse_index,
    )


def propagate_and_measure_block(x: np.ndarray, p: np.ndarray, state: ChannelState,
                                params: ChannelParams, rcv: ReceiverConfig,
                                rng: np.random.Generator,
                                fade: np.ndarray | None = None,
                                dt: float | None = None):
    """Vectorized channel + receiver pipeline for a block of pulses.

    Equivalent to step_channel/propagate/heterodyne_measure per pulse
    (without the s1 tap), dispatched to the selected kernel backend.
    dt defaults to one pulse period; the scenario runner passes the
    subsampled effective step instead. Draw order: drift increments,
    channel x, channel p, detector x, detector p. Mutates state.

    Returns (s2_meas, s3_meas) arrays.
    """
    n = len(x)
    if dt is None:
        dt = 1.0 / params.pulse_rate_hz
    t_static = db_to_transmittance(params.loss_db)
    if fade is None:
        amp = np.full(n, math.sqrt(t_static))
    else:
        amp = np.sqrt(t_static * np.asarray(fade, dtype=np.float64))
    drift_incr = rng.standard_normal(n) * (params.drift_rate * math.sqrt(dt))
    z_chx = rng.standard_normal(n)
    z_chp = rng.standard_normal(n)
    z_dx = rng.standard_normal(n)
    z_dp = rng.standard_normal(n)
    s2, s3, drift_end, doppler_end = _kernels.propagate_block(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(p, dtype=np.float64),
        amp, drift_incr,
        TWO_PI * params.doppler_residual_hz * dt,
        z_chx, z_chp, z_dx, z_dp,
        state.drift_phase, state.doppler_phase,
        math.sqrt(params.excess_noise),
        math.sqrt(rcv.detection_efficiency),
        math.sqrt(1.0 + rcv.electronic_noise),
    )
    state.drift_phase = drift_end
    state.doppler_phase = doppler_end
    state.pulse_index += n
    return s2, s3
