"""Pointing, acquisition and tracking sub-simulator.

Dual-beacon acquisition walks Idle -> CoarseScan -> CoarseTrack ->
FineTrack -> QuantumLink; loss of lock regresses one phase. Two nested
PI loops (gimbal at 50 Hz, fast-steering mirror at 500 Hz) null the
boresight error against a disturbance of vibration sinusoids, white
jitter and a trajectory slew ramp. Cameras render Gaussian spots on a
windowed readout whose size walks the 512/256/128/64 ladder. Loop
gains are calibrated offline so the default disturbance profile meets
the 323 urad coarse and 38 urad fine accuracy targets; the profile is
a representative multirotor spectrum, not a measured one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

WINDOW_LADDER = (1024, 512, 256, 128, 64)
FINE_LADDER = (512, 256, 128, 64)

COARSE_RATE_HZ = 50.0
FINE_RATE_HZ = 500.0

HANDOVER_RMS_URAD = 38.0
COARSE_TARGET_URAD = 323.0
FINE_TARGET_URAD = 38.0


@dataclass(frozen=True)
class CameraModel:
    """Tracking camera geometry and windowed readout."""

    focal_length_m: float
    initial_window: int
    pixels: int = 2048
    pixel_pitch_um: float = 5.5
    exposure_s: float = 1e-3

    def __post_init__(self):
        if self.initial_window not in WINDOW_LADDER:
            raise ValueError(f"window size must be one of {WINDOW_LADDER}, "
                             f"got {self.initial_window}")

    def urad_to_px(self, urad: float) -> float:
        return urad * 1e-6 * self.focal_length_m / (self.pixel_pitch_um * 1e-6)

    def px_to_urad(self, px: float) -> float:
        return px * self.pixel_pitch_um * 1e-6 / self.focal_length_m * 1e6


def drone_camera(initial_window: int = 1024) -> CameraModel:
    return CameraModel(focal_length_m=0.172, initial_window=initial_window)


def ground_camera(initial_window: int = 512) -> CameraModel:
    return CameraModel(focal_length_m=0.260, initial_window=initial_window)


@dataclass(frozen=True)
class SpotImage:
    """Windowed readout frame; true_center is test-only ground truth."""

    window: np.ndarray
    true_center: tuple[float, float]
    background_level: float
    noise_sigma: float


@dataclass(frozen=True)
class DisturbanceProfile:
    """Vibration sinusoids (freq Hz, amplitude urad), white jitter, slew."""

    vibration: tuple = ((12.0, 80.0), (47.0, 30.0))
    white_sigma_urad: float = 15.0
    slew_urad_per_s: float = 0.0


DEFAULT_PROFILE = DisturbanceProfile()


class TrackPhase(Enum):
    IDLE = "idle"
    COARSE_SCAN = "coarse_scan"
    COARSE_TRACK = "coarse_track"
    FINE_TRACK = "fine_track"
    QUANTUM_LINK = "quantum_link"


_PHASE_ORDER = (TrackPhase.IDLE, TrackPhase.COARSE_SCAN, TrackPhase.COARSE_TRACK,
                TrackPhase.FINE_TRACK, TrackPhase.QUANTUM_LINK)


class AcqEvent(Enum):
    SCAN_START = "scan_start"
    COARSE_SPOT_DETECTED = "coarse_spot_detected"
    FINE_FOV_ENTERED = "fine_fov_entered"
    HANDOVER_OK = "handover_ok"
    DETECTION = "detection"
    NO_DETECTION = "no_detection"
    LOSS_OF_LOCK = "loss_of_lock"


@dataclass(frozen=True)
class PiGains:
    """Velocity-form PI with first-order actuator lag and travel limit.

    Per update: angle += lag(dt) * (ki * dt * err + kp * (err - prev_err))
    where lag(dt) = 1 - exp(-dt / actuator_tau_s).
    """

    kp: float
    ki: float           # 1/s
    actuator_tau_s: float
    limit_urad: float


# Calibrated against DEFAULT_PROFILE; see the PAT tests and acceptance
# criteria. Scenario files may override the profile, not the gains.
COARSE_GAINS = PiGains(kp=0.55, ki=14.0, actuator_tau_s=0.030, limit_urad=2.0e6)
FINE_GAINS = PiGains(kp=0.20, ki=400.0, actuator_tau_s=0.0012, limit_urad=4000.0)

# FSM deflection feed into the coarse error so the gimbal absorbs ramps
# and DC offsets, keeping the mirror near its center (desaturation).
FSM_OFFLOAD_GAIN = 1.0


@dataclass
class TrackingState:
    """Single-owner mutable state of one link end's tracking stack."""

    phase: TrackPhase = TrackPhase.IDLE
    boresight_error: np.ndarray = field(default_factory=lambda: np.zeros(2))
    # Constant pointing offset (acquisition geometry); the disturbance
    # profile adds on top of it.
    pointing_bias: np.ndarray = field(default_factory=lambda: np.zeros(2))
    gimbal_angle: np.ndarray = field(default_factory=lambda: np.zeros(2))
    fsm_angle: np.ndarray = field(default_factory=lambda: np.zeros(2))
    gimbal_prev_err: np.ndarray = field(default_factory=lambda: np.zeros(2))
    fsm_prev_err: np.ndarray = field(default_factory=lambda: np.zeros(2))
    residual_history: list = field(default_factory=list)
    window_px: int = 512
    no_detect_run: int = 0
    saturated: bool = False
    time_s: float = 0.0


def render_spot(state: TrackingState, cam: CameraModel, rng: np.random.Generator,
                spot_sigma_px: float = 2.0, amplitude: float = 1000.0,
                background: float = 20.0, read_noise: float = 5.0) -> SpotImage:
    """Synthesize one windowed readout frame.

    The beacon spot sits at the projection of the boresight error
    through focal_length/pixel_pitch, relative to the window center. A
    spot far outside the window leaves background plus read noise only.
    Intensities are clipped at zero.
    """
    w = state.window_px
    cx = (w - 1) / 2.0 + cam.urad_to_px(float(state.boresight_error[0]))
    cy = (w - 1) / 2.0 + cam.urad_to_px(float(state.boresight_error[1]))
    img = background + read_noise * rng.standard_normal((w, w))
    margin = 4.0 * spot_sigma_px
    if -margin <= cx <= w - 1 + margin and -margin <= cy <= w - 1 + margin:
        xs = np.arange(w)
        gx = np.exp(-0.5 * ((xs - cx) / spot_sigma_px) ** 2)
        gy = np.exp(-0.5 * ((xs - cy) / spot_sigma_px) ** 2)
        img += amplitude * gy[:, None] * gx[None, :]   # rows = y, cols = x
    np.clip(img, 0.0, None, out=img)
    return SpotImage(window=img, true_center=(cx, cy),
                     background_level=background, noise_sigma=read_noise)


def centroid(img: SpotImage, threshold: float | None = None):
    """Intensity-weighted spot centroid (x, y) in window pixels, or None.

    Pixels at or below the threshold (default background + 5 sigma of
    read noise) are excluded and the threshold is subtracted from the
    weights; an empty mask is a no-detection.
    """
    if img.window.size == 0:
        raise ValueError("empty image")
    if threshold is None:
        threshold = img.background_level + 5.0 * img.noise_sigma
    mask = img.window > threshold
    if not mask.any():
        return None
    weights = img.window[mask] - threshold
    total = weights.sum()
    if total <= 0.0:
        return None
    ys, xs = np.nonzero(mask)
    return (float((xs * weights).sum() / total), float((ys * weights).sum() / total))


def select_window(centroid_offsets: list, current: int, snr: float,
                  min_snr: float = 5.0) -> int:
    """Windowed-readout ladder policy for fine tracking.

    centroid_offsets holds recent centroid distances from the window
    center in pixels, most recent last (None marks a no-detection).
    The window grows one step on a near-edge centroid or a no-detection
    and shrinks one step after 10 consecutive frames inside the inner
    quartile with adequate SNR. Moves at most one ladder step.
    """
    if current not in FINE_LADDER:
        raise ValueError(f"fine window must be one of {FINE_LADDER}, got {current}")
    pos = FINE_LADDER.index(current)
    half = current / 2.0
    last = centroid_offsets[-1] if centroid_offsets else None
    if last is None or last >= 0.9 * half:
        return FINE_LADDER[max(pos - 1, 0)]
    recent = centroid_offsets[-10:]
    if (len(recent) == 10 and snr >= min_snr
            and all(c is not None and c <= half / 4.0 for c in recent)):
        return FINE_LADDER[min(pos + 1, len(FINE_LADDER) - 1)]
    return current


def acquisition_step(state: TrackingState, event: AcqEvent) -> TrackingState:
    """Advance the acquisition state machine; inapplicable events are no-ops."""
    phase = state.phase
    if event is AcqEvent.DETECTION:
        state.no_detect_run = 0
        return state
    if event is AcqEvent.NO_DETECTION:
        state.no_detect_run += 1
        if phase is TrackPhase.FINE_TRACK and state.no_detect_run >= 5:
            state.phase = TrackPhase.COARSE_TRACK
            state.no_detect_run = 0
        return state
    if event is AcqEvent.LOSS_OF_LOCK:
        idx = _PHASE_ORDER.index(phase)
        if idx > 1:
            state.phase = _PHASE_ORDER[idx - 1]
        return state
    if phase is TrackPhase.IDLE and event is AcqEvent.SCAN_START:
        state.phase = TrackPhase.COARSE_SCAN
    elif phase is TrackPhase.COARSE_SCAN and event is AcqEvent.COARSE_SPOT_DETECTED:
        state.phase = TrackPhase.COARSE_TRACK
    elif phase is TrackPhase.COARSE_TRACK and event is AcqEvent.FINE_FOV_ENTERED:
        state.phase = TrackPhase.FINE_TRACK
    elif phase is TrackPhase.FINE_TRACK and event is AcqEvent.HANDOVER_OK:
        state.phase = TrackPhase.QUANTUM_LINK
    return state


def disturbance_at(profile: DisturbanceProfile, t: float,
                   rng: np.random.Generator | None) -> np.ndarray:
    """Disturbance angle (az, el) in urad at time t.

    Vibration lines alternate between azimuth and elevation; white
    jitter is drawn per call on both axes; the slew ramp acts on
    azimuth.
    """
    d = np.zeros(2)
    for k, (freq, amp) in enumerate(profile.vibration):
        d[k % 2] += amp * math.sin(2.0 * math.pi * freq * t)
    d[0] += profile.slew_urad_per_s * t
    if rng is not None and profile.white_sigma_urad > 0.0:
        d += profile.white_sigma_urad * rng.standard_normal(2)
    return d


def _pi_update(state: TrackingState, err: np.ndarray, loop: str, dt: float) -> None:
    """Velocity-form PI update of one actuator; clamps at the travel limit."""
    if loop == "coarse":
        gains, angle, prev = COARSE_GAINS, state.gimbal_angle, state.gimbal_prev_err
    else:
        gains, angle, prev = FINE_GAINS, state.fsm_angle, state.fsm_prev_err
    lag = 1.0 - math.exp(-dt / gains.actuator_tau_s)
    command = angle + lag * (gains.ki * dt * err + gains.kp * (err - prev))
    if np.any(np.abs(command) > gains.limit_urad):
        state.saturated = True
        command = np.clip(command, -gains.limit_urad, gains.limit_urad)
    if loop == "coarse":
        state.gimbal_angle = command
        state.gimbal_prev_err = err.copy()
    else:
        state.fsm_angle = command
        state.fsm_prev_err = err.copy()


def _advance_time(state: TrackingState, profile: DisturbanceProfile, dt: float,
                  rng: np.random.Generator | None) -> None:
    state.time_s += dt
    d = disturbance_at(profile, state.time_s, rng)
    state.boresight_error = state.pointing_bias + d \
        - state.gimbal_angle - state.fsm_angle
    state.residual_history.append(float(np.hypot(*state.boresight_error)))


def control_step(state: TrackingState, measured_error, loop: str,
                 profile: DisturbanceProfile, dt: float,
                 rng: np.random.Generator | None = None) -> TrackingState:
    """One PI update of the named loop, then integrate the disturbance.

    The named loop's actuator is driven toward nulling measured_error;
    commands beyond the travel limit are clamped and flagged. Time then
    advances by dt and the boresight error is re-derived from the
    disturbance minus both actuator angles.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if loop not in ("coarse", "fine"):
        raise ValueError(f"loop must be 'coarse' or 'fine', got {loop!r}")
    _pi_update(state, np.asarray(measured_error, dtype=np.float64), loop, dt)
    _advance_time(state, profile, dt, rng)
    return state


def tracking_stats(residuals, handover_urad: float = HANDOVER_RMS_URAD) -> dict:
    """RMS, 95th percentile and lock fraction of a residual series."""
    r = np.asarray(residuals, dtype=np.float64)
    if r.size == 0:
        raise ValueError("empty residual series")
    return {
        "rms": float(np.sqrt(np.mean(r * r))),
        "p95": float(np.percentile(np.abs(r), 95.0)),
        "lock_fraction": float(np.mean(np.abs(r) < handover_urad)),
    }


@dataclass
class TrackingRun:
    """Residual time series of one simulated tracking session."""

    time_s: np.ndarray
    az_urad: np.ndarray
    el_urad: np.ndarray
    phase: list
    state: TrackingState

    @property
    def radial_urad(self) -> np.ndarray:
        return np.hypot(self.az_urad, self.el_urad)


def simulate_tracking(duration_s: float, profile: DisturbanceProfile,
                      rng: np.random.Generator, initial_error_urad: float = 15000.0,
                      coarse_enabled: bool = True, fine_enabled: bool = True,
                      meas_noise_urad: float = 2.0,
                      run_acquisition: bool = True) -> TrackingRun:
    """Run the nested loops at the fine tick rate and record residuals.

    Acquisition is driven from the residual stream: the coarse camera
    sees the beacon once the error enters its field of view, fine-FOV
    entry engages the FSM loop, and QuantumLink is declared only when
    the RMS of the last 10 frames drops below the handover threshold.
    With run_acquisition False the loops start locked in QuantumLink
    with zero initial error (steady-state use). The centroid pipeline
    is summarized by meas_noise_urad here; the imaging path is
    exercised separately.
    """
    fine_dt = 1.0 / FINE_RATE_HZ
    coarse_dt = 1.0 / COARSE_RATE_HZ
    ticks_per_coarse = int(round(FINE_RATE_HZ / COARSE_RATE_HZ))
    n = int(round(duration_s * FINE_RATE_HZ))
    state = TrackingState()
    coarse_fov_half = 10800.0     # half of the 1024 px coarse window, ground optics
    fine_fov_half = 5400.0        # half of the 512 px fine window
    scan_slew = 25000.0           # urad/s beacon scan while undetected

    if run_acquisition:
        state.pointing_bias = np.array([initial_error_urad, 0.0])
        state.boresight_error = state.pointing_bias.copy()
        acquisition_step(state, AcqEvent.SCAN_START)
    else:
        state.phase = TrackPhase.QUANTUM_LINK

    times = np.empty(n)
    az = np.empty(n)
    el = np.empty(n)
    phases = []
    for i in range(n):
        ph = state.phase
        if ph is TrackPhase.IDLE:
            pass
        elif ph is TrackPhase.COARSE_SCAN:
            # Open-loop sweep toward the beacon until the camera sees it.
            step = scan_slew * fine_dt
            state.gimbal_angle = state.gimbal_angle + np.clip(
                state.boresight_error, -step, step)
        else:
            coarse_due = coarse_enabled and i % ticks_per_coarse == 0
            fine_active = fine_enabled and ph in (TrackPhase.FINE_TRACK,
                                                  TrackPhase.QUANTUM_LINK)
            if coarse_due:
                # The coarse loop also sees the FSM deflection (offload),
                # so the gimbal absorbs ramps and the mirror stays centered.
                meas = state.boresight_error \
                    + FSM_OFFLOAD_GAIN * state.fsm_angle \
                    + meas_noise_urad * rng.standard_normal(2)
                _pi_update(state, meas, "coarse", coarse_dt)
            if fine_active:
                meas = state.boresight_error \
                    + meas_noise_urad * rng.standard_normal(2)
                _pi_update(state, meas, "fine", fine_dt)
        _advance_time(state, profile, fine_dt, rng)

        r = float(np.hypot(*state.boresight_error))
        if run_acquisition:
            if state.phase is TrackPhase.COARSE_SCAN and r < coarse_fov_half:
                acquisition_step(state, AcqEvent.COARSE_SPOT_DETECTED)
            elif state.phase is TrackPhase.COARSE_TRACK and r < 0.8 * fine_fov_half:
                acquisition_step(state, AcqEvent.FINE_FOV_ENTERED)
            elif state.phase is TrackPhase.FINE_TRACK:
                recent = state.residual_history[-10:]
                if len(recent) == 10 and \
                        math.sqrt(sum(v * v for v in recent) / 10.0) < HANDOVER_RMS_URAD:
                    acquisition_step(state, AcqEvent.HANDOVER_OK)
        times[i] = state.time_s
        az[i] = state.boresight_error[0]
        el[i] = state.boresight_error[1]
        phases.append(state.phase.value)
    return TrackingRun(time_s=times, az_urad=az, el_urad=el, phase=phases,
                       state=state)
