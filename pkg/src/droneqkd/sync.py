"""Phase-modulator based frame synchronization.

A session alternates a synchronization phase and a keying phase. Sync
frames carry a fixed 10-bit pattern; bit 1 drives the encoder at full
radius (phi1 = pi/2) along the s2 = s3 diagonal, bit 0 flips the sign
through a pi offset on phi2. Before every transmission the third-stage
modulator voltage is swept over one period to find the drive phase at
which both received components clear the detection threshold, which
compensates the slow polarization drift. The receiver correlates the
diagonal projection u = (s2 + s3)/sqrt(2) against the pattern inside a
synchronization window; u carries unit shot noise when the per
component noise is unit, so the config amplitudes and thresholds are
all expressed on that statistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from droneqkd import _kernels
from droneqkd.channel import HeterodyneSample
from droneqkd.stokes import TWO_PI, DrivePhases

FRAME_BITS = 10
DEFAULT_PATTERN = "0000010110"

# Probe pulses averaged per scan grid point. Keeps the argmax of the
# min-component score within two grid steps at unit component noise.
SCAN_PULSES_PER_POINT = 32


class ScanFailedError(RuntimeError):
    """No scan grid point cleared the detection threshold (link not ready)."""


@dataclass(frozen=True)
class SyncConfig:
    pattern: str = DEFAULT_PATTERN
    duty_cycle: float = 0.01          # upper bound on frame/window ratio
    amp_threshold: float = 6.0
    sync_amp: float = 20.0
    window_len: int = 2000
    scan_points: int = 256

    def __post_init__(self):
        if len(self.pattern) != FRAME_BITS or set(self.pattern) - {"0", "1"}:
            raise ValueError(f"pattern must be 10 bits of 0/1, got {self.pattern!r}")
        if not self.amp_threshold > 3.0:
            raise ValueError(f"amp_threshold must exceed 3, got {self.amp_threshold}")
        if not self.sync_amp > self.amp_threshold:
            raise ValueError("sync_amp must exceed amp_threshold "
                             f"({self.sync_amp} <= {self.amp_threshold})")
        if not 0.0 < self.duty_cycle <= 0.01:
            raise ValueError(f"duty_cycle must lie in (0, 0.01], got {self.duty_cycle}")
        if self.window_len < FRAME_BITS:
            raise ValueError(f"window_len must hold one frame, got {self.window_len}")
        if FRAME_BITS / self.window_len >= self.duty_cycle:
            raise ValueError(
                f"one frame per window gives duty {FRAME_BITS / self.window_len:.4f}"
                f" >= limit {self.duty_cycle}")
        if self.scan_points < 4:
            raise ValueError(f"scan_points must be >= 4, got {self.scan_points}")

    @property
    def signs(self) -> np.ndarray:
        """Pattern as +-1 slot signs, transmission order."""
        return np.array([1 if b == "1" else -1 for b in self.pattern], dtype=np.int8)


@dataclass(frozen=True)
class SyncDecision:
    matched: bool
    offset: int
    score: int


@dataclass(frozen=True)
class ScanResult:
    best_voltage_phase: float
    best_amplitude: float
    grid: tuple


def build_sync_frame(cfg: SyncConfig, base_phase: float = math.pi / 4) -> list[DrivePhases]:
    """Drive-phase sequence for one sync frame.

    base_phase is the scan-compensated third-stage voltage phase; bit 0
    ("negative electrical level") adds pi, flipping the sign of both
    received components.
    """
    frame = []
    for bit in cfg.pattern:
        phi2 = base_phase if bit == "1" else base_phase + math.pi
        frame.append(DrivePhases(math.pi / 2.0, phi2))
    return frame


def sync_statistic(s2, s3):
    """Diagonal matched-filter projection u = (s2 + s3)/sqrt(2)."""
    return (np.asarray(s2, dtype=np.float64)
            + np.asarray(s3, dtype=np.float64)) / math.sqrt(2.0)


def detect_sync_arrays(u: np.ndarray, cfg: SyncConfig) -> SyncDecision:
    """Slide the 10-slot correlator over a precomputed statistic stream."""
    if len(u) < FRAME_BITS:
        raise ValueError(f"window must hold at least {FRAME_BITS} samples, got {len(u)}")
    offset, best, _count = _kernels.match_pattern(u, cfg.signs, cfg.amp_threshold)
    if offset >= 0:
        return SyncDecision(matched=True, offset=offset, score=FRAME_BITS)
    return SyncDecision(matched=False, offset=-1, score=best)


def detect_sync(samples: Sequence[HeterodyneSample] | Iterable[HeterodyneSample],
                cfg: SyncConfig) -> SyncDecision:
    """Pattern search over heterodyne samples (see detect_sync_arrays)."""
    samples = list(samples)
    s2 = np.array([s.s2_meas for s in samples])
    s3 = np.array([s.s3_meas for s in samples])
    return detect_sync_arrays(sync_statistic(s2, s3), cfg)


def scan_pm3(cfg: SyncConfig, link_probe: Callable[[float, int], tuple],
             pulses_per_point: int = SCAN_PULSES_PER_POINT) -> ScanResult:
    """Sweep the third-stage voltage phase over one period.

    The probe measures full-radius pulses at a given phi2:
    link_probe(phi2, n) returns arrays of n (s2, s3) measurements, and
    each grid point averages pulses_per_point of them. The score is the
    smaller of the two averaged components (both must clear the preset
    threshold); failure to clear it anywhere signals the link is not
    ready.
    """
    phases = TWO_PI * np.arange(cfg.scan_points) / cfg.scan_points
    scores = np.empty(cfg.scan_points)
    for i, phi2 in enumerate(phases):
        s2, s3 = link_probe(float(phi2), pulses_per_point)
        scores[i] = min(float(np.mean(s2)), float(np.mean(s3)))
    best = int(np.argmax(scores))
    if scores[best] <= cfg.amp_threshold:
        raise ScanFailedError(
            f"no scan point cleared the threshold {cfg.amp_threshold}"
            f" (best {scores[best]:.3f})")
    return ScanResult(best_voltage_phase=float(phases[best]),
                      best_amplitude=float(scores[best]),
                      grid=tuple(zip(phases.tolist(), scores.tolist())))


class SyncPhase(Enum):
    SCANNING = "scanning"
    SYNCING = "syncing"
    KEYING = "keying"


class SyncEvent(Enum):
    SCAN_SUCCEEDED = "scan_succeeded"
    SCAN_FAILED = "scan_failed"
    FRAME_MATCHED = "frame_matched"
    FRAME_UNMATCHED = "frame_unmatched"
    RESYNC_TRIGGER = "resync_trigger"


def sync_session_step(phase: SyncPhase, event: SyncEvent) -> SyncPhase:
    """Total session-level sync/keying switch; unlisted pairs are no-ops."""
    if phase is SyncPhase.SCANNING and event is SyncEvent.SCAN_SUCCEEDED:
        return SyncPhase.SYNCING
    if phase is SyncPhase.SYNCING and event is SyncEvent.FRAME_MATCHED:
        return SyncPhase.KEYING
    if phase is SyncPhase.KEYING and event is SyncEvent.RESYNC_TRIGGER:
        return SyncPhase.SCANNING
    return phase
