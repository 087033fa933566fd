"""Jones/Stokes algebra and the three-stage Sagnac polarization encoder.

The encoder carves a 45-degree linear state, applies a first phase shift
phi1 in the second Sagnac loop (setting the modulation radius) and a
second shift phi2 in the third loop (setting the angle), producing

    psi5 = (a_lo / 2) * [-(1 + e^{i phi1}), -(1 - e^{i phi1}) e^{i phi2}]

whose transverse Stokes components reduce to the closed form

    (s2, s3) = a_lo^2 * sin(phi1) * (sin(phi2), cos(phi2)).

Sign convention: s2 = 2 Re(e_h conj(e_v)), s3 = 2 Im(e_h conj(e_v)).
The s3 sign is the receiver-side handedness under which the closed-form
readout above comes out with +cos(phi2) and a single positive constant;
the opposite choice flips s3 for circular states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_phase(x: float) -> float:
    """Wrap an angle to the principal range [0, 2*pi)."""
    return x % TWO_PI


@dataclass(frozen=True)
class JonesVector:
    """Complex field amplitudes of the H and V polarization components."""

    e_h: complex
    e_v: complex

    @property
    def intensity(self) -> float:
        return abs(self.e_h) ** 2 + abs(self.e_v) ** 2


@dataclass(frozen=True)
class StokesVector:
    s0: float
    s1: float
    s2: float
    s3: float


@dataclass(frozen=True)
class UniformDraw:
    """Pair of uniform variates feeding the Gaussian modulation map.

    u2 must be strictly positive so that ln(u2) stays finite.
    """

    u1: float
    u2: float

    def __post_init__(self):
        if not 0.0 <= self.u1 <= 1.0:
            raise ValueError(f"u1 must lie in [0, 1], got {self.u1}")
        if not 0.0 < self.u2 <= 1.0:
            raise ValueError(f"u2 must lie in (0, 1], got {self.u2}")


@dataclass(frozen=True)
class QuadraturePair:
    """Target (x1, p1) quadratures in shot-noise units."""

    x1: float
    p1: float


@dataclass(frozen=True)
class DrivePhases:
    """Phase-modulator drive pair, wrapped to [0, 2*pi)."""

    phi1: float
    phi2: float

    def __post_init__(self):
        object.__setattr__(self, "phi1", wrap_phase(self.phi1))
        object.__setattr__(self, "phi2", wrap_phase(self.phi2))


@dataclass(frozen=True)
class ModulationConfig:
    """Modulation variance, LO amplitude and phase-to-Stokes calibration.

    readout_gain is the largest representable modulation radius (the
    arcsine domain of the inverse map). The default 8*sqrt(v1) keeps the
    clip probability of Gaussian draws near 1e-14.
    """

    v1: float = 4.0
    a_lo: float = 1.0
    readout_gain: float | None = None

    def __post_init__(self):
        if self.v1 <= 0.0:
            raise ValueError(f"v1 must be positive, got {self.v1}")
        if self.a_lo <= 0.0:
            raise ValueError(f"a_lo must be positive, got {self.a_lo}")
        if self.readout_gain is None:
            object.__setattr__(self, "readout_gain", 8.0 * math.sqrt(self.v1))
        if self.readout_gain <= 0.0:
            raise ValueError(f"readout_gain must be positive, got {self.readout_gain}")


@dataclass(frozen=True)
class SagnacStages:
    """All intermediate polarization states of one encoder pass."""

    psi_in: JonesVector
    psi1: JonesVector
    psi2: JonesVector
    psi3: JonesVector
    psi4: JonesVector
    psi5: JonesVector


def jones_to_stokes(j: JonesVector) -> StokesVector:
    """Convert a Jones vector to Stokes parameters (convention in module docstring)."""
    h, v = complex(j.e_h), complex(j.e_v)
    cross = h * v.conjugate()
    return StokesVector(
        s0=abs(h) ** 2 + abs(v) ** 2,
        s1=abs(h) ** 2 - abs(v) ** 2,
        s2=2.0 * cross.real,
        s3=2.0 * cross.imag,
    )


def encode_chain_stages(phases: DrivePhases, cfg: ModulationConfig) -> SagnacStages:
    """Propagate through the full three-stage chain, exposing every state."""
    a = cfg.a_lo
    r2 = a / math.sqrt(2.0)
    e1 = complex(math.cos(phases.phi1), math.sin(phases.phi1))  # e^{i phi1}
    e2 = complex(math.cos(phases.phi2), math.sin(phases.phi2))  # e^{i phi2}
    psi_in = JonesVector(r2, r2)
    psi1 = JonesVector(r2 * e1, r2)
    psi2 = JonesVector(r2, -r2 * e1)
    psi3 = JonesVector(0.5 * a * (1.0 - e1), -0.5 * a * (1.0 + e1))
    psi4 = JonesVector(0.5 * a * (1.0 - e1) * e2, -0.5 * a * (1.0 + e1))
    psi5 = JonesVector(-0.5 * a * (1.0 + e1), -0.5 * a * (1.0 - e1) * e2)
    return SagnacStages(psi_in, psi1, psi2, psi3, psi4, psi5)


def encode_chain(phases: DrivePhases, cfg: ModulationConfig) -> JonesVector:
    """Output state of the encoder (the chain is lossless: s0 = a_lo**2)."""
    return encode_chain_stages(phases, cfg).psi5


def ideal_stokes_readout(phases: DrivePhases, cfg: ModulationConfig) -> StokesVector:
    """Closed-form Stokes readout of the encoder at the given drive phases.

    (s2, s3) = readout_gain * sin(phi1) * (sin(phi2), cos(phi2)); s0 and
    s1 are taken from the corresponding Jones state.
    """
    sin1 = math.sin(phases.phi1)
    s2 = cfg.readout_gain * sin1 * math.sin(phases.phi2)
    s3 = cfg.readout_gain * sin1 * math.cos(phases.phi2)
    js = jones_to_stokes(encode_chain(phases, cfg))
    return StokesVector(s0=js.s0, s1=js.s1, s2=s2, s3=s3)


def sample_gaussian_point(u: UniformDraw, cfg: ModulationConfig) -> QuadraturePair:
    """Box-Muller map from (u1, u2) to a bivariate normal with variance v1.

    x1 = sqrt(-2 v1 ln u2) cos(2 pi u1), p1 likewise with sin.
    """
    if u.u2 <= 0.0:
        raise ValueError("u2 = 0 gives an infinite modulation radius")
    r = math.sqrt(-2.0 * cfg.v1 * math.log(u.u2))
    return QuadraturePair(r * math.cos(TWO_PI * u.u1), r * math.sin(TWO_PI * u.u1))


def phases_for_target(q: QuadraturePair, cfg: ModulationConfig) -> DrivePhases:
    """Invert the closed-form readout: drive phases reproducing (x1, p1).

    Radii beyond readout_gain are clipped silently (callers count
    saturation through target_saturates or the batch helper). phi1 uses
    the arcsine principal branch [0, pi/2].
    """
    r = math.hypot(q.x1, q.p1)
    phi1 = math.asin(min(r, cfg.readout_gain) / cfg.readout_gain)
    phi2 = math.atan2(q.x1, q.p1)
    return DrivePhases(phi1, phi2)


def target_saturates(q: QuadraturePair, cfg: ModulationConfig) -> bool:
    """True when the target radius exceeds the representable maximum."""
    return math.hypot(q.x1, q.p1) > cfg.readout_gain


# Batch helpers for the per-pulse pipeline and the grid-scale tests.

def sample_gaussian_block(rng: np.random.Generator, n: int, cfg: ModulationConfig):
    """Draw n modulation targets; returns (x, p) float64 arrays.

    Consumes exactly two uniform blocks of length n from rng. u2 is
    mapped to (0, 1] so the log stays finite.
    """
    u1 = rng.random(n)
    u2 = 1.0 - rng.random(n)
    r = np.sqrt(-2.0 * cfg.v1 * np.log(u2))
    return r * np.cos(TWO_PI * u1), r * np.sin(TWO_PI * u1)


def clip_radius(x: np.ndarray, p: np.ndarray, gain: float):
    """Clip (x, p) to the disk of radius gain; returns (x, p, n_clipped)."""
    r = np.hypot(x, p)
    over = r > gain
    n_over = int(np.count_nonzero(over))
    if n_over:
        scale = np.where(over, gain / np.where(r > 0, r, 1.0), 1.0)
        x = x * scale
        p = p * scale
    return x, p, n_over


def encode_chain_batch(phi1: np.ndarray, phi2: np.ndarray, cfg: ModulationConfig):
    """Vectorized psi5 components for arrays of drive phases."""
    e1 = np.exp(1j * np.asarray(phi1))
    e2 = np.exp(1j * np.asarray(phi2))
    e_h = -0.5 * cfg.a_lo * (1.0 + e1)
    e_v = -0.5 * cfg.a_lo * (1.0 - e1) * e2
    return e_h, e_v


def jones_to_stokes_batch(e_h: np.ndarray, e_v: np.ndarray):
    """Vectorized Stokes conversion; returns (s0, s1, s2, s3) arrays."""
    ih = np.abs(e_h) ** 2
    iv = np.abs(e_v) ** 2
    cross = e_h * np.conj(e_v)
    return ih + iv, ih - iv, 2.0 * cross.real, 2.0 * cross.imag
