"""Scenario files: parsing, validation and the bundled experiment set.

Format: flat ``key = value`` lines with dotted section names, ``#``
comments and blank lines. Every known key has a documented type and
range below; unknown keys and out-of-range values are rejected with the
offending key named, so invalid files never reach the simulator.

The eight bundled fixtures mirror the source experiments: two ground
100 m links measured on different days, hover at 25/50/75 m, slow
motion at 1 m/s, and the two 1.2 km links. Their paper_reference blocks
carry the measured loss/transmittance/key-rate values as reference
metadata only; the receiver and noise entries are assumed-hardware
calibration (the experiment's own values are unpublished), with the
measured loss_db as the single physical input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from droneqkd.channel import ChannelParams, ReceiverConfig
from droneqkd.keyrate import SessionConfig
from droneqkd.pat import DisturbanceProfile
from droneqkd.sync import SyncConfig


class ScenarioError(ValueError):
    """Scenario file failed to parse or validate."""


@dataclass(frozen=True)
class Geometry:
    distance_m: float = 100.0
    altitude_m: float = 0.0
    speed_mps: float = 0.0
    heading_deg_min: float = 90.0
    heading_deg_max: float = 90.0
    travel_m: float = 0.0

    @property
    def slew_urad_per_s(self) -> float:
        """Trajectory-induced angular rate seen by the tracker."""
        if self.speed_mps <= 0.0:
            return 0.0
        return self.speed_mps / self.distance_m * 1e6


@dataclass(frozen=True)
class PatSettings:
    enabled: bool = True
    profile: DisturbanceProfile = field(default_factory=DisturbanceProfile)
    beam_divergence_urad: float = 500.0


@dataclass(frozen=True)
class PaperReference:
    loss_db: float | None = None
    transmittance: float | None = None
    key_rate_kbps: float | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    seed: int
    duration_s: float
    block_seconds: float
    geometry: Geometry
    channel: ChannelParams
    receiver: ReceiverConfig
    session: SessionConfig
    sync: SyncConfig
    pat: PatSettings
    paper_reference: PaperReference | None


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_vibration(raw: str) -> tuple:
    """Parse "12:80,47:30" into ((freq, amplitude), ...); empty allowed."""
    raw = raw.strip()
    if not raw or raw.lower() == "none":
        return ()
    lines = []
    for part in raw.split(","):
        freq, _, amp = part.partition(":")
        lines.append((float(freq), float(amp)))
    return tuple(lines)


def _rng(lo=None, hi=None, lo_open=False, hi_open=False):
    def check(v):
        if lo is not None and (v <= lo if lo_open else v < lo):
            raise ValueError(f"value {v} below minimum {lo}")
        if hi is not None and (v >= hi if hi_open else v > hi):
            raise ValueError(f"value {v} above maximum {hi}")
        return v
    return check


# key -> (parser, range check | None). Defaults live in the dataclasses.
_FIELDS = {
    "name": (str, None),
    "seed": (int, _rng(lo=0)),
    "duration_s": (float, _rng(lo=0, lo_open=True)),
    "geometry.distance_m": (float, _rng(lo=0, lo_open=True)),
    "geometry.altitude_m": (float, _rng(lo=0)),
    "geometry.speed_mps": (float, _rng(lo=0)),
    "geometry.heading_deg_min": (float, _rng(lo=0, hi=360)),
    "geometry.heading_deg_max": (float, _rng(lo=0, hi=360)),
    "geometry.travel_m": (float, _rng(lo=0)),
    "channel.loss_db": (float, _rng(lo=0)),
    "channel.excess_noise": (float, _rng(lo=0)),
    "channel.drift_rate": (float, _rng(lo=0)),
    "channel.doppler_residual_hz": (float, None),
    "channel.pulse_rate_hz": (float, _rng(lo=0, lo_open=True)),
    "channel.timing_jitter_s": (float, _rng(lo=0)),
    "receiver.split_ratio": (float, _rng(lo=0, hi=1, lo_open=True, hi_open=True)),
    "receiver.detection_efficiency": (float, _rng(lo=0, hi=1, lo_open=True)),
    "receiver.electronic_noise": (float, _rng(lo=0)),
    "receiver.extinction_db": (float, _rng(lo=0)),
    "session.block_pulses": (int, _rng(lo=10_000)),
    "session.block_seconds": (float, _rng(lo=0, lo_open=True)),
    "session.reveal_fraction": (float, _rng(lo=0, hi=1, lo_open=True, hi_open=True)),
    "session.beta": (float, _rng(lo=0, hi=1, lo_open=True)),
    "session.v1": (float, _rng(lo=0, lo_open=True)),
    "session.eps_pe": (float, _rng(lo=0, hi=1, lo_open=True, hi_open=True)),
    "session.eps_bar": (float, _rng(lo=0, hi=1, lo_open=True, hi_open=True)),
    "session.eps_pa": (float, _rng(lo=0, hi=1, lo_open=True, hi_open=True)),
    "sync.pattern": (str, None),
    "sync.duty_cycle": (float, _rng(lo=0, hi=0.01, lo_open=True)),
    "sync.amp_threshold": (float, _rng(lo=3, lo_open=True)),
    "sync.sync_amp": (float, _rng(lo=0, lo_open=True)),
    "sync.window_len": (int, _rng(lo=10)),
    "sync.scan_points": (int, _rng(lo=4)),
    "pat.enabled": (_parse_bool, None),
    "pat.vibration": (_parse_vibration, None),
    "pat.white_sigma_urad": (float, _rng(lo=0)),
    "pat.slew_urad_per_s": (float, _rng(lo=0)),
    "pat.beam_divergence_urad": (float, _rng(lo=0, lo_open=True)),
    "paper_reference.loss_db": (float, _rng(lo=0)),
    "paper_reference.transmittance": (float, _rng(lo=0, hi=1, lo_open=True)),
    "paper_reference.key_rate_kbps": (float, _rng(lo=0)),
}

_REQUIRED = ("name", "channel.loss_db")


def parse_scenario_text(text: str, source: str = "<string>") -> dict:
    """Parse scenario text into a validated flat key/value dict."""
    values: dict = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise ScenarioError(f"{source}:{lineno}: expected 'key = value', got {raw_line!r}")
        key = key.strip()
        raw = raw.strip()
        if key not in _FIELDS:
            raise ScenarioError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ScenarioError(f"{source}:{lineno}: duplicate key {key!r}")
        parser, check = _FIELDS[key]
        try:
            val = parser(raw)
            if check is not None:
                check(val)
        except (ValueError, TypeError) as exc:
            raise ScenarioError(f"{source}:{lineno}: invalid value for {key!r}: {exc}") from exc
        values[key] = val
    for key in _REQUIRED:
        if key not in values:
            raise ScenarioError(f"{source}: missing required key {key!r}")
    return values


def build_config(values: dict, source: str = "<string>") -> ScenarioConfig:
    """Assemble a validated ScenarioConfig, applying dataclass defaults."""
    def section(prefix: str) -> dict:
        plen = len(prefix) + 1
        return {k[plen:]: v for k, v in values.items() if k.startswith(prefix + ".")}

    geometry = Geometry(**section("geometry"))
    if geometry.speed_mps > 0.0 and geometry.travel_m <= 0.0:
        raise ScenarioError(
            f"{source}: geometry.speed_mps > 0 requires a trajectory (geometry.travel_m > 0)")
    if geometry.heading_deg_max < geometry.heading_deg_min:
        raise ScenarioError(f"{source}: heading range is reversed")

    try:
        channel = ChannelParams(**section("channel"))
        receiver = ReceiverConfig(**section("receiver"))
        sess = section("session")
        block_pulses = sess.pop("block_pulses", 1_000_000)
        block_seconds = sess.pop("block_seconds", 10.0)
        session = SessionConfig(block_size=block_pulses,
                                pulse_rate_hz=channel.pulse_rate_hz, **sess)
        sync = SyncConfig(**section("sync"))
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"{source}: {exc}") from exc

    pat_vals = section("pat")
    profile = DisturbanceProfile(
        vibration=pat_vals.get("vibration", DisturbanceProfile.vibration),
        white_sigma_urad=pat_vals.get("white_sigma_urad",
                                      DisturbanceProfile.white_sigma_urad),
        slew_urad_per_s=pat_vals.get("slew_urad_per_s", geometry.slew_urad_per_s),
    )
    pat_settings = PatSettings(
        enabled=pat_vals.get("enabled", True),
        profile=profile,
        beam_divergence_urad=pat_vals.get("beam_divergence_urad", 500.0),
    )

    ref_vals = section("paper_reference")
    reference = PaperReference(**ref_vals) if ref_vals else None

    duration = values.get("duration_s", 30.0)
    if duration <= 0.0:
        raise ScenarioError(f"{source}: duration_s must be positive")

    return ScenarioConfig(
        name=values["name"],
        seed=values.get("seed", 1),
        duration_s=duration,
        block_seconds=block_seconds,
        geometry=geometry,
        channel=channel,
        receiver=receiver,
        session=session,
        sync=sync,
        pat=pat_settings,
        paper_reference=reference,
    )


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Load and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    return build_config(parse_scenario_text(text, source=str(path)), source=str(path))


def loads_scenario(text: str, source: str = "<string>") -> ScenarioConfig:
    """Load a scenario from a string (tests and tooling)."""
    return build_config(parse_scenario_text(text, source), source)


def list_bundled() -> list[str]:
    """Names of the bundled fixtures, sorted."""
    pkg = resources.files("droneqkd.scenarios")
    return sorted(p.name[:-len(".scenario")] for p in pkg.iterdir()
                  if p.name.endswith(".scenario"))


def load_bundled(name: str) -> ScenarioConfig:
    """Load a bundled fixture by name (without the .scenario suffix)."""
    pkg = resources.files("droneqkd.scenarios")
    res = pkg / f"{name}.scenario"
    if not res.is_file():
        raise ScenarioError(f"no bundled scenario named {name!r}; "
                            f"available: {', '.join(list_bundled())}")
    return build_config(parse_scenario_text(res.read_text(encoding="utf-8"),
                                            source=f"bundled:{name}"),
                        source=f"bundled:{name}")
