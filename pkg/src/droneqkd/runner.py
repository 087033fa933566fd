"""Scenario execution: PAT tick stream, per-block sync + QKD sessions, reports.

A run covers duration_s of simulated time split into blocks of
block_seconds. The tracking loops tick at 500 Hz for the whole run and
their residuals feed the pointing fade of every pulse batch. Each block
re-runs the synchronization sequence (voltage scan, frame detection)
before the QKD exchange, so a fresh sync scan precedes every
transmission. Pulse processing is downsampled: block_seconds of real
pulses are represented by session.block_size processed pulses whose
channel steps use the stretched time step, and key-bit counts are
scaled back through the rate formula; exact-counts mode processes every
real pulse instead (use short blocks).

Everything derives from one seed through numpy SeedSequence spawning,
so a (scenario, seed) pair produces byte-identical reports.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from droneqkd import pat as pat_mod
from droneqkd import sync as sync_mod
from droneqkd.channel import (ChannelState, db_to_transmittance, pointing_fade,
                              propagate_and_measure_block)
from droneqkd.scenario import ScenarioConfig
from droneqkd.session import (AliceSession, BlockMeasured, BlockSent,
                              BobSession, SessionPhase, run_block_session)
from droneqkd.stokes import ModulationConfig, clip_radius, sample_gaussian_block

SYNC_ATTEMPTS = 3


@dataclass(frozen=True)
class BlockResult:
    block_index: int
    time_s: float
    t_est: float            # estimated channel transmittance (eta removed)
    xi_est: float
    i_ab: float
    chi_be: float
    delta_n: float
    key_rate_bps: float
    clamped: bool
    key_bits: int           # bits actually hashed out of the processed pulses
    scaled_key_bits: int    # rate-scaled estimate for the full block


@dataclass(frozen=True)
class PatSummary:
    time_s: np.ndarray
    az_urad: np.ndarray
    el_urad: np.ndarray
    phase: list
    rms_urad: float
    p95_urad: float
    lock_fraction: float
    mean_fade: float


@dataclass(frozen=True)
class Counters:
    saturated_pulses: int = 0
    scan_failures: int = 0
    sync_aborts: int = 0
    no_key_aborts: int = 0
    transport_aborts: int = 0
    protocol_aborts: int = 0


@dataclass(frozen=True)
class ScenarioReport:
    name: str
    seed: int
    exact_counts: bool
    blocks: list
    pat: PatSummary
    counters: Counters
    mean_key_rate_bps: float
    transmittance_from_loss: float
    paper_reference: object


def _simulate_pat(cfg: ScenarioConfig, rng: np.random.Generator) -> PatSummary:
    if cfg.pat.enabled:
        run = pat_mod.simulate_tracking(cfg.duration_s, cfg.pat.profile, rng)
        radial = run.radial_urad
        fades = np.array([pointing_fade(r, cfg.pat.beam_divergence_urad)
                          for r in radial])
        stats = pat_mod.tracking_stats(radial)
        return PatSummary(run.time_s, run.az_urad, run.el_urad, run.phase,
                          stats["rms"], stats["p95"], stats["lock_fraction"],
                          float(fades.mean()))
    n = int(round(cfg.duration_s * pat_mod.FINE_RATE_HZ))
    zero = np.zeros(n)
    times = (np.arange(n) + 1) / pat_mod.FINE_RATE_HZ
    return PatSummary(times, zero, zero.copy(),
                      [pat_mod.TrackPhase.QUANTUM_LINK.value] * n,
                      0.0, 0.0, 1.0, 1.0)


def _fade_series(cfg: ScenarioConfig, pat_summary: PatSummary) -> np.ndarray:
    if not cfg.pat.enabled:
        return np.ones(len(pat_summary.time_s))
    radial = np.hypot(pat_summary.az_urad, pat_summary.el_urad)
    div = cfg.pat.beam_divergence_urad
    return np.exp(-2.0 * (radial / div) ** 2)


def _run_sync(cfg: ScenarioConfig, state: ChannelState, fade_now: float,
              rng: np.random.Generator):
    """One scan + frame-detection cycle; returns (ok, scan_failed)."""
    sync_cfg = cfg.sync
    mod = ModulationConfig(v1=cfg.session.v1)
    t_eff = db_to_transmittance(cfg.channel.loss_db) * fade_now
    amp = math.sqrt(t_eff)
    root_eta = math.sqrt(cfg.receiver.detection_efficiency)
    sigma_det = math.sqrt(1.0 + cfg.receiver.electronic_noise)
    sigma_ch = math.sqrt(t_eff * cfg.channel.excess_noise)
    theta = state.drift_phase + state.doppler_phase
    c, s = math.cos(theta), math.sin(theta)

    def through_link(s2, s3, n=None):
        xr = c * s2 - s * s3
        pr = s * s2 + c * s3
        noise = rng.standard_normal(4 if n is None else (4, n))
        m2 = root_eta * (amp * xr + sigma_ch * noise[0]) + sigma_det * noise[2]
        m3 = root_eta * (amp * pr + sigma_ch * noise[1]) + sigma_det * noise[3]
        return m2, m3

    def probe(phi2: float, n: int):
        return through_link(mod.readout_gain * math.sin(phi2),
                            mod.readout_gain * math.cos(phi2), n)

    fsm = sync_mod.SyncPhase.SCANNING
    for _ in range(SYNC_ATTEMPTS):
        try:
            scan = sync_mod.scan_pm3(sync_cfg, probe)
        except sync_mod.ScanFailedError:
            return False, True
        fsm = sync_mod.sync_session_step(fsm, sync_mod.SyncEvent.SCAN_SUCCEEDED)
        frame = sync_mod.build_sync_frame(sync_cfg, base_phase=scan.best_voltage_phase)
        window_len = sync_cfg.window_len
        # Vacuum window: excess plus detection noise only.
        sigma_win = math.sqrt(cfg.receiver.detection_efficiency * t_eff
                              * cfg.channel.excess_noise
                              + 1.0 + cfg.receiver.electronic_noise)
        s2_win = sigma_win * rng.standard_normal(window_len)
        s3_win = sigma_win * rng.standard_normal(window_len)
        offset = int(rng.integers(0, window_len - sync_mod.FRAME_BITS + 1))
        for k, phases in enumerate(frame):
            s2_tx = mod.readout_gain * math.sin(phases.phi1) * math.sin(phases.phi2)
            s3_tx = mod.readout_gain * math.sin(phases.phi1) * math.cos(phases.phi2)
            m2, m3 = through_link(s2_tx, s3_tx)
            s2_win[offset + k] = m2
            s3_win[offset + k] = m3
        decision = sync_mod.detect_sync_arrays(
            sync_mod.sync_statistic(s2_win, s3_win), sync_cfg)
        if decision.matched:
            fsm = sync_mod.sync_session_step(fsm, sync_mod.SyncEvent.FRAME_MATCHED)
            assert fsm is sync_mod.SyncPhase.KEYING
            return True, False
        fsm = sync_mod.sync_session_step(fsm, sync_mod.SyncEvent.FRAME_UNMATCHED)
    return False, False


def run_scenario(cfg: ScenarioConfig, seed_override: int | None = None,
                 exact_counts: bool = False) -> ScenarioReport:
    """Execute a scenario; never raises on session aborts (counted instead)."""
    seed = cfg.seed if seed_override is None else seed_override
    root = np.random.SeedSequence(seed)
    pat_rng = np.random.default_rng(root.spawn(1)[0])

    session_cfg = cfg.session
    if exact_counts:
        session_cfg = replace(
            cfg.session,
            block_size=int(round(cfg.block_seconds * cfg.channel.pulse_rate_hz)))

    pat_summary = _simulate_pat(cfg, pat_rng)
    fades = _fade_series(cfg, pat_summary)

    # Quantum transmission starts once tracking reaches QuantumLink;
    # blocks are scheduled from that point.
    quantum = pat_mod.TrackPhase.QUANTUM_LINK.value
    first_q = next((i for i, ph in enumerate(pat_summary.phase) if ph == quantum),
                   None)
    if first_q is None:
        t_base = cfg.duration_s
    else:
        t_base = first_q / pat_mod.FINE_RATE_HZ
    n_blocks = max(0, int((cfg.duration_s - t_base) // cfg.block_seconds))
    streams = root.spawn(4 * n_blocks)

    mod = ModulationConfig(v1=session_cfg.v1)
    state = ChannelState()
    n_pulses = session_cfg.block_size
    dt_eff = cfg.block_seconds / n_pulses

    blocks: list[BlockResult] = []
    saturated = 0
    scan_failures = 0
    sync_aborts = 0
    aborts = {"no_key": 0, "transport": 0, "protocol": 0, "key_mismatch": 0}

    for b in range(n_blocks):
        alice_rng = np.random.default_rng(streams[4 * b])
        bob_rng = np.random.default_rng(streams[4 * b + 1])
        chan_rng = np.random.default_rng(streams[4 * b + 2])
        sync_rng = np.random.default_rng(streams[4 * b + 3])
        t_start = t_base + b * cfg.block_seconds

        tick0 = min(int(t_start * pat_mod.FINE_RATE_HZ), len(fades) - 1)
        ok, scan_failed = _run_sync(cfg, state, float(fades[tick0]), sync_rng)
        if not ok:
            if scan_failed:
                scan_failures += 1
            else:
                sync_aborts += 1
            continue

        x, p = sample_gaussian_block(alice_rng, n_pulses, session_cfg)
        x, p, n_clip = clip_radius(x, p, mod.readout_gain)
        saturated += n_clip

        times = t_start + (np.arange(n_pulses) + 0.5) * dt_eff
        ticks = np.minimum((times * pat_mod.FINE_RATE_HZ).astype(np.int64),
                           len(fades) - 1)
        fade_per_pulse = fades[ticks]
        s2, s3 = propagate_and_measure_block(
            x, p, state, cfg.channel, cfg.receiver, chan_rng,
            fade=fade_per_pulse, dt=dt_eff)

        alice = AliceSession(session_cfg, alice_rng)
        bob = BobSession(session_cfg, cfg.receiver, bob_rng)
        run_block_session(alice, bob, BlockSent(x, p), BlockMeasured(s2, s3))

        if bob.phase is SessionPhase.DONE and alice.phase is SessionPhase.DONE:
            rep = bob.report
            est = bob.estimate
            blocks.append(BlockResult(
                block_index=b,
                time_s=t_start,
                t_est=est.t_hat ** 2 / cfg.receiver.detection_efficiency,
                xi_est=est.xi_hat,
                i_ab=rep.i_ab,
                chi_be=rep.chi_be,
                delta_n=rep.delta_n,
                key_rate_bps=rep.key_rate_bps,
                clamped=rep.clamped,
                key_bits=int(bob.final_key.size),
                scaled_key_bits=int(rep.key_rate_bps * cfg.block_seconds),
            ))
        else:
            reason = bob.abort_reason or alice.abort_reason
            key = reason.value if reason is not None else "protocol"
            aborts[key] = aborts.get(key, 0) + 1

    mean_rate = (sum(blk.key_rate_bps for blk in blocks) / len(blocks)
                 if blocks else 0.0)
    return ScenarioReport(
        name=cfg.name,
        seed=seed,
        exact_counts=exact_counts,
        blocks=blocks,
        pat=pat_summary,
        counters=Counters(
            saturated_pulses=saturated,
            scan_failures=scan_failures,
            sync_aborts=sync_aborts,
            no_key_aborts=aborts["no_key"],
            transport_aborts=aborts["transport"],
            protocol_aborts=aborts["protocol"] + aborts.get("key_mismatch", 0),
        ),
        mean_key_rate_bps=mean_rate,
        transmittance_from_loss=db_to_transmittance(cfg.channel.loss_db),
        paper_reference=cfg.paper_reference,
    )


# Report files. All floats are written with repr so that parsing the CSV
# back reproduces the exact binary values.

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


BLOCK_COLUMNS = ("block_index", "time_s", "T_est", "xi_est", "i_ab", "chi_be",
                 "delta_n", "key_rate_bps", "clamped")


def emit_report(report: ScenarioReport, out_dir: str | Path) -> list[Path]:
    """Write <name>_blocks.csv, <name>_pat.csv and <name>_summary.txt."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = []
    try:
        paths.append(_write_blocks_csv(report, out))
        paths.append(_write_pat_csv(report, out))
        paths.append(_write_summary(report, out))
    except OSError as exc:
        raise OSError(f"cannot write report for {report.name} in {out}: {exc}") from exc
    return paths


def _write_blocks_csv(report: ScenarioReport, out: Path) -> Path:
    path = out / f"{report.name}_blocks.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BLOCK_COLUMNS)
        for blk in report.blocks:
            writer.writerow([
                blk.block_index, _fmt(blk.time_s), _fmt(blk.t_est),
                _fmt(blk.xi_est), _fmt(blk.i_ab), _fmt(blk.chi_be),
                _fmt(blk.delta_n), _fmt(blk.key_rate_bps), _fmt(blk.clamped),
            ])
    return path


def read_blocks_csv(path: str | Path) -> list[BlockResult]:
    """Parse a blocks CSV back; inverse of _write_blocks_csv."""
    results = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            results.append(BlockResult(
                block_index=int(row["block_index"]),
                time_s=float(row["time_s"]),
                t_est=float(row["T_est"]),
                xi_est=float(row["xi_est"]),
                i_ab=float(row["i_ab"]),
                chi_be=float(row["chi_be"]),
                delta_n=float(row["delta_n"]),
                key_rate_bps=float(row["key_rate_bps"]),
                clamped=row["clamped"] == "true",
                key_bits=0,
                scaled_key_bits=0,
            ))
    return results


def _write_pat_csv(report: ScenarioReport, out: Path) -> Path:
    path = out / f"{report.name}_pat.csv"
    p = report.pat
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("time_s", "az_urad", "el_urad", "phase"))
        for i in range(len(p.time_s)):
            writer.writerow([_fmt(float(p.time_s[i])), _fmt(float(p.az_urad[i])),
                             _fmt(float(p.el_urad[i])), p.phase[i]])
    return path


def _write_summary(report: ScenarioReport, out: Path) -> Path:
    path = out / f"{report.name}_summary.txt"
    c = report.counters
    lines = [
        f"scenario = {report.name}",
        f"seed = {report.seed}",
        f"exact_counts = {_fmt(report.exact_counts)}",
        f"blocks_completed = {len(report.blocks)}",
        f"blocks_aborted = {c.scan_failures + c.sync_aborts + c.no_key_aborts + c.transport_aborts + c.protocol_aborts}",
        f"mean_key_rate_bps = {_fmt(report.mean_key_rate_bps)}",
        f"mean_key_rate_kbps = {_fmt(report.mean_key_rate_bps / 1e3)}",
        f"model_transmittance_from_loss_db = {_fmt(report.transmittance_from_loss)}",
        f"saturated_pulses = {c.saturated_pulses}",
        f"scan_failures = {c.scan_failures}",
        f"sync_aborts = {c.sync_aborts}",
        f"no_key_aborts = {c.no_key_aborts}",
        f"transport_aborts = {c.transport_aborts}",
        f"protocol_aborts = {c.protocol_aborts}",
        f"pat_rms_urad = {_fmt(report.pat.rms_urad)}",
        f"pat_p95_urad = {_fmt(report.pat.p95_urad)}",
        f"pat_lock_fraction = {_fmt(report.pat.lock_fraction)}",
        f"pat_mean_fade = {_fmt(report.pat.mean_fade)}",
    ]
    ref = report.paper_reference
    if ref is not None:
        lines.append("# paper_measured_* values are reference measurements from the")
        lines.append("# source experiment, carried for comparison only; they are not")
        lines.append("# model inputs (except loss_db) and not reproductions.")
        if ref.loss_db is not None:
            lines.append(f"paper_measured_loss_db = {_fmt(ref.loss_db)}")
        if ref.transmittance is not None:
            lines.append(f"paper_measured_transmittance = {_fmt(ref.transmittance)}")
            model_t = report.transmittance_from_loss
            if ref.loss_db is not None and abs(model_t - ref.transmittance) > 1e-3:
                implied_db = -10.0 * math.log10(ref.transmittance)
                lines.append(
                    "paper_transmittance_discrepancy = "
                    f"loss_db {_fmt(ref.loss_db)} implies T {_fmt(round(model_t, 5))} "
                    f"but the measured T {_fmt(ref.transmittance)} implies "
                    f"{_fmt(round(implied_db, 3))} dB; both reported, not reconciled")
        if ref.key_rate_kbps is not None:
            lines.append(f"paper_measured_key_rate_kbps = {_fmt(ref.key_rate_kbps)}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
