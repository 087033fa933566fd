"""Alice/Bob per-block session state machines.

The session advances Sync -> Exchange (transmit/measure) -> Reveal ->
Estimate -> Reconcile -> Amplify -> Done over a reliable in-order
message transport; any sequence gap or out-of-place event faults the
session into Aborted with a reason code. Bob (the receiver) owns the
estimation: he picks the reveal indices, compensates the polarization
rotation, bounds the channel parameters and publishes the key-rate
outcome in an EstimateAck; a nonpositive bracket aborts both sides with
NO_KEY. Alice waits in Estimate and Reconcile for Bob's messages; Bob
performs estimation and reconciliation inside the reveal exchange (no
inbound message separates them on his side) and then waits in Amplify.
Message choreography:

    Alice                               Bob
      SyncAnnounce  ->
                    <-  RevealIndices
      RevealValues  ->
                    <-  EstimateAck, ReconcileBlock
      PaSeed        ->
                    <-  KeyConfirm
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from droneqkd import keyrate, privacy
from droneqkd.channel import ReceiverConfig
from droneqkd.keyrate import (EstimationError, KeyRateInputs, KeyRateReport,
                              NonphysicalCovarianceError, SessionConfig)
from droneqkd.messages import (MessageKind, SessionMessage, pack_bits,
                               pack_float_pairs, pack_indices, unpack_bits,
                               unpack_float_pairs, unpack_indices)


class SessionPhase(Enum):
    SYNC = "sync"
    EXCHANGE = "exchange"
    REVEAL = "reveal"
    ESTIMATE = "estimate"
    RECONCILE = "reconcile"
    AMPLIFY = "amplify"
    DONE = "done"
    ABORTED = "aborted"


class AbortReason(Enum):
    TRANSPORT = "transport"
    NO_KEY = "no_key"
    PROTOCOL = "protocol"
    KEY_MISMATCH = "key_mismatch"


# Events fed to the state machines by the driver.

@dataclass(frozen=True)
class SyncCompleted:
    """The sync engine declared the link synchronized."""


@dataclass(frozen=True)
class BlockSent:
    """Alice's record of the modulated quadratures of one block."""

    x: np.ndarray
    p: np.ndarray


@dataclass(frozen=True)
class BlockMeasured:
    """Bob's heterodyne measurements of one block."""

    s2: np.ndarray
    s3: np.ndarray


@dataclass(frozen=True)
class Received:
    message: SessionMessage


_ACK = struct.Struct(">B8dQ")
_ANNOUNCE = struct.Struct(">Q")


def _key_digest(key_bits: np.ndarray) -> bytes:
    return hashlib.sha256(np.packbits(key_bits).tobytes()).digest()[:8]


class _Endpoint:
    """Sequencing and abort plumbing shared by both roles."""

    def __init__(self, cfg: SessionConfig):
        self.cfg = cfg
        self.phase = SessionPhase.SYNC
        self.abort_reason: AbortReason | None = None
        self._out_seq = 0
        self._in_seq = 0

    def _send(self, kind: MessageKind, payload: bytes) -> SessionMessage:
        msg = SessionMessage(kind, self._out_seq, payload)
        self._out_seq += 1
        return msg

    def _abort(self, reason: AbortReason) -> list[SessionMessage]:
        self.phase = SessionPhase.ABORTED
        self.abort_reason = reason
        return []

    def _accept(self, msg: SessionMessage) -> bool:
        """Validate the incoming sequence number; abort on any gap."""
        if msg.seq != self._in_seq:
            self._abort(AbortReason.TRANSPORT)
            return False
        self._in_seq += 1
        return True

    def step(self, event) -> list[SessionMessage]:
        if self.phase in (SessionPhase.DONE, SessionPhase.ABORTED):
            return []
        if isinstance(event, Received) and not self._accept(event.message):
            return []
        return self._dispatch(event)

    def _dispatch(self, event) -> list[SessionMessage]:  # pragma: no cover
        raise NotImplementedError


class AliceSession(_Endpoint):
    """Transmitter-side state machine."""

    def __init__(self, cfg: SessionConfig, rng: np.random.Generator):
        super().__init__(cfg)
        self.rng = rng
        self.sent_x: np.ndarray | None = None
        self.sent_p: np.ndarray | None = None
        self.report: KeyRateReport | None = None
        self.final_key: np.ndarray | None = None
        self._raw_bits: np.ndarray | None = None
        self._target_len = 0

    def _dispatch(self, event) -> list[SessionMessage]:
        if self.phase is SessionPhase.SYNC and isinstance(event, SyncCompleted):
            self.phase = SessionPhase.EXCHANGE
            return [self._send(MessageKind.SYNC_ANNOUNCE,
                               _ANNOUNCE.pack(self.cfg.block_size))]

        if self.phase is SessionPhase.EXCHANGE and isinstance(event, BlockSent):
            if len(event.x) != self.cfg.block_size:
                return self._abort(AbortReason.PROTOCOL)
            self.sent_x = np.asarray(event.x, dtype=np.float64)
            self.sent_p = np.asarray(event.p, dtype=np.float64)
            self.phase = SessionPhase.REVEAL
            return []

        if self.phase is SessionPhase.REVEAL and isinstance(event, Received) \
                and event.message.kind is MessageKind.REVEAL_INDICES:
            idx = unpack_indices(event.message.payload)
            if idx.size == 0 or idx.max() >= self.cfg.block_size:
                return self._abort(AbortReason.PROTOCOL)
            self.phase = SessionPhase.ESTIMATE
            return [self._send(MessageKind.REVEAL_VALUES,
                               pack_float_pairs(self.sent_x[idx], self.sent_p[idx]))]

        if self.phase is SessionPhase.ESTIMATE and isinstance(event, Received) \
                and event.message.kind is MessageKind.ESTIMATE_ACK:
            fields = _ACK.unpack(event.message.payload)
            status = fields[0]
            if status == 0:
                return self._abort(AbortReason.NO_KEY)
            self._target_len = fields[9]
            self.phase = SessionPhase.RECONCILE
            return []

        if self.phase is SessionPhase.RECONCILE and isinstance(event, Received) \
                and event.message.kind is MessageKind.RECONCILE_BLOCK:
            # Oracle reconciliation: adopt Bob's discretized string.
            self._raw_bits = unpack_bits(event.message.payload)
            seed = self.rng.bytes(privacy.PA_SEED_BYTES)
            self.final_key = privacy.toeplitz_hash(self._raw_bits, seed,
                                                   self._target_len)
            self.phase = SessionPhase.AMPLIFY
            return [self._send(MessageKind.PA_SEED, seed)]

        if self.phase is SessionPhase.AMPLIFY and isinstance(event, Received) \
                and event.message.kind is MessageKind.KEY_CONFIRM:
            if event.message.payload != _key_digest(self.final_key):
                return self._abort(AbortReason.KEY_MISMATCH)
            self.phase = SessionPhase.DONE
            return []

        return self._abort(AbortReason.PROTOCOL)


class BobSession(_Endpoint):
    """Receiver-side state machine; owns estimation and the key rate."""

    def __init__(self, cfg: SessionConfig, rcv: ReceiverConfig,
                 rng: np.random.Generator, compensate: bool = True):
        super().__init__(cfg)
        self.rcv = rcv
        self.rng = rng
        self.compensate = compensate
        self.meas_s2: np.ndarray | None = None
        self.meas_s3: np.ndarray | None = None
        self.estimate: keyrate.CovarianceEstimate | None = None
        self.rotation: float = 0.0
        self.report: KeyRateReport | None = None
        self.final_key: np.ndarray | None = None
        self._announced = False
        self._reveal_idx: np.ndarray | None = None
        self._kept_idx: np.ndarray | None = None
        self._raw_bits: np.ndarray | None = None
        self._target_len = 0

    def _dispatch(self, event) -> list[SessionMessage]:
        if self.phase is SessionPhase.SYNC and isinstance(event, SyncCompleted):
            self.phase = SessionPhase.EXCHANGE
            return []

        if self.phase is SessionPhase.EXCHANGE and isinstance(event, Received) \
                and event.message.kind is MessageKind.SYNC_ANNOUNCE:
            (announced_n,) = _ANNOUNCE.unpack(event.message.payload)
            if announced_n != self.cfg.block_size:
                return self._abort(AbortReason.PROTOCOL)
            self._announced = True
            return []

        if self.phase is SessionPhase.EXCHANGE and isinstance(event, BlockMeasured):
            if not self._announced or len(event.s2) != self.cfg.block_size:
                return self._abort(AbortReason.PROTOCOL)
            self.meas_s2 = np.asarray(event.s2, dtype=np.float64)
            self.meas_s3 = np.asarray(event.s3, dtype=np.float64)
            perm = self.rng.permutation(self.cfg.block_size)
            self._reveal_idx = np.sort(perm[:self.cfg.n_reveal])
            self._kept_idx = np.sort(perm[self.cfg.n_reveal:])
            self.phase = SessionPhase.REVEAL
            return [self._send(MessageKind.REVEAL_INDICES,
                               pack_indices(self._reveal_idx))]

        if self.phase is SessionPhase.REVEAL and isinstance(event, Received) \
                and event.message.kind is MessageKind.REVEAL_VALUES:
            sent_x, sent_p = unpack_float_pairs(event.message.payload)
            if sent_x.size != self._reveal_idx.size:
                return self._abort(AbortReason.PROTOCOL)
            return self._estimate_and_ack(sent_x, sent_p)

        if self.phase is SessionPhase.AMPLIFY and isinstance(event, Received) \
                and event.message.kind is MessageKind.PA_SEED:
            if len(event.message.payload) != privacy.PA_SEED_BYTES:
                return self._abort(AbortReason.PROTOCOL)
            self.final_key = privacy.toeplitz_hash(
                self._raw_bits, event.message.payload, self._target_len)
            self.phase = SessionPhase.DONE
            return [self._send(MessageKind.KEY_CONFIRM, _key_digest(self.final_key))]

        return self._abort(AbortReason.PROTOCOL)

    def _estimate_and_ack(self, sent_x, sent_p) -> list[SessionMessage]:
        self.phase = SessionPhase.ESTIMATE
        rev_s2 = self.meas_s2[self._reveal_idx]
        rev_s3 = self.meas_s3[self._reveal_idx]
        if self.compensate:
            self.rotation = keyrate.compensate_polarization(
                sent_x, sent_p, rev_s2, rev_s3)
            self.meas_s2, self.meas_s3 = keyrate.rotate_quadratures(
                self.meas_s2, self.meas_s3, -self.rotation)
            rev_s2 = self.meas_s2[self._reveal_idx]
            rev_s3 = self.meas_s3[self._reveal_idx]
        try:
            est = keyrate.estimate_parameters(sent_x, sent_p, rev_s2, rev_s3,
                                              self.cfg, self.rcv)
            report = keyrate.compute_key_rate(est, self.cfg, self.rcv)
        except (EstimationError, NonphysicalCovarianceError):
            nack = self._send(MessageKind.ESTIMATE_ACK,
                              _ACK.pack(0, *([0.0] * 8), 0))
            self._abort(AbortReason.NO_KEY)
            return [nack]
        self.estimate = est
        self.report = report
        if report.bracket <= 0.0:
            nack = self._send(MessageKind.ESTIMATE_ACK, _ACK.pack(
                0, est.t_hat, est.xi_hat, est.t_lo, est.xi_hi,
                report.i_ab, report.chi_be, report.delta_n, report.bracket, 0))
            self._abort(AbortReason.NO_KEY)
            return [nack]
        inputs = KeyRateInputs(est, self.cfg, report.i_ab, report.chi_be,
                               report.delta_n)
        self._target_len = privacy.key_target_length(self._kept_idx.size, inputs)
        ack = self._send(MessageKind.ESTIMATE_ACK, _ACK.pack(
            1, est.t_hat, est.xi_hat, est.t_lo, est.xi_hi,
            report.i_ab, report.chi_be, report.delta_n, report.bracket,
            self._target_len))
        self._raw_bits = privacy.discretize(self.meas_s2[self._kept_idx])
        self.phase = SessionPhase.AMPLIFY
        return [ack, self._send(MessageKind.RECONCILE_BLOCK,
                                pack_bits(self._raw_bits))]


def run_block_session(alice: AliceSession, bob: BobSession,
                      sent: BlockSent, measured: BlockMeasured) -> None:
    """Drive one block through both endpoints over an in-process transport.

    Messages are delivered strictly in emission order per direction.
    Terminates when both sessions are Done or Aborted.
    """
    to_bob: list[SessionMessage] = []
    to_alice: list[SessionMessage] = []
    to_bob += alice.step(SyncCompleted())
    bob.step(SyncCompleted())
    while to_bob:
        to_alice += bob.step(Received(to_bob.pop(0)))
    to_bob += alice.step(sent)
    to_alice += bob.step(measured)
    while to_bob or to_alice:
        while to_alice:
            to_bob += alice.step(Received(to_alice.pop(0)))
        while to_bob:
            to_alice += bob.step(Received(to_bob.pop(0)))
