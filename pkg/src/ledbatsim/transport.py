"""Endpoint machinery shared by both controllers.

Receiver: acknowledges every arriving data packet with the cumulative
in-order sequence and stamps the one-way delay it measured on its own clock.

SenderBase: sequencing, window gating, loss detection, and retransmission.
Loss is inferred from 3 duplicate cumulative acks (plus a coarse safety
timeout of 2x the largest observed RTT, at least 1 s, for the tiny-window
deadlock case). While a recovery episode is open, each partial cumulative
advance retransmits the next hole immediately; there is no fast-recovery
window inflation anywhere. Window halving is rate-limited to once per
smoothed RTT by the controller subclasses via _halve().

Flightsize is next_seq-1-highest_acked: packets sent and not yet cumulatively
acked, including any that were dropped but not yet recovered. A new send
requires cwnd - flightsize >= 1, which keeps flightsize within ceil(cwnd) at
send time; right after a halving flightsize may exceed cwnd until acks drain.
"""

from .engine import Engine, EventKind
from .network import Bottleneck, Packet

ACK_BYTES = 40
DUPACK_THRESHOLD = 3
MIN_TIMEOUT_US = 1_000_000


class Receiver:
    """Cumulative-ack receiver with an out-of-order hold buffer."""

    def __init__(self, flow_id: int, clock_offset_us: int = 0):
        self.flow_id = flow_id
        self.clock_offset_us = clock_offset_us
        self.highest_in_order = 0
        self._buffered: set[int] = set()

    def on_data(self, pkt: Packet, now: int) -> Packet:
        """Ingest a data packet, return the ack to send back.

        measured_delay is the receiver-clock arrival time minus the sender's
        departure stamp; clock_offset_us models the receiver-minus-sender
        clock disagreement, so the value can be negative.
        """
        measured = now + self.clock_offset_us - pkt.sent_at_sender_clock
        seq = pkt.seq
        if seq == self.highest_in_order + 1:
            self.highest_in_order = seq
            while self.highest_in_order + 1 in self._buffered:
                self._buffered.remove(self.highest_in_order + 1)
                self.highest_in_order += 1
        elif seq > self.highest_in_order + 1:
            self._buffered.add(seq)
        # else: stale duplicate, still re-ack the cumulative point
        return Packet(
            self.flow_id,
            0,
            ACK_BYTES,
            now,
            is_ack=True,
            ack_of_seq=self.highest_in_order,
            measured_delay_us=measured,
        )


class SenderBase:
    """Window-based sender. Subclasses implement the congestion controller."""

    kind = "base"

    def __init__(
        self,
        engine: Engine,
        flow_id: int,
        link: Bottleneck,
        packet_bytes: int,
        min_cwnd_pkts: float = 1.0,
    ):
        self.engine = engine
        self.flow_id = flow_id
        self.link = link
        self.packet_bytes = packet_bytes
        self.min_cwnd = float(min_cwnd_pkts)

        self.cwnd = self.min_cwnd
        self.next_seq = 1
        self.highest_acked = 0
        self.dupacks = 0
        self.rtt_est_us: int | None = None
        self.max_rtt_us = 0
        self.last_halving_at: int | None = None
        self.started = False

        self._send_times: dict[int, int] = {}
        self._next_send_at = 0
        self._pacing_ev = None
        self._recovery_point = 0
        self._last_progress_at = 0

        self.acks_received = 0
        self.retransmits = 0
        self.halvings: list[tuple[int, float, int]] = []  # (t, cwnd_after, rtt_gate)
        self.timeouts: list[int] = []

    # -- controller hooks -------------------------------------------------

    def on_delay_sample(self, ack: Packet, now: int) -> None:
        """Every ack (duplicates included) carries a one-way delay sample."""

    def on_new_ack(self, ack: Packet, newly_acked: int, now: int) -> None:
        raise NotImplementedError

    def on_loss(self, now: int) -> None:
        raise NotImplementedError

    def pacing_gap_us(self) -> int:
        """Microseconds between paced sends; 0 means batch mode."""
        return 0

    # -- sending -----------------------------------------------------------

    @property
    def flightsize(self) -> int:
        return self.next_seq - 1 - self.highest_acked

    def start(self, now: int) -> None:
        self.started = True
        self._last_progress_at = now
        self.try_send(now)

    def try_send(self, now: int) -> None:
        while self.cwnd - self.flightsize >= 1.0:
            gap = self.pacing_gap_us()
            if gap and now < self._next_send_at:
                if self._pacing_ev is None or not self._pacing_ev.pending:
                    self._pacing_ev = self.engine.schedule(
                        self._next_send_at, EventKind.PACING_TIMER, self.flow_id
                    )
                return
            self._transmit(self.next_seq, now)
            self.next_seq += 1
            self._next_send_at = now + gap

    def on_pacing_timer(self, now: int) -> None:
        self._pacing_ev = None
        if self.started:
            self.try_send(now)

    def _transmit(self, seq: int, now: int, retransmission: bool = False) -> None:
        self._send_times[seq] = now
        if retransmission:
            self.retransmits += 1
        self.link.enqueue(
            Packet(self.flow_id, seq, self.packet_bytes, now, is_retransmission=retransmission)
        )

    # -- receiving ---------------------------------------------------------

    def on_ack(self, ack: Packet, now: int) -> None:
        self.acks_received += 1
        acked = ack.ack_of_seq
        if acked > self.highest_acked:
            newly = acked - self.highest_acked
            for s in range(self.highest_acked + 1, acked):
                self._send_times.pop(s, None)
            sent_at = self._send_times.pop(acked, None)
            self.highest_acked = acked
            self.dupacks = 0
            self._last_progress_at = now
            if sent_at is not None:
                self._rtt_sample(now - sent_at)
            self.on_delay_sample(ack, now)
            if self._recovery_point:
                if self.highest_acked < self._recovery_point:
                    # partial advance: the next hole is inferred lost too
                    self._retransmit_hole(now)
                else:
                    self._recovery_point = 0
            self.on_new_ack(ack, newly, now)
            self.try_send(now)
        else:
            self.dupacks += 1
            self.on_delay_sample(ack, now)
            if not self._recovery_point and self.dupacks >= DUPACK_THRESHOLD:
                self.dupacks = 0
                self._recovery_point = self.next_seq - 1
                self._retransmit_hole(now)
                self.on_loss(now)
                self.try_send(now)

    def _retransmit_hole(self, now: int) -> None:
        self._transmit(self.highest_acked + 1, now, retransmission=True)

    def _rtt_sample(self, sample_us: int) -> None:
        if self.rtt_est_us is None:
            self.rtt_est_us = sample_us
        else:
            self.rtt_est_us = (7 * self.rtt_est_us + sample_us) // 8
        if sample_us > self.max_rtt_us:
            self.max_rtt_us = sample_us

    # -- loss helpers --------------------------------------------------------

    def _halve(self, now: int, new_cwnd: float) -> bool:
        """Apply a window reduction unless one already happened this RTT."""
        gate = self.rtt_est_us if self.rtt_est_us is not None else 0
        if self.last_halving_at is not None and now - self.last_halving_at < gate:
            return False
        self.cwnd = new_cwnd
        self.last_halving_at = now
        self.halvings.append((now, new_cwnd, gate))
        return True

    def check_timeout(self, now: int) -> None:
        """Coarse deadlock escape, polled on the periodic stats tick."""
        if not self.started or self.flightsize == 0:
            return
        deadline = self._last_progress_at + max(2 * self.max_rtt_us, MIN_TIMEOUT_US)
        if now >= deadline:
            self.timeouts.append(now)
            self._last_progress_at = now
            self._recovery_point = self.next_seq - 1
            self.dupacks = 0
            self._retransmit_hole(now)
            self.on_loss(now)
