"""Loss-based AIMD competitor: TCP congestion avoidance with optional slow start.

Congestion avoidance grows the window by 1/cwnd per ack (one packet per RTT);
slow start grows it by 1 per ack until the first loss. On loss the window
halves, at most once per RTT, and slow start is left for good. Loss detection,
retransmission, and send gating live in SenderBase and are shared with the
delay-based flow so the two compete on identical machinery.
"""

import math
from dataclasses import dataclass

from .engine import Engine
from .network import Bottleneck, Packet
from .transport import SenderBase


@dataclass
class TcpConfig:
    slow_start: bool = False
    min_cwnd_pkts: float = 1.0


class TcpFlow(SenderBase):
    kind = "tcp"

    def __init__(
        self,
        engine: Engine,
        flow_id: int,
        link: Bottleneck,
        packet_bytes: int,
        config: TcpConfig | None = None,
    ):
        config = config if config is not None else TcpConfig()
        super().__init__(engine, flow_id, link, packet_bytes, config.min_cwnd_pkts)
        self.config = config
        self.ss_active = config.slow_start
        self.ssthresh = math.inf

    def on_new_ack(self, ack: Packet, newly_acked: int, now: int) -> None:
        if self.ss_active:
            self.cwnd += 1.0
        else:
            self.cwnd += 1.0 / self.cwnd

    def on_loss(self, now: int) -> None:
        ssthresh = self.cwnd / 2.0
        if self._halve(now, max(self.cwnd / 2.0, self.min_cwnd)):
            self.ssthresh = ssthresh
            self.ss_active = False
