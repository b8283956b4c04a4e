"""VPN overlay modeled as pure per-packet transformations.

The tunnel compresses the payload, charges an encryption cost, and adds a
fixed encapsulation overhead.  No bytes are actually transformed — only the
sizes and processing delays that matter to latency and throughput.  The
encapsulation bits ride inside `payload_bits` while wrapped; the original
size is carried alongside so the far end restores it exactly (ceil rounding
is not invertible on its own).

Compression is modeled before encryption.  The reverse order would make the
compression term inert (ciphertext does not compress), and the compression
benefit on slow links is one of the effects under study.
"""

import math
from dataclasses import dataclass, replace

from .packet import PacketRecord


@dataclass
class TunnelConfig:
    encap_overhead_bits: int = 296  # 37 bytes
    compression_ratio: float = 0.7  # applied to payload only
    crypto_cost_us_per_kbit: float = 8.0
    per_packet_cost_us: float = 25.0
    enabled: bool = False

    def __post_init__(self):
        if not 0.0 < self.compression_ratio <= 1.0:
            raise ValueError(f"compression ratio {self.compression_ratio} "
                             "outside (0, 1]")
        if self.crypto_cost_us_per_kbit < 0 or self.per_packet_cost_us < 0 \
                or self.encap_overhead_bits < 0:
            raise ValueError("tunnel costs must be nonnegative")


def _crypto_delay_us(cfg: TunnelConfig, compressed_bits: int) -> float:
    return cfg.per_packet_cost_us + cfg.crypto_cost_us_per_kbit * compressed_bits / 1000.0


def encapsulate(packet: PacketRecord, cfg: TunnelConfig,
                now_us: int) -> tuple[PacketRecord, float]:
    """Compress, encrypt, and wrap; returns the new packet and its cost."""
    if not cfg.enabled:
        raise ValueError("tunnel is not enabled")
    if packet.tunnel_wrapped:
        raise ValueError(f"packet {packet.packet_id} is already wrapped")
    compressed = math.ceil(packet.payload_bits * cfg.compression_ratio)
    wrapped = replace(packet,
                      payload_bits=compressed + cfg.encap_overhead_bits,
                      tunnel_wrapped=True,
                      inner_payload_bits=packet.payload_bits)
    return wrapped, _crypto_delay_us(cfg, compressed)


def decapsulate(packet: PacketRecord,
                cfg: TunnelConfig) -> tuple[PacketRecord, float]:
    """Unwrap and restore the original payload size; cost mirrors encap."""
    if not packet.tunnel_wrapped:
        raise ValueError(f"packet {packet.packet_id} is not wrapped")
    compressed = packet.payload_bits - cfg.encap_overhead_bits
    restored = replace(packet,
                       payload_bits=packet.inner_payload_bits,
                       tunnel_wrapped=False,
                       inner_payload_bits=0)
    return restored, _crypto_delay_us(cfg, compressed)
