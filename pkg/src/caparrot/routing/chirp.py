"""Chirp wire format.

Layout, little-endian, 40 bytes::

    originator u32 | seq u32 | position 3 x f32 | velocity 3 x f32 | value f32 | cohesion f32

The forwarder identity is the link-layer sender and is not part of the payload.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

from caparrot.mobility import Vec3

_FORMAT = struct.Struct("<II8f")
CHIRP_SIZE = _FORMAT.size
assert CHIRP_SIZE == 40


class ChirpDecodeError(ValueError):
    pass


@dataclass(frozen=True)
class Chirp:
    originator: int
    seq: int
    position: Vec3
    velocity: Vec3
    value: float = 1.0
    cohesion: float = 1.0

    def encode(self) -> bytes:
        p, v = self.position, self.velocity
        try:
            return _FORMAT.pack(self.originator, self.seq, p.x, p.y, p.z, v.x, v.y, v.z,
                                self.value, self.cohesion)
        except (struct.error, OverflowError) as exc:
            raise ValueError(f"chirp not encodable: {exc}") from None

    @classmethod
    def decode(cls, payload: bytes) -> "Chirp":
        if len(payload) != CHIRP_SIZE:
            raise ChirpDecodeError(f"expected {CHIRP_SIZE} bytes, got {len(payload)}")
        o, s, px, py, pz, vx, vy, vz, value, coh = _FORMAT.unpack(payload)
        if not all(math.isfinite(f) for f in (px, py, pz, vx, vy, vz)):
            raise ChirpDecodeError("non-finite kinematics")
        if not (0.0 <= value <= 1.0 and 0.0 <= coh <= 1.0):
            raise ChirpDecodeError("metric outside [0, 1]")
        return cls(o, s, Vec3(px, py, pz), Vec3(vx, vy, vz), value, coh)

    def quantized(self) -> "Chirp":
        """The chirp as it looks after a trip over the wire (f32 rounding)."""
        return Chirp.decode(self.encode())
