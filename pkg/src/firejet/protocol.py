"""Versioned JSON wire protocol shared by GCS, WMC and the operator console.

Frames are newline-delimited JSON objects; the identical schema runs over the
raw TCP stream and the browser WebSocket endpoint. Unknown message types are
ignored with a warning so the protocol can grow without breaking peers.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

from .errors import MalformedFrame
from .geo import GeoPoint

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1

# Console <-> GCS and GCS <-> WMC message types. The last group are protocol
# extensions beyond the core set; receivers that do not know them ignore them.
KNOWN_TYPES = frozenset({
    "telemetry.uav",
    "telemetry.wmc",
    "detection.update",
    "jet.update",
    "funnel.set",
    "target.select",
    "mode.set",
    "authorize",
    "reset",
    "manual.velocity",
    "target.assign",
    "heartbeat",
    # extensions
    "takeoff",
    "funnel.update",
    "thermal.frame",
    "command.rejected",
})


@dataclass(frozen=True)
class WireMessage:
    type: str
    seq: int
    stamp: float          # sim time, seconds
    payload: dict
    v: int = PROTOCOL_VERSION

    def to_dict(self) -> dict:
        return {
            "v": self.v,
            "type": self.type,
            "seq": self.seq,
            "stamp": round(self.stamp, 3),
            "payload": self.payload,
        }


def encode_frame(msg: WireMessage) -> bytes:
    return json.dumps(msg.to_dict(), sort_keys=True,
                      separators=(",", ":")).encode() + b"\n"


def decode_frame(raw) -> WireMessage:
    """Parse one frame; raises MalformedFrame on any structural problem."""
    if isinstance(raw, bytes):
        try:
            raw = raw.decode()
        except UnicodeDecodeError as ex:
            raise MalformedFrame(f"not utf-8: {ex}") from ex
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as ex:
        raise MalformedFrame(f"bad json: {ex}") from ex
    if not isinstance(obj, dict):
        raise MalformedFrame("frame is not an object")
    try:
        msg = WireMessage(
            type=str(obj["type"]),
            seq=int(obj["seq"]),
            stamp=float(obj["stamp"]),
            payload=obj.get("payload") or {},
            v=int(obj.get("v", PROTOCOL_VERSION)),
        )
    except (KeyError, TypeError, ValueError) as ex:
        raise MalformedFrame(f"missing/invalid field: {ex}") from ex
    if not isinstance(msg.payload, dict):
        raise MalformedFrame("payload must be an object")
    return msg


def is_known_type(msg_type: str) -> bool:
    return msg_type in KNOWN_TYPES


class Outbox:
    """Per-sender strictly increasing sequence numbers."""

    def __init__(self, sender: str):
        self.sender = sender
        self._seq = 0

    def make(self, msg_type: str, payload: dict, stamp: float) -> WireMessage:
        self._seq += 1
        return WireMessage(type=msg_type, seq=self._seq, stamp=stamp,
                           payload=payload)


class SequenceChecker:
    """Receiver-side monotonicity check, one per connection."""

    def __init__(self):
        self.last: Optional[int] = None
        self.violations = 0

    def check(self, msg: WireMessage) -> bool:
        ok = self.last is None or msg.seq > self.last
        if not ok:
            self.violations += 1
        self.last = max(msg.seq, self.last) if self.last is not None else msg.seq
        return ok


def geo_to_payload(g: GeoPoint) -> dict:
    return {"lat": g.lat, "lon": g.lon, "alt": g.alt}


def geo_from_payload(obj: dict) -> GeoPoint:
    try:
        return GeoPoint(lat=float(obj["lat"]), lon=float(obj["lon"]),
                        alt=float(obj.get("alt", 0.0)))
    except (KeyError, TypeError, ValueError) as ex:
        raise MalformedFrame(f"bad geo point: {ex}") from ex
