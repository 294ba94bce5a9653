"""Run metrics computed exclusively from the event log.

The accumulator consumes the same records live and on replay, so recomputed
metrics match the live ones exactly.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, List, Optional

from .errors import VersionMismatch

LOG_VERSION = 1


@dataclass
class RunMetrics:
    central_region_fraction: float
    detection_rate: float
    alternation_count: int
    pair_localization_error_m: float
    cross_pair_error_m: float
    time_to_extinguish_s: float
    steady_state_pan_err_deg: float
    steady_state_tilt_err_deg: float
    final_state: str
    invalid_transitions: int
    fault_entries: int
    keyframes: int
    tracks_opened: int
    target_assign_count: int

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (None if isinstance(v, float) and math.isnan(v) else v)
                for k, v in d.items()}


class MetricsAccumulator:
    def __init__(self):
        self._in_frame = 0
        self._in_central = 0
        self._detected = 0
        self._alternations = 0
        self._pair_errors: List[float] = []
        self._fused_errors: List[float] = []
        self._extinguished_t: Optional[float] = None
        self._engaged_t: Optional[float] = None
        self._angle_samples: List[tuple] = []
        self._final_state = "Configuring"
        self._invalid = 0
        self._faults = 0
        self._keyframes = 0
        self._tracks_opened = 0
        self._assigns = 0

    def observe(self, rec: dict) -> None:
        kind = rec.get("kind")
        if kind == "msg":
            msg = rec.get("msg", {})
            if msg.get("type") == "target.assign" and rec.get("dir") == "tx":
                self._assigns += 1
            return
        if kind != "event":
            return
        ev = rec.get("event")
        if ev == "keyframe":
            self._keyframes += 1
            self._in_frame += rec.get("fires_in_frame", 0)
            self._in_central += rec.get("fires_in_central", 0)
            self._detected += rec.get("fires_detected", 0)
        elif ev == "alternation":
            self._alternations += 1
        elif ev == "pair":
            self._pair_errors.append(float(rec["err_m"]))
        elif ev == "fused":
            self._fused_errors.append(float(rec["err_m"]))
        elif ev == "extinguished":
            if self._extinguished_t is None:
                self._extinguished_t = float(rec["t"])
        elif ev == "angles":
            self._angle_samples.append((float(rec["t"]), float(rec["pan_err"]),
                                        float(rec["tilt_err"])))
        elif ev == "state":
            self._final_state = rec.get("to", self._final_state)
            if rec.get("to") == "Engaged" and self._engaged_t is None:
                self._engaged_t = float(rec["t"])
            if rec.get("to") == "Fault":
                self._faults += 1
        elif ev == "invalid_transition":
            self._invalid += 1
        elif ev == "tracks_opened":
            self._tracks_opened += len(rec.get("ids", []))

    def finalize(self) -> RunMetrics:
        settle = (self._engaged_t + 10.0) if self._engaged_t is not None else None
        steady = [(p, t) for (ts, p, t) in self._angle_samples
                  if settle is not None and ts >= settle]
        return RunMetrics(
            central_region_fraction=_ratio(self._in_central, self._in_frame),
            detection_rate=_ratio(self._detected, self._in_frame),
            alternation_count=self._alternations,
            pair_localization_error_m=_median(self._pair_errors),
            cross_pair_error_m=_median(self._fused_errors),
            time_to_extinguish_s=(self._extinguished_t
                                  if self._extinguished_t is not None
                                  else math.nan),
            steady_state_pan_err_deg=_median([p for p, _ in steady]),
            steady_state_tilt_err_deg=_median([t for _, t in steady]),
            final_state=self._final_state,
            invalid_transitions=self._invalid,
            fault_entries=self._faults,
            keyframes=self._keyframes,
            tracks_opened=self._tracks_opened,
            target_assign_count=self._assigns,
        )


def _ratio(num: int, den: int) -> float:
    return num / den if den else math.nan


def _median(values) -> float:
    return statistics.median(values) if values else math.nan


def metrics_from_records(records: Iterable[dict]) -> RunMetrics:
    acc = MetricsAccumulator()
    for rec in records:
        acc.observe(rec)
    return acc.finalize()


def read_log(path) -> List[dict]:
    """Parse a JSON-lines run log; tolerates a truncated final line."""
    records: List[dict] = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                break  # truncated tail
    if records and records[0].get("kind") == "meta":
        if records[0].get("log_version") != LOG_VERSION:
            raise VersionMismatch(
                f"log version {records[0].get('log_version')} != {LOG_VERSION}")
    return records


def state_dwell_times(records: Iterable[dict]) -> dict:
    """Seconds spent per mission state, from transition events."""
    dwell: dict = {}
    cur = "Configuring"
    t0 = 0.0
    last_t = 0.0
    for rec in records:
        if rec.get("kind") == "event" and rec.get("event") == "state":
            t = float(rec["t"])
            dwell[cur] = dwell.get(cur, 0.0) + (t - t0)
            cur = rec["to"]
            t0 = t
            last_t = t
        elif rec.get("kind") in ("event", "msg"):
            last_t = max(last_t, float(rec.get("t", last_t)))
    dwell[cur] = dwell.get(cur, 0.0) + max(0.0, last_t - t0)
    return dwell
