"""Mission state machine and GCS orchestration.

The state machine is a pure transition table; the orchestrator owns funnel
computation, keyframe perception, track fusion, alternation between
triangulation poses, target assignment to the WMC and the water/extinguish
sequence. All outbound traffic is returned as wire messages so the caller
(headless runner or network service) decides transport and logging.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

from . import perception
from .ballistics import is_reachable, simulate_trajectory
from .errors import (
    DegenerateBaseline,
    FunnelTooSmall,
    InvalidTransition,
    MissingDepth,
    NoFeasiblePose,
)
from .funnel import (
    FlightFunnel,
    ObservationPlan,
    clamp_into,
    compute_funnel,
    contains,
    plan_exploration_poses,
    plan_triangulation_poses,
)
from .geo import EnuPoint, GeoPoint, Pose, enu_to_geo, geo_to_enu, look_at, shortest_arc_deg
from .grid import OccupancyGrid
from .monitor import MonitorSim
from .perception import Keyframe, LocalizedFire
from .protocol import Outbox, WireMessage, geo_from_payload, geo_to_payload
from .worldsim import World

log = logging.getLogger(__name__)


class MissionState(str, Enum):
    Configuring = "Configuring"
    Ready = "Ready"
    Takeoff = "Takeoff"
    InitialExploration = "InitialExploration"
    AwaitSelection = "AwaitSelection"
    Alternating = "Alternating"
    Engaged = "Engaged"
    ManualOverride = "ManualOverride"
    Fault = "Fault"
    Finished = "Finished"


EVENTS = frozenset({
    "funnel_set", "takeoff_cmd", "pose_reached", "detections_updated",
    "target_selected", "authorize", "extinguished", "abort", "comm_loss",
    "reset", "resume",
})

_ANY_STATE_EVENTS = {
    "abort": MissionState.ManualOverride,
    "comm_loss": MissionState.Fault,
    "reset": MissionState.Configuring,
}

_TRANSITIONS: Dict[Tuple[MissionState, str], MissionState] = {
    (MissionState.Configuring, "funnel_set"): MissionState.Ready,
    (MissionState.Ready, "funnel_set"): MissionState.Ready,
    (MissionState.Ready, "takeoff_cmd"): MissionState.Takeoff,
    (MissionState.Takeoff, "pose_reached"): MissionState.InitialExploration,
    (MissionState.InitialExploration, "pose_reached"): MissionState.InitialExploration,
    (MissionState.InitialExploration, "detections_updated"): MissionState.AwaitSelection,
    (MissionState.AwaitSelection, "pose_reached"): MissionState.AwaitSelection,
    (MissionState.AwaitSelection, "detections_updated"): MissionState.AwaitSelection,
    (MissionState.AwaitSelection, "target_selected"): MissionState.Alternating,
    (MissionState.Alternating, "pose_reached"): MissionState.Alternating,
    (MissionState.Alternating, "detections_updated"): MissionState.Alternating,
    (MissionState.Alternating, "target_selected"): MissionState.Alternating,
    (MissionState.Alternating, "authorize"): MissionState.Engaged,
    (MissionState.Engaged, "pose_reached"): MissionState.Engaged,
    (MissionState.Engaged, "detections_updated"): MissionState.Engaged,
    (MissionState.Engaged, "extinguished"): MissionState.Finished,
    (MissionState.ManualOverride, "resume"): MissionState.AwaitSelection,
}


def advance(state: MissionState, event: str) -> MissionState:
    """Pure transition step; undeclared (state, event) pairs raise."""
    if event not in EVENTS:
        raise InvalidTransition(state, event)
    if event in _ANY_STATE_EVENTS:
        return _ANY_STATE_EVENTS[event]
    nxt = _TRANSITIONS.get((state, event))
    if nxt is None:
        raise InvalidTransition(state, event)
    return nxt


def alternation_schedule(plan: ObservationPlan, cycles: int, hold_s: float,
                         speed_mps: float) -> float:
    """Total time for ``cycles`` leg traversals with per-pose holds."""
    leg = plan.left.position.distance_to(plan.right.position)
    return cycles * (leg / speed_mps + hold_s)


@dataclass
class MissionConfig:
    horizon_m: float = 60.0
    margin_m: float = 4.0
    ceiling_agl_m: float = 60.0          # above the funnel center
    climb_agl_m: float = 20.0            # above the funnel floor
    d_key_m: float = 4.5                 # keyframe gate used by the GCS
    baseline_m: float = 5.0
    standoff_m: float = 30.0
    hold_s: float = 5.0
    detection_threshold_c: float = 80.0
    min_area_px: int = 4
    telemetry_hz: float = 10.0
    jet_update_hz: float = 2.0
    keepalive_s: float = 1.0
    reassign_m: float = 0.25
    replan_m: float = 2.0
    aim_tolerance_deg: float = 2.0       # water-on alignment threshold
    water_band_c: Tuple[float, float] = (4.0, 16.0)
    cross_check_limit_m: float = 3.0
    lost_track_policy: str = "hold"      # or "reselect"


class GcsOrchestrator:
    """Single-owner mission logic, advanced by the 20 Hz runner tick."""

    def __init__(
        self,
        world: World,
        monitor: MonitorSim,
        grid: OccupancyGrid,
        enu_origin: GeoPoint,
        area_of_interest: EnuPoint,
        config: Optional[MissionConfig] = None,
        event_log: Optional[Callable[[dict], None]] = None,
    ):
        self.world = world
        self.monitor = monitor
        self.grid = grid
        self.enu_origin = enu_origin
        self.aoi = area_of_interest
        self.cfg = config or MissionConfig()
        self._log = event_log or (lambda rec: None)

        self.state = MissionState.Configuring
        self.funnel: Optional[FlightFunnel] = None
        self.tracks: List[LocalizedFire] = []
        self.keyframes: List[Keyframe] = []
        self._kf_counter = 0
        self._last_kept_gnss: Optional[Pose] = None
        self.selected_id: Optional[int] = None
        self.plan: Optional[ObservationPlan] = None
        self._pending_plan: Optional[ObservationPlan] = None
        self._leg = "left"
        self._exploration: List[Pose] = []
        self._exploration_idx = 0
        self._last_assign_pos: Optional[EnuPoint] = None
        self._last_assign_t = -math.inf
        self._view_dirs: Dict[int, Tuple[float, float, float, int]] = {}
        self._jet_path: Optional[list] = None
        self._jet_angles: Optional[Tuple[float, float]] = None
        self._tick_index = 0
        self.invalid_transitions = 0
        self._force_keyframe = False
        self._column_tops = grid.column_top_height()

        self.outbox = Outbox("gcs")          # GCS -> console link
        self.wmc_outbox = Outbox("wmc")      # WMC -> GCS telemetry
        self.assign_outbox = Outbox("gcs-wmc")  # GCS -> WMC commands

        dt = world.config.dt
        self._telemetry_every = max(1, int(round(1.0 / (self.cfg.telemetry_hz * dt))))
        self._jet_every = max(1, int(round(1.0 / (self.cfg.jet_update_hz * dt))))

    # ------------------------------------------------------------------
    # events

    def fire_event(self, event: str, detail: Optional[dict] = None) -> bool:
        try:
            new = advance(self.state, event)
        except InvalidTransition:
            self.invalid_transitions += 1
            self._log({"kind": "event", "event": "invalid_transition",
                       "t": self.world.clock, "state": self.state.value,
                       "trigger": event})
            log.warning("invalid transition: %s in %s", event, self.state.value)
            return False
        if new is not self.state:
            self._log({"kind": "event", "event": "state", "t": self.world.clock,
                       "from": self.state.value, "to": new.value,
                       "trigger": event})
        self.state = new
        return True

    # ------------------------------------------------------------------
    # console-facing message handling

    def handle_message(self, msg: WireMessage) -> List[WireMessage]:
        now = self.world.clock
        t = msg.type
        out: List[WireMessage] = []
        if t == "heartbeat":
            return out
        if t == "funnel.set":
            out.extend(self._handle_funnel_set(msg))
        elif t == "takeoff":
            if self.fire_event("takeoff_cmd"):
                self._command_climb()
            else:
                out.append(self._reject(t, "takeoff only allowed in Ready"))
        elif t == "target.select":
            out.extend(self._handle_select(msg))
        elif t == "authorize":
            out.extend(self._handle_authorize())
        elif t == "mode.set":
            mode = msg.payload.get("mode")
            if mode == "manual":
                self.monitor.set_mode("manual")
                self.fire_event("abort")
            elif mode == "auto":
                self.monitor.set_mode("auto")
                self.fire_event("resume")
            else:
                out.append(self._reject(t, f"unknown mode {mode!r}"))
        elif t == "manual.velocity":
            if self.monitor.mode != "manual":
                out.append(self._reject(t, "monitor not in manual mode"))
            else:
                self.monitor.manual_command(
                    float(msg.payload.get("pan_cmd", 0.0)),
                    float(msg.payload.get("tilt_cmd", 0.0)),
                )
                self.monitor.note_message(now)
        elif t == "reset":
            self._full_reset()
        else:
            log.warning("ignoring unknown message type %r", t)
        return out

    def _reject(self, cmd: str, reason: str) -> WireMessage:
        return self.outbox.make("command.rejected",
                                {"command": cmd, "reason": reason},
                                self.world.clock)

    def _handle_funnel_set(self, msg: WireMessage) -> List[WireMessage]:
        center_geo = geo_from_payload(msg.payload["center_geo"])
        margin = float(msg.payload.get("margin_m", self.cfg.margin_m))
        ceiling = float(msg.payload.get("ceiling_m", self.cfg.ceiling_agl_m))
        center = geo_to_enu(center_geo, self.enu_origin)
        try:
            funnel = compute_funnel(self.grid, center, margin, self.cfg.horizon_m,
                                    ceiling_alt=center.u + ceiling)
        except (FunnelTooSmall, ValueError) as ex:
            return [self._reject("funnel.set", str(ex))]
        if not self.fire_event("funnel_set"):
            return [self._reject("funnel.set", "not allowed in this state")]
        self.funnel = funnel
        return [self.outbox.make("funnel.update", self.funnel_payload(),
                                 self.world.clock)]

    def funnel_payload(self) -> dict:
        f = self.funnel
        return {
            "center_geo": geo_to_payload(enu_to_geo(f.center, self.enu_origin)),
            "cyl_radius_m": f.cyl_radius,
            "cone_slope": f.cone_slope,
            "floor_alt_m": f.floor_alt,
            "ceiling_alt_m": f.ceiling_alt,
            "horizon_m": f.horizon,
        }

    def _handle_select(self, msg: WireMessage) -> List[WireMessage]:
        track_id = msg.payload.get("track_id")
        track = next((t for t in self.tracks if t.id == track_id), None)
        if track is None:
            return [self._reject("target.select", f"unknown track {track_id}")]
        if not self.fire_event("target_selected"):
            return [self._reject("target.select", "not allowed in this state")]
        self.selected_id = track_id
        self._replan_observation(track)
        if self.plan is not None:
            self._dispatch_leg(first=True)
        return []

    def _handle_authorize(self) -> List[WireMessage]:
        if self.state is not MissionState.Alternating or self.selected_id is None:
            self.fire_event("authorize")  # logs the invalid transition
            return [self._reject("authorize", "no selected target to authorize")]
        track = self._selected_track()
        if track is None:
            return [self._reject("authorize", "selected track lost")]
        nozzle = self.monitor.nozzle_position(self.enu_origin)
        reach = is_reachable(nozzle, track.position, self.monitor.jet)
        if not reach.reachable:
            self._log({"kind": "event", "event": "authorize_unreachable",
                       "t": self.world.clock, "margin_m": reach.margin_m})
            return [self._reject("authorize",
                                 f"target unreachable (margin {reach.margin_m:.1f} m)")]
        self.fire_event("authorize")
        return []

    def _full_reset(self) -> None:
        self.fire_event("reset")
        self.funnel = None
        self.tracks = []
        self.keyframes = []
        self._last_kept_gnss = None
        self.selected_id = None
        self.plan = None
        self._pending_plan = None
        self._exploration = []
        self._exploration_idx = 0
        self._view_dirs = {}
        self._set_water(False)
        self.monitor.set_mode("auto")

    # ------------------------------------------------------------------
    # flight plumbing

    def _command_climb(self) -> None:
        start = self.world.uav_pose.position
        climb_alt = min(self.funnel.floor_alt + self.cfg.climb_agl_m,
                        self.funnel.ceiling_alt)
        wp = clamp_into(self.funnel, EnuPoint(start.e, start.n, climb_alt))
        self.world.command_waypoint(Pose(wp, self.world.uav_pose.yaw, 0.0))
        self._log_waypoint(wp, "climb")

    def _start_exploration(self) -> None:
        alt = min(self.funnel.floor_alt + self.cfg.climb_agl_m,
                  self.funnel.ceiling_alt)
        a, b = plan_exploration_poses(self.funnel, alt, self.aoi)
        # Visit the nearer pose first.
        here = self.world.uav_pose.position
        self._exploration = sorted(
            [a, b], key=lambda p: p.position.distance_to(here))
        self._exploration_idx = 0
        self._dispatch_exploration()

    def _dispatch_exploration(self) -> None:
        pose = self._exploration[self._exploration_idx % 2]
        self._exploration_idx += 1
        self.world.command_waypoint(pose, hold_s=self.cfg.hold_s)
        self._log_waypoint(pose.position, "exploration")

    def _replan_observation(self, track: LocalizedFire) -> None:
        view_dir = self._mean_view_dir(track)
        try:
            self._pending_plan = plan_triangulation_poses(
                self.funnel, track.position, view_dir,
                self.cfg.standoff_m, self.cfg.baseline_m,
            )
        except (NoFeasiblePose, ValueError) as ex:
            self._log({"kind": "event", "event": "replan_failed",
                       "t": self.world.clock, "reason": str(ex)})
            return
        if self.plan is None:
            self.plan = self._pending_plan
            self._pending_plan = None

    def _mean_view_dir(self, track: LocalizedFire) -> EnuPoint:
        acc = self._view_dirs.get(track.id)
        if acc and acc[3] > 0:
            v = EnuPoint(acc[0], acc[1], acc[2])
            n = v.norm()
            if n > 1e-6:
                return v.scaled(1.0 / n)
        v = self.funnel.center - track.position
        n = v.norm()
        if n < 1e-6:
            return EnuPoint(0, 1, 0)
        return v.scaled(1.0 / n)

    def _dispatch_leg(self, first: bool = False) -> None:
        if self._pending_plan is not None:
            self.plan = self._pending_plan
            self._pending_plan = None
        if self.plan is None:
            return
        pose = self.plan.left if self._leg == "left" else self.plan.right
        self._leg = "right" if self._leg == "left" else "left"
        self.world.command_waypoint(pose, hold_s=self.cfg.hold_s)
        self._log_waypoint(pose.position, "triangulation",
                           first=first)

    def _log_waypoint(self, p: EnuPoint, kind: str, first: bool = False) -> None:
        self._log({"kind": "event", "event": "waypoint", "t": self.world.clock,
                   "waypoint_kind": kind, "e": p.e, "n": p.n, "u": p.u,
                   "in_funnel": bool(self.funnel and contains(self.funnel, p)),
                   "first": first})

    # ------------------------------------------------------------------
    # perception

    def _capture_keyframe(self, gnss: Pose) -> List[WireMessage]:
        out: List[WireMessage] = []
        cam_true = Pose(self.world.uav_pose.position, self.world.gimbal_pose.yaw,
                        self.world.gimbal_pose.pitch)
        cam_believed = Pose(gnss.position, gnss.yaw + (
            self.world.gimbal_pose.yaw - self.world.uav_pose.yaw),
            self.world.gimbal_pose.pitch)
        jet = self._jet_path if self.world.water_flowing else None
        img = self.world.render_thermal(cam_true, jet_polyline=jet)
        detections = perception.detect_heat(img, self.cfg.detection_threshold_c,
                                            self.cfg.min_area_px)
        kf = Keyframe(image=img, gnss_pose=cam_believed, detections=detections,
                      id=self._kf_counter)
        self._kf_counter += 1
        self._last_kept_gnss = gnss
        self._log_keyframe_stats(kf, cam_true)
        out.append(self.outbox.make("thermal.frame",
                                    self._thermal_frame_payload(kf),
                                    self.world.clock))

        prev = self.keyframes[-1] if self.keyframes else None
        self.keyframes.append(kf)
        if len(self.keyframes) > 2:
            self.keyframes.pop(0)

        if detections and self.world.water_flowing and self._jet_path:
            out.extend(self._jet_observation(img, cam_true))

        if prev is None or not detections or not prev.detections:
            return out
        true_baseline = prev.image.camera_pose.position.distance_to(
            cam_true.position)
        gnss_baseline = prev.gnss_pose.position.distance_to(cam_believed.position)
        if true_baseline < 1.0 or gnss_baseline < 1.0:
            return out

        oracle = self.world.scaled_depth_oracle(cam_true)
        reported = oracle.reported_camera_distance(true_baseline)
        try:
            candidates = perception.localize_by_rescaled_depth(
                kf, oracle, reported, gnss_baseline)
        except MissingDepth as ex:
            self._log({"kind": "event", "event": "missing_depth",
                       "t": self.world.clock, "reason": str(ex)})
            candidates = []

        cross = []
        try:
            cross = perception.triangulate_pair(prev, kf)
        except DegenerateBaseline as ex:
            self._log({"kind": "event", "event": "degenerate_pair",
                       "t": self.world.clock, "reason": str(ex)})
        self._cross_check(candidates, cross)
        self._log_pair_errors(cross)

        if candidates:
            before_ids = {t.id for t in self.tracks}
            self.tracks = perception.fuse(self.tracks, candidates,
                                          self.world.clock)
            self._attribute_views(candidates, cam_believed.position)
            self._log_fused_errors()
            out.append(self.outbox.make("detection.update",
                                        self.tracks_payload(), self.world.clock))
            if self.state in (MissionState.InitialExploration,
                              MissionState.AwaitSelection,
                              MissionState.Alternating, MissionState.Engaged):
                self.fire_event("detections_updated")
            new_ids = {t.id for t in self.tracks} - before_ids
            if new_ids:
                self._log({"kind": "event", "event": "tracks_opened",
                           "t": self.world.clock, "ids": sorted(new_ids)})
        return out

    def _thermal_frame_payload(self, kf: Keyframe, stride: int = 4) -> dict:
        """Downsampled 8-bit thermal frame for the console, base64-encoded."""
        import base64

        import numpy as np

        temps = kf.image.temps[::stride, ::stride]
        lo = float(temps.min())
        hi = float(temps.max())
        span = max(hi - lo, 1e-6)
        quant = np.clip((temps - lo) / span * 255.0, 0, 255).astype(np.uint8)
        return {
            "width": quant.shape[1],
            "height": quant.shape[0],
            "stride": stride,
            "t_min_c": round(lo, 2),
            "t_max_c": round(hi, 2),
            "data_b64": base64.b64encode(quant.tobytes()).decode(),
            "boxes": [list(d.box) for d in kf.detections],
        }

    def _jet_observation(self, img, cam_true: Pose) -> List[WireMessage]:
        from .worldsim import CameraFrame

        frame = CameraFrame(cam_true)
        poly_px = []
        for p in self._jet_path:
            proj = frame.project(p, img.intrinsics)
            if proj is not None:
                poly_px.append((proj[0], proj[1]))
        if len(poly_px) < 2:
            return []
        oracle = self.world.scaled_depth_oracle(cam_true, scale_distortion=1.0,
                                                noise=False)
        obs = perception.detect_jet(img, poly_px, self.cfg.water_band_c,
                                    depth=oracle)
        payload: dict = {"confidence": 0.0}
        if obs is not None:
            payload["confidence"] = obs.confidence
            if obs.landing_enu is not None:
                payload["landing_geo"] = geo_to_payload(
                    enu_to_geo(obs.landing_enu, self.enu_origin))
        return [self.outbox.make("jet.update", payload, self.world.clock)]

    def _cross_check(self, primary, cross) -> None:
        for cand in primary:
            if not cross:
                break
            nearest = min(cross, key=lambda c: c.position.distance_to(cand.position))
            gap = nearest.position.distance_to(cand.position)
            if gap > self.cfg.cross_check_limit_m:
                self._log({"kind": "event", "event": "localization_disagreement",
                           "t": self.world.clock, "gap_m": gap})

    def _attribute_views(self, candidates, cam_pos: EnuPoint) -> None:
        for cand in candidates:
            best = None
            best_d = 3.0
            for tr in self.tracks:
                d = tr.position.distance_to(cand.position)
                if d <= best_d:
                    best, best_d = tr, d
            if best is None:
                continue
            v = cam_pos - best.position
            n = v.norm()
            if n < 1e-6:
                continue
            e0, n0, u0, cnt = self._view_dirs.get(best.id, (0.0, 0.0, 0.0, 0))
            self._view_dirs[best.id] = (e0 + v.e / n, n0 + v.n / n,
                                        u0 + v.u / n, cnt + 1)

    def _log_keyframe_stats(self, kf: Keyframe, cam_true: Pose) -> None:
        """Ground-truth detection bookkeeping (debug only, never fed back)."""
        from .worldsim import CameraFrame

        frame = CameraFrame(cam_true)
        intr = kf.image.intrinsics
        in_frame = 0
        in_central = 0
        detected = 0
        for fire in self.world.fires:
            if fire.extinguished:
                continue
            proj = frame.project(fire.position, intr)
            if proj is None:
                continue
            u, v, _ = proj
            if not (0 <= u < intr.width and 0 <= v < intr.height):
                continue
            if not self.world.fire_visible(cam_true.position, fire):
                continue
            in_frame += 1
            if (abs(u - intr.cx) <= intr.width / 4
                    and abs(v - intr.cy) <= intr.height / 4):
                in_central += 1
            for det in kf.detections:
                u0, v0, u1, v1 = det.box
                if u0 - 2 <= u <= u1 + 2 and v0 - 2 <= v <= v1 + 2:
                    detected += 1
                    break
        self._log({"kind": "event", "event": "keyframe", "t": self.world.clock,
                   "id": kf.id, "detections": len(kf.detections),
                   "fires_in_frame": in_frame, "fires_in_central": in_central,
                   "fires_detected": detected})

    def _log_pair_errors(self, cross) -> None:
        for cand in cross:
            err = min((cand.position.distance_to(f.position)
                       for f in self.world.fires), default=None)
            if err is not None:
                self._log({"kind": "event", "event": "pair",
                           "t": self.world.clock, "err_m": err,
                           "gap_m": cand.covariance_proxy})

    def _log_fused_errors(self) -> None:
        for tr in self.tracks:
            err = min((tr.position.distance_to(f.position)
                       for f in self.world.fires), default=None)
            if err is not None:
                self._log({"kind": "event", "event": "fused",
                           "t": self.world.clock, "track_id": tr.id,
                           "err_m": err})

    def tracks_payload(self) -> dict:
        return {"tracks": [
            {
                "id": t.id,
                "geo": geo_to_payload(enu_to_geo(t.position, self.enu_origin)),
                "covariance_m": t.covariance_proxy,
                "observations": t.observations,
                "last_seen": round(t.last_seen, 3),
            }
            for t in self.tracks
        ]}

    def _selected_track(self) -> Optional[LocalizedFire]:
        return next((t for t in self.tracks if t.id == self.selected_id), None)

    # ------------------------------------------------------------------
    # engagement

    def _maybe_assign(self) -> List[WireMessage]:
        now = self.world.clock
        track = self._selected_track()
        if track is None:
            if self.cfg.lost_track_policy == "hold" and self._last_assign_pos is not None:
                track = LocalizedFire(self.selected_id or -1,
                                      self._last_assign_pos, 0.0, 0, now)
            else:
                return []
        moved = (self._last_assign_pos is None
                 or track.position.distance_to(self._last_assign_pos)
                 > self.cfg.reassign_m)
        due = (now - self._last_assign_t) >= self.cfg.keepalive_s
        if not (moved or due):
            return []
        nozzle = self.monitor.nozzle_position(self.enu_origin)
        reach = is_reachable(nozzle, track.position, self.monitor.jet)
        if not reach.reachable:
            self._log({"kind": "event", "event": "assign_suppressed_unreachable",
                       "t": now, "margin_m": reach.margin_m})
            return []
        self._last_assign_pos = track.position
        self._last_assign_t = now
        return [self.assign_outbox.make("target.assign", {
            "track_id": track.id,
            "geo": geo_to_payload(enu_to_geo(track.position, self.enu_origin)),
            "covariance_m": track.covariance_proxy,
        }, now)]

    def _set_water(self, flowing: bool) -> None:
        if self.world.water_flowing == flowing:
            return
        self.world.water_flowing = flowing
        self.monitor.water_flowing = flowing
        self._log({"kind": "event", "event": "water", "t": self.world.clock,
                   "flowing": flowing})

    def _update_jet(self) -> None:
        """Refresh the ballistic jet path when the nozzle has moved."""
        angles = (self.monitor.encoder_pan(), self.monitor.encoder_tilt())
        if angles == self._jet_angles and self._jet_path is not None:
            return
        nozzle = self.monitor.nozzle_position(self.enu_origin)
        terrain = self._terrain_height
        try:
            path = simulate_trajectory(nozzle, angles[0], angles[1],
                                       self.monitor.jet, dt=0.02, ground=terrain)
        except Exception as ex:  # NeverLands etc.
            self._log({"kind": "event", "event": "jet_sim_failed",
                       "t": self.world.clock, "reason": str(ex)})
            self._jet_path = None
            self._jet_angles = angles
            return
        step = max(1, len(path.points) // 24)
        self._jet_path = path.points[::step] + [path.landing]
        self._jet_angles = angles

    def _terrain_height(self, e: float, n: float) -> float:
        grid = self.grid
        tops = self._column_tops
        ix = int((e - grid.origin.e) / grid.cell_size)
        iy = int((n - grid.origin.n) / grid.cell_size)
        nx, ny = tops.shape
        if 0 <= ix < nx and 0 <= iy < ny and math.isfinite(tops[ix, iy]):
            return float(tops[ix, iy])
        return grid.origin.u

    def _engaged_tick(self) -> List[WireMessage]:
        out = self._maybe_assign()
        sp = self.monitor.setpoint
        if sp is not None:
            pan_err = abs(shortest_arc_deg(sp.yaw, self.monitor.encoder_pan()))
            tilt_err = abs(sp.pitch - self.monitor.encoder_tilt())
            if not self.world.water_flowing and \
                    pan_err <= self.cfg.aim_tolerance_deg and \
                    tilt_err <= self.cfg.aim_tolerance_deg:
                self._set_water(True)
            self._log({"kind": "event", "event": "angles", "t": self.world.clock,
                       "pan_err": pan_err, "tilt_err": tilt_err})
        if self.world.water_flowing:
            self._update_jet()
            if self._jet_path:
                landing = self._jet_path[-1]
                self.world.apply_water(landing, self.world.config.dt)
                if self._tick_index % self._jet_every == 0:
                    out.append(self.outbox.make("jet.update", {
                        "landing_geo": geo_to_payload(
                            enu_to_geo(landing, self.enu_origin)),
                        "confidence": 1.0,
                    }, self.world.clock))
        track = self._selected_track()
        ref = track.position if track is not None else self._last_assign_pos
        if ref is not None:
            nearest = min(self.world.fires,
                          key=lambda f: f.position.distance_to(ref),
                          default=None)
            if nearest is not None and nearest.extinguished:
                self._set_water(False)
                self._log({"kind": "event", "event": "extinguished",
                           "t": self.world.clock})
                self.fire_event("extinguished")
        return out

    # ------------------------------------------------------------------
    # main tick

    def tick(self) -> List[WireMessage]:
        out: List[WireMessage] = []
        now = self.world.clock
        flight_states = (MissionState.InitialExploration, MissionState.AwaitSelection,
                         MissionState.Alternating, MissionState.Engaged)

        # Waypoint progression.
        if self.state is MissionState.Takeoff and self.world.uav_at_waypoint:
            self.fire_event("pose_reached")
            self._start_exploration()
        elif self.state in (MissionState.InitialExploration, MissionState.AwaitSelection):
            self._point_gimbal(self.aoi)
            if self.world.uav_at_waypoint and not self.world.uav_holding:
                self.fire_event("pose_reached")
                self._force_keyframe = True
                self._dispatch_exploration()
        elif self.state in (MissionState.Alternating, MissionState.Engaged):
            target = self._selected_track()
            aim = target.position if target else (self.plan.target if self.plan else None)
            if aim is not None:
                self._point_gimbal(aim)
            if self.world.uav_at_waypoint and not self.world.uav_holding:
                self.fire_event("pose_reached")
                self._log({"kind": "event", "event": "alternation",
                           "t": now, "leg": self._leg})
                self._force_keyframe = True
                self._maybe_replan()
                self._dispatch_leg()

        # Telemetry cadence work: gnss sample, keyframe gate, telemetry out.
        if self._tick_index % self._telemetry_every == 0:
            gnss = self.world.sample_gnss(self.world.uav_pose)
            out.append(self.outbox.make("telemetry.uav", {
                "pose_geo": geo_to_payload(enu_to_geo(gnss.position, self.enu_origin)),
                "gimbal": {"yaw_deg": round(self.world.gimbal_pose.yaw, 3),
                           "pitch_deg": round(self.world.gimbal_pose.pitch, 3)},
                "state": self.state.value,
            }, now))
            tm = self.monitor.telemetry()
            out.append(self.wmc_outbox.make("telemetry.wmc", {
                "pan_deg": tm.pan_deg, "tilt_deg": tm.tilt_deg,
                "pressure_pa": tm.pressure_pa, "mode": tm.mode,
                "status": tm.status, "gnss": geo_to_payload(tm.gnss),
            }, now))
            if self.state in flight_states:
                # Arrivals force a capture (displacement alone can stall on a
                # back-and-forth shuttle whose span equals the gate).
                gate = perception.keyframe_gate(self._last_kept_gnss, gnss,
                                                self.cfg.d_key_m)
                forced = self._force_keyframe and perception.keyframe_gate(
                    self._last_kept_gnss, gnss, 1.0)
                if gate or forced:
                    self._force_keyframe = False
                    out.extend(self._capture_keyframe(gnss))

        if self.state is MissionState.Engaged:
            out.extend(self._engaged_tick())

        self._tick_index += 1
        return out

    def _point_gimbal(self, target: EnuPoint) -> None:
        pose = look_at(self.world.uav_pose.position, target)
        self.world.set_gimbal(pose.yaw, pose.pitch)

    def _maybe_replan(self) -> None:
        track = self._selected_track()
        if track is None or self.plan is None:
            return
        if track.position.distance_to(self.plan.target) > self.cfg.replan_m:
            self._log({"kind": "event", "event": "replan", "t": self.world.clock,
                       "moved_m": track.position.distance_to(self.plan.target)})
            self._replan_observation(track)
