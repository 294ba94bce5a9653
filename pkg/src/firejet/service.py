"""FastAPI service wrapping the mission runner.

``serve`` hosts one scenario: the wire protocol runs over a WebSocket
endpoint (browser console) and a raw TCP listener with newline-delimited
frames; both speak the identical schema. Analysis endpoints expose the
ballistics and funnel solvers with pydantic request/response models, and the
static console build is mounted when present.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
import logging
import math
import time
from pathlib import Path
from typing import List, Optional, Tuple

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import RedirectResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field, model_validator

from .ballistics import (
    JetParameters,
    deviation_from_angle_error,
    pressure_to_exit_speed,
    solve_angles,
)
from .errors import FunnelTooSmall, MalformedFrame, Unreachable
from .funnel import compute_funnel, contains
from .geo import EnuPoint, geo_to_enu
from .metrics import read_log
from .protocol import Outbox, decode_frame, encode_frame, is_known_type
from .runner import MissionRunner
from .scenario import Scenario

log = logging.getLogger(__name__)

HEARTBEAT_TIMEOUT_S = 2.0   # wall seconds without operator heartbeat -> Fault
HEARTBEAT_PERIOD_S = 1.0    # sim seconds between GCS heartbeats


# ---------------------------------------------------------------------------
# pydantic surface


class SolveRequest(BaseModel):
    target_enu: Tuple[float, float, float]
    origin_enu: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    exit_speed_mps: Optional[float] = Field(default=None, gt=0)
    pressure_pa: Optional[float] = Field(default=None, gt=0)
    drag_coeff: float = Field(default=0.0, ge=0)
    discharge_coeff: float = 0.97
    arc: str = "low"

    @model_validator(mode="after")
    def _speed_source(self):
        if self.exit_speed_mps is None and self.pressure_pa is None:
            raise ValueError("one of exit_speed_mps or pressure_pa is required")
        return self

    def jet(self) -> JetParameters:
        params = JetParameters(
            exit_speed=self.exit_speed_mps or 1.0,
            drag_coeff=self.drag_coeff,
            discharge_coeff=self.discharge_coeff,
        )
        if self.exit_speed_mps is None:
            speed = pressure_to_exit_speed(self.pressure_pa, params)
            params = JetParameters(exit_speed=speed, drag_coeff=self.drag_coeff,
                                   discharge_coeff=self.discharge_coeff)
        return params


class SolveResponse(BaseModel):
    yaw_deg: float
    pitch_deg: float
    arc: str
    tof_s: float
    landing_enu: Tuple[float, float, float]


class DeviationRequest(BaseModel):
    range_m: float = Field(gt=0)
    yaw_err_deg: float = 0.0
    pitch_err_deg: float = 0.0
    exit_speed_mps: Optional[float] = Field(default=None, gt=0)
    drag_coeff: float = Field(default=0.0, ge=0)


class DeviationResponse(BaseModel):
    range_m: float
    lateral_m: float
    downrange_m: float
    deviation_m: float


class FunnelRequest(BaseModel):
    center_geo: Optional[dict] = None
    margin_m: Optional[float] = Field(default=None, ge=0)
    ceiling_m: Optional[float] = Field(default=None, gt=0)


class FunnelResponse(BaseModel):
    center_geo: dict
    cyl_radius_m: float
    cone_slope: float
    floor_alt_m: float
    ceiling_alt_m: float
    horizon_m: float
    safety_margin_m: float
    ascii_section: List[str]


def solve_to_response(req: SolveRequest) -> SolveResponse:
    sol = solve_angles(EnuPoint(*req.origin_enu), EnuPoint(*req.target_enu),
                       req.jet(), arc=req.arc)
    return SolveResponse(
        yaw_deg=sol.yaw, pitch_deg=sol.pitch, arc=sol.arc,
        tof_s=sol.time_of_flight,
        landing_enu=(sol.landing.e, sol.landing.n, sol.landing.u),
    )


def deviation_to_response(req: DeviationRequest) -> DeviationResponse:
    speed = req.exit_speed_mps or math.sqrt(9.81 * req.range_m)
    params = JetParameters(exit_speed=speed, drag_coeff=req.drag_coeff)
    lateral = req.range_m * math.tan(math.radians(abs(req.yaw_err_deg)))
    total = deviation_from_angle_error(req.range_m, req.yaw_err_deg,
                                       req.pitch_err_deg, params)
    down = math.sqrt(max(total * total - lateral * lateral, 0.0))
    return DeviationResponse(range_m=req.range_m, lateral_m=lateral,
                             downrange_m=down, deviation_m=total)


def funnel_ascii_section(funnel, rows: int = 14, cols: int = 60) -> List[str]:
    """(horizontal distance, altitude) slice through the funnel axis."""
    lines = []
    for r in range(rows):
        u = funnel.ceiling_alt - (r / (rows - 1)) * (funnel.ceiling_alt
                                                     - funnel.floor_alt)
        row = []
        for c in range(cols):
            d = (c / (cols - 1)) * funnel.horizon
            p = EnuPoint(funnel.center.e + d, funnel.center.n, u)
            row.append("#" if contains(funnel, p) else ".")
        lines.append(f"{u:7.1f} m |" + "".join(row))
    lines.append(" " * 10 + "+" + "-" * cols)
    lines.append(" " * 11 + f"0 .. {funnel.horizon:.0f} m from center")
    return lines


def funnel_to_response(scenario: Scenario, grid, req: FunnelRequest) -> FunnelResponse:
    from .geo import enu_to_geo
    from .protocol import geo_from_payload, geo_to_payload

    center_geo = (geo_from_payload(req.center_geo) if req.center_geo
                  else scenario.funnel_center)
    margin = req.margin_m if req.margin_m is not None else scenario.funnel_margin_m
    ceiling = req.ceiling_m if req.ceiling_m is not None else scenario.funnel_ceiling_m
    center = geo_to_enu(center_geo, scenario.origin)
    horizon = scenario.mission_config().horizon_m
    funnel = compute_funnel(grid, center, margin, horizon,
                            ceiling_alt=center.u + ceiling)
    return FunnelResponse(
        center_geo=geo_to_payload(enu_to_geo(funnel.center, scenario.origin)),
        cyl_radius_m=funnel.cyl_radius,
        cone_slope=funnel.cone_slope,
        floor_alt_m=funnel.floor_alt,
        ceiling_alt_m=funnel.ceiling_alt,
        horizon_m=funnel.horizon,
        safety_margin_m=funnel.safety_margin,
        ascii_section=funnel_ascii_section(funnel),
    )


# ---------------------------------------------------------------------------
# connection hub


class ConnectionHub:
    """Fan-out of outbound frames plus operator-liveness bookkeeping."""

    def __init__(self):
        self.queues: List[asyncio.Queue] = []
        self.last_rx_wall: Optional[float] = None
        self.operator_seen = False
        self.malformed_frames = 0
        self.comm_lost = False

    def attach(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue(maxsize=512)
        self.queues.append(q)
        return q

    def detach(self, q: asyncio.Queue) -> None:
        if q in self.queues:
            self.queues.remove(q)

    def broadcast(self, frame: bytes) -> None:
        for q in list(self.queues):
            try:
                q.put_nowait(frame)
            except asyncio.QueueFull:
                pass  # slow client; drop

    def note_rx(self, wall_t: float) -> None:
        self.last_rx_wall = wall_t
        self.operator_seen = True
        self.comm_lost = False


def create_app(
    scenario: Scenario,
    seed_override: Optional[int] = None,
    out_dir: Optional[Path] = None,
    time_scale: float = 1.0,
    console_dir: Optional[Path] = None,
    tcp_host: Optional[str] = None,
    tcp_port: Optional[int] = None,
) -> FastAPI:
    """Service for one live scenario, paced to the wall clock."""
    log_path = Path(out_dir) / "run_log.jsonl" if out_dir else None
    runner = MissionRunner(scenario, seed_override=seed_override,
                           log_path=log_path, scripted_operator=False)
    hub = ConnectionHub()
    runner.subscribers.append(lambda msg: hub.broadcast(encode_frame(msg)))
    heartbeat_outbox = runner.gcs.outbox

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.running = True
        app.state.pace_task = asyncio.create_task(pace_loop())
        app.state.tcp_server = None
        if tcp_port is not None:
            app.state.tcp_server = await serve_tcp(app, tcp_host or "127.0.0.1",
                                                   tcp_port)
        try:
            yield
        finally:
            app.state.running = False
            app.state.pace_task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await app.state.pace_task
            if app.state.tcp_server is not None:
                app.state.tcp_server.close()
                await app.state.tcp_server.wait_closed()
            runner.close()

    app = FastAPI(title="firejet GCS", version="0.1.0", lifespan=lifespan)
    app.state.runner = runner
    app.state.hub = hub
    app.state.running = False
    app.state.time_scale = time_scale

    async def pace_loop():
        dt = runner.world.config.dt
        loop = asyncio.get_event_loop()
        wall0 = loop.time()
        sim0 = runner.world.clock
        next_hb = 0.0
        while app.state.running:
            runner.tick()
            now = runner.world.clock
            if now >= next_hb:
                runner._route(heartbeat_outbox.make("heartbeat", {}, now))
                next_hb = now + HEARTBEAT_PERIOD_S
            # Operator liveness is a property of the real link, so the
            # timeout runs on the wall clock regardless of time_scale.
            if (hub.operator_seen and not hub.comm_lost
                    and hub.last_rx_wall is not None
                    and time.monotonic() - hub.last_rx_wall > HEARTBEAT_TIMEOUT_S):
                hub.comm_lost = True
                runner.record({"kind": "event", "event": "comm_loss", "t": now})
                runner.gcs.fire_event("comm_loss")
            target_wall = wall0 + (now - sim0) / app.state.time_scale
            delay = target_wall - loop.time()
            await asyncio.sleep(delay if delay > 0 else 0)

    # -- inbound frame handling (shared by WS and TCP) -----------------

    def handle_inbound(raw) -> None:
        try:
            msg = decode_frame(raw)
        except MalformedFrame as ex:
            hub.malformed_frames += 1
            log.warning("malformed frame dropped: %s", ex)
            return
        hub.note_rx(time.monotonic())
        if not is_known_type(msg.type):
            log.warning("ignoring unknown message type %r", msg.type)
            return
        if hub.comm_lost:
            hub.comm_lost = False
        runner.inject_console(msg)

    # -- REST ------------------------------------------------------------

    @app.get("/api/state")
    def api_state():
        gcs = runner.gcs
        return {
            "state": gcs.state.value,
            "sim_time": round(runner.world.clock, 3),
            "tracks": gcs.tracks_payload()["tracks"],
            "funnel": gcs.funnel_payload() if gcs.funnel else None,
            "malformed_frames": hub.malformed_frames,
            "monitor": {
                "pan_deg": runner.monitor.encoder_pan(),
                "tilt_deg": runner.monitor.encoder_tilt(),
                "mode": runner.monitor.mode,
                "status": runner.monitor.status,
            },
        }

    @app.get("/api/metrics")
    def api_metrics():
        return runner.metrics_acc.finalize().to_dict()

    @app.get("/api/scenario")
    def api_scenario():
        scn = runner.scenario
        return {
            "name": getattr(scn.path, "stem", "inline"),
            "origin": {"lat": scn.origin.lat, "lon": scn.origin.lon,
                       "alt": scn.origin.alt},
            "monitor_geo": {"lat": scn.monitor_geo.lat, "lon": scn.monitor_geo.lon,
                            "alt": scn.monitor_geo.alt},
            "funnel_center_geo": {"lat": scn.funnel_center.lat,
                                  "lon": scn.funnel_center.lon,
                                  "alt": scn.funnel_center.alt},
            "funnel_margin_m": scn.funnel_margin_m,
            "funnel_ceiling_m": scn.funnel_ceiling_m,
            "seed": runner.seed,
        }

    @app.post("/api/solve", response_model=SolveResponse)
    def api_solve(req: SolveRequest):
        from fastapi import HTTPException
        try:
            return solve_to_response(req)
        except (Unreachable, ValueError) as ex:
            raise HTTPException(status_code=422, detail=str(ex))

    @app.post("/api/deviation", response_model=DeviationResponse)
    def api_deviation(req: DeviationRequest):
        from fastapi import HTTPException
        try:
            return deviation_to_response(req)
        except (Unreachable, ValueError) as ex:
            raise HTTPException(status_code=422, detail=str(ex))

    @app.post("/api/funnel", response_model=FunnelResponse)
    def api_funnel(req: FunnelRequest):
        from fastapi import HTTPException
        try:
            return funnel_to_response(runner.scenario, runner.grid, req)
        except (FunnelTooSmall, ValueError, MalformedFrame) as ex:
            raise HTTPException(status_code=422, detail=str(ex))

    # -- WebSocket protocol endpoint --------------------------------------

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        q = hub.attach()

        async def writer():
            while True:
                frame = await q.get()
                await ws.send_text(frame.decode().rstrip("\n"))

        wtask = asyncio.create_task(writer())
        try:
            while True:
                raw = await ws.receive_text()
                handle_inbound(raw)
        except WebSocketDisconnect:
            pass
        finally:
            wtask.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await wtask
            hub.detach(q)

    # -- static console ----------------------------------------------------

    if console_dir and Path(console_dir).is_dir():
        app.mount("/console", StaticFiles(directory=str(console_dir),
                                          html=True), name="console")

        @app.get("/")
        def index():
            return RedirectResponse("/console/")

    app.state.handle_inbound = handle_inbound
    return app


async def serve_tcp(app: FastAPI, host: str, port: int):
    """Raw stream listener speaking newline-delimited frames."""
    hub: ConnectionHub = app.state.hub

    async def client(reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        q = hub.attach()

        async def pump():
            while True:
                frame = await q.get()
                writer.write(frame)
                await writer.drain()

        wtask = asyncio.create_task(pump())
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                app.state.handle_inbound(line)
        finally:
            wtask.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await wtask
            hub.detach(q)
            writer.close()

    try:
        server = await asyncio.start_server(client, host, port)
    except OSError as ex:
        from .errors import BindFailure
        raise BindFailure(f"cannot bind {host}:{port}: {ex}") from ex
    return server


# ---------------------------------------------------------------------------
# replay service


def create_replay_app(log_path: Path, time_scale: float = 1.0) -> FastAPI:
    """Re-serves the message stream of a recorded run for console playback."""
    records = read_log(log_path)
    frames = [(float(r["t"]), r["msg"]) for r in records
              if r.get("kind") == "msg" and r.get("dir") in ("tx", "rx")
              and r.get("conn") == "console" and r["dir"] == "tx"]

    hub = ConnectionHub()

    async def player():
        loop = asyncio.get_event_loop()
        if not frames:
            return
        wall0 = loop.time()
        t0 = frames[0][0]
        for t, msg in frames:
            if not app.state.running:
                return
            delay = (t - t0) / time_scale - (loop.time() - wall0)
            if delay > 0:
                await asyncio.sleep(delay)
            data = (json.dumps(msg, sort_keys=True, separators=(",", ":"))
                    + "\n").encode()
            hub.broadcast(data)

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.running = True
        app.state.task = asyncio.create_task(player())
        try:
            yield
        finally:
            app.state.running = False
            app.state.task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await app.state.task

    app = FastAPI(title="firejet replay", lifespan=lifespan)
    app.state.hub = hub
    app.state.running = False

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        q = hub.attach()
        try:
            while True:
                frame = await q.get()
                await ws.send_text(frame.decode().rstrip("\n"))
        except WebSocketDisconnect:
            pass
        finally:
            hub.detach(q)

    return app
