"""FastAPI service: REST analysis endpoints, WS protocol, TCP stream, faults."""

import asyncio
import json
import math
import time

import pytest
from fastapi.testclient import TestClient

from firejet.protocol import Outbox, decode_frame, encode_frame
from firejet.scenario import Scenario, write_reference_scenario
from firejet.service import create_app, serve_tcp


@pytest.fixture(scope="module")
def reference(tmp_path_factory):
    return write_reference_scenario(tmp_path_factory.mktemp("scn"))


def make_app(reference, time_scale=20.0):
    return create_app(Scenario.load(reference), time_scale=time_scale)


# --- REST -----------------------------------------------------------------


def test_solve_endpoint(reference):
    with TestClient(make_app(reference)) as client:
        d = 20.0**2 / 9.81
        r = client.post("/api/solve", json={
            "target_enu": [0.0, d, 0.0], "exit_speed_mps": 20.0})
        assert r.status_code == 200
        body = r.json()
        assert body["pitch_deg"] == pytest.approx(45.0, abs=0.02)
        r = client.post("/api/solve", json={
            "target_enu": [0.0, 500.0, 0.0], "exit_speed_mps": 20.0})
        assert r.status_code == 422


def test_deviation_endpoint(reference):
    with TestClient(make_app(reference)) as client:
        r = client.post("/api/deviation", json={
            "range_m": 40.0, "yaw_err_deg": 0.5})
        assert r.status_code == 200
        assert r.json()["deviation_m"] == pytest.approx(0.3491, abs=1e-3)


def test_funnel_endpoint(reference):
    with TestClient(make_app(reference)) as client:
        r = client.post("/api/funnel", json={})
        assert r.status_code == 200
        body = r.json()
        assert body["cyl_radius_m"] > 10.0
        assert len(body["ascii_section"]) > 5


def test_state_and_scenario_endpoints(reference):
    with TestClient(make_app(reference)) as client:
        state = client.get("/api/state").json()
        assert state["state"] == "Configuring"
        scn = client.get("/api/scenario").json()
        assert scn["seed"] == 1
        metrics = client.get("/api/metrics").json()
        assert metrics["final_state"] == "Configuring"


# --- WebSocket protocol -----------------------------------------------------


def recv_until(ws, msg_type, limit=200):
    for _ in range(limit):
        msg = decode_frame(ws.receive_text())
        if msg.type == msg_type:
            return msg
    raise AssertionError(f"no {msg_type} within {limit} frames")


def test_ws_heartbeat_telemetry_and_mission_flow(reference):
    app = make_app(reference, time_scale=50.0)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws:
            out = Outbox("console")

            def send(msg_type, payload):
                msg = out.make(msg_type, payload, app.state.runner.world.clock)
                ws.send_text(encode_frame(msg).decode().rstrip("\n"))

            send("heartbeat", {})
            t_wall = time.monotonic()
            tel = recv_until(ws, "telemetry.uav")
            # Liveness: telemetry arrives within 100 ms of sim time.
            assert tel.payload["state"] == "Configuring"
            assert time.monotonic() - t_wall < 5.0

            scn = app.state.runner.scenario
            send("funnel.set", {
                "center_geo": {"lat": scn.funnel_center.lat,
                               "lon": scn.funnel_center.lon,
                               "alt": scn.funnel_center.alt},
                "margin_m": scn.funnel_margin_m,
                "ceiling_m": scn.funnel_ceiling_m,
            })
            upd = recv_until(ws, "funnel.update")
            assert upd.payload["cyl_radius_m"] > 10.0
            send("takeoff", {})
            for _ in range(400):
                tel = recv_until(ws, "telemetry.uav")
                if tel.payload["state"] in ("Takeoff", "InitialExploration"):
                    break
            else:
                raise AssertionError("takeoff never happened")


def test_ws_malformed_frame_keeps_session(reference):
    app = make_app(reference, time_scale=50.0)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws:
            ws.send_text("this is not json")
            ws.send_text('{"type":"heartbeat"}')  # missing seq/stamp
            out = Outbox("console")
            ws.send_text(encode_frame(out.make("heartbeat", {}, 0.0)).decode())
            recv_until(ws, "telemetry.uav")
        state = client.get("/api/state").json()
        assert state["malformed_frames"] == 2


def test_heartbeat_loss_faults_mission_and_wmc_holds(reference):
    app = make_app(reference, time_scale=100.0)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws:
            out = Outbox("console")
            ws.send_text(encode_frame(out.make("heartbeat", {}, 0.0)).decode())
            recv_until(ws, "telemetry.uav")
        # Connection closed; sim time races on at 100x. After >2 sim-seconds
        # without heartbeats the mission faults.
        deadline = time.monotonic() + 10.0
        while time.monotonic() < deadline:
            state = client.get("/api/state").json()
            if state["state"] == "Fault":
                break
            time.sleep(0.05)
        assert state["state"] == "Fault"
        # WMC watchdog: no messages -> hold, commands zeroed.
        runner = app.state.runner
        assert runner.monitor.watchdog_expired(runner.world.clock)


def test_unknown_type_ignored(reference):
    app = make_app(reference, time_scale=50.0)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws:
            out = Outbox("console")
            ws.send_text(encode_frame(out.make("future.gadget", {}, 0.0)).decode())
            ws.send_text(encode_frame(out.make("heartbeat", {}, 0.0)).decode())
            recv_until(ws, "telemetry.uav")
        assert client.get("/api/state").json()["malformed_frames"] == 0


# --- TCP stream --------------------------------------------------------------


def test_tcp_stream_speaks_same_schema(reference):
    # Everything in one loop: app lifespan (pace task), TCP server, client.
    async def flow():
        app = make_app(reference, time_scale=50.0)
        async with app.router.lifespan_context(app):
            server = await serve_tcp(app, "127.0.0.1", 0)
            port = server.sockets[0].getsockname()[1]
            reader, writer = await asyncio.open_connection("127.0.0.1", port)
            out = Outbox("console")
            writer.write(encode_frame(out.make("heartbeat", {}, 0.0)))
            await writer.drain()
            msg = None
            for _ in range(300):
                line = await asyncio.wait_for(reader.readline(), timeout=5.0)
                msg = decode_frame(line)
                if msg.type == "telemetry.wmc":
                    break
            writer.close()
            server.close()
            await server.wait_closed()
            return msg

    msg = asyncio.run(flow())
    assert msg is not None and msg.type == "telemetry.wmc"
    assert "pan_deg" in msg.payload
