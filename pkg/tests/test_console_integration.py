"""Console integration against a live `firejet serve` process.

The scripted session speaks exactly the message sequence the browser console
produces: funnel.set -> takeoff -> target.select -> authorize, then a manual
joystick burst with a dead-man release. Skipped when the console build is
absent; the primary suite never needs it.
"""

import json
import socket
import subprocess
import sys
import time
from pathlib import Path

import pytest

from firejet.protocol import Outbox, decode_frame, encode_frame
from firejet.scenario import write_reference_scenario

REPO = Path(__file__).resolve().parents[1]
DIST = REPO / "frontend" / "dist"

pytestmark = pytest.mark.skipif(
    not (DIST / "index.html").exists(),
    reason="operator console not built (frontend/dist missing)",
)

TIME_SCALE = 20.0


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture()
def server(tmp_path):
    scn = write_reference_scenario(tmp_path)
    port = free_port()
    out_dir = tmp_path / "out"
    proc = subprocess.Popen(
        [sys.executable, "-m", "firejet.cli", "serve",
         "--scenario", str(scn), "--port", str(port),
         "--tcp-port", str(free_port()),
         "--out", str(out_dir), "--time-scale", str(TIME_SCALE),
         "--console-dir", str(DIST)],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
    )
    base = f"http://127.0.0.1:{port}"
    try:
        _wait_ready(base, proc)
        yield base, out_dir, proc
    finally:
        proc.terminate()
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()


def _wait_ready(base, proc, timeout=30.0):
    import httpx

    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if proc.poll() is not None:
            raise RuntimeError(f"server died: {proc.stdout.read().decode()}")
        try:
            r = httpx.get(base + "/api/state", timeout=1.0)
            if r.status_code == 200:
                return
        except httpx.HTTPError:
            pass
        time.sleep(0.1)
    raise RuntimeError("server never became ready")


class ScriptedSession:
    """Drives the wire protocol the way the console client does."""

    def __init__(self, url):
        from websockets.sync.client import connect

        self.ws = connect(url, open_timeout=10)
        self.out = Outbox("console")
        self.sim_time = 0.0
        self.state = "unknown"
        self.tracks = []
        self._last_hb = 0.0

    def send(self, msg_type, payload):
        msg = self.out.make(msg_type, payload, self.sim_time)
        self.ws.send(encode_frame(msg).decode().rstrip("\n"))

    def _heartbeat(self):
        now = time.monotonic()
        if now - self._last_hb > 0.25:
            self.send("heartbeat", {})
            self._last_hb = now

    def pump(self, wall_timeout=0.25):
        """Heartbeat plus drain of pending frames."""
        deadline = time.monotonic() + wall_timeout
        self._heartbeat()
        while time.monotonic() < deadline:
            self._heartbeat()
            try:
                raw = self.ws.recv(timeout=0.05)
            except TimeoutError:
                break
            msg = decode_frame(raw)
            self.sim_time = max(self.sim_time, msg.stamp)
            if msg.type == "telemetry.uav":
                self.state = msg.payload["state"]
            elif msg.type == "detection.update":
                self.tracks = msg.payload["tracks"]

    def wait_state(self, want, wall_timeout=30.0):
        deadline = time.monotonic() + wall_timeout
        while time.monotonic() < deadline:
            self.pump()
            if self.state in want:
                return self.state
        raise AssertionError(f"state {want} not reached, stuck in {self.state}")

    def close(self):
        self.ws.close()


def test_console_session_and_assign_latency(server):
    base, out_dir, proc = server
    import httpx

    # The static console is mounted.
    page = httpx.get(base + "/console/", timeout=5.0)
    assert page.status_code == 200
    assert "js/main.js" in page.text

    scn = httpx.get(base + "/api/scenario", timeout=5.0).json()
    session = ScriptedSession(base.replace("http", "ws") + "/ws")
    try:
        session.pump()
        session.send("funnel.set", {
            "center_geo": scn["funnel_center_geo"],
            "margin_m": scn["funnel_margin_m"],
            "ceiling_m": scn["funnel_ceiling_m"],
        })
        session.wait_state({"Ready"})
        session.send("takeoff", {})
        session.wait_state({"Takeoff", "InitialExploration"})
        session.wait_state({"AwaitSelection"}, wall_timeout=60.0)
        deadline = time.monotonic() + 30.0
        while not session.tracks and time.monotonic() < deadline:
            session.pump()
        assert session.tracks, "no localized fire offered for selection"
        session.send("target.select", {"track_id": session.tracks[0]["id"]})
        session.wait_state({"Alternating"})
        session.send("authorize", {})
        session.wait_state({"Engaged"})

        # Manual override burst with dead-man release, then back to auto.
        session.send("mode.set", {"mode": "manual"})
        for _ in range(5):
            session.send("manual.velocity", {"pan_cmd": 0.5, "tilt_cmd": 0.0})
            session.pump(0.05)
        session.send("manual.velocity", {"pan_cmd": 0.0, "tilt_cmd": 0.0})
        session.pump(0.2)
        state = httpx.get(base + "/api/state", timeout=5.0).json()
        assert state["monitor"]["mode"] == "manual"
    finally:
        session.close()
        proc.terminate()
        proc.wait(timeout=10)

    # Log-side checks: authorize -> first target.assign within 1 sim-second.
    log = out_dir / "run_log.jsonl"
    authorize_t = None
    first_assign_t = None
    manual_cmds = []
    for line in log.read_text().splitlines():
        rec = json.loads(line)
        if rec.get("kind") != "msg":
            continue
        msg = rec["msg"]
        if msg["type"] == "authorize" and authorize_t is None:
            authorize_t = rec["t"]
        if msg["type"] == "target.assign" and first_assign_t is None:
            first_assign_t = rec["t"]
        if msg["type"] == "manual.velocity":
            manual_cmds.append(msg["payload"]["pan_cmd"])
    assert authorize_t is not None and first_assign_t is not None
    latency = first_assign_t - authorize_t
    assert latency <= 1.0, f"target.assign took {latency:.2f} sim-s"
    # The dead-man zero arrived after the burst.
    assert manual_cmds and manual_cmds[-1] == 0.0 and max(manual_cmds) > 0
    print(f"\n[PASS] console integration: funnel->takeoff->select->authorize, "
          f"target.assign after {latency:.2f} sim-s; dead-man zero delivered")
