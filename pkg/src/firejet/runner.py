"""Mission runner: wires world, WMC and GCS together and owns the run log.

Headless mode drives the whole mission with a scripted operator (select the
first reachable track, authorize immediately) as fast as the host allows;
the service layer reuses the same runner paced to the wall clock with real
operators attached.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Callable, List, Optional

from .ballistics import is_reachable
from .geo import geo_to_enu
from .metrics import LOG_VERSION, MetricsAccumulator, RunMetrics
from .mission import GcsOrchestrator, MissionState
from .monitor import MonitorSim
from .protocol import Outbox, WireMessage, geo_from_payload
from .scenario import Scenario
from .worldsim import World

log = logging.getLogger(__name__)


class MissionRunner:
    """Single-threaded 20 Hz loop over one scenario."""

    def __init__(
        self,
        scenario: Scenario,
        seed_override: Optional[int] = None,
        log_path: Optional[Path] = None,
        scripted_operator: bool = True,
    ):
        self.scenario = scenario
        self.seed = scenario.seed if seed_override is None else seed_override
        self.grid = scenario.build_grid()
        self.world = World(self.grid, scenario.fire_sources(),
                           scenario.uav_start_pose(), seed=self.seed,
                           config=scenario.world_config())
        self.monitor = MonitorSim(
            gnss=scenario.monitor_geo,
            pressure_pa=scenario.monitor_pressure_pa,
            config=scenario.monitor_config(),
            jet=scenario.jet_parameters(),
            dt=self.world.config.dt,
        )
        self.records: List[dict] = []
        self._log_fh = None
        if log_path is not None:
            log_path = Path(log_path)
            log_path.parent.mkdir(parents=True, exist_ok=True)
            self._log_fh = log_path.open("w")
        self.metrics_acc = MetricsAccumulator()

        aoi = geo_to_enu(scenario.area_of_interest, scenario.origin)
        self.gcs = GcsOrchestrator(
            world=self.world, monitor=self.monitor, grid=self.grid,
            enu_origin=scenario.origin, area_of_interest=aoi,
            config=scenario.mission_config(), event_log=self.record,
        )
        self.scripted = scripted_operator
        self.console_outbox = Outbox("console")
        self._operator_sent_funnel = False
        self._operator_sent_takeoff = False
        self._operator_selected = False
        self._operator_authorized_t = -10.0
        self._heartbeat_every = int(round(1.0 / self.world.config.dt))
        self._ticks = 0
        self.subscribers: List[Callable[[WireMessage], None]] = []

        self.record({
            "kind": "meta", "log_version": LOG_VERSION,
            "scenario_name": getattr(scenario.path, "stem", "inline"),
            "seed": self.seed, "dt_s": self.world.config.dt,
        })

    # ------------------------------------------------------------------

    def record(self, rec: dict) -> None:
        self.records.append(rec)
        self.metrics_acc.observe(rec)
        if self._log_fh is not None:
            self._log_fh.write(json.dumps(rec, sort_keys=True,
                                          separators=(",", ":")) + "\n")

    def _record_msg(self, conn: str, direction: str, msg: WireMessage) -> None:
        self.record({"kind": "msg", "t": round(self.world.clock, 3),
                     "conn": conn, "dir": direction, "msg": msg.to_dict()})

    # ------------------------------------------------------------------
    # message plumbing

    def inject_console(self, msg: WireMessage) -> List[WireMessage]:
        """Console -> GCS delivery; returns direct replies for that client."""
        self._record_msg("console", "rx", msg)
        replies = self.gcs.handle_message(msg)
        for r in replies:
            self._route(r)
        return replies

    def _route(self, msg: WireMessage) -> None:
        if msg.type == "target.assign":
            self._record_msg("wmc", "tx", msg)
            self.monitor.update_setpoint(geo_from_payload(msg.payload["geo"]),
                                         now=self.world.clock)
            self.monitor.note_message(self.world.clock)
        elif msg.type == "telemetry.wmc":
            self._record_msg("wmc", "rx", msg)
        else:
            self._record_msg("console", "tx", msg)
        for sub in self.subscribers:
            sub(msg)

    # ------------------------------------------------------------------
    # stepping

    def tick(self) -> List[WireMessage]:
        self.world.step()
        self.monitor.tick(self.world.clock)
        out = self.gcs.tick()
        for msg in out:
            self._route(msg)
        if self.scripted:
            self._operator_step()
        self._ticks += 1
        return out

    def _operator_step(self) -> None:
        state = self.gcs.state
        now = self.world.clock
        if self._ticks % self._heartbeat_every == 0:
            self.inject_console(self.console_outbox.make("heartbeat", {}, now))
        if state is MissionState.Configuring and not self._operator_sent_funnel:
            scn = self.scenario
            self.inject_console(self.console_outbox.make("funnel.set", {
                "center_geo": {"lat": scn.funnel_center.lat,
                               "lon": scn.funnel_center.lon,
                               "alt": scn.funnel_center.alt},
                "margin_m": scn.funnel_margin_m,
                "ceiling_m": scn.funnel_ceiling_m,
            }, now))
            self._operator_sent_funnel = True
        elif state is MissionState.Ready and not self._operator_sent_takeoff:
            self.inject_console(self.console_outbox.make("takeoff", {}, now))
            self._operator_sent_takeoff = True
        elif state is MissionState.AwaitSelection and not self._operator_selected:
            nozzle = self.monitor.nozzle_position(self.scenario.origin)
            for track in self.gcs.tracks:
                if is_reachable(nozzle, track.position, self.monitor.jet).reachable:
                    self.inject_console(self.console_outbox.make(
                        "target.select", {"track_id": track.id}, now))
                    self._operator_selected = True
                    break
        elif state is MissionState.Alternating and self._operator_selected:
            if now - self._operator_authorized_t >= 5.0:
                self._operator_authorized_t = now
                self.inject_console(self.console_outbox.make("authorize", {}, now))

    # ------------------------------------------------------------------

    def run_headless(self, max_sim_s: float = 600.0) -> RunMetrics:
        ticks = int(max_sim_s / self.world.config.dt)
        for _ in range(ticks):
            self.tick()
            if self.gcs.state in (MissionState.Finished, MissionState.Fault):
                break
        # Drain one telemetry period so the final state lands in the log.
        for _ in range(self.gcs._telemetry_every):
            self.tick()
        metrics = self.metrics_acc.finalize()
        self.close()
        return metrics

    def close(self) -> None:
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None


def run_scenario(scenario_path, headless: bool = True,
                 seed_override: Optional[int] = None,
                 out_dir: Optional[Path] = None,
                 max_sim_s: float = 600.0):
    """Load, run, and persist log plus metrics. Returns (metrics, log_path)."""
    scenario = Scenario.load(scenario_path)
    log_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / "run_log.jsonl"
    runner = MissionRunner(scenario, seed_override=seed_override,
                           log_path=log_path, scripted_operator=headless)
    metrics = runner.run_headless(max_sim_s=max_sim_s)
    if out_dir is not None:
        (out_dir / "metrics.json").write_text(
            json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n")
    return metrics, log_path
