"""Scenario files: schema, validation, defaults, and the reference scenario.

A scenario is a single JSON object; every tunable in the stack has a default
so an empty ``defaults`` block reproduces the reference behavior. Paths are
resolved relative to the scenario file.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .ballistics import JetParameters
from .errors import ScenarioInvalid
from .geo import EnuPoint, GeoPoint, Pose, geo_to_enu
from .grid import OccupancyGrid, build_grid
from .mission import MissionConfig
from .monitor import MonitorConfig
from .terrain import ExtrudedBox, Heightmap, load_esri_ascii, save_esri_ascii
from .worldsim import FireSource, NoiseConfig, WorldConfig

SCENARIO_VERSION = 1


@dataclass
class Scenario:
    origin: GeoPoint
    terrain_path: Path
    buildings: List[ExtrudedBox]
    fires: List[dict]                  # {"geo": GeoPoint, "radius_m", "temp_c"}
    uav_start: GeoPoint
    uav_start_yaw: float
    monitor_geo: GeoPoint
    monitor_pressure_pa: float
    monitor_speed_pct: float
    funnel_center: GeoPoint
    funnel_margin_m: float
    funnel_ceiling_m: float
    area_of_interest: GeoPoint
    seed: int
    cell_size_m: float
    noise: NoiseConfig
    defaults: dict = field(default_factory=dict)
    path: Optional[Path] = None

    # ------------------------------------------------------------------

    @classmethod
    def load(cls, path) -> "Scenario":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError as ex:
            raise ScenarioInvalid(f"scenario file missing: {path}") from ex
        except json.JSONDecodeError as ex:
            raise ScenarioInvalid(f"scenario is not valid JSON: {ex}") from ex
        return cls.from_dict(raw, base_dir=path.parent, path=path)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path, path=None) -> "Scenario":
        try:
            origin = _geo(raw["origin"])
            terrain_path = (base_dir / raw["terrain"]).resolve()
            buildings = [ExtrudedBox(**b) for b in raw.get("buildings", [])]
            fires = [{
                "geo": _geo(f["geo"]),
                "radius_m": float(f.get("radius_m", 2.0)),
                "temp_c": float(f.get("temp_c", 600.0)),
            } for f in raw["fires"]]
            uav = raw["uav_start"]
            monitor = raw["monitor"]
            funnel = raw["funnel"]
            noise_raw = raw.get("noise", {})
            scn = cls(
                origin=origin,
                terrain_path=terrain_path,
                buildings=buildings,
                fires=fires,
                uav_start=_geo(uav["geo"]),
                uav_start_yaw=float(uav.get("yaw_deg", 0.0)),
                monitor_geo=_geo(monitor["geo"]),
                monitor_pressure_pa=float(monitor.get("pressure_pa", 500_000.0)),
                monitor_speed_pct=float(monitor.get("speed_pct", 20.0)),
                funnel_center=_geo(funnel["center_geo"]),
                funnel_margin_m=float(funnel.get("margin_m", 4.0)),
                funnel_ceiling_m=float(funnel.get("ceiling_m", 60.0)),
                area_of_interest=_geo(raw["area_of_interest"]),
                seed=int(raw.get("seed", 0)),
                cell_size_m=float(raw.get("cell_size_m", 1.0)),
                noise=NoiseConfig(**noise_raw),
                defaults=dict(raw.get("defaults", {})),
                path=path,
            )
        except (KeyError, TypeError, ValueError) as ex:
            raise ScenarioInvalid(f"scenario field error: {ex!r}") from ex
        scn.validate()
        return scn

    def validate(self) -> None:
        if not self.terrain_path.exists():
            raise ScenarioInvalid(f"terrain file missing: {self.terrain_path}")
        for name, g in (("uav_start", self.uav_start),
                        ("monitor", self.monitor_geo),
                        ("funnel center", self.funnel_center),
                        ("area of interest", self.area_of_interest),
                        *(("fire", f["geo"]) for f in self.fires)):
            if abs(g.lat - self.origin.lat) >= 1.0 or abs(g.lon - self.origin.lon) >= 1.0:
                raise ScenarioInvalid(f"{name} more than 1 degree from origin")
        if not self.fires:
            raise ScenarioInvalid("scenario needs at least one fire")
        terrain = self.load_terrain()
        e0, n0, e1, n1 = terrain.extent
        for name, g in (("uav_start", self.uav_start),
                        ("funnel center", self.funnel_center),
                        *(("fire", f["geo"]) for f in self.fires)):
            p = geo_to_enu(g, self.origin)
            if not (e0 <= p.e <= e1 and n0 <= p.n <= n1):
                raise ScenarioInvalid(f"{name} outside terrain extent")

    # ------------------------------------------------------------------

    def load_terrain(self) -> Heightmap:
        return load_esri_ascii(self.terrain_path)

    def build_grid(self) -> OccupancyGrid:
        return build_grid(self.load_terrain(), self.buildings, self.cell_size_m)

    def default(self, key: str, fallback):
        return type(fallback)(self.defaults.get(key, fallback))

    def world_config(self) -> WorldConfig:
        d = self.defaults
        return WorldConfig(
            dt=float(d.get("dt_s", 0.05)),
            max_speed=float(d.get("max_speed_mps", 1.0)),
            ambient_c=float(d.get("ambient_c", 20.0)),
            water_temp_c=float(d.get("water_temp_c", 12.0)),
            tau_ext_s=float(d.get("tau_ext_s", 20.0)),
            temp_decay_s=float(d.get("temp_decay_s", 30.0)),
            camera_width=int(d.get("camera_width", 640)),
            camera_height=int(d.get("camera_height", 512)),
            camera_hfov_deg=float(d.get("camera_hfov_deg", 45.0)),
            noise=self.noise,
        )

    def monitor_config(self) -> MonitorConfig:
        d = self.defaults
        return MonitorConfig(
            pan_rate_max=float(d.get("pan_rate_max_dps", 12.0)),
            tilt_rate_max=float(d.get("tilt_rate_max_dps", 8.0)),
            speed_pct=self.monitor_speed_pct,
            encoder_quantum=float(d.get("encoder_quantum_deg", 0.05)),
            command_rate_hz=float(d.get("command_rate_hz", 5.0)),
            kp=float(d.get("kp_per_deg", 0.5)),
            stop_tolerance_deg=float(d.get("stop_tolerance_deg", 0.1)),
            deadband_deg=float(d.get("deadband_deg", 0.5)),
            watchdog_timeout_s=float(d.get("watchdog_timeout_s", 2.0)),
            water_tilt_derate=float(d.get("water_tilt_derate", 0.7)),
            arc=str(d.get("arc", "low")),
        )

    def jet_parameters(self) -> JetParameters:
        d = self.defaults
        off = d.get("nozzle_offset_enu", [0.0, 0.0, 0.0])
        return JetParameters(
            exit_speed=1.0,  # replaced from pressure by the monitor
            gravity=float(d.get("gravity", 9.81)),
            drag_coeff=float(d.get("drag_coeff", 0.0)),
            nozzle_offset=EnuPoint(*[float(x) for x in off]),
            discharge_coeff=float(d.get("discharge_coeff", 0.97)),
            water_density=float(d.get("water_density", 1000.0)),
        )

    def mission_config(self) -> MissionConfig:
        d = self.defaults
        return MissionConfig(
            horizon_m=float(d.get("horizon_m", 60.0)),
            margin_m=self.funnel_margin_m,
            ceiling_agl_m=self.funnel_ceiling_m,
            climb_agl_m=float(d.get("climb_agl_m", 20.0)),
            d_key_m=float(d.get("d_key_m", 4.5)),
            baseline_m=float(d.get("baseline_m", 5.0)),
            standoff_m=float(d.get("standoff_m", 30.0)),
            hold_s=float(d.get("hold_s", 5.0)),
            detection_threshold_c=float(d.get("detection_threshold_c", 80.0)),
            min_area_px=int(d.get("min_area_px", 4)),
            telemetry_hz=float(d.get("telemetry_hz", 10.0)),
            jet_update_hz=float(d.get("jet_update_hz", 2.0)),
            keepalive_s=float(d.get("keepalive_s", 1.0)),
            reassign_m=float(d.get("reassign_m", 0.25)),
            replan_m=float(d.get("replan_m", 2.0)),
            aim_tolerance_deg=float(d.get("aim_tolerance_deg", 2.0)),
            water_band_c=(float(d.get("water_band_lo_c", 4.0)),
                          float(d.get("water_band_hi_c", 16.0))),
            cross_check_limit_m=float(d.get("cross_check_limit_m", 3.0)),
            lost_track_policy=str(d.get("lost_track_policy", "hold")),
        )

    def fire_sources(self) -> List[FireSource]:
        out = []
        for f in self.fires:
            pos = geo_to_enu(f["geo"], self.origin)
            out.append(FireSource(position=pos, radius=f["radius_m"],
                                  temperature=f["temp_c"]))
        return out

    def uav_start_pose(self) -> Pose:
        return Pose(geo_to_enu(self.uav_start, self.origin), self.uav_start_yaw, 0.0)


def _geo(obj: dict) -> GeoPoint:
    return GeoPoint(lat=float(obj["lat"]), lon=float(obj["lon"]),
                    alt=float(obj.get("alt", 0.0)))


# ---------------------------------------------------------------------------
# reference scenario


def write_reference_scenario(directory, seed: int = 1) -> Path:
    """Materialize the reference scenario: one fire behind an obstruction.

    Flat terrain, a building between the monitor and the fire (blocking the
    monitor's view, not the jet), a clear funnel next to the fire.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    origin = GeoPoint(lat=51.512, lon=7.464, alt=100.0)

    terrain = Heightmap.flat(-120.0, -120.0, 120.0, 120.0, 4.0, 0.0)
    terrain_path = directory / "reference_terrain.asc"
    save_esri_ascii(terrain, terrain_path)

    def geo_of(e, n, u):
        from .geo import enu_to_geo
        g = enu_to_geo(EnuPoint(e, n, u), origin)
        return {"lat": g.lat, "lon": g.lon, "alt": g.alt}

    scenario = {
        "version": SCENARIO_VERSION,
        "name": "reference",
        "origin": {"lat": origin.lat, "lon": origin.lon, "alt": origin.alt},
        "terrain": terrain_path.name,
        "cell_size_m": 1.0,
        # Obstruction between monitor (south-west) and fire, away from the funnel.
        "buildings": [
            {"e_min": -30.0, "n_min": 16.0, "e_max": -14.0, "n_max": 26.0,
             "height_m": 8.0},
        ],
        "fires": [
            {"geo": geo_of(0.0, 40.0, 0.6), "radius_m": 2.5, "temp_c": 600.0},
        ],
        "uav_start": {"geo": geo_of(2.0, -6.0, 1.0), "yaw_deg": 0.0},
        "monitor": {"geo": geo_of(-42.0, 8.0, 12.0), "pressure_pa": 500_000.0,
                    "speed_pct": 20.0},
        "funnel": {"center_geo": geo_of(0.0, -2.0, 2.0), "margin_m": 4.0,
                   "ceiling_m": 55.0},
        "area_of_interest": geo_of(0.0, 40.0, 1.0),
        "noise": {},
        "seed": seed,
        "defaults": {
            "tau_ext_s": 110.0,
            "standoff_m": 28.0,
        },
    }
    path = directory / "reference.json"
    path.write_text(json.dumps(scenario, indent=2, sort_keys=True) + "\n")
    return path
