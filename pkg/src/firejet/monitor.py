"""Simulated fire-monitor actuators and the WMC control loop.

The monitor solves targets in its own GNSS-centered frame so it stays
operational without the GCS (it merely holds orientation when messages stop).
Actuators integrate latched velocity commands at the simulation rate, but new
commands are only accepted at the lower command rate, and encoders quantize
every readout. A proportional loop with a stop tolerance plus the 0.5 deg
target dead-band keeps the motors from chattering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .ballistics import JetParameters, JetSolution, pressure_to_exit_speed, solve_angles
from .errors import Unreachable
from .geo import EnuPoint, GeoPoint, Pose, geo_to_enu, shortest_arc_deg

TILT_MIN_DEG = -15.0
TILT_MAX_DEG = 90.0


@dataclass
class MonitorConfig:
    pan_rate_max: float = 12.0        # deg/s at 100 percent speed
    tilt_rate_max: float = 8.0
    speed_pct: float = 20.0
    encoder_quantum: float = 0.05     # deg
    command_rate_hz: float = 5.0      # actuator input acceptance rate
    kp: float = 0.5                   # command per deg of error
    stop_tolerance_deg: float = 0.1
    deadband_deg: float = 0.5
    watchdog_timeout_s: float = 2.0
    water_tilt_derate: float = 0.7    # tilt rate factor while water flows
    arc: str = "low"


@dataclass
class AimSetpoint:
    yaw: float
    pitch: float
    source_target: GeoPoint
    issued_at: float


@dataclass
class MonitorTelemetry:
    pan_deg: float
    tilt_deg: float
    pressure_pa: float
    temp_housing_c: float
    temp_exterior_c: float
    gnss: GeoPoint
    mode: str
    status: str


class MonitorSim:
    """Pan/tilt/nozzle platform plus its control unit, stepped at the sim rate."""

    def __init__(
        self,
        gnss: GeoPoint,
        pressure_pa: float = 500_000.0,
        config: Optional[MonitorConfig] = None,
        jet: Optional[JetParameters] = None,
        dt: float = 0.05,
        pan0: float = 0.0,
        tilt0: float = 0.0,
    ):
        self.config = config or MonitorConfig()
        self.gnss = gnss
        self.pressure_pa = pressure_pa
        self.dt = dt
        base = jet or JetParameters(exit_speed=1.0)
        speed = pressure_to_exit_speed(pressure_pa, base)
        self.jet = JetParameters(
            exit_speed=speed, gravity=base.gravity, drag_coeff=base.drag_coeff,
            nozzle_offset=base.nozzle_offset,
            discharge_coeff=base.discharge_coeff,
            water_density=base.water_density,
        )

        self.pan = pan0 % 360.0           # true mechanical angles
        self.tilt = min(max(tilt0, TILT_MIN_DEG), TILT_MAX_DEG)
        self.mode = "auto"
        self.status = "ok"
        self.nozzle_mode = "solid"
        self.temp_housing_c = 35.0
        self.temp_exterior_c = 20.0
        self.setpoint: Optional[AimSetpoint] = None
        self.water_flowing = False

        self._cmd_pan = 0.0               # latched velocity commands [-1, 1]
        self._cmd_tilt = 0.0
        self._ticks = 0
        self._cmd_interval = max(1, int(round(1.0 / (self.config.command_rate_hz * dt))))
        self._last_msg_t: Optional[float] = None
        self._manual_pan = 0.0
        self._manual_tilt = 0.0

    # -- encoders -----------------------------------------------------------

    def encoder_pan(self) -> float:
        return self._quantize(self.pan) % 360.0

    def encoder_tilt(self) -> float:
        return self._quantize(self.tilt)

    def _quantize(self, angle: float) -> float:
        q = self.config.encoder_quantum
        return round(angle / q) * q

    # -- actuation ----------------------------------------------------------

    def actuate(self, pan_cmd: float, tilt_cmd: float, dt: Optional[float] = None) -> None:
        """Integrate one tick of the latched velocity commands."""
        dt = self.dt if dt is None else dt
        cfg = self.config
        pan_cmd = min(max(pan_cmd, -1.0), 1.0)
        tilt_cmd = min(max(tilt_cmd, -1.0), 1.0)
        scale = cfg.speed_pct / 100.0
        tilt_rate = cfg.tilt_rate_max * scale
        if self.water_flowing:
            tilt_rate *= cfg.water_tilt_derate
        self.pan = (self.pan + pan_cmd * cfg.pan_rate_max * scale * dt) % 360.0
        self.tilt = min(max(self.tilt + tilt_cmd * tilt_rate * dt, TILT_MIN_DEG),
                        TILT_MAX_DEG)

    # -- targeting ----------------------------------------------------------

    def update_setpoint(self, target: GeoPoint, now: float) -> bool:
        """Solve the target; replace the setpoint only past the dead-band.

        Returns True when a new setpoint was written. Unreachable targets
        leave the current setpoint in place and flag the status.
        """
        self._last_msg_t = now
        nozzle = geo_to_enu(self.gnss, self.gnss) + self.jet.nozzle_offset
        target_enu = geo_to_enu(target, self.gnss)
        try:
            sol: JetSolution = solve_angles(nozzle, target_enu, self.jet,
                                            arc=self.config.arc)
        except Unreachable:
            self.status = "unreachable"
            return False
        if self.status == "unreachable":
            self.status = "ok"
        if self.setpoint is not None:
            dyaw = abs(shortest_arc_deg(sol.yaw, self.setpoint.yaw))
            dpitch = abs(sol.pitch - self.setpoint.pitch)
            if dyaw < self.config.deadband_deg and dpitch < self.config.deadband_deg:
                return False
        self.setpoint = AimSetpoint(yaw=sol.yaw, pitch=sol.pitch,
                                    source_target=target, issued_at=now)
        return True

    def control_command(self) -> tuple[float, float]:
        """Proportional command toward the setpoint from encoder feedback."""
        if self.setpoint is None:
            return (0.0, 0.0)
        cfg = self.config
        err_pan = shortest_arc_deg(self.setpoint.yaw, self.encoder_pan())
        err_tilt = self.setpoint.pitch - self.encoder_tilt()
        pan_cmd = 0.0 if abs(err_pan) < cfg.stop_tolerance_deg else \
            min(max(cfg.kp * err_pan, -1.0), 1.0)
        tilt_cmd = 0.0 if abs(err_tilt) < cfg.stop_tolerance_deg else \
            min(max(cfg.kp * err_tilt, -1.0), 1.0)
        return (pan_cmd, tilt_cmd)

    def watchdog_expired(self, now: float) -> bool:
        if self._last_msg_t is None:
            return True
        return (now - self._last_msg_t) > self.config.watchdog_timeout_s

    def note_message(self, now: float) -> None:
        """Any valid inbound message feeds the watchdog."""
        self._last_msg_t = now

    def manual_command(self, pan_cmd: float, tilt_cmd: float,
                       nozzle_mode: Optional[str] = None) -> None:
        if self.mode != "manual":
            raise ValueError("manual commands only accepted in manual mode")
        self._manual_pan = min(max(pan_cmd, -1.0), 1.0)
        self._manual_tilt = min(max(tilt_cmd, -1.0), 1.0)
        self.setpoint = None
        if nozzle_mode is not None:
            if nozzle_mode not in ("spray", "solid"):
                raise ValueError("nozzle_mode must be 'spray' or 'solid'")
            self.nozzle_mode = nozzle_mode

    def set_mode(self, mode: str) -> None:
        """Mode switches are always permitted; the operator reclaims control."""
        if mode not in ("manual", "auto"):
            raise ValueError("mode must be 'manual' or 'auto'")
        if mode == self.mode:
            return
        self.mode = mode
        self._cmd_pan = self._cmd_tilt = 0.0
        self._manual_pan = self._manual_tilt = 0.0

    # -- stepping -----------------------------------------------------------

    def tick(self, now: float) -> None:
        """One simulation tick: refresh commands at the command rate, integrate.

        The watchdog is evaluated every tick so a stale link freezes motion
        within one tick of the timeout; recovery waits for the next command
        cycle after a fresh message.
        """
        refresh = self._ticks % self._cmd_interval == 0
        if self.mode == "manual":
            if refresh:
                self._cmd_pan = self._manual_pan
                self._cmd_tilt = self._manual_tilt
                self.status = "ok"
        elif self.watchdog_expired(now):
            self._cmd_pan = 0.0
            self._cmd_tilt = 0.0
            self.status = "degraded"
        elif refresh:
            self._cmd_pan, self._cmd_tilt = self.control_command()
            if self.status == "degraded":
                self.status = "ok"
        self._ticks += 1
        self.actuate(self._cmd_pan, self._cmd_tilt)

    # -- reporting ----------------------------------------------------------

    def telemetry(self) -> MonitorTelemetry:
        return MonitorTelemetry(
            pan_deg=self.encoder_pan(),
            tilt_deg=self.encoder_tilt(),
            pressure_pa=self.pressure_pa,
            temp_housing_c=self.temp_housing_c,
            temp_exterior_c=self.temp_exterior_c,
            gnss=self.gnss,
            mode=self.mode,
            status=self.status,
        )

    def nozzle_position(self, enu_origin: GeoPoint) -> EnuPoint:
        """Nozzle location in the scenario ENU frame."""
        return geo_to_enu(self.gnss, enu_origin) + self.jet.nozzle_offset
