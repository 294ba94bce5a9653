"""Deterministic fixed-timestep world model.

Owns the UAV point-mass kinematics, the fire sources, the synthetic thermal
camera, the scaled-depth oracle standing in for learned two-view depth, GNSS
noise and the water-fire coupling. All randomness flows from per-subsystem
generators spawned off the scenario seed, so identical (scenario, seed) pairs
produce identical trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .geo import EnuPoint, Pose
from .grid import OccupancyGrid, raycast

SIM_DT = 0.05  # s; 20 Hz simulation, 10 Hz telemetry decimation


@dataclass
class CameraIntrinsics:
    width: int = 640
    height: int = 512
    fx: float = 0.0
    fy: float = 0.0
    cx: float = 0.0
    cy: float = 0.0

    def __post_init__(self):
        if self.fx <= 0:
            raise ValueError("fx must be positive")
        if self.fy <= 0:
            raise ValueError("fy must be positive")

    @classmethod
    def from_hfov(cls, width: int = 640, height: int = 512,
                  hfov_deg: float = 45.0) -> "CameraIntrinsics":
        fx = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
        return cls(width=width, height=height, fx=fx, fy=fx,
                   cx=(width - 1) / 2.0, cy=(height - 1) / 2.0)


@dataclass
class FireSource:
    position: EnuPoint
    radius: float = 2.0
    temperature: float = 600.0     # degC
    intensity: float = 1.0         # 0 = extinguished
    wet_accum: float = 0.0         # seconds of water on target

    @property
    def extinguished(self) -> bool:
        return self.intensity <= 0.0


@dataclass
class ThermalImage:
    width: int
    height: int
    temps: np.ndarray              # (height, width) degC
    intrinsics: CameraIntrinsics
    stamp: float
    camera_pose: Pose


@dataclass
class NoiseConfig:
    """GNSS, thermal and depth noise.

    GNSS error is a slowly varying bias (Gauss-Markov, correlation time
    ``gnss_tau_s``) plus white per-fix jitter; the sigma fields are the
    stationary marginal standard deviations. Poses sampled within one
    keyframe pair therefore share most of their error, which is what lets
    short-baseline triangulation work at all.
    """

    gnss_sigma_h: float = 0.3      # m per horizontal axis, marginal
    gnss_sigma_v: float = 0.5      # m, marginal
    gnss_sigma_yaw: float = 1.0    # deg, marginal
    gnss_jitter_h: float = 0.05    # m, white per-fix component
    gnss_jitter_v: float = 0.08    # m
    gnss_jitter_yaw: float = 0.05  # deg
    gnss_tau_s: float = 300.0      # bias correlation time
    thermal_sigma: float = 0.5     # degC
    depth_sigma: float = 0.01      # relative
    depth_distortion_lo: float = 0.5
    depth_distortion_hi: float = 2.0


@dataclass
class WorldConfig:
    dt: float = SIM_DT
    max_speed: float = 1.0         # m/s, paper's transit speed
    ambient_c: float = 20.0
    water_temp_c: float = 12.0
    tau_ext_s: float = 20.0        # continuous wetting needed to extinguish
    temp_decay_s: float = 30.0     # cooldown time constant
    camera_width: int = 640
    camera_height: int = 512
    camera_hfov_deg: float = 45.0
    noise: NoiseConfig = field(default_factory=NoiseConfig)


class CameraFrame:
    """Orthonormal camera basis for a compass yaw/pitch pose (roll-free)."""

    def __init__(self, pose: Pose):
        f = pose.forward()
        self.f = np.array([f.e, f.n, f.u])
        up = np.array([0.0, 0.0, 1.0])
        r = np.cross(self.f, up)
        nr = np.linalg.norm(r)
        if nr < 1e-9:
            raise ValueError("camera pointing straight up/down has no image frame")
        self.r = r / nr
        self.d = np.cross(self.f, self.r)  # image-down
        self.origin = np.array([pose.position.e, pose.position.n, pose.position.u])

    def project(self, point: EnuPoint, intr: CameraIntrinsics):
        """(u, v, depth_along_ray) or None if behind the camera."""
        p = np.array([point.e, point.n, point.u]) - self.origin
        z = float(p @ self.f)
        if z <= 1e-6:
            return None
        u = intr.cx + intr.fx * float(p @ self.r) / z
        v = intr.cy + intr.fy * float(p @ self.d) / z
        return (u, v, float(np.linalg.norm(p)))

    def pixel_ray(self, u: float, v: float, intr: CameraIntrinsics) -> EnuPoint:
        """Unit direction in world coordinates through pixel (u, v)."""
        vec = (
            self.f
            + ((u - intr.cx) / intr.fx) * self.r
            + ((v - intr.cy) / intr.fy) * self.d
        )
        vec = vec / np.linalg.norm(vec)
        return EnuPoint(float(vec[0]), float(vec[1]), float(vec[2]))


class World:
    """Single-owner mutable world state advanced in fixed steps."""

    def __init__(
        self,
        grid: OccupancyGrid,
        fires: Sequence[FireSource],
        uav_start: Pose,
        seed: int = 0,
        config: Optional[WorldConfig] = None,
    ):
        self.grid = grid
        self.fires: List[FireSource] = list(fires)
        self.config = config or WorldConfig()
        self.clock = 0.0
        self.uav_pose = uav_start
        self.gimbal_pose = uav_start
        self.water_flowing = False

        self._waypoint: Optional[Pose] = None
        self._hold_request_ticks = 0
        self._hold_ticks_left = 0
        self._arrived = False

        seq = np.random.SeedSequence(seed)
        gnss_seq, thermal_seq, depth_seq = seq.spawn(3)
        self.gnss_rng = np.random.default_rng(gnss_seq)
        self.thermal_rng = np.random.default_rng(thermal_seq)
        self.depth_rng = np.random.default_rng(depth_seq)
        self._gnss_bias = None           # [e, n, u, yaw], lazily initialized
        self._gnss_bias_t = 0.0

        self.intrinsics = CameraIntrinsics.from_hfov(
            self.config.camera_width, self.config.camera_height,
            self.config.camera_hfov_deg,
        )

    # -- commands ---------------------------------------------------------

    def command_waypoint(self, pose: Pose, hold_s: float = 0.0) -> None:
        self._waypoint = pose
        self._hold_request_ticks = int(round(hold_s / self.config.dt))
        self._hold_ticks_left = 0
        self._arrived = False

    def set_gimbal(self, yaw: float, pitch: float) -> None:
        self.gimbal_pose = Pose(self.uav_pose.position, yaw, pitch)

    @property
    def uav_at_waypoint(self) -> bool:
        return self._arrived

    @property
    def uav_holding(self) -> bool:
        return self._arrived and self._hold_ticks_left > 0

    # -- stepping ---------------------------------------------------------

    def step(self) -> None:
        dt = self.config.dt
        self._step_uav(dt)
        self._step_fires(dt)
        self.clock = round(self.clock + dt, 9)

    def _step_uav(self, dt: float) -> None:
        if self._waypoint is None:
            return
        wp = self._waypoint
        pos = self.uav_pose.position
        delta = wp.position - pos
        dist = delta.norm()
        step_len = self.config.max_speed * dt
        if dist <= step_len:
            if not self._arrived:
                self._arrived = True
                self._hold_ticks_left = self._hold_request_ticks
            elif self._hold_ticks_left > 0:
                self._hold_ticks_left -= 1
            self.uav_pose = Pose(wp.position, wp.yaw, wp.pitch)
        else:
            k = step_len / dist
            new_pos = EnuPoint(pos.e + delta.e * k, pos.n + delta.n * k,
                               pos.u + delta.u * k)
            self.uav_pose = Pose(new_pos, wp.yaw, wp.pitch)
        self.gimbal_pose = Pose(self.uav_pose.position, self.gimbal_pose.yaw,
                                self.gimbal_pose.pitch)

    def _step_fires(self, dt: float) -> None:
        ambient = self.config.ambient_c
        decay = 1.0 - math.exp(-dt / self.config.temp_decay_s)
        for fire in self.fires:
            if fire.extinguished and fire.temperature > ambient:
                fire.temperature += (ambient - fire.temperature) * decay

    # -- water ------------------------------------------------------------

    def apply_water(self, landing: EnuPoint, dt: float) -> None:
        """Accumulate wetting on fires hit by the jet landing point."""
        if not self.water_flowing:
            raise ValueError("apply_water requires water_flowing")
        for fire in self.fires:
            if fire.extinguished:
                continue
            if landing.distance_to(fire.position) <= fire.radius:
                fire.wet_accum += dt
                if fire.wet_accum >= self.config.tau_ext_s:
                    fire.intensity = 0.0

    # -- sensors ----------------------------------------------------------

    def _gnss_bias_sigmas(self):
        n = self.config.noise
        out = []
        for sigma, jitter in (
            (n.gnss_sigma_h, n.gnss_jitter_h),
            (n.gnss_sigma_h, n.gnss_jitter_h),
            (n.gnss_sigma_v, n.gnss_jitter_v),
            (n.gnss_sigma_yaw, n.gnss_jitter_yaw),
        ):
            j = min(jitter, sigma)
            out.append((math.sqrt(max(sigma * sigma - j * j, 0.0)), j))
        return out

    def sample_gnss(self, true_pose: Pose) -> Pose:
        n = self.config.noise
        g = self.gnss_rng
        sigmas = self._gnss_bias_sigmas()
        if self._gnss_bias is None:
            self._gnss_bias = [g.normal(0.0, b) for b, _ in sigmas]
            self._gnss_bias_t = self.clock
        else:
            dt = self.clock - self._gnss_bias_t
            if dt > 0:
                rho = math.exp(-dt / n.gnss_tau_s)
                w = math.sqrt(1.0 - rho * rho)
                self._gnss_bias = [
                    rho * bias + w * g.normal(0.0, b)
                    for bias, (b, _) in zip(self._gnss_bias, sigmas)
                ]
                self._gnss_bias_t = self.clock
        be, bn, bu, byaw = self._gnss_bias
        pos = EnuPoint(
            true_pose.position.e + be + g.normal(0.0, sigmas[0][1]),
            true_pose.position.n + bn + g.normal(0.0, sigmas[1][1]),
            true_pose.position.u + bu + g.normal(0.0, sigmas[2][1]),
        )
        yaw = true_pose.yaw + byaw + g.normal(0.0, sigmas[3][1])
        return Pose(pos, yaw % 360.0, true_pose.pitch)

    def fire_visible(self, camera_pos: EnuPoint, fire: FireSource) -> bool:
        to_fire = fire.position - camera_pos
        dist = to_fire.norm()
        if dist < 1e-6:
            return True
        clearance = fire.radius + self.grid.cell_size
        if dist <= clearance:
            return True
        d = to_fire.scaled(1.0 / dist)
        return raycast(self.grid, camera_pos, d, dist - clearance) is None

    def render_thermal(
        self,
        camera_pose: Pose,
        jet_polyline: Optional[Sequence[EnuPoint]] = None,
        noise: bool = True,
    ) -> ThermalImage:
        """Pinhole render: ambient + Gaussian fire splats + cold jet + noise."""
        cfg = self.config
        intr = self.intrinsics
        frame = CameraFrame(camera_pose)
        temps = np.full((intr.height, intr.width), cfg.ambient_c, dtype=float)

        for fire in self.fires:
            peak = (fire.temperature - cfg.ambient_c) * fire.intensity
            if peak <= 0:
                continue
            if not self.fire_visible(camera_pose.position, fire):
                continue
            proj = frame.project(fire.position, intr)
            if proj is None:
                continue
            uc, vc, depth = proj
            sigma = intr.fx * fire.radius / (2.0 * depth)
            _add_gaussian_splat(temps, uc, vc, peak, sigma)

        if jet_polyline is not None and len(jet_polyline) >= 2:
            _raster_polyline(temps, frame, intr, jet_polyline, cfg.water_temp_c)

        if noise and cfg.noise.thermal_sigma > 0:
            temps = temps + self.thermal_rng.normal(
                0.0, cfg.noise.thermal_sigma, temps.shape
            )

        return ThermalImage(
            width=intr.width, height=intr.height, temps=temps,
            intrinsics=intr, stamp=self.clock, camera_pose=camera_pose,
        )

    def scaled_depth_oracle(
        self,
        camera_pose: Pose,
        scale_distortion: Optional[float] = None,
        noise: bool = True,
    ) -> "ScaledDepthOracle":
        """Depth source with an unknown global scale, as a learned two-view
        stereo front end would produce. The distortion is drawn log-uniform
        per keyframe pair unless given explicitly."""
        n = self.config.noise
        if scale_distortion is None:
            lo, hi = math.log(n.depth_distortion_lo), math.log(n.depth_distortion_hi)
            scale_distortion = math.exp(self.depth_rng.uniform(lo, hi))
        sigma = n.depth_sigma if noise else 0.0
        return ScaledDepthOracle(self, camera_pose, scale_distortion, sigma)


class ScaledDepthOracle:
    """Lazy per-pixel depth with a hidden global scale factor."""

    def __init__(self, world: World, camera_pose: Pose, distortion: float,
                 noise_sigma: float):
        if distortion <= 0:
            raise ValueError("scale distortion must be positive")
        self.world = world
        self.camera_pose = camera_pose
        self.distortion = distortion
        self.noise_sigma = noise_sigma
        self._frame = CameraFrame(camera_pose)
        self.max_range = 500.0

    def true_depth_at(self, u: float, v: float) -> float:
        """Metric range to the first surface (grid or fire body) on the pixel ray."""
        ray = self._frame.pixel_ray(u, v, self.world.intrinsics)
        origin = self.camera_pose.position
        best = math.inf
        hit = raycast(self.world.grid, origin, ray, self.max_range)
        if hit is not None:
            best = hit.range_m
        for fire in self.world.fires:
            to_f = fire.position - origin
            t = to_f.e * ray.e + to_f.n * ray.n + to_f.u * ray.u
            if t <= 0 or t >= best:
                continue
            closest = origin + ray.scaled(t)
            if closest.distance_to(fire.position) <= fire.radius:
                best = t  # depth of the fire body center plane
        return best

    def depth_at(self, u: float, v: float) -> float:
        """Scaled (non-metric) depth; inf when the ray escapes the world."""
        d = self.true_depth_at(u, v)
        if not math.isfinite(d):
            return math.inf
        noisy = d * self.distortion
        if self.noise_sigma > 0:
            noisy *= 1.0 + self.world.depth_rng.normal(0.0, self.noise_sigma)
        return noisy

    def reported_camera_distance(self, true_distance: float) -> float:
        """Inter-camera distance in the oracle's scaled frame."""
        return true_distance * self.distortion

    def pixel_ray(self, u: float, v: float) -> EnuPoint:
        return self._frame.pixel_ray(u, v, self.world.intrinsics)


def _add_gaussian_splat(temps, uc, vc, peak, sigma):
    h, w = temps.shape
    reach = max(2, int(math.ceil(3.0 * sigma)))
    u0 = max(0, int(math.floor(uc)) - reach)
    u1 = min(w - 1, int(math.ceil(uc)) + reach)
    v0 = max(0, int(math.floor(vc)) - reach)
    v1 = min(h - 1, int(math.ceil(vc)) + reach)
    if u0 > u1 or v0 > v1:
        return
    us = np.arange(u0, u1 + 1)
    vs = np.arange(v0, v1 + 1)
    gu = np.exp(-((us - uc) ** 2) / (2.0 * sigma**2))
    gv = np.exp(-((vs - vc) ** 2) / (2.0 * sigma**2))
    temps[v0:v1 + 1, u0:u1 + 1] += peak * np.outer(gv, gu)


def _raster_polyline(temps, frame, intr, polyline, value, thickness_px=2):
    h, w = temps.shape
    pts = []
    for p in polyline:
        proj = frame.project(p, intr)
        pts.append(None if proj is None else (proj[0], proj[1]))
    for a, b in zip(pts, pts[1:]):
        if a is None or b is None:
            continue
        length = math.hypot(b[0] - a[0], b[1] - a[1])
        steps = max(2, int(length / 0.5) + 1)
        for i in range(steps + 1):
            t = i / steps
            u = a[0] + (b[0] - a[0]) * t
            v = a[1] + (b[1] - a[1]) * t
            iu, iv = int(round(u)), int(round(v))
            lo_u, hi_u = iu - thickness_px, iu + thickness_px
            if hi_u < 0 or lo_u >= w:
                continue
            lo_v, hi_v = iv - thickness_px, iv + thickness_px
            if hi_v < 0 or lo_v >= h:
                continue
            temps[max(0, lo_v):min(h, hi_v + 1),
                  max(0, lo_u):min(w, hi_u + 1)] = value


def thermal_to_pgm(img: ThermalImage) -> bytes:
    """16-bit big-endian PGM in centi-degC, for frame dumps."""
    centi = np.clip(img.temps * 100.0, 0, 65535).astype(">u2")
    header = f"P5\n{img.width} {img.height}\n65535\n".encode()
    return header + centi.tobytes()
