"""Water jet physics: forward trajectory integration and inverse targeting.

The jet is a point mass under gravity and optional quadratic drag
(acceleration -g*up - k*|v|*v). Without drag the inverse problem has the
classic closed form; with drag the launch pitch is found by bisection on the
monotone branch of the landing-range function, bracketed by a golden-section
scan for the maximum range. Yaw never needs iteration: drag is antiparallel
to velocity, so the trajectory stays in its vertical launch plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional

from .errors import NeverLands, NonPositivePressure, Unreachable
from .geo import EnuPoint, bearing_deg

PITCH_MIN_DEG = -15.0  # mechanical monitor limits
PITCH_MAX_DEG = 89.0

FLIGHT_TIME_CAP_S = 60.0

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

# Internal integrator step for solver iterations. RK4 truncation at this step
# is far below the 2 cm solution tolerance; callers can verify solutions at
# any finer dt.
_SOLVER_DT = 0.04


@dataclass(frozen=True)
class JetParameters:
    exit_speed: float                 # m/s at the nozzle
    gravity: float = 9.81             # m/s^2
    drag_coeff: float = 0.0           # 1/m, 0 = vacuum model
    nozzle_offset: EnuPoint = field(default_factory=lambda: EnuPoint(0, 0, 0))
    discharge_coeff: float = 0.97
    water_density: float = 1000.0     # kg/m^3

    def __post_init__(self):
        if self.exit_speed <= 0:
            raise ValueError("exit_speed must be positive")
        if self.gravity <= 0:
            raise ValueError("gravity must be positive")
        if self.drag_coeff < 0:
            raise ValueError("drag_coeff must be non-negative")


@dataclass(frozen=True)
class JetSolution:
    yaw: float            # degrees compass
    pitch: float          # degrees above horizon
    arc: str              # "low" | "high"
    time_of_flight: float # seconds
    landing: EnuPoint

    def __post_init__(self):
        if not PITCH_MIN_DEG <= self.pitch <= PITCH_MAX_DEG:
            raise ValueError(f"pitch {self.pitch:.3f} outside mechanical range")
        if self.arc not in ("low", "high"):
            raise ValueError("arc must be 'low' or 'high'")


class JetPath(NamedTuple):
    points: List[EnuPoint]
    landing: EnuPoint
    time_of_flight: float


class Reachability(NamedTuple):
    reachable: bool
    margin_m: float


def pressure_to_exit_speed(pressure_pa: float, params: JetParameters) -> float:
    """Bernoulli orifice model: v = C_d * sqrt(2 p / rho)."""
    if pressure_pa <= 0:
        raise NonPositivePressure(f"pressure {pressure_pa} Pa")
    return params.discharge_coeff * math.sqrt(2.0 * pressure_pa / params.water_density)


def simulate_trajectory(
    origin: EnuPoint,
    yaw_deg: float,
    pitch_deg: float,
    params: JetParameters,
    dt: float = 0.01,
    ground: Optional[Callable[[float, float], float]] = None,
    record_path: bool = True,
) -> JetPath:
    """Integrate the jet with RK4 until it falls through the ground surface.

    ``ground`` maps (e, n) to terrain height; default is the horizontal plane
    through the origin. The landing point is linearly interpolated inside the
    crossing step. ``record_path=False`` skips polyline bookkeeping and
    returns only origin and landing.
    """
    if not 0.0 < dt <= 0.05:
        raise ValueError("dt must be in (0, 0.05]")
    if pitch_deg <= -90.0:
        raise ValueError("pitch must be above -90 degrees")
    if ground is None:
        base = origin.u
        ground = lambda e, n: base  # noqa: E731

    g = params.gravity
    k = params.drag_coeff
    yaw_r = math.radians(yaw_deg)
    pitch_r = math.radians(pitch_deg)
    v = params.exit_speed
    ch = math.cos(pitch_r)

    px, py, pz = origin.e, origin.n, origin.u
    vx = v * ch * math.sin(yaw_r)
    vy = v * ch * math.cos(yaw_r)
    vz = v * math.sin(pitch_r)

    points = [EnuPoint(px, py, pz)]
    t = 0.0
    h_prev = pz - ground(px, py)
    while t < FLIGHT_TIME_CAP_S:
        nx, ny, nz, nvx, nvy, nvz = _rk4_step(px, py, pz, vx, vy, vz, g, k, dt)
        h_new = nz - ground(nx, ny)
        if h_prev >= 0.0 and h_new < 0.0:
            frac = h_prev / (h_prev - h_new) if h_prev > 0 else 0.0
            landing = EnuPoint(
                px + (nx - px) * frac, py + (ny - py) * frac, pz + (nz - pz) * frac
            )
            points.append(landing)
            return JetPath(points, landing, t + frac * dt)
        px, py, pz, vx, vy, vz = nx, ny, nz, nvx, nvy, nvz
        h_prev = h_new
        t += dt
        if record_path:
            points.append(EnuPoint(px, py, pz))
    raise NeverLands(f"jet airborne after {FLIGHT_TIME_CAP_S} s")


def _rk4_step(px, py, pz, vx, vy, vz, g, k, dt):
    # Stage accelerations written out; this loop dominates solver runtime.
    h = 0.5 * dt
    s1 = k * math.sqrt(vx * vx + vy * vy + vz * vz)
    ax1, ay1, az1 = -s1 * vx, -s1 * vy, -g - s1 * vz
    bx, by, bz = vx + h * ax1, vy + h * ay1, vz + h * az1
    s2 = k * math.sqrt(bx * bx + by * by + bz * bz)
    ax2, ay2, az2 = -s2 * bx, -s2 * by, -g - s2 * bz
    cx, cy, cz = vx + h * ax2, vy + h * ay2, vz + h * az2
    s3 = k * math.sqrt(cx * cx + cy * cy + cz * cz)
    ax3, ay3, az3 = -s3 * cx, -s3 * cy, -g - s3 * cz
    dx, dy, dz = vx + dt * ax3, vy + dt * ay3, vz + dt * az3
    s4 = k * math.sqrt(dx * dx + dy * dy + dz * dz)
    ax4, ay4, az4 = -s4 * dx, -s4 * dy, -g - s4 * dz

    w = dt / 6.0
    npx = px + w * (vx + 2 * bx + 2 * cx + dx)
    npy = py + w * (vy + 2 * by + 2 * cy + dy)
    npz = pz + w * (vz + 2 * bz + 2 * cz + dz)
    nvx = vx + w * (ax1 + 2 * ax2 + 2 * ax3 + ax4)
    nvy = vy + w * (ay1 + 2 * ay2 + 2 * ay3 + ay4)
    nvz = vz + w * (az1 + 2 * az2 + 2 * az3 + az4)
    return npx, npy, npz, nvx, nvy, nvz


def _plane_range(theta_rad: float, v: float, g: float, k: float, dh: float,
                 dt: float = _SOLVER_DT) -> tuple[float, float]:
    """(range, tof) of the final descending crossing of height dh, else (-inf, nan).

    Vacuum uses the closed form; drag integrates RK4 in the launch plane,
    which is exactly the 3-D dynamics without the redundant horizontal
    component.
    """
    if k == 0.0:
        vz0 = v * math.sin(theta_rad)
        disc = vz0 * vz0 - 2.0 * g * dh
        if disc < 0:
            return (-math.inf, math.nan)
        t_down = (vz0 + math.sqrt(disc)) / g
        if t_down < 0:
            return (-math.inf, math.nan)
        return (v * math.cos(theta_rad) * t_down, t_down)

    x = 0.0
    z = 0.0
    vx = v * math.cos(theta_rad)
    vz = v * math.sin(theta_rad)
    t = 0.0
    h = 0.5 * dt
    w = dt / 6.0
    while t < FLIGHT_TIME_CAP_S:
        s1 = k * math.sqrt(vx * vx + vz * vz)
        ax1, az1 = -s1 * vx, -g - s1 * vz
        bx, bz = vx + h * ax1, vz + h * az1
        s2 = k * math.sqrt(bx * bx + bz * bz)
        ax2, az2 = -s2 * bx, -g - s2 * bz
        cx, cz = vx + h * ax2, vz + h * az2
        s3 = k * math.sqrt(cx * cx + cz * cz)
        ax3, az3 = -s3 * cx, -g - s3 * cz
        ex, ez = vx + dt * ax3, vz + dt * az3
        s4 = k * math.sqrt(ex * ex + ez * ez)
        ax4, az4 = -s4 * ex, -g - s4 * ez
        nx = x + w * (vx + 2 * bx + 2 * cx + ex)
        nz = z + w * (vz + 2 * bz + 2 * cz + ez)
        nvx = vx + w * (ax1 + 2 * ax2 + 2 * ax3 + ax4)
        nvz = vz + w * (az1 + 2 * az2 + 2 * az3 + az4)

        if z > dh >= nz or (z == dh and nz < z and t > 0):
            frac = (z - dh) / (z - nz)
            return (x + (nx - x) * frac, t + frac * dt)
        if nz < dh and nvz < 0:
            # Fell past the plane without a bracketed crossing (start below).
            return (-math.inf, math.nan)
        x, z, vx, vz = nx, nz, nvx, nvz
        t += dt
    return (-math.inf, math.nan)


def max_range(params: JetParameters, dh: float = 0.0) -> tuple[float, float]:
    """(max horizontal range to a plane dh above the nozzle, argmax pitch deg)."""
    v, g, k = params.exit_speed, params.gravity, params.drag_coeff
    if k == 0.0:
        if v * v < 2.0 * g * dh:
            return (0.0, PITCH_MAX_DEG)
        d = (v / g) * math.sqrt(v * v - 2.0 * g * dh)
        # Optimal vacuum pitch: tan(theta) = v^2 / (g * d_max).
        theta = math.degrees(math.atan2(v * v, g * d)) if d > 0 else PITCH_MAX_DEG
        return (d, theta)

    lo, hi = math.radians(PITCH_MIN_DEG), math.radians(PITCH_MAX_DEG)
    best_t, best_r = _coarse_best(v, g, k, dh, lo, hi)
    if best_r == -math.inf:
        return (0.0, PITCH_MAX_DEG)
    a = max(lo, best_t - 0.14)
    b = min(hi, best_t + 0.14)
    theta, r = _golden_max(lambda th: _plane_range(th, v, g, k, dh)[0], a, b)
    return (r, math.degrees(theta))


def _coarse_best(v, g, k, dh, lo, hi, n=15):
    best_t, best_r = lo, -math.inf
    for i in range(n):
        th = lo + (hi - lo) * i / (n - 1)
        r = _plane_range(th, v, g, k, dh)[0]
        if r > best_r:
            best_t, best_r = th, r
    return best_t, best_r


def _golden_max(f, a, b, tol=2e-3):
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc > fd else (d, fd)


def solve_angles(
    origin: EnuPoint,
    target: EnuPoint,
    params: JetParameters,
    arc: str = "low",
) -> JetSolution:
    """Monitor orientation whose jet lands on the target.

    Yaw is the compass bearing to the target. Pitch comes from the vacuum
    closed form when drag is zero, otherwise from bracketed bisection on the
    landing-range function against the target's altitude plane.
    """
    if arc not in ("low", "high"):
        raise ValueError("arc must be 'low' or 'high'")
    d = origin.horizontal_distance_to(target)
    if d <= 0.5:
        raise ValueError(f"horizontal distance {d:.2f} m too small to aim")
    dh = target.u - origin.u
    yaw = bearing_deg(origin, target)
    v, g, k = params.exit_speed, params.gravity, params.drag_coeff

    if k == 0.0:
        disc = v**4 - g * (g * d * d + 2.0 * dh * v * v)
        if disc < 0 and disc > -1e-9 * v**4:
            disc = 0.0  # target numerically at max range
        if disc < 0:
            raise Unreachable(f"target {d:.1f} m / {dh:+.1f} m beyond vacuum reach")
        root = math.sqrt(disc)
        num = v * v - root if arc == "low" else v * v + root
        pitch = math.degrees(math.atan2(num, g * d))
    else:
        pitch = _solve_drag_pitch(v, g, k, d, dh, arc)

    if not PITCH_MIN_DEG <= pitch <= PITCH_MAX_DEG:
        raise Unreachable(f"required pitch {pitch:.2f} deg outside mechanical range")

    rng, tof = _plane_range(math.radians(pitch), v, g, k, dh, dt=0.02)
    yaw_r = math.radians(yaw)
    landing = EnuPoint(
        origin.e + rng * math.sin(yaw_r),
        origin.n + rng * math.cos(yaw_r),
        target.u,
    )
    return JetSolution(yaw=yaw, pitch=pitch, arc=arc, time_of_flight=tof, landing=landing)


def _solve_drag_pitch(v, g, k, d, dh, arc, tol_rad=1e-5):
    lo, hi = math.radians(PITCH_MIN_DEG), math.radians(PITCH_MAX_DEG)

    def rng(th):
        return _plane_range(th, v, g, k, dh)[0]

    best_t, best_r = _coarse_best(v, g, k, dh, lo, hi)
    if best_r == -math.inf:
        raise Unreachable("target plane above jet apex for all pitches")
    theta_star, r_max = _golden_max(rng, max(lo, best_t - 0.14), min(hi, best_t + 0.14))
    if r_max < d:
        raise Unreachable(f"max range {r_max:.2f} m below target distance {d:.2f} m")

    if arc == "low":
        # Lower bracket endpoint: the mechanical minimum, or for targets
        # above the nozzle the pitch where the apex first reaches the plane.
        a = lo
        if rng(a) == -math.inf:
            bad, good = a, theta_star
            while good - bad > 1e-4:
                m = 0.5 * (bad + good)
                if rng(m) == -math.inf:
                    bad = m
                else:
                    good = m
            a = good
        if rng(a) > d:
            raise Unreachable("target inside minimum low-arc range")
        b = theta_star
        increasing = True
    else:
        a, b = theta_star, hi
        if rng(b) > d:
            raise Unreachable("target inside minimum high-arc range")
        increasing = False

    while b - a > tol_rad:
        m = 0.5 * (a + b)
        r = rng(m)
        if (r < d) == increasing:
            a = m
        else:
            b = m
    return math.degrees(0.5 * (a + b))


def is_reachable(origin: EnuPoint, target: EnuPoint, params: JetParameters) -> Reachability:
    """Whether a landing solution exists, plus the range margin in meters."""
    d = origin.horizontal_distance_to(target)
    dh = target.u - origin.u
    r_max, _ = max_range(params, dh)
    margin = r_max - d
    return Reachability(reachable=margin >= 0.0 and d > 0.5, margin_m=margin)


def deviation_from_angle_error(
    range_m: float,
    yaw_err_deg: float,
    pitch_err_deg: float,
    params: JetParameters,
    arc: str = "low",
) -> float:
    """Landing deviation produced by actuator angle errors at a given range.

    Lateral component is range * tan(yaw error); the down-range component is
    evaluated through the forward model around the solved pitch.
    """
    if range_m <= 0:
        raise ValueError("range must be positive")
    origin = EnuPoint(0, 0, 0)
    sol = solve_angles(origin, EnuPoint(0, range_m, 0), params, arc=arc)
    lateral = range_m * math.tan(math.radians(abs(yaw_err_deg)))
    down = 0.0
    if pitch_err_deg != 0.0:
        v, g, k = params.exit_speed, params.gravity, params.drag_coeff
        perturbed = math.radians(sol.pitch + pitch_err_deg)
        r2, _ = _plane_range(perturbed, v, g, k, 0.0, dt=0.01)
        if r2 == -math.inf:
            r2 = 0.0
        down = abs(r2 - range_m)
    return math.hypot(lateral, down)
