"""Obstacle-free flight funnel: cylinder plus inverse cone above a center point.

Construction sweeps every occupied grid column near the center. Columns are
treated as solid up to their top face, which is exact for terrain and
ground-extruded buildings and conservative otherwise:

* columns reaching the center altitude or higher bound the cylinder radius
  (their nearest horizontal distance minus the margin),
* lower columns close to the cylinder raise the funnel floor above their
  tops,
* everything farther out feeds the inverse-cone slope so the funnel only
  widens where it clears every rooftop.

The cone surface passes ``margin`` vertically above obstacle tops; measured
perpendicular to the slanted surface this guarantees a clearance of
``margin / sqrt(1 + slope^2)``, which is stored as ``safety_margin``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FunnelTooSmall, NoFeasiblePose
from .geo import EnuPoint, Pose, look_at
from .grid import OccupancyGrid

MIN_CYL_RADIUS = 2.0  # m; funnels tighter than this are unusable

DEFAULT_CEILING_AGL = 120.0  # m above the funnel center


@dataclass(frozen=True)
class FlightFunnel:
    center: EnuPoint
    cyl_radius: float
    cone_slope: float
    floor_alt: float
    ceiling_alt: float
    horizon: float
    safety_margin: float

    def __post_init__(self):
        if self.cyl_radius < MIN_CYL_RADIUS:
            raise FunnelTooSmall(f"cylinder radius {self.cyl_radius:.2f} m")
        if self.floor_alt >= self.ceiling_alt:
            raise FunnelTooSmall(
                f"floor {self.floor_alt:.2f} m above ceiling {self.ceiling_alt:.2f} m"
            )
        if self.cone_slope < 0:
            raise ValueError("cone_slope must be non-negative")
        if self.horizon < self.cyl_radius:
            raise ValueError("horizon smaller than cylinder radius")


@dataclass(frozen=True)
class ObservationPlan:
    left: Pose
    right: Pose
    baseline: float
    standoff: float
    target: EnuPoint


def compute_funnel(
    grid: OccupancyGrid,
    center: EnuPoint,
    margin: float,
    horizon: float,
    ceiling_alt: float | None = None,
) -> FlightFunnel:
    """Derive the funnel around ``center`` from the occupancy grid."""
    if margin < 0:
        raise ValueError("margin must be non-negative")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if grid.is_occupied(center):
        raise ValueError("funnel center is inside an obstacle or below terrain")
    if ceiling_alt is None:
        ceiling_alt = center.u + DEFAULT_CEILING_AGL

    tops = grid.column_top_height()  # (nx, ny)
    nx, ny = tops.shape
    cs = grid.cell_size

    # Nearest horizontal distance from center to each column footprint.
    e_lo = grid.origin.e + np.arange(nx) * cs
    n_lo = grid.origin.n + np.arange(ny) * cs
    de = np.maximum.reduce([e_lo - center.e, np.zeros(nx), center.e - (e_lo + cs)])
    dn = np.maximum.reduce([n_lo - center.n, np.zeros(ny), center.n - (n_lo + cs)])
    dist = np.hypot(de[:, None], dn[None, :])

    occupied = np.isfinite(tops)
    near = occupied & (dist <= horizon + margin)

    tall = near & (tops >= center.u)
    if tall.any():
        cyl_radius = min(float(dist[tall].min()), horizon) - margin
    else:
        cyl_radius = horizon - margin
    if cyl_radius < MIN_CYL_RADIUS:
        raise FunnelTooSmall(
            f"nearest obstacle leaves cylinder radius {cyl_radius:.2f} m"
        )

    low = near & (tops < center.u)
    under = low & (dist < cyl_radius + margin)
    floor_alt = center.u
    if under.any():
        floor_alt = max(floor_alt, float(tops[under].max()) + margin)

    beyond = near & (dist >= cyl_radius + margin)
    cone_slope = 0.0
    if beyond.any():
        slopes = (tops[beyond] + margin - center.u) / dist[beyond]
        cone_slope = max(0.0, float(slopes.max()))

    safety_margin = margin / math.sqrt(1.0 + cone_slope**2)

    return FlightFunnel(
        center=center,
        cyl_radius=cyl_radius,
        cone_slope=cone_slope,
        floor_alt=floor_alt,
        ceiling_alt=ceiling_alt,
        horizon=horizon,
        safety_margin=safety_margin,
    )


def contains(f: FlightFunnel, p: EnuPoint) -> bool:
    """Boundary-inclusive membership test."""
    if not f.floor_alt <= p.u <= f.ceiling_alt:
        return False
    hd = p.horizontal_distance_to(f.center)
    if hd > f.horizon:
        return False
    return hd <= f.cyl_radius or (p.u - f.center.u) >= f.cone_slope * hd


def clamp_into(f: FlightFunnel, p: EnuPoint) -> EnuPoint:
    """Nearest funnel point to ``p`` (exact for this rotationally symmetric shape)."""
    if contains(f, p):
        return p

    d0 = p.horizontal_distance_to(f.center)
    u0 = p.u
    if d0 > 1e-12:
        we = (p.e - f.center.e) / d0
        wn = (p.n - f.center.n) / d0
    else:
        we, wn = 1.0, 0.0

    best = _project_rect(d0, u0, 0.0, f.cyl_radius, f.floor_alt, f.ceiling_alt)
    cone = _project_cone_region(f, d0, u0)
    if cone is not None and _dist2(cone, (d0, u0)) < _dist2(best, (d0, u0)):
        best = cone

    d_best, u_best = best
    out = EnuPoint(f.center.e + we * d_best, f.center.n + wn * d_best, u_best)
    if contains(f, out):
        return out
    # Float-boundary repair: pull fractionally toward the funnel interior.
    d_in = max(0.0, d_best - 1e-9)
    u_in = min(max(u_best + 1e-9, f.floor_alt), f.ceiling_alt)
    out = EnuPoint(f.center.e + we * d_in, f.center.n + wn * d_in, u_in)
    if not contains(f, out):
        raise AssertionError("clamp_into failed to land inside the funnel")
    return out


def _dist2(a, b) -> float:
    return (a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2


def _project_rect(d0, u0, d_lo, d_hi, u_lo, u_hi):
    return (min(max(d0, d_lo), d_hi), min(max(u0, u_lo), u_hi))


def _project_cone_region(f: FlightFunnel, d0, u0):
    """Projection onto the cone-bounded trapezoid between cyl_radius and horizon."""
    s = f.cone_slope
    R, H = f.cyl_radius, f.horizon

    def lower(d):
        return max(f.floor_alt, f.center.u + s * d)

    if lower(R) > f.ceiling_alt:
        return None  # cone region empty
    if s > 0:
        d_top = min(H, (f.ceiling_alt - f.center.u) / s)
    else:
        d_top = H
    d_top = max(d_top, R)

    # Inside test.
    if R <= d0 <= d_top and lower(d0) <= u0 <= f.ceiling_alt:
        return (d0, u0)

    verts = [(R, lower(R))]
    if s > 0 and f.floor_alt > f.center.u + s * R:
        d_k = (f.floor_alt - f.center.u) / s
        if R < d_k < d_top:
            verts.append((d_k, f.floor_alt))
    verts.append((d_top, lower(d_top)))
    verts.append((d_top, f.ceiling_alt))
    verts.append((R, f.ceiling_alt))

    best = None
    for i in range(len(verts)):
        a = verts[i]
        b = verts[(i + 1) % len(verts)]
        cand = _project_segment((d0, u0), a, b)
        if best is None or _dist2(cand, (d0, u0)) < _dist2(best, (d0, u0)):
            best = cand
    return best


def _project_segment(p, a, b):
    ax, ay = a
    bx, by = b
    vx, vy = bx - ax, by - ay
    den = vx * vx + vy * vy
    if den < 1e-18:
        return a
    t = ((p[0] - ax) * vx + (p[1] - ay) * vy) / den
    t = min(max(t, 0.0), 1.0)
    return (ax + t * vx, ay + t * vy)


def plan_triangulation_poses(
    f: FlightFunnel,
    target: EnuPoint,
    view_dir: EnuPoint,
    standoff: float,
    baseline: float,
) -> ObservationPlan:
    """Two laterally offset poses on the view ray, gimbals locked on the target.

    The anchor starts ``standoff`` meters from the target along ``view_dir``
    and walks outward in 1 m steps until it enters the funnel.
    """
    if baseline <= 0:
        raise ValueError("baseline must be positive")
    norm = view_dir.norm()
    if abs(norm - 1.0) > 1e-6:
        raise ValueError("view_dir must be a unit vector")
    to_center = f.center - target
    if view_dir.e * to_center.e + view_dir.n * to_center.n + view_dir.u * to_center.u <= 0:
        raise ValueError("view_dir must point from the target toward the funnel")

    dist = standoff
    anchor = target + view_dir.scaled(dist)
    while not contains(f, anchor):
        dist += 1.0
        if dist > 10.0 * standoff:
            raise NoFeasiblePose("view ray never enters the funnel")
        anchor = target + view_dir.scaled(dist)

    lat_e = view_dir.n  # view_dir x up, z component dropped
    lat_n = -view_dir.e
    lat_norm = math.hypot(lat_e, lat_n)
    if lat_norm < 1e-9:
        raise ValueError("view direction is vertical; lateral offset undefined")
    lateral = EnuPoint(lat_e / lat_norm, lat_n / lat_norm, 0.0)

    left_pos = clamp_into(f, anchor + lateral.scaled(baseline / 2.0))
    right_pos = clamp_into(f, anchor + lateral.scaled(-baseline / 2.0))

    return ObservationPlan(
        left=look_at(left_pos, target),
        right=look_at(right_pos, target),
        baseline=baseline,
        standoff=dist,
        target=target,
    )


def plan_exploration_poses(
    f: FlightFunnel,
    search_alt: float,
    area_of_interest: EnuPoint,
) -> tuple[Pose, Pose]:
    """Two poses on the east-west cylinder diameter, looking at the search area."""
    if not f.floor_alt <= search_alt <= f.ceiling_alt:
        raise ValueError(f"search_alt {search_alt} outside funnel altitude band")
    offsets = (f.cyl_radius / 2.0, -f.cyl_radius / 2.0)
    poses = []
    for off in offsets:
        pos = EnuPoint(f.center.e + off, f.center.n, search_alt)
        look = look_at(pos, area_of_interest)
        poses.append(Pose(position=pos, yaw=look.yaw, pitch=look.pitch))
    return poses[0], poses[1]
