"""Heat-source detection and localization from thermal keyframes.

Two localization paths are implemented: midpoint triangulation between the
two most recent keyframes, and single-frame back-projection through depth
rescaled by the GNSS-measured baseline. The GCS uses the rescaled-depth path
as primary and cross-checks against triangulation. A small track store fuses
candidates over time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import DegenerateBaseline, MissingDepth
from .geo import EnuPoint, Pose
from .worldsim import CameraFrame, ScaledDepthOracle, ThermalImage

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

MIN_DETECTION_AREA_PX = 4
ASSOCIATION_GATE_M = 3.0
TRACK_EMA_ALPHA = 0.3
TRACK_RETIRE_S = 60.0
MAX_RAY_SKEW_GAP_M = 2.0
MIN_RAY_ANGLE_DEG = 0.2


@dataclass(frozen=True)
class HeatDetection:
    box: Tuple[int, int, int, int]      # u_min, v_min, u_max, v_max, inclusive
    peak_temp: float
    centroid: Tuple[float, float]       # (u, v) subpixel
    area: int                           # component pixel count


@dataclass(frozen=True)
class Keyframe:
    image: ThermalImage
    gnss_pose: Pose
    detections: List[HeatDetection]
    id: int


@dataclass(frozen=True)
class LocalizedFire:
    id: int
    position: EnuPoint
    covariance_proxy: float             # meters (ray gap or depth sigma)
    observations: int
    last_seen: float


@dataclass(frozen=True)
class JetObservation:
    mask: np.ndarray                    # bool, image-shaped
    landing_px: Tuple[int, int]
    landing_enu: Optional[EnuPoint]
    confidence: float


# --- detection -----------------------------------------------------------


def detect_heat(
    img: ThermalImage,
    threshold: float,
    min_area: int = MIN_DETECTION_AREA_PX,
) -> List[HeatDetection]:
    """Threshold, 4-connected components, box merge to fixpoint.

    Detections are ordered by (v_min, u_min) so output is deterministic.
    """
    binary = img.temps >= threshold
    if not binary.any():
        return []
    labels, count = ndimage.label(binary, structure=FOUR_CONNECTED)

    comps = []
    for lab, (sl_v, sl_u) in enumerate(ndimage.find_objects(labels), start=1):
        region = labels[sl_v, sl_u]
        mask = region == lab
        temps = img.temps[sl_v, sl_u]
        w = np.where(mask, temps, 0.0)
        total = float(w.sum())
        vs, us = np.nonzero(mask)
        comps.append({
            "box": (sl_u.start + int(us.min()), sl_v.start + int(vs.min()),
                    sl_u.start + int(us.max()), sl_v.start + int(vs.max())),
            "area": int(mask.sum()),
            "peak": float(temps[mask].max()),
            "w": total,
            "wu": float((w * (sl_u.start + np.arange(mask.shape[1]))[None, :]).sum()),
            "wv": float((w * (sl_v.start + np.arange(mask.shape[0]))[:, None]).sum()),
        })

    comps = _merge_overlapping(comps)
    out = []
    for c in comps:
        if c["area"] < min_area:
            continue
        out.append(HeatDetection(
            box=c["box"],
            peak_temp=c["peak"],
            centroid=(c["wu"] / c["w"], c["wv"] / c["w"]),
            area=c["area"],
        ))
    out.sort(key=lambda d: (d.box[1], d.box[0]))
    return out


def boxes_intersect(a, b) -> bool:
    return not (a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1])


def merge_boxes(boxes: Sequence[Tuple[int, int, int, int]]):
    """Union intersecting boxes until a fixpoint; idempotent."""
    comps = [{"box": tuple(b), "area": 0, "peak": 0.0, "w": 1.0, "wu": 0.0, "wv": 0.0}
             for b in boxes]
    return [c["box"] for c in _merge_overlapping(comps)]


def _merge_overlapping(comps):
    changed = True
    while changed:
        changed = False
        for i in range(len(comps)):
            for j in range(i + 1, len(comps)):
                if boxes_intersect(comps[i]["box"], comps[j]["box"]):
                    a, b = comps[i], comps[j]
                    merged = {
                        "box": (min(a["box"][0], b["box"][0]),
                                min(a["box"][1], b["box"][1]),
                                max(a["box"][2], b["box"][2]),
                                max(a["box"][3], b["box"][3])),
                        "area": a["area"] + b["area"],
                        "peak": max(a["peak"], b["peak"]),
                        "w": a["w"] + b["w"],
                        "wu": a["wu"] + b["wu"],
                        "wv": a["wv"] + b["wv"],
                    }
                    comps = [c for k, c in enumerate(comps) if k not in (i, j)]
                    comps.append(merged)
                    changed = True
                    break
            if changed:
                break
    return comps


# --- keyframe gating -----------------------------------------------------


def keyframe_gate(last_kept: Optional[Pose], current: Pose, d_key: float = 5.0) -> bool:
    """Keep a frame once the UAV traveled d_key meters since the last one."""
    if last_kept is None:
        return True
    return current.position.distance_to(last_kept.position) >= d_key


# --- two-view triangulation ----------------------------------------------


def triangulate_pair(
    kf_a: Keyframe,
    kf_b: Keyframe,
    max_gap: float = MAX_RAY_SKEW_GAP_M,
    min_angle_deg: float = MIN_RAY_ANGLE_DEG,
) -> List[LocalizedFire]:
    """Midpoint-of-common-perpendicular triangulation of associated detections.

    Detections are associated across the two frames by minimal inter-ray
    angle; pairs whose rays pass farther than ``max_gap`` apart are dropped.
    """
    pa = kf_a.gnss_pose.position
    pb = kf_b.gnss_pose.position
    if pa.distance_to(pb) < 1.0:
        raise DegenerateBaseline(f"keyframe baseline {pa.distance_to(pb):.2f} m")
    if not kf_a.detections or not kf_b.detections:
        return []

    rays_a = _detection_rays(kf_a)
    rays_b = _detection_rays(kf_b)

    pairs = []
    for i, da in enumerate(rays_a):
        for j, db in enumerate(rays_b):
            dot = max(-1.0, min(1.0, da.e * db.e + da.n * db.n + da.u * db.u))
            pairs.append((math.acos(dot), i, j))
    pairs.sort(key=lambda t: (t[0], t[1], t[2]))

    used_a, used_b = set(), set()
    stamp = max(kf_a.image.stamp, kf_b.image.stamp)
    out: List[LocalizedFire] = []
    for angle, i, j in pairs:
        if i in used_a or j in used_b:
            continue
        if math.degrees(angle) < min_angle_deg:
            raise DegenerateBaseline(
                f"rays {math.degrees(angle):.3f} deg apart are near-parallel"
            )
        mid, gap, t1, t2 = _closest_point_midpoint(pa, rays_a[i], pb, rays_b[j])
        if t1 <= 0 or t2 <= 0 or gap > max_gap:
            # Rejected pairing leaves both detections available; a ray to a
            # different fire can subtend a smaller angle than the true
            # parallax, and the gap test is what weeds those out.
            continue
        used_a.add(i)
        used_b.add(j)
        out.append(LocalizedFire(
            id=-1, position=mid, covariance_proxy=gap, observations=1,
            last_seen=stamp,
        ))
    return out


def _detection_rays(kf: Keyframe) -> List[EnuPoint]:
    frame = CameraFrame(kf.gnss_pose)
    return [
        frame.pixel_ray(d.centroid[0], d.centroid[1], kf.image.intrinsics)
        for d in kf.detections
    ]


def _closest_point_midpoint(p1: EnuPoint, d1: EnuPoint, p2: EnuPoint, d2: EnuPoint):
    b = d1.e * d2.e + d1.n * d2.n + d1.u * d2.u
    w0 = p1 - p2
    d = d1.e * w0.e + d1.n * w0.n + d1.u * w0.u
    e = d2.e * w0.e + d2.n * w0.n + d2.u * w0.u
    den = 1.0 - b * b
    if den < 1e-12:
        raise DegenerateBaseline("rays numerically parallel")
    t1 = (b * e - d) / den
    t2 = (e - b * d) / den
    q1 = p1 + d1.scaled(t1)
    q2 = p2 + d2.scaled(t2)
    gap = q1.distance_to(q2)
    mid = EnuPoint((q1.e + q2.e) / 2, (q1.n + q2.n) / 2, (q1.u + q2.u) / 2)
    return mid, gap, t1, t2


# --- rescaled-depth localization ------------------------------------------


def localize_by_rescaled_depth(
    kf: Keyframe,
    depth: ScaledDepthOracle,
    reported_baseline: float,
    gnss_baseline: float,
) -> List[LocalizedFire]:
    """Back-project detections through depth fixed to the GNSS baseline scale."""
    if reported_baseline <= 0:
        raise ValueError("reported baseline must be positive")
    scale = gnss_baseline / reported_baseline
    frame = CameraFrame(kf.gnss_pose)
    out: List[LocalizedFire] = []
    for det in kf.detections:
        u, v = det.centroid
        d_scaled = depth.depth_at(u, v)
        if not math.isfinite(d_scaled):
            raise MissingDepth(f"no depth under detection centroid ({u:.1f}, {v:.1f})")
        ray = frame.pixel_ray(u, v, kf.image.intrinsics)
        metric = scale * d_scaled
        pos = kf.gnss_pose.position + ray.scaled(metric)
        out.append(LocalizedFire(
            id=-1, position=pos,
            covariance_proxy=metric * depth.noise_sigma,
            observations=1, last_seen=kf.image.stamp,
        ))
    return out


# --- track fusion ---------------------------------------------------------


def fuse(
    existing: Sequence[LocalizedFire],
    candidates: Sequence[LocalizedFire],
    now_s: float,
    gate: float = ASSOCIATION_GATE_M,
    alpha: float = TRACK_EMA_ALPHA,
    retire_s: float = TRACK_RETIRE_S,
) -> List[LocalizedFire]:
    """Nearest-neighbor association with EMA position updates.

    Unmatched candidates open new tracks; tracks unseen for ``retire_s`` are
    dropped. Track ids are stable and never reused within a run.
    """
    tracks = list(existing)
    next_id = max((t.id for t in tracks), default=-1) + 1
    for cand in candidates:
        best_k, best_d = None, gate
        for k, tr in enumerate(tracks):
            d = tr.position.distance_to(cand.position)
            if d <= best_d:
                best_k, best_d = k, d
        if best_k is None:
            tracks.append(replace(cand, id=next_id, observations=1, last_seen=now_s))
            next_id += 1
        else:
            tr = tracks[best_k]
            pos = EnuPoint(
                (1 - alpha) * tr.position.e + alpha * cand.position.e,
                (1 - alpha) * tr.position.n + alpha * cand.position.n,
                (1 - alpha) * tr.position.u + alpha * cand.position.u,
            )
            cov = (1 - alpha) * tr.covariance_proxy + alpha * cand.covariance_proxy
            tracks[best_k] = LocalizedFire(
                id=tr.id, position=pos, covariance_proxy=cov,
                observations=tr.observations + 1, last_seen=now_s,
            )
    return [t for t in tracks if now_s - t.last_seen <= retire_s]


# --- water jet segmentation ------------------------------------------------


def detect_jet(
    img: ThermalImage,
    predicted_polyline_px: Sequence[Tuple[float, float]],
    water_band: Tuple[float, float],
    depth: Optional[ScaledDepthOracle] = None,
    corridor_radius_px: int = 10,
    min_component_px: int = 20,
) -> Optional[JetObservation]:
    """Segment the jet inside a corridor around its predicted image track.

    Water-band thresholding, erosion r=1 then dilation r=2 (square elements),
    largest 4-connected component. The landing pixel is the component pixel
    farthest along the predicted polyline.
    """
    if len(predicted_polyline_px) < 2:
        return None
    corridor = _corridor_mask(img.temps.shape, predicted_polyline_px,
                              corridor_radius_px)
    lo, hi = water_band
    band = (img.temps >= lo) & (img.temps <= hi) & corridor
    if not band.any():
        return None
    cleaned = ndimage.binary_erosion(band, structure=np.ones((3, 3), dtype=bool))
    cleaned = ndimage.binary_dilation(cleaned, structure=np.ones((5, 5), dtype=bool))
    cleaned &= corridor
    if not cleaned.any():
        return None
    labels, count = ndimage.label(cleaned, structure=FOUR_CONNECTED)
    sizes = ndimage.sum_labels(cleaned, labels, index=np.arange(1, count + 1))
    best = int(np.argmax(sizes)) + 1
    if sizes[best - 1] < min_component_px:
        return None
    mask = labels == best

    vs, us = np.nonzero(mask)
    params = _arc_length_params(us, vs, predicted_polyline_px)
    k = int(np.argmax(params))
    landing_px = (int(us[k]), int(vs[k]))

    landing_enu = None
    if depth is not None:
        d = depth.true_depth_at(landing_px[0], landing_px[1])
        if math.isfinite(d):
            ray = depth.pixel_ray(landing_px[0], landing_px[1])
            landing_enu = depth.camera_pose.position + ray.scaled(d)

    confidence = min(1.0, float(sizes[best - 1]) / (10.0 * min_component_px))
    return JetObservation(mask=mask, landing_px=landing_px,
                          landing_enu=landing_enu, confidence=confidence)


def _corridor_mask(shape, polyline, radius):
    mask = np.zeros(shape, dtype=bool)
    h, w = shape
    for (u0, v0), (u1, v1) in zip(polyline, polyline[1:]):
        length = math.hypot(u1 - u0, v1 - v0)
        steps = max(1, int(length))
        for i in range(steps + 1):
            t = i / steps
            u = int(round(u0 + (u1 - u0) * t))
            v = int(round(v0 + (v1 - v0) * t))
            if 0 <= u < w and 0 <= v < h:
                mask[v, u] = True
    if not mask.any():
        return mask
    r = int(radius)
    yy, xx = np.ogrid[-r:r + 1, -r:r + 1]
    disk = (xx * xx + yy * yy) <= r * r
    return ndimage.binary_dilation(mask, structure=disk)


def _arc_length_params(us, vs, polyline):
    """Arc-length position of each pixel's projection onto the polyline."""
    pts = np.array(polyline, dtype=float)
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cumulative = np.concatenate([[0.0], np.cumsum(seg_len)])
    px = np.stack([us, vs], axis=1).astype(float)

    best_s = np.zeros(len(px))
    best_d = np.full(len(px), np.inf)
    for i in range(len(seg)):
        a = pts[i]
        d = seg[i]
        ll = seg_len[i] ** 2
        if ll < 1e-12:
            continue
        t = np.clip(((px - a) @ d) / ll, 0.0, 1.0)
        proj = a + t[:, None] * d
        dist = np.hypot(px[:, 0] - proj[:, 0], px[:, 1] - proj[:, 1])
        better = dist < best_d
        best_d[better] = dist[better]
        best_s[better] = cumulative[i] + t[better] * seg_len[i]
    return best_s
