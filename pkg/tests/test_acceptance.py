"""Acceptance gate: every primary criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -s`` to see one PASS/FAIL line per
criterion.
"""

import hashlib
import math
import time

import numpy as np
import pytest

from firejet.ballistics import (
    JetParameters,
    deviation_from_angle_error,
    simulate_trajectory,
    solve_angles,
)
from firejet.errors import FunnelTooSmall
from firejet.funnel import compute_funnel, contains
from firejet.geo import EnuPoint, Pose, look_at, shortest_arc_deg
from firejet.grid import build_grid, raycast
from firejet.monitor import MonitorConfig, MonitorSim
from firejet.perception import detect_heat, fuse, localize_by_rescaled_depth
from firejet.runner import MissionRunner
from firejet.scenario import Scenario, write_reference_scenario
from firejet.terrain import ExtrudedBox, Heightmap
from firejet.worldsim import FireSource, World, WorldConfig, NoiseConfig

from mc_helpers import kf_with_target, mc_pair_errors
from test_ballistics import sample_reachable_shot
from test_monitor import make_monitor, target_at

ORIGIN = EnuPoint(0, 0, 0)


def _report(name: str, ok: bool, detail: str = ""):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------


def test_acceptance_inverse_ballistics_round_trip():
    """500 reachable targets, both drag regimes, landing within 0.02 m; <5 s."""
    rng = np.random.default_rng(90_210)
    shots = []
    while len(shots) < 500:
        shot = sample_reachable_shot(rng)
        if shot is not None:
            shots.append(shot)
    t0 = time.perf_counter()
    worst = 0.0
    arcs = {"low": 0, "high": 0}
    for params, target, arc in shots:
        sol = solve_angles(ORIGIN, target, params, arc=arc)
        verify = simulate_trajectory(ORIGIN, sol.yaw, sol.pitch, params,
                                     dt=0.01, ground=lambda e, n: target.u,
                                     record_path=False)
        worst = max(worst, verify.landing.distance_to(target))
        arcs[arc] += 1
    elapsed = time.perf_counter() - t0
    ok = worst < 0.02 and elapsed < 5.0 and min(arcs.values()) > 50
    _report("inverse-ballistics round trip",
            ok, f"worst miss {worst * 1000:.1f} mm over 500 targets "
                f"(low/high {arcs['low']}/{arcs['high']}), {elapsed:.2f} s")


def test_acceptance_vacuum_closed_forms():
    """v=20 at 45 deg: range 40.7747 m and ToF 2.8831 s within 1e-3 at dt=0.001."""
    v, g = 20.0, 9.81
    path = simulate_trajectory(ORIGIN, 0.0, 45.0, JetParameters(exit_speed=v),
                               dt=0.001)
    range_err = abs(path.landing.n - v * v / g)
    tof_err = abs(path.time_of_flight - 2 * v * math.sin(math.pi / 4) / g)
    ok = range_err < 1e-3 and tof_err < 1e-3
    _report("vacuum closed forms", ok,
            f"range err {range_err:.2e} m, tof err {tof_err:.2e} s")


def test_acceptance_deviation_table():
    """Reported worst-case yaw errors map to the reported deviations at
    ranges inside [40, 55] m (lateral = R tan(yaw_err))."""
    rows = []
    ok = True
    for err_deg, dev_m in ((0.64, 0.46), (1.139, 0.97), (1.315, 1.2)):
        implied_range = dev_m / math.tan(math.radians(err_deg))
        in_band = 40.0 <= implied_range <= 55.0
        params = JetParameters(exit_speed=math.sqrt(9.81 * implied_range))
        got = deviation_from_angle_error(implied_range, err_deg, 0.0, params)
        close = abs(got - dev_m) / dev_m < 0.15
        ok = ok and in_band and close
        rows.append(f"{err_deg:.3f}deg -> {implied_range:.1f} m -> {got:.3f} m")
    _report("deviation table vs reported worst cases", ok, "; ".join(rows))


def _random_box_scene(seed):
    rng = np.random.default_rng(seed)
    terrain = Heightmap.flat(-40, -40, 40, 40, 2.0, 0.0)
    boxes = []
    while len(boxes) < 4:
        e0 = rng.uniform(-36, 22)
        n0 = rng.uniform(-36, 22)
        box = ExtrudedBox(e0, n0, e0 + rng.uniform(3, 12), n0 + rng.uniform(3, 12),
                          float(rng.uniform(4, 18)))
        de = max(box.e_min, min(0.0, box.e_max))
        dn = max(box.n_min, min(0.0, box.n_max))
        if math.hypot(de, dn) < 8.0:
            continue
        boxes.append(box)
    return build_grid(terrain, boxes, cell_size=1.0), rng


def test_acceptance_funnel_safety_and_monotonicity():
    """50 random box scenes: funnel points clear obstacles by safety_margin;
    larger margins only shrink the funnel. <30 s."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(4242)
    scenes = 0
    seed = 0
    while scenes < 50:
        grid, _ = _random_box_scene(seed)
        seed += 1
        center = EnuPoint(0, 0, 2.0)
        try:
            f = compute_funnel(grid, center, margin=4.0, horizon=50.0)
            f_small = compute_funnel(grid, center, margin=2.0, horizon=50.0)
        except FunnelTooSmall:
            continue
        scenes += 1
        checked = 0
        while checked < 25:
            p = EnuPoint(rng.uniform(-50, 50), rng.uniform(-50, 50),
                         rng.uniform(f.floor_alt, f.floor_alt + 45))
            if not contains(f, p):
                continue
            checked += 1
            assert contains(f_small, p), "margin monotonicity violated"
            for _ in range(25):
                v = rng.normal(size=3)
                v /= np.linalg.norm(v)
                hit = raycast(grid, p, EnuPoint(*v), f.safety_margin - 1e-6)
                assert hit is None, f"obstacle within safety margin at {p}"
    elapsed = time.perf_counter() - t0
    ok = scenes == 50 and elapsed < 30.0
    _report("funnel safety + margin monotonicity", ok,
            f"{scenes} scenes, 25 points x 25 rays each, {elapsed:.1f} s")


def test_acceptance_triangulation_accuracy():
    """Noiseless < 1e-6 m; at sigma_h = 0.3 m / 5 m baseline / ~41 m range the
    median pair error lies in [0.3, 1.5] m; error shrinks with sigma."""
    noiseless = mc_pair_errors(0.0, 20, seed=11)
    med_default = float(np.median(mc_pair_errors(1.0, 500, seed=12,
                                                 yaw_noise=False)))
    ladder = [float(np.median(mc_pair_errors(s, 300, seed=13)))
              for s in (1.0, 1.0 / 3.0, 0.1, 0.0)]
    monotone = all(b < a for a, b in zip(ladder, ladder[1:]))
    ok = (noiseless.max() < 1e-6 and 0.3 <= med_default <= 1.5 and monotone)
    _report("triangulation accuracy", ok,
            f"noiseless max {noiseless.max():.2e} m, median {med_default:.3f} m "
            f"(band [0.3, 1.5]), ladder {['%.3f' % v for v in ladder]}")


def test_acceptance_controller():
    """Steady state within 0.1 deg + encoder quantum for 20 random setpoints
    per speed; dead-band single write; watchdog holds within one tick."""
    rng = np.random.default_rng(77)
    worst = 0.0
    for speed in (10.0, 15.0, 20.0):
        for _ in range(20):
            m = make_monitor(speed_pct=speed)
            m.pan = float(rng.uniform(0, 360))
            m.tilt = float(rng.uniform(-10, 80))
            target = target_at(float(rng.uniform(0, 360)),
                               float(rng.uniform(20, 38)),
                               alt=float(rng.uniform(-3, 3)))
            m.update_setpoint(target, now=0.0)
            slew_s = 180.0 / (12.0 * speed / 100.0) + 30.0
            for i in range(int(slew_s / m.dt)):
                now = i * m.dt
                m.note_message(now)
                m.tick(now)
            tol = m.config.stop_tolerance_deg + m.config.encoder_quantum
            err = max(abs(shortest_arc_deg(m.setpoint.yaw, m.encoder_pan())),
                      abs(m.setpoint.pitch - m.encoder_tilt()))
            worst = max(worst, err)
            assert err <= tol, f"steady-state {err:.3f} deg at speed {speed}"

    # Dead-band: a static target writes the setpoint exactly once.
    m = make_monitor()
    target = target_at(30.0, 30.0)
    writes = sum(m.update_setpoint(target, now=float(i)) for i in range(50))

    # Watchdog: motion freezes within one tick of the 2 s gap.
    w = make_monitor()
    w.update_setpoint(target_at(170.0, 30.0), now=0.0)
    w.note_message(0.0)
    freeze_t = None
    prev_pan = w.pan
    for i in range(1, 100):
        now = i * w.dt
        w.tick(now)
        if freeze_t is None and w.pan == prev_pan and now > 0.3:
            freeze_t = now
        if w.pan != prev_pan:
            freeze_t = None
        prev_pan = w.pan
    ok = writes == 1 and freeze_t is not None and freeze_t <= 2.0 + 2 * w.dt
    _report("controller steady state / dead-band / watchdog",
            ok and worst <= 0.16,
            f"worst steady-state {worst:.3f} deg, setpoint writes {writes}, "
            f"motion frozen at t={freeze_t} (gap timeout 2.0 s)")


def test_acceptance_detection_suite():
    """k in 1..5 fires: per-frame detection rate >= 95 percent at default
    noise, fused track count equals k with zero duplicates."""
    overall_expected = 0
    overall_detected = 0
    ok = True
    details = []
    for k in range(1, 6):
        n = 160
        occ = np.zeros((n, n, 40), dtype=bool)
        occ[:, :, 0] = True
        from firejet.grid import OccupancyGrid
        grid = OccupancyGrid(EnuPoint(-80, -80, -1), 1.0, occ)
        rng = np.random.default_rng(1000 + k)
        # Fires spread across the view (never collinear with the camera arc,
        # which would merge their splats into one ambiguous detection).
        fires = []
        for j in range(k):
            e = (j - (k - 1) / 2.0) * 10.0 + rng.uniform(-1.0, 1.0)
            fires.append(FireSource(
                position=EnuPoint(e, 42.0 + rng.uniform(-2.0, 2.0), 1.0),
                radius=2.0, temperature=600.0))
        world = World(grid, fires, Pose(EnuPoint(0, 0, 12)), seed=500 + k)
        center = EnuPoint(float(np.mean([f.position.e for f in fires])),
                          float(np.mean([f.position.n for f in fires])), 1.0)

        tracks = []
        prev_kf = None
        prev_pose = None
        # 10 poses with ~5 m chords: the GNSS-measured baseline error must
        # stay a small fraction of the baseline for depth rescaling.
        for i in range(10):
            ang = math.radians(-30 + 60 * i / 9)
            pos = EnuPoint(center.e + 42 * math.sin(ang),
                           center.n - 42 * math.cos(ang), 12.0)
            cam = look_at(pos, center)
            world.clock += 5.0
            img = world.render_thermal(cam)
            dets = detect_heat(img, 80.0)
            expected = sum(
                1 for f in fires
                if _projects_in_frame(world, cam, f)
            )
            matched = _count_matched(world, cam, fires, dets)
            overall_expected += expected
            overall_detected += min(matched, expected)

            gnss = world.sample_gnss(cam)
            kf = kf_like(img, gnss, dets, i)
            if prev_kf is not None:
                true_baseline = prev_pose.position.distance_to(cam.position)
                gnss_baseline = prev_kf.gnss_pose.position.distance_to(
                    gnss.position)
                if true_baseline >= 1.0 and gnss_baseline >= 1.0 and dets:
                    oracle = world.scaled_depth_oracle(cam)
                    cands = localize_by_rescaled_depth(
                        kf, oracle, oracle.reported_camera_distance(true_baseline),
                        gnss_baseline)
                    tracks = fuse(tracks, cands, world.clock)
            prev_kf, prev_pose = kf, cam

        dup = any(a.position.distance_to(b.position) <= 3.0
                  for i, a in enumerate(tracks) for b in tracks[i + 1:])
        k_ok = len(tracks) == k and not dup
        ok = ok and k_ok
        details.append(f"k={k}: tracks {len(tracks)}{'' if k_ok else ' MISMATCH'}")
    rate = overall_detected / overall_expected
    ok = ok and rate >= 0.95
    _report("detection suite", ok,
            f"per-frame detection rate {rate:.3f} (needs >= 0.95); "
            + "; ".join(details))


def _projects_in_frame(world, cam, fire):
    from firejet.worldsim import CameraFrame
    frame = CameraFrame(cam)
    proj = frame.project(fire.position, world.intrinsics)
    if proj is None:
        return False
    u, v, _ = proj
    if not (0 <= u < world.intrinsics.width and 0 <= v < world.intrinsics.height):
        return False
    return world.fire_visible(cam.position, fire)


def _count_matched(world, cam, fires, dets):
    from firejet.worldsim import CameraFrame
    frame = CameraFrame(cam)
    matched = 0
    for f in fires:
        proj = frame.project(f.position, world.intrinsics)
        if proj is None:
            continue
        u, v, _ = proj
        for d in dets:
            u0, v0, u1, v1 = d.box
            if u0 - 2 <= u <= u1 + 2 and v0 - 2 <= v <= v1 + 2:
                matched += 1
                break
    return matched


def kf_like(img, gnss, dets, kid):
    from firejet.perception import Keyframe
    return Keyframe(image=img, gnss_pose=gnss, detections=dets, id=kid)


def test_acceptance_end_to_end_headless(tmp_path):
    """Reference scenario: Finished with the fire out in <300 sim-seconds,
    byte-deterministic per seed, >= 10 keyframe alternations, no console."""
    scn_path = write_reference_scenario(tmp_path)

    def run(tag):
        log = tmp_path / f"{tag}.jsonl"
        runner = MissionRunner(Scenario.load(scn_path), log_path=log)
        metrics = runner.run_headless(max_sim_s=400)
        return metrics, hashlib.sha256(log.read_bytes()).hexdigest()

    m1, h1 = run("a")
    m2, h2 = run("b")
    ok = (m1.final_state == "Finished"
          and m1.time_to_extinguish_s < 300.0
          and m1.alternation_count >= 10
          and h1 == h2)
    _report("end-to-end headless reference", ok,
            f"state {m1.final_state}, extinguished at "
            f"{m1.time_to_extinguish_s:.1f} s, {m1.alternation_count} "
            f"alternations, deterministic={h1 == h2}")
