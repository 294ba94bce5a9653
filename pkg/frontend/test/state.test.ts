import { describe, expect, it } from "vitest";

import { Outbox, WireMessage } from "../src/protocol";
import { ConsoleStore, STALE_AFTER_MS } from "../src/state";

const out = new Outbox();
const msg = (type: string, payload: Record<string, unknown>, stamp = 1.0) =>
  out.make(type, payload, stamp);

describe("console store", () => {
  it("tracks mission state from uav telemetry", () => {
    const store = new ConsoleStore();
    store.apply(msg("telemetry.uav", {
      pose_geo: { lat: 51, lon: 7, alt: 120 },
      gimbal: { yaw_deg: 10, pitch_deg: -20 },
      state: "Alternating",
    }), 1000);
    expect(store.missionState).toBe("Alternating");
    expect(store.uavGeo?.alt).toBe(120);
    expect(store.canSelect()).toBe(true);
  });

  it("renders two selectable markers from a detection update", () => {
    const store = new ConsoleStore();
    store.apply(msg("detection.update", {
      tracks: [
        { id: 0, geo: { lat: 51, lon: 7, alt: 0 }, covariance_m: 0.4,
          observations: 5, last_seen: 10 },
        { id: 1, geo: { lat: 51.0002, lon: 7, alt: 0 }, covariance_m: 0.7,
          observations: 2, last_seen: 11 },
      ],
    }), 1000);
    expect(store.tracks.length).toBe(2);
    expect(store.tracks.map((t) => t.id)).toEqual([0, 1]);
  });

  it("flags stale data after the 3 s budget", () => {
    const store = new ConsoleStore();
    store.setConnected(true);
    store.apply(msg("heartbeat", {}), 10_000);
    expect(store.isStale(10_000 + STALE_AFTER_MS - 1)).toBe(false);
    expect(store.isStale(10_000 + STALE_AFTER_MS + 1)).toBe(true);
  });

  it("is stale while disconnected regardless of age", () => {
    const store = new ConsoleStore();
    store.apply(msg("heartbeat", {}), 10_000);
    store.setConnected(false);
    expect(store.isStale(10_000)).toBe(true);
  });

  it("surfaces command rejections with reasons", () => {
    const store = new ConsoleStore();
    store.apply(msg("command.rejected", {
      command: "authorize", reason: "no selected target to authorize",
    }), 1000);
    expect(store.lastRejection()?.reason).toContain("no selected target");
  });

  it("selection is blocked outside AwaitSelection/Alternating", () => {
    const store = new ConsoleStore();
    for (const state of ["Configuring", "Takeoff", "Engaged", "Fault"]) {
      store.apply(msg("telemetry.uav", { state }), 0);
      expect(store.canSelect()).toBe(false);
    }
  });

  it("ignores unknown message types", () => {
    const store = new ConsoleStore();
    store.apply(msg("future.gadget", { x: 1 }), 0);
    expect(store.missionState).toBe("unknown");
  });

  it("rebuilds identical panels from the same stream (stateless)", () => {
    const stream: WireMessage[] = [
      msg("funnel.update", {
        center_geo: { lat: 51, lon: 7, alt: 2 }, cyl_radius_m: 40,
        cone_slope: 0.2, floor_alt_m: 2, ceiling_alt_m: 60, horizon_m: 60,
      }),
      msg("telemetry.uav", { state: "AwaitSelection",
                             pose_geo: { lat: 51.0001, lon: 7, alt: 25 } }),
      msg("detection.update", { tracks: [{ id: 0, geo: { lat: 51.0003, lon: 7, alt: 0 },
        covariance_m: 0.5, observations: 3, last_seen: 9 }] }),
    ];
    const a = new ConsoleStore();
    const b = new ConsoleStore();
    for (const m of stream) a.apply(m, 500);
    for (const m of stream) b.apply(m, 500);
    expect(JSON.stringify(a)).toBe(JSON.stringify(b));
  });
});
