// Console-side mission snapshot: a pure reducer over inbound messages.
// The console holds no mission truth of its own; closing and reopening it
// rebuilds the same panels from the live stream.

import { GeoPoint, WireMessage } from "./protocol.js";

export const STALE_AFTER_MS = 3000;

export interface Track {
  id: number;
  geo: GeoPoint;
  covariance_m: number;
  observations: number;
  last_seen: number;
}

export interface ThermalFrame {
  width: number;
  height: number;
  stride: number;
  t_min_c: number;
  t_max_c: number;
  data_b64: string;
  boxes: number[][];
}

export interface FunnelParams {
  center_geo: GeoPoint;
  cyl_radius_m: number;
  cone_slope: number;
  floor_alt_m: number;
  ceiling_alt_m: number;
  horizon_m: number;
}

export interface Rejection {
  command: string;
  reason: string;
  at: number;
}

export class ConsoleStore {
  connected = false;
  missionState = "unknown";
  simTime = 0;
  uavGeo: GeoPoint | null = null;
  gimbal: { yaw_deg: number; pitch_deg: number } | null = null;
  monitor: { pan_deg: number; tilt_deg: number; mode: string; status: string;
             gnss: GeoPoint } | null = null;
  tracks: Track[] = [];
  funnel: FunnelParams | null = null;
  jetLanding: GeoPoint | null = null;
  jetConfidence = 0;
  thermal: ThermalFrame | null = null;
  rejections: Rejection[] = [];
  private lastRxWall = -Infinity;

  apply(msg: WireMessage, wallNow: number): void {
    this.lastRxWall = wallNow;
    this.simTime = Math.max(this.simTime, msg.stamp);
    const p = msg.payload as Record<string, any>;
    switch (msg.type) {
      case "telemetry.uav":
        this.uavGeo = p.pose_geo ?? this.uavGeo;
        this.gimbal = p.gimbal ?? this.gimbal;
        if (typeof p.state === "string") this.missionState = p.state;
        break;
      case "telemetry.wmc":
        this.monitor = {
          pan_deg: p.pan_deg, tilt_deg: p.tilt_deg,
          mode: p.mode, status: p.status, gnss: p.gnss,
        };
        break;
      case "detection.update":
        if (Array.isArray(p.tracks)) this.tracks = p.tracks as Track[];
        break;
      case "funnel.update":
        this.funnel = p as unknown as FunnelParams;
        break;
      case "jet.update":
        this.jetLanding = (p.landing_geo as GeoPoint) ?? null;
        this.jetConfidence = typeof p.confidence === "number" ? p.confidence : 0;
        break;
      case "thermal.frame":
        this.thermal = p as unknown as ThermalFrame;
        break;
      case "command.rejected":
        this.rejections.push({
          command: String(p.command), reason: String(p.reason), at: msg.stamp,
        });
        if (this.rejections.length > 20) this.rejections.shift();
        break;
      case "heartbeat":
        break;
      default:
        // Unknown types are ignored; the protocol may be newer than us.
        break;
    }
  }

  setConnected(up: boolean): void {
    this.connected = up;
  }

  /** Panels must show a stale badge when data is older than 3 s. */
  isStale(wallNow: number): boolean {
    return !this.connected || wallNow - this.lastRxWall > STALE_AFTER_MS;
  }

  /** Target selection is only meaningful before/while alternating. */
  canSelect(): boolean {
    return this.missionState === "AwaitSelection"
      || this.missionState === "Alternating";
  }

  lastRejection(): Rejection | null {
    return this.rejections.length
      ? this.rejections[this.rejections.length - 1] : null;
  }
}
