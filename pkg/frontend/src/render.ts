// Canvas painting for the three panels. Pure drawing; all state comes from
// the store snapshot.

import { geoToLocal } from "./geo.js";
import { GeoPoint } from "./protocol.js";
import { ConsoleStore, Track } from "./state.js";

export function drawThermal(canvas: HTMLCanvasElement, store: ConsoleStore): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.fillStyle = "#101418";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const frame = store.thermal;
  if (!frame) {
    ctx.fillStyle = "#667";
    ctx.fillText("no thermal frame yet", 12, 20);
    return;
  }
  const raw = atob(frame.data_b64);
  const img = ctx.createImageData(frame.width, frame.height);
  for (let i = 0; i < raw.length; i++) {
    const v = raw.charCodeAt(i);
    // Iron-ish palette: dark blue -> red -> yellow.
    img.data[i * 4] = v;
    img.data[i * 4 + 1] = v > 160 ? (v - 160) * 2.5 : 0;
    img.data[i * 4 + 2] = v < 64 ? 96 - v : 0;
    img.data[i * 4 + 3] = 255;
  }
  const off = new OffscreenCanvas(frame.width, frame.height);
  const offCtx = off.getContext("2d")!;
  offCtx.putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);

  // Detection boxes arrive in full-resolution pixel coordinates.
  const sx = canvas.width / (frame.width * frame.stride);
  const sy = canvas.height / (frame.height * frame.stride);
  ctx.strokeStyle = "#4cff4c";
  ctx.lineWidth = 1.5;
  for (const [u0, v0, u1, v1] of frame.boxes) {
    ctx.strokeRect(u0 * sx, v0 * sy, (u1 - u0 + 1) * sx, (v1 - v0 + 1) * sy);
  }
  ctx.fillStyle = "#9ab";
  ctx.fillText(`${frame.t_min_c.toFixed(1)}..${frame.t_max_c.toFixed(1)} degC`,
               8, canvas.height - 8);
}

export interface MapHit {
  track: Track;
  x: number;
  y: number;
  r: number;
}

export function drawMap(canvas: HTMLCanvasElement, store: ConsoleStore,
                        selectedId: number | null): MapHit[] {
  const ctx = canvas.getContext("2d");
  if (!ctx) return [];
  ctx.fillStyle = "#0c1014";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const funnel = store.funnel;
  if (!funnel) {
    ctx.fillStyle = "#667";
    ctx.fillText("funnel not set", 12, 20);
    return [];
  }
  const origin = funnel.center_geo;
  const scale = Math.min(canvas.width, canvas.height) / (2.2 * funnel.horizon_m);
  const toXY = (g: GeoPoint) => {
    const p = geoToLocal(g, origin);
    return {
      x: canvas.width / 2 + p.e * scale,
      y: canvas.height / 2 - p.n * scale,
      u: p.u,
    };
  };

  // Funnel: cylinder circle plus cone iso-altitude rings.
  ctx.strokeStyle = "#3b82f6";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ctx.arc(canvas.width / 2, canvas.height / 2, funnel.cyl_radius_m * scale,
          0, Math.PI * 2);
  ctx.stroke();
  ctx.setLineDash([4, 4]);
  ctx.strokeStyle = "#1d4ed8";
  for (const frac of [0.5, 1.0]) {
    const alt = funnel.floor_alt_m
      + frac * (funnel.ceiling_alt_m - funnel.floor_alt_m);
    if (funnel.cone_slope > 1e-6) {
      const r = Math.min((alt - funnel.floor_alt_m) / funnel.cone_slope,
                         funnel.horizon_m);
      if (r > funnel.cyl_radius_m) {
        ctx.beginPath();
        ctx.arc(canvas.width / 2, canvas.height / 2, r * scale, 0, Math.PI * 2);
        ctx.stroke();
      }
    }
  }
  ctx.setLineDash([]);

  // Jet prediction polyline end point.
  if (store.jetLanding) {
    const { x, y } = toXY(store.jetLanding);
    ctx.fillStyle = "#38bdf8";
    ctx.beginPath();
    ctx.arc(x, y, 5, 0, Math.PI * 2);
    ctx.fill();
    ctx.fillText("jet", x + 8, y);
  }

  // Monitor.
  if (store.monitor) {
    const { x, y } = toXY(store.monitor.gnss);
    ctx.fillStyle = "#f59e0b";
    ctx.fillRect(x - 5, y - 5, 10, 10);
    ctx.fillText(`monitor ${store.monitor.pan_deg.toFixed(1)} deg`, x + 8, y);
    if (store.jetLanding) {
      const l = toXY(store.jetLanding);
      ctx.strokeStyle = "#38bdf8";
      ctx.setLineDash([2, 4]);
      ctx.beginPath();
      ctx.moveTo(x, y);
      ctx.lineTo(l.x, l.y);
      ctx.stroke();
      ctx.setLineDash([]);
    }
  }

  // UAV with altitude readout.
  if (store.uavGeo) {
    const { x, y, u } = toXY(store.uavGeo);
    ctx.fillStyle = "#e5e7eb";
    ctx.beginPath();
    ctx.moveTo(x, y - 6);
    ctx.lineTo(x + 5, y + 5);
    ctx.lineTo(x - 5, y + 5);
    ctx.closePath();
    ctx.fill();
    ctx.fillText(`uav ${u.toFixed(0)} m`, x + 8, y - 6);
  }

  // Fire tracks, selectable.
  const hits: MapHit[] = [];
  for (const track of store.tracks) {
    const { x, y } = toXY(track.geo);
    const r = 7;
    ctx.beginPath();
    ctx.arc(x, y, r, 0, Math.PI * 2);
    ctx.fillStyle = track.id === selectedId ? "#ef4444" : "#f97316";
    ctx.fill();
    if (track.id === selectedId) {
      ctx.strokeStyle = "#fee2e2";
      ctx.lineWidth = 2;
      ctx.stroke();
    }
    ctx.fillStyle = "#fca5a5";
    ctx.fillText(`#${track.id} (${track.covariance_m.toFixed(1)} m)`, x + 10, y + 4);
    hits.push({ track, x, y, r: r + 4 });
  }
  return hits;
}
