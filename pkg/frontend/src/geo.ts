// Map-local flat-earth conversion; the map anchors at the funnel center.

import { GeoPoint } from "./protocol.js";

const M_PER_DEG = 111319.4908;

export interface LocalPoint {
  e: number;
  n: number;
  u: number;
}

export function geoToLocal(p: GeoPoint, origin: GeoPoint): LocalPoint {
  const e = (p.lon - origin.lon) * Math.cos(origin.lat * Math.PI / 180) * M_PER_DEG;
  const n = (p.lat - origin.lat) * M_PER_DEG;
  return { e, n, u: (p.alt ?? 0) - (origin.alt ?? 0) };
}
