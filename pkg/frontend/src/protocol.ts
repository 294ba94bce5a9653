// Wire protocol frames shared with the ground control station.
// One JSON object per frame; seq is monotonic per sender.

export const PROTOCOL_VERSION = 1;

export interface WireMessage {
  v: number;
  type: string;
  seq: number;
  stamp: number; // sim time, seconds
  payload: Record<string, unknown>;
}

export interface GeoPoint {
  lat: number;
  lon: number;
  alt: number;
}

export class MalformedFrame extends Error {}

export class Outbox {
  private seq = 0;

  make(type: string, payload: Record<string, unknown>, stamp: number): WireMessage {
    this.seq += 1;
    return { v: PROTOCOL_VERSION, type, seq: this.seq, stamp, payload };
  }
}

export function encodeFrame(msg: WireMessage): string {
  return JSON.stringify({
    v: msg.v,
    type: msg.type,
    seq: msg.seq,
    stamp: Math.round(msg.stamp * 1000) / 1000,
    payload: msg.payload,
  });
}

export function decodeFrame(raw: string): WireMessage {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch (err) {
    throw new MalformedFrame(`bad json: ${err}`);
  }
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    throw new MalformedFrame("frame is not an object");
  }
  const rec = obj as Record<string, unknown>;
  const { type, seq, stamp } = rec;
  if (typeof type !== "string" || typeof seq !== "number" || typeof stamp !== "number") {
    throw new MalformedFrame("missing type/seq/stamp");
  }
  const payload = rec.payload ?? {};
  if (typeof payload !== "object" || payload === null || Array.isArray(payload)) {
    throw new MalformedFrame("payload must be an object");
  }
  return {
    v: typeof rec.v === "number" ? rec.v : PROTOCOL_VERSION,
    type,
    seq,
    stamp,
    payload: payload as Record<string, unknown>,
  };
}
