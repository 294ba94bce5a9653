// Reconnecting protocol client: one socket, 1 Hz heartbeats, exponential
// backoff from 1 s to 16 s. The WebSocket factory is injectable for tests.

import { Outbox, WireMessage, decodeFrame, encodeFrame } from "./protocol.js";
import { ConsoleStore } from "./state.js";

export interface SocketLike {
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  send(data: string): void;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

const BACKOFF_MIN_MS = 1000;
const BACKOFF_MAX_MS = 16000;
const HEARTBEAT_MS = 1000;

export class ConsoleClient {
  readonly outbox = new Outbox();
  backoffMs = BACKOFF_MIN_MS;
  private socket: SocketLike | null = null;
  private heartbeatTimer: ReturnType<typeof setInterval> | null = null;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private closed = false;
  onmessage: ((msg: WireMessage) => void) | null = null;

  constructor(
    private readonly url: string,
    readonly store: ConsoleStore,
    private readonly factory: SocketFactory,
    private readonly now: () => number = () => Date.now(),
  ) {}

  connect(): void {
    this.closed = false;
    const sock = this.factory(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this.backoffMs = BACKOFF_MIN_MS;
      this.store.setConnected(true);
      this.sendType("heartbeat", {});
      this.heartbeatTimer = setInterval(
        () => this.sendType("heartbeat", {}), HEARTBEAT_MS);
    };
    sock.onmessage = (ev) => {
      try {
        const msg = decodeFrame(ev.data);
        this.store.apply(msg, this.now());
        if (this.onmessage) this.onmessage(msg);
      } catch {
        // Malformed inbound frame: drop, keep the session.
      }
    };
    sock.onerror = () => { /* close follows */ };
    sock.onclose = () => this.handleClose();
  }

  private handleClose(): void {
    this.store.setConnected(false);
    if (this.heartbeatTimer !== null) clearInterval(this.heartbeatTimer);
    this.heartbeatTimer = null;
    this.socket = null;
    if (this.closed) return;
    this.reconnectTimer = setTimeout(() => this.connect(), this.backoffMs);
    this.backoffMs = Math.min(this.backoffMs * 2, BACKOFF_MAX_MS);
  }

  close(): void {
    this.closed = true;
    if (this.reconnectTimer !== null) clearTimeout(this.reconnectTimer);
    if (this.heartbeatTimer !== null) clearInterval(this.heartbeatTimer);
    this.heartbeatTimer = null;
    if (this.socket) this.socket.close();
  }

  get connected(): boolean {
    return this.store.connected;
  }

  sendType(type: string, payload: Record<string, unknown>): boolean {
    if (!this.socket) return false;
    const msg = this.outbox.make(type, payload, this.store.simTime);
    try {
      this.socket.send(encodeFrame(msg));
      return true;
    } catch {
      return false;
    }
  }

  // Operator actions; the UI reflects only GCS-confirmed state.
  selectTarget(trackId: number): boolean {
    return this.sendType("target.select", { track_id: trackId });
  }

  authorize(): boolean {
    return this.sendType("authorize", {});
  }

  takeoff(): boolean {
    return this.sendType("takeoff", {});
  }

  reset(): boolean {
    return this.sendType("reset", {});
  }

  setMode(mode: "manual" | "auto"): boolean {
    return this.sendType("mode.set", { mode });
  }

  setFunnel(centerGeo: Record<string, number>, marginM: number,
            ceilingM: number): boolean {
    return this.sendType("funnel.set", {
      center_geo: centerGeo, margin_m: marginM, ceiling_m: ceilingM,
    });
  }

  manualVelocity(panCmd: number, tiltCmd: number): boolean {
    return this.sendType("manual.velocity", { pan_cmd: panCmd, tilt_cmd: tiltCmd });
  }
}
