// Console entry point: wires the socket client, store, panels and controls.

import { ConsoleClient } from "./client.js";
import { JoystickStreamer } from "./joystick.js";
import { drawMap, drawThermal, MapHit } from "./render.js";
import { ConsoleStore } from "./state.js";

import type { SocketLike } from "./client.js";

const store = new ConsoleStore();
const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
// The browser WebSocket satisfies SocketLike at runtime; handler parameter
// variance keeps tsc from proving it.
const client = new ConsoleClient(
  wsUrl, store, (url) => new WebSocket(url) as unknown as SocketLike);

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

const thermalCanvas = $<HTMLCanvasElement>("thermal");
const mapCanvas = $<HTMLCanvasElement>("map");
const stateEl = $<HTMLSpanElement>("mission-state");
const staleEl = $<HTMLSpanElement>("stale-badge");
const connEl = $<HTMLSpanElement>("conn-badge");
const rejectEl = $<HTMLDivElement>("rejection");
const monitorEl = $<HTMLSpanElement>("monitor-state");

let selectedId: number | null = null;
let mapHits: MapHit[] = [];

const joystick = new JoystickStreamer((pan, tilt) => {
  client.manualVelocity(pan, tilt);
});

// -- controls ----------------------------------------------------------

$<HTMLButtonElement>("btn-funnel").onclick = () => {
  fetch("/api/scenario").then((r) => r.json()).then((scn) => {
    client.setFunnel(scn.funnel_center_geo, scn.funnel_margin_m,
                     scn.funnel_ceiling_m);
  });
};
$<HTMLButtonElement>("btn-takeoff").onclick = () => client.takeoff();
$<HTMLButtonElement>("btn-authorize").onclick = () => client.authorize();
$<HTMLButtonElement>("btn-reset").onclick = () => {
  selectedId = null;
  client.reset();
};
$<HTMLButtonElement>("btn-manual").onclick = () => {
  client.setMode("manual");
  joystick.setEnabled(true);
};
$<HTMLButtonElement>("btn-auto").onclick = () => {
  joystick.setEnabled(false); // sends one final zero
  client.setMode("auto");
};

mapCanvas.onclick = (ev) => {
  if (!store.canSelect()) return;
  const rect = mapCanvas.getBoundingClientRect();
  const x = ev.clientX - rect.left;
  const y = ev.clientY - rect.top;
  for (const hit of mapHits) {
    if (Math.hypot(hit.x - x, hit.y - y) <= hit.r) {
      selectedId = hit.track.id;
      client.selectTarget(hit.track.id);
      return;
    }
  }
};

// -- virtual joystick pad ------------------------------------------------

const pad = $<HTMLDivElement>("joypad");
const knob = $<HTMLDivElement>("joyknob");
let dragging = false;

function padAxes(ev: PointerEvent): [number, number] {
  const rect = pad.getBoundingClientRect();
  const cx = rect.left + rect.width / 2;
  const cy = rect.top + rect.height / 2;
  const pan = (ev.clientX - cx) / (rect.width / 2);
  const tilt = -(ev.clientY - cy) / (rect.height / 2);
  return [Math.min(Math.max(pan, -1), 1), Math.min(Math.max(tilt, -1), 1)];
}

pad.addEventListener("pointerdown", (ev) => {
  dragging = true;
  pad.setPointerCapture(ev.pointerId);
  const [p, t] = padAxes(ev);
  joystick.setAxes(p, t);
});
pad.addEventListener("pointermove", (ev) => {
  if (!dragging) return;
  const [p, t] = padAxes(ev);
  joystick.setAxes(p, t);
  knob.style.transform = `translate(${p * 40}px, ${-t * 40}px)`;
});
const releasePad = () => {
  dragging = false;
  knob.style.transform = "translate(0,0)";
  joystick.release(); // dead-man: zero within 100 ms
};
pad.addEventListener("pointerup", releasePad);
pad.addEventListener("pointercancel", releasePad);
window.addEventListener("blur", releasePad);

// Optional gamepad: left stick maps to pan/tilt while manual.
function pollGamepad(): void {
  if (joystick.active) {
    const gp = navigator.getGamepads ? navigator.getGamepads()[0] : null;
    if (gp) {
      joystick.setAxes(gp.axes[0] ?? 0, -(gp.axes[1] ?? 0));
    }
  }
  requestAnimationFrame(pollGamepad);
}
requestAnimationFrame(pollGamepad);

// -- render loop -----------------------------------------------------------

function renderLoop(): void {
  const now = Date.now();
  stateEl.textContent = store.missionState;
  staleEl.style.display = store.isStale(now) ? "inline-block" : "none";
  connEl.textContent = store.connected ? "connected" : "reconnecting";
  connEl.className = store.connected ? "ok" : "bad";
  if (store.monitor) {
    monitorEl.textContent =
      `${store.monitor.mode}/${store.monitor.status} ` +
      `pan ${store.monitor.pan_deg.toFixed(1)} tilt ${store.monitor.tilt_deg.toFixed(1)}`;
  }
  const rej = store.lastRejection();
  rejectEl.textContent = rej ? `rejected ${rej.command}: ${rej.reason}` : "";
  drawThermal(thermalCanvas, store);
  mapHits = drawMap(mapCanvas, store, selectedId);
  requestAnimationFrame(renderLoop);
}

client.connect();
requestAnimationFrame(renderLoop);
