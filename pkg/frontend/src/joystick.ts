// Manual nozzle control stream with dead-man behavior: axes are clamped to
// [-1, 1], sent at 10 Hz while enabled, and zeroed immediately on release,
// blur or mode switch.

export type VelocitySender = (panCmd: number, tiltCmd: number) => void;

const clamp = (x: number) => Math.min(Math.max(x, -1), 1);

export class JoystickStreamer {
  private pan = 0;
  private tilt = 0;
  private enabled = false;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly send: VelocitySender,
    private readonly intervalMs: number = 100,
  ) {}

  setEnabled(on: boolean): void {
    if (on === this.enabled) return;
    this.enabled = on;
    if (on) {
      this.timer = setInterval(() => this.tick(), this.intervalMs);
    } else {
      if (this.timer !== null) clearInterval(this.timer);
      this.timer = null;
      // Leaving manual mode halts the monitor right away.
      this.pan = 0;
      this.tilt = 0;
      this.send(0, 0);
    }
  }

  get active(): boolean {
    return this.enabled;
  }

  setAxes(pan: number, tilt: number): void {
    this.pan = clamp(pan);
    this.tilt = clamp(tilt);
  }

  /** Dead-man: zero immediately, not at the next interval tick. */
  release(): void {
    this.pan = 0;
    this.tilt = 0;
    if (this.enabled) this.send(0, 0);
  }

  private tick(): void {
    if (this.enabled) this.send(this.pan, this.tilt);
  }
}
