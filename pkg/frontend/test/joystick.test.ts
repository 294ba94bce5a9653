import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { JoystickStreamer } from "../src/joystick";

describe("joystick dead-man streaming", () => {
  let sent: Array<[number, number, number]>;
  let joy: JoystickStreamer;

  beforeEach(() => {
    vi.useFakeTimers();
    sent = [];
    joy = new JoystickStreamer((p, t) => sent.push([p, t, Date.now()]));
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("streams axes at 10 Hz while enabled", () => {
    joy.setEnabled(true);
    joy.setAxes(0.5, -0.25);
    vi.advanceTimersByTime(1000);
    const nonzero = sent.filter(([p]) => p !== 0);
    expect(nonzero.length).toBe(10);
    expect(nonzero[0]).toEqual([0.5, -0.25, expect.any(Number)]);
  });

  it("clamps axes to [-1, 1]", () => {
    joy.setEnabled(true);
    joy.setAxes(3.2, -7);
    vi.advanceTimersByTime(100);
    expect(sent[sent.length - 1][0]).toBe(1);
    expect(sent[sent.length - 1][1]).toBe(-1);
  });

  it("release zeroes the command within 100 ms", () => {
    joy.setEnabled(true);
    joy.setAxes(0.9, 0.9);
    vi.advanceTimersByTime(250);
    const releaseAt = Date.now();
    joy.release();
    const zero = sent.find(([p, t, at]) => p === 0 && t === 0 && at >= releaseAt);
    expect(zero).toBeDefined();
    expect(zero![2] - releaseAt).toBeLessThanOrEqual(100);
    // Subsequent ticks keep sending zero, not the stale axes.
    vi.advanceTimersByTime(300);
    expect(sent.slice(-1)[0][0]).toBe(0);
  });

  it("stops streaming when switched to auto and sends one final zero", () => {
    joy.setEnabled(true);
    joy.setAxes(0.4, 0.1);
    vi.advanceTimersByTime(300);
    const before = sent.length;
    joy.setEnabled(false);
    expect(sent.length).toBe(before + 1);
    expect(sent[sent.length - 1].slice(0, 2)).toEqual([0, 0]);
    vi.advanceTimersByTime(500);
    expect(sent.length).toBe(before + 1); // no further traffic
  });
});
