import { describe, expect, it } from "vitest";

import { PreviewScheduler, TimerApi } from "../src/scheduler.js";
import type { Knobs, PreviewFrame } from "../src/types.js";

/** Deterministic manual timers. */
class FakeTimers implements TimerApi {
  private queue = new Map<number, () => void>();
  private next = 1;

  set(fn: () => void, _ms: number): unknown {
    const id = this.next++;
    this.queue.set(id, fn);
    return id;
  }

  clear(handle: unknown): void {
    this.queue.delete(handle as number);
  }

  /** Fire all scheduled callbacks (simulates the debounce elapsing). */
  fire(): void {
    const fns = [...this.queue.values()];
    this.queue.clear();
    fns.forEach((fn) => fn());
  }
}

interface Issued {
  knobs: Knobs;
  resolve(): void;
  reject(err: Error): void;
  aborted(): boolean;
}

function frame(knobs: Knobs): PreviewFrame {
  return { url: `blob:${knobs.alpha1}/${knobs.alpha2}`, knobs, renderMillis: 5 };
}

function harness(debounceMs = 80) {
  const timers = new FakeTimers();
  const issued: Issued[] = [];
  const frames: PreviewFrame[] = [];
  const pendingLog: boolean[] = [];
  const errors: Error[] = [];

  const scheduler = new PreviewScheduler(
    (knobs, signal) =>
      new Promise<PreviewFrame>((resolve, reject) => {
        issued.push({
          knobs,
          resolve: () => resolve(frame(knobs)),
          reject,
          aborted: () => signal.aborted,
        });
      }),
    {
      onFrame: (f) => frames.push(f),
      onPending: (p) => pendingLog.push(p),
      onError: (e) => errors.push(e),
    },
    debounceMs,
    timers,
  );
  return { scheduler, timers, issued, frames, pendingLog, errors };
}

const knobs = (alpha1: number, alpha2: number): Knobs => ({ alpha1, alpha2 });

describe("debounce", () => {
  it("coalesces a rapid slider drag into one request", () => {
    const h = harness();
    for (let i = 0; i < 25; i++) h.scheduler.request(knobs(1 + i, 0.5));
    expect(h.issued).toHaveLength(0);
    h.timers.fire();
    expect(h.issued).toHaveLength(1);
    expect(h.issued[0].knobs.alpha1).toBe(25);
  });

  it("settles on the final slider value after scrubbing", async () => {
    const h = harness();
    h.scheduler.request(knobs(10, 0));
    h.timers.fire();
    h.scheduler.request(knobs(100, 1));
    h.timers.fire();
    h.issued[0].resolve();
    h.issued[1].resolve();
    await flush();
    expect(h.frames.at(-1)?.knobs).toEqual(knobs(100, 1));
    expect(h.scheduler.hasPending).toBe(false);
  });
});

describe("latest-wins ordering", () => {
  it("supersedure aborts the in-flight request", () => {
    const h = harness();
    h.scheduler.request(knobs(10, 0));
    h.timers.fire();
    expect(h.issued[0].aborted()).toBe(false);
    h.scheduler.request(knobs(20, 0));
    h.timers.fire();
    expect(h.issued[0].aborted()).toBe(true);
    expect(h.issued[1].aborted()).toBe(false);
  });

  it("never renders out-of-order frames under shuffled arrival", async () => {
    const h = harness();
    const sequence = [knobs(2, 0.1), knobs(5, 0.3), knobs(50, 0.8), knobs(100, 1.0)];
    for (const k of sequence) {
      h.scheduler.request(k);
      h.timers.fire();
    }
    expect(h.issued).toHaveLength(4);

    // responses arrive shuffled: 3rd, 1st, 4th, 2nd
    const order = [2, 0, 3, 1];
    for (const i of order) {
      h.issued[i].resolve();
      await flush();
    }

    // every displayed frame is newer than the previous one
    const shown = h.frames.map((f) => f.knobs.alpha1);
    for (let i = 1; i < shown.length; i++) {
      const a = sequence.findIndex((k) => k.alpha1 === shown[i - 1]);
      const b = sequence.findIndex((k) => k.alpha1 === shown[i]);
      expect(b).toBeGreaterThan(a);
    }
    // and the settled frame matches the latest acknowledged slider state
    expect(h.frames.at(-1)?.knobs).toEqual(knobs(100, 1.0));
    expect(h.scheduler.lastApplied).toBe(4);
  });

  it("drops a stale response that arrives after a newer frame", async () => {
    const h = harness();
    h.scheduler.request(knobs(10, 0.2));
    h.timers.fire();
    h.scheduler.request(knobs(90, 0.9));
    h.timers.fire();

    h.issued[1].resolve(); // newest first
    await flush();
    h.issued[0].resolve(); // stale afterwards
    await flush();

    expect(h.frames).toHaveLength(1);
    expect(h.frames[0].knobs).toEqual(knobs(90, 0.9));
  });
});

describe("errors and pending state", () => {
  it("abort rejections are swallowed, real errors surface", async () => {
    const h = harness();
    h.scheduler.request(knobs(10, 0));
    h.timers.fire();
    const abortErr = new Error("aborted");
    abortErr.name = "AbortError";
    h.issued[0].reject(abortErr);
    await flush();
    expect(h.errors).toHaveLength(0);

    h.scheduler.request(knobs(20, 0));
    h.timers.fire();
    h.issued[1].reject(new Error("boom"));
    await flush();
    expect(h.errors.map((e) => e.message)).toEqual(["boom"]);
  });

  it("reports pending while a request is outstanding", async () => {
    const h = harness();
    h.scheduler.request(knobs(10, 0));
    expect(h.pendingLog.at(-1)).toBe(true);
    h.timers.fire();
    h.issued[0].resolve();
    await flush();
    expect(h.pendingLog.at(-1)).toBe(false);
  });

  it("flush issues immediately without waiting for the debounce", () => {
    const h = harness();
    h.scheduler.request(knobs(10, 0));
    expect(h.issued).toHaveLength(0);
    h.scheduler.flush();
    expect(h.issued).toHaveLength(1);
  });
});

function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
