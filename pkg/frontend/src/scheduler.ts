/**
 * Debounced, latest-wins preview scheduling.
 *
 * Slider movement calls `request()` at mouse rate; the scheduler coalesces
 * them behind a short debounce, keeps at most one request in flight
 * (superseded requests are aborted), and stamps every issued request with
 * a sequence number. A response is applied only if it is newer than the
 * last applied frame, so out-of-order arrivals can never leave a stale
 * frame on screen: once the dust settles, the rendered frame always
 * matches the newest issued request.
 */

import type { Knobs, PreviewFrame } from "./types.js";

export interface TimerApi {
  set(fn: () => void, ms: number): unknown;
  clear(handle: unknown): void;
}

const realTimers: TimerApi = {
  set: (fn, ms) => setTimeout(fn, ms),
  clear: (handle) => clearTimeout(handle as ReturnType<typeof setTimeout>),
};

export type PreviewFetcher = (knobs: Knobs, signal: AbortSignal) => Promise<PreviewFrame>;

export interface SchedulerCallbacks {
  /** A frame won the race and should be displayed. */
  onFrame(frame: PreviewFrame, seq: number): void;
  /** The in-flight state changed (request pending or settled). */
  onPending(pending: boolean): void;
  /** A request failed for a reason other than being superseded. */
  onError(err: Error): void;
}

export class PreviewScheduler {
  private fetcher: PreviewFetcher;
  private callbacks: SchedulerCallbacks;
  private debounceMs: number;
  private timers: TimerApi;

  private debounceHandle: unknown = null;
  private pendingKnobs: Knobs | null = null;
  private controller: AbortController | null = null;
  private issuedSeq = 0;
  private appliedSeq = 0;
  private inFlight = 0;

  constructor(
    fetcher: PreviewFetcher,
    callbacks: SchedulerCallbacks,
    debounceMs = 80,
    timers: TimerApi = realTimers,
  ) {
    this.fetcher = fetcher;
    this.callbacks = callbacks;
    this.debounceMs = debounceMs;
    this.timers = timers;
  }

  /** Latest committed sequence number (for tests and status displays). */
  get lastApplied(): number {
    return this.appliedSeq;
  }

  get hasPending(): boolean {
    return this.inFlight > 0 || this.debounceHandle !== null;
  }

  request(knobs: Knobs): void {
    this.pendingKnobs = knobs;
    if (this.debounceHandle !== null) {
      this.timers.clear(this.debounceHandle);
    }
    this.callbacks.onPending(true);
    this.debounceHandle = this.timers.set(() => {
      this.debounceHandle = null;
      this.issue();
    }, this.debounceMs);
  }

  /** Issue immediately, bypassing the debounce (anchor snaps, retries). */
  flush(): void {
    if (this.debounceHandle !== null) {
      this.timers.clear(this.debounceHandle);
      this.debounceHandle = null;
    }
    if (this.pendingKnobs !== null) {
      this.issue();
    }
  }

  private issue(): void {
    const knobs = this.pendingKnobs;
    if (knobs === null) return;
    this.pendingKnobs = null;

    // latest-wins: abort whatever is still in flight
    if (this.controller !== null) {
      this.controller.abort();
    }
    const controller = new AbortController();
    this.controller = controller;
    const seq = ++this.issuedSeq;
    this.inFlight += 1;

    this.fetcher(knobs, controller.signal)
      .then((frame) => {
        if (seq > this.appliedSeq) {
          this.appliedSeq = seq;
          this.callbacks.onFrame(frame, seq);
        }
      })
      .catch((err: Error) => {
        if (err.name === "AbortError") return; // superseded, by design
        this.callbacks.onError(err);
      })
      .finally(() => {
        this.inFlight -= 1;
        if (this.controller === controller) {
          this.controller = null;
        }
        if (!this.hasPending) {
          this.callbacks.onPending(false);
        }
      });
  }
}
