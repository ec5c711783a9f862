/**
 * Pure UI state and transitions. The DOM layer renders from this state
 * only; everything here is testable without a browser.
 */

import type { Anchor, Knobs, KnobBounds, SessionInfo } from "./types.js";

export type CompareMode = "none" | "baseline";

export interface UiState {
  sessionId: string | null;
  alpha1: number;
  alpha2: number;
  bounds: KnobBounds;
  anchors: Anchor[];
  /** Knobs of the frame currently on screen, once one has settled. */
  displayed: Knobs | null;
  pending: boolean;
  compare: CompareMode;
  latencyMillis: number | null;
  toast: string | null;
}

export function initialState(): UiState {
  return {
    sessionId: null,
    alpha1: 1.0,
    alpha2: 0.0,
    bounds: { alpha1: [1, 100], alpha2: [0, 1] },
    anchors: [],
    displayed: null,
    pending: false,
    compare: "none",
    latencyMillis: null,
    toast: null,
  };
}

export function sessionStarted(state: UiState, info: SessionInfo): UiState {
  const [a1] = info.trained_anchors[0] ?? [info.knob_bounds.alpha1[0], 0];
  const [, a2] = info.trained_anchors[0] ?? [0, info.knob_bounds.alpha2[0]];
  return {
    ...state,
    sessionId: info.session_id,
    bounds: info.knob_bounds,
    anchors: info.trained_anchors,
    alpha1: clamp(a1, info.knob_bounds.alpha1),
    alpha2: clamp(a2, info.knob_bounds.alpha2),
  };
}

function clamp(value: number, [lo, hi]: [number, number]): number {
  return Math.min(Math.max(value, lo), hi);
}

/** Slider motion: values are clamped to the advertised bounds. */
export function setKnobs(state: UiState, alpha1: number, alpha2: number): UiState {
  return {
    ...state,
    alpha1: clamp(alpha1, state.bounds.alpha1),
    alpha2: clamp(alpha2, state.bounds.alpha2),
  };
}

/** Jump both sliders to a trained (alpha1, alpha2) pair. Idempotent. */
export function snapToAnchor(state: UiState, index: number): UiState {
  const anchor = state.anchors[index];
  if (!anchor) return state;
  return setKnobs(state, anchor[0], anchor[1]);
}

export function frameSettled(state: UiState, knobs: Knobs, latencyMillis: number | null): UiState {
  return { ...state, displayed: { ...knobs }, latencyMillis, pending: false };
}

export function setPending(state: UiState, pending: boolean): UiState {
  return { ...state, pending };
}

/** Service rejected a knob value: clamp to the legal bound and say so. */
export function clampAfterRejection(
  state: UiState,
  which: "alpha1" | "alpha2",
  legalRange: [number, number],
): UiState {
  const next = { ...state, toast: `${which} limited to [${legalRange[0]}, ${legalRange[1]}]` };
  next.bounds = { ...state.bounds, [which]: legalRange };
  next[which] = clamp(state[which], legalRange);
  return next;
}

/** Export is allowed only for a settled preview at the current sliders. */
export function canExport(state: UiState): boolean {
  return (
    !state.pending &&
    state.displayed !== null &&
    state.displayed.alpha1 === state.alpha1 &&
    state.displayed.alpha2 === state.alpha2
  );
}

/** Download name embeds the knob values: enhanced_a1-10.00_a2-0.500.png */
export function exportFilename(knobs: Knobs): string {
  return `enhanced_a1-${knobs.alpha1.toFixed(2)}_a2-${knobs.alpha2.toFixed(3)}.png`;
}

/** At level 0 the output is exactly the trained base network. */
export function enhancementLabel(alpha2: number): string {
  return alpha2 === 0 ? "base network" : "";
}

/**
 * Brightness slider runs on a log scale (exposure ratios span x2..x100):
 * t in [0, 1] maps to alpha1 in [lo, hi] geometrically.
 */
export function sliderToAlpha1(t: number, [lo, hi]: [number, number]): number {
  const clamped = Math.min(Math.max(t, 0), 1);
  return lo * Math.pow(hi / lo, clamped);
}

export function alpha1ToSlider(alpha1: number, [lo, hi]: [number, number]): number {
  const clamped = Math.min(Math.max(alpha1, lo), hi);
  return Math.log(clamped / lo) / Math.log(hi / lo);
}
