/** Wire types of the tuning service (see the service module's endpoints). */

export type Anchor = [alpha1: number, alpha2: number];

export interface KnobBounds {
  alpha1: [number, number];
  alpha2: [number, number];
}

export interface SessionInfo {
  session_id: string;
  trained_anchors: Anchor[];
  knob_bounds: KnobBounds;
  image_size: { packed: [number, number]; output: [number, number] };
}

export interface Knobs {
  alpha1: number;
  alpha2: number;
}

export interface PreviewFrame {
  /** Object URL of the decoded PNG. */
  url: string;
  /** Knob values this frame was rendered for. */
  knobs: Knobs;
  /** Server-side render time, from the X-Render-Millis header. */
  renderMillis: number | null;
}

export interface ServiceError {
  status: number;
  message: string;
  /** Populated on 400 knob errors so sliders can clamp to it. */
  legalRange?: [number, number];
}
