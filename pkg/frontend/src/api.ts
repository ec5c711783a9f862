/** Thin fetch client for the tuning service endpoints. */

import type { Knobs, PreviewFrame, ServiceError, SessionInfo } from "./types.js";

export class ApiError extends Error implements ServiceError {
  status: number;
  legalRange?: [number, number];

  constructor(status: number, message: string, legalRange?: [number, number]) {
    super(message);
    this.status = status;
    this.legalRange = legalRange;
  }
}

async function raiseFor(resp: Response): Promise<never> {
  let message = `${resp.status} ${resp.statusText}`;
  let legalRange: [number, number] | undefined;
  try {
    const body = await resp.json();
    const detail = body?.detail;
    if (typeof detail === "string") {
      message = detail;
    } else if (detail) {
      message = detail.error ?? message;
      if (Array.isArray(detail.legal_range) && detail.legal_range.length === 2) {
        legalRange = [detail.legal_range[0], detail.legal_range[1]];
      }
    }
  } catch {
    // non-JSON body; keep the status text
  }
  throw new ApiError(resp.status, message, legalRange);
}

export function previewUrl(base: string, sessionId: string, knobs: Knobs, scale?: number): string {
  const params = new URLSearchParams({
    alpha1: String(knobs.alpha1),
    alpha2: String(knobs.alpha2),
  });
  if (scale !== undefined) params.set("scale", String(scale));
  return `${base}/sessions/${sessionId}/preview?${params}`;
}

export function exportUrl(base: string, sessionId: string, knobs: Knobs): string {
  const params = new URLSearchParams({
    alpha1: String(knobs.alpha1),
    alpha2: String(knobs.alpha2),
  });
  return `${base}/sessions/${sessionId}/export?${params}`;
}

export function baselineUrl(base: string, sessionId: string, alpha1: number, scale?: number): string {
  const params = new URLSearchParams({ alpha1: String(alpha1) });
  if (scale !== undefined) params.set("scale", String(scale));
  return `${base}/sessions/${sessionId}/baseline?${params}`;
}

export async function createSession(
  base: string,
  checkpoint: string,
  image: string,
  fetchFn: typeof fetch = fetch,
): Promise<SessionInfo> {
  const resp = await fetchFn(`${base}/sessions`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ checkpoint, image }),
  });
  if (!resp.ok) await raiseFor(resp);
  return (await resp.json()) as SessionInfo;
}

export async function fetchPreview(
  url: string,
  knobs: Knobs,
  signal: AbortSignal,
  fetchFn: typeof fetch = fetch,
): Promise<PreviewFrame> {
  const resp = await fetchFn(url, { signal });
  if (!resp.ok) await raiseFor(resp);
  const blob = await resp.blob();
  const millis = resp.headers.get("X-Render-Millis");
  return {
    url: URL.createObjectURL(blob),
    knobs,
    renderMillis: millis === null ? null : Number(millis),
  };
}
