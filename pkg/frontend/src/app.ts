/** DOM wiring: renders UiState and forwards slider/button events. */

import { ApiError, baselineUrl, createSession, exportUrl, fetchPreview, previewUrl } from "./api.js";
import { PreviewScheduler } from "./scheduler.js";
import {
  UiState,
  alpha1ToSlider,
  canExport,
  clampAfterRejection,
  enhancementLabel,
  exportFilename,
  frameSettled,
  initialState,
  sessionStarted,
  setKnobs,
  setPending,
  sliderToAlpha1,
  snapToAnchor,
} from "./state.js";
import type { Knobs } from "./types.js";

const PREVIEW_SCALE = 0.5;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

export class TuningApp {
  private state: UiState = initialState();
  private scheduler: PreviewScheduler;
  private base: string;

  private a1Slider = el("input", { type: "range", min: "0", max: "1000", step: "1" });
  private a2Slider = el("input", { type: "range", min: "0", max: "1000", step: "1" });
  private a1Value = el("span", { class: "value" });
  private a2Value = el("span", { class: "value" });
  private a2Label = el("span", { class: "hint" });
  private preview = el("img", { class: "preview", alt: "enhanced preview" });
  private baseline = el("img", { class: "preview compare", alt: "brightness-only baseline" });
  private latency = el("span", { class: "latency" });
  private toast = el("div", { class: "toast" });
  private exportBtn = el("button", {}, "Export full resolution");
  private compareToggle = el("input", { type: "checkbox" });
  private anchorsBox = el("div", { class: "anchors" });

  constructor(root: HTMLElement, base = "") {
    this.base = base;
    this.scheduler = new PreviewScheduler(
      (knobs, signal) =>
        fetchPreview(
          previewUrl(this.base, this.state.sessionId ?? "", knobs, PREVIEW_SCALE),
          knobs,
          signal,
        ),
      {
        onFrame: (frame) => {
          const old = this.preview.src;
          this.preview.src = frame.url;
          if (old.startsWith("blob:")) URL.revokeObjectURL(old);
          this.state = frameSettled(this.state, frame.knobs, frame.renderMillis);
          this.render();
        },
        onPending: (pending) => {
          this.state = setPending(this.state, pending);
          this.render();
        },
        onError: (err) => this.handleError(err),
      },
    );
    this.mount(root);
  }

  private mount(root: HTMLElement): void {
    const a1Row = el("div", { class: "control" });
    a1Row.append(el("label", {}, "brightness ratio (alpha1, log scale)"), this.a1Slider, this.a1Value);
    const a2Row = el("div", { class: "control" });
    a2Row.append(el("label", {}, "enhancement (alpha2)"), this.a2Slider, this.a2Value, this.a2Label);

    const compareRow = el("div", { class: "control" });
    const compareLabel = el("label", {}, " compare with brightness-only");
    compareLabel.prepend(this.compareToggle);
    compareRow.append(compareLabel);

    const images = el("div", { class: "images" });
    images.append(this.preview, this.baseline);

    root.append(a1Row, a2Row, this.anchorsBox, compareRow, images, this.latency, this.exportBtn, this.toast);

    this.a1Slider.addEventListener("input", () => this.onSliders());
    this.a2Slider.addEventListener("input", () => this.onSliders());
    this.compareToggle.addEventListener("change", () => {
      this.state = { ...this.state, compare: this.compareToggle.checked ? "baseline" : "none" };
      this.refreshBaseline();
      this.render();
    });
    this.exportBtn.addEventListener("click", () => this.exportCurrent());
  }

  async start(checkpoint: string, image: string): Promise<void> {
    const info = await createSession(this.base, checkpoint, image, fetch);
    this.state = sessionStarted(this.state, info);
    this.anchorsBox.replaceChildren();
    info.trained_anchors.forEach((anchor, i) => {
      const btn = el("button", { class: "anchor" }, `anchor ${i}: (${anchor[0]}, ${anchor[1]})`);
      btn.addEventListener("click", () => {
        this.state = snapToAnchor(this.state, i);
        this.render();
        this.requestPreview();
        this.scheduler.flush();
      });
      this.anchorsBox.append(btn);
    });
    this.render();
    this.requestPreview();
    this.scheduler.flush();
  }

  private currentKnobs(): Knobs {
    return { alpha1: this.state.alpha1, alpha2: this.state.alpha2 };
  }

  private onSliders(): void {
    const a1 = sliderToAlpha1(Number(this.a1Slider.value) / 1000, this.state.bounds.alpha1);
    const [lo2, hi2] = this.state.bounds.alpha2;
    const a2 = lo2 + (Number(this.a2Slider.value) / 1000) * (hi2 - lo2);
    this.state = setKnobs(this.state, round(a1, 2), round(a2, 3));
    this.render();
    this.requestPreview();
  }

  private requestPreview(): void {
    if (!this.state.sessionId) return;
    this.scheduler.request(this.currentKnobs());
    if (this.state.compare === "baseline") this.refreshBaseline();
  }

  private refreshBaseline(): void {
    if (this.state.compare === "baseline" && this.state.sessionId) {
      this.baseline.src = baselineUrl(this.base, this.state.sessionId, this.state.alpha1, PREVIEW_SCALE);
    }
  }

  private exportCurrent(): void {
    if (!canExport(this.state) || !this.state.sessionId) return;
    const knobs = this.currentKnobs();
    const link = el("a", {
      href: exportUrl(this.base, this.state.sessionId, knobs),
      download: exportFilename(knobs),
    });
    link.click();
  }

  private handleError(err: Error): void {
    if (err instanceof ApiError && err.status === 400 && err.legalRange) {
      const which = err.message.includes("alpha2") ? "alpha2" : "alpha1";
      this.state = clampAfterRejection(this.state, which, err.legalRange);
      this.render();
      this.requestPreview();
      return;
    }
    this.state = { ...this.state, toast: err.message };
    this.render();
  }

  private render(): void {
    const s = this.state;
    this.a1Slider.value = String(Math.round(alpha1ToSlider(s.alpha1, s.bounds.alpha1) * 1000));
    const [lo2, hi2] = s.bounds.alpha2;
    this.a2Slider.value = String(Math.round(((s.alpha2 - lo2) / (hi2 - lo2)) * 1000));
    this.a1Value.textContent = s.alpha1.toFixed(2);
    this.a2Value.textContent = s.alpha2.toFixed(3);
    this.a2Label.textContent = enhancementLabel(s.alpha2);
    this.latency.textContent =
      s.latencyMillis === null ? "" : `render ${s.latencyMillis.toFixed(1)} ms`;
    this.exportBtn.toggleAttribute("disabled", !canExport(s));
    this.baseline.style.display = s.compare === "baseline" ? "" : "none";
    this.toast.textContent = s.toast ?? "";
    this.toast.style.display = s.toast ? "" : "none";
  }
}

function round(v: number, digits: number): number {
  const f = Math.pow(10, digits);
  return Math.round(v * f) / f;
}
