/** DOM wiring for the editing UI: paint masks, steer edits, compare results.
 *
 * The browser never computes projections, edits or stitches - it paints
 * labels locally for latency, uploads them for validation, and renders
 * whatever PNGs the API returns.
 */

import { SegeditClient, ApiHttpError } from "./api.js";
import { diffImages } from "./diff.js";
import { cloneLabelMap, createLabelMap, labelMapsEqual, rasterizeStroke, type StrokePoint } from "./mask.js";
import { decodeRgbPng, decodeGrayPng, encodeGrayPng } from "./png.js";
import { ALPHA_MAX, ALPHA_MIN, clampAlpha, type Direction, type GrayImage, type JobStatus, type RgbImage } from "./types.js";

const SEGMENT_COLORS = [
  "#00000000", // label 0: transparent
  "#e6194baa", "#3cb44baa", "#4363d8aa", "#ffe119aa", "#f58231aa",
  "#911eb4aa", "#46f0f0aa", "#f032e6aa", "#bcf60caa", "#fabebeaa", "#008080aa",
];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class App {
  private client = new SegeditClient("");
  private labels: GrayImage = createLabelMap(1, 1);
  private serverLabels: GrayImage | null = null; // last server-accepted map, for rollback
  private image: RgbImage | null = null;
  private direction: Direction | null = null;
  private stroke: StrokePoint[] = [];
  private painting = false;
  private scale = 12;
  private busy = false;
  private abState: "a" | "b" | "heat" = "a";
  private aPng: Uint8Array | null = null;
  private bPng: Uint8Array | null = null;

  private canvas = el<HTMLCanvasElement>("paint");
  private preview = el<HTMLImageElement>("preview");
  private abCanvas = el<HTMLCanvasElement>("ab");
  private toast = el<HTMLDivElement>("toast");
  private progress = el<HTMLProgressElement>("progress");
  private alphaSlider = el<HTMLInputElement>("alpha");
  private alphaValue = el<HTMLSpanElement>("alpha-value");

  async start(): Promise<void> {
    const png = await this.client.imagePng();
    this.image = await decodeRgbPng(png);
    this.labels = createLabelMap(this.image.width, this.image.height);
    try {
      const existing = await this.client.labelsPng();
      this.labels = await decodeGrayPng(existing);
      this.serverLabels = cloneLabelMap(this.labels);
    } catch {
      // no labels uploaded yet
    }
    this.canvas.width = this.image.width * this.scale;
    this.canvas.height = this.image.height * this.scale;
    this.alphaSlider.min = String(ALPHA_MIN);
    this.alphaSlider.max = String(ALPHA_MAX);
    this.bindEvents();
    this.redraw();
  }

  private showToast(message: string): void {
    this.toast.textContent = message;
    this.toast.classList.add("show");
    setTimeout(() => this.toast.classList.remove("show"), 4000);
  }

  private setBusy(busy: boolean): void {
    this.busy = busy;
    for (const id of ["project-btn", "commit-btn", "refine-btn", "undo-btn"]) {
      el<HTMLButtonElement>(id).disabled = busy;
    }
    this.alphaSlider.disabled = busy;
    this.progress.style.visibility = busy ? "visible" : "hidden";
  }

  private onProgress = (status: JobStatus): void => {
    this.progress.max = Math.max(1, status.progress.steps);
    this.progress.value = status.progress.step;
  };

  private canvasPoint(ev: PointerEvent): StrokePoint {
    const rect = this.canvas.getBoundingClientRect();
    return {
      x: ((ev.clientX - rect.left) / rect.width) * this.labels.width,
      y: ((ev.clientY - rect.top) / rect.height) * this.labels.height,
    };
  }

  private bindEvents(): void {
    this.canvas.addEventListener("pointerdown", (ev) => {
      this.painting = true;
      this.stroke = [this.canvasPoint(ev)];
      this.applyStroke();
    });
    this.canvas.addEventListener("pointermove", (ev) => {
      if (!this.painting) return;
      this.stroke.push(this.canvasPoint(ev));
      this.applyStroke();
    });
    window.addEventListener("pointerup", () => {
      if (!this.painting) return;
      this.painting = false;
      void this.uploadLabels();
    });

    el<HTMLButtonElement>("project-btn").addEventListener("click", () => void this.runProject());
    el<HTMLButtonElement>("commit-btn").addEventListener("click", () => void this.runEdit(true));
    el<HTMLButtonElement>("refine-btn").addEventListener("click", () => void this.runRefine());
    el<HTMLButtonElement>("undo-btn").addEventListener("click", () => void this.runUndo());
    el<HTMLButtonElement>("ab-toggle").addEventListener("click", () => void this.cycleAb());

    this.alphaSlider.addEventListener("input", () => {
      const alpha = clampAlpha(Number(this.alphaSlider.value));
      this.alphaValue.textContent = alpha.toFixed(2);
      if (!this.busy) void this.runEdit(false);
    });

    el<HTMLInputElement>("direction-file").addEventListener("change", async (ev) => {
      const input = ev.target as HTMLInputElement;
      const file = input.files?.[0];
      if (!file) return;
      this.direction = JSON.parse(await file.text()) as Direction;
      this.showToast(`direction "${this.direction.name}" loaded (${this.direction.space})`);
    });
  }

  private currentBrush(): { radius: number; label: number } {
    return {
      radius: Number(el<HTMLInputElement>("brush").value),
      label: Number(el<HTMLInputElement>("segment").value),
    };
  }

  private applyStroke(): void {
    const { radius, label } = this.currentBrush();
    rasterizeStroke(this.labels, this.stroke.slice(-2), radius, label);
    this.stroke = this.stroke.slice(-1);
    this.redraw();
  }

  private async uploadLabels(): Promise<void> {
    try {
      const count = await this.client.putLabels(encodeGrayPng(this.labels));
      this.serverLabels = cloneLabelMap(this.labels);
      this.showToast(`labels accepted (${count} segment${count === 1 ? "" : "s"})`);
    } catch (err) {
      if (err instanceof ApiHttpError && this.serverLabels) {
        // server rejected the partition: roll back to the accepted map
        this.labels = cloneLabelMap(this.serverLabels);
        this.redraw();
      }
      this.showToast(`label upload rejected: ${(err as Error).message}`);
    }
  }

  private redraw(): void {
    if (!this.image) return;
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.imageSmoothingEnabled = false;
    const base = new ImageData(this.image.width, this.image.height);
    for (let i = 0; i < this.image.width * this.image.height; i++) {
      base.data[4 * i] = this.image.data[3 * i];
      base.data[4 * i + 1] = this.image.data[3 * i + 1];
      base.data[4 * i + 2] = this.image.data[3 * i + 2];
      base.data[4 * i + 3] = 255;
    }
    const off = new OffscreenCanvas(this.image.width, this.image.height);
    const offCtx = off.getContext("2d")!;
    offCtx.putImageData(base, 0, 0);
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    ctx.drawImage(off, 0, 0, this.canvas.width, this.canvas.height);
    // label overlay, same dimensions as the image by construction
    for (let y = 0; y < this.labels.height; y++) {
      for (let x = 0; x < this.labels.width; x++) {
        const label = this.labels.data[y * this.labels.width + x];
        if (!label) continue;
        ctx.fillStyle = SEGMENT_COLORS[label % SEGMENT_COLORS.length];
        ctx.fillRect(x * this.scale, y * this.scale, this.scale, this.scale);
      }
    }
  }

  private segmentSelection(): "ALL" | number[] {
    const raw = el<HTMLInputElement>("edit-segments").value.trim();
    if (!raw || raw.toUpperCase() === "ALL") return "ALL";
    return raw.split(",").map((s) => Number(s.trim())).filter((n) => Number.isFinite(n));
  }

  private async runProject(): Promise<void> {
    this.setBusy(true);
    try {
      await this.client.project(
        { space: "W", steps: Number(el<HTMLInputElement>("steps").value), seed: 0 },
        this.onProgress,
      );
      this.bPng = await this.client.compositePng();
      await this.refreshPreview(this.bPng);
      this.showToast("projection done");
    } catch (err) {
      this.showToast(`project failed: ${(err as Error).message}`);
    } finally {
      this.setBusy(false);
    }
  }

  private async runEdit(commit: boolean): Promise<void> {
    if (!this.direction) {
      if (commit) this.showToast("load a direction file first");
      return;
    }
    this.setBusy(true);
    try {
      await this.client.edit(
        {
          direction: this.direction,
          alpha: clampAlpha(Number(this.alphaSlider.value)),
          segments: this.segmentSelection(),
          reproject: commit,
          steps: Number(el<HTMLInputElement>("steps").value),
          seed: 0,
        },
        this.onProgress,
      );
      const png = await this.client.compositePng({ preview: !commit });
      if (commit) {
        this.bPng = png;
        const imagePng = await this.client.imagePng();
        this.image = await decodeRgbPng(imagePng);
        this.redraw();
      }
      await this.refreshPreview(png);
    } catch (err) {
      this.showToast(`edit failed: ${(err as Error).message}`);
    } finally {
      this.setBusy(false);
    }
  }

  private async runRefine(): Promise<void> {
    this.setBusy(true);
    try {
      await this.client.refine(
        {
          segment: Number(el<HTMLInputElement>("segment").value),
          dt: 0.45,
          iters: Number(el<HTMLInputElement>("refine-iters").value),
        },
        this.onProgress,
      );
      this.labels = await decodeGrayPng(await this.client.labelsPng());
      this.serverLabels = cloneLabelMap(this.labels);
      this.redraw();
      this.showToast("boundary refined");
    } catch (err) {
      this.showToast(`refine failed: ${(err as Error).message}`);
    } finally {
      this.setBusy(false);
    }
  }

  private async runUndo(): Promise<void> {
    try {
      await this.client.undo();
      this.image = await decodeRgbPng(await this.client.imagePng());
      try {
        this.labels = await decodeGrayPng(await this.client.labelsPng());
        this.serverLabels = cloneLabelMap(this.labels);
      } catch {
        /* labels may be gone */
      }
      this.redraw();
      this.showToast("undone");
    } catch (err) {
      this.showToast(`undo failed: ${(err as Error).message}`);
    }
  }

  private async refreshPreview(png: Uint8Array): Promise<void> {
    this.preview.src = URL.createObjectURL(new Blob([png as BlobPart], { type: "image/png" }));
  }

  /** A/B flicker between the original image and the composite, plus a heat view. */
  private async cycleAb(): Promise<void> {
    if (!this.aPng) {
      const buf = await this.client.imagePng();
      this.aPng = buf;
    }
    if (!this.bPng) {
      try {
        this.bPng = await this.client.compositePng();
      } catch (err) {
        this.showToast(`no composite yet: ${(err as Error).message}`);
        return;
      }
    }
    this.abState = this.abState === "a" ? "b" : this.abState === "b" ? "heat" : "a";
    const a = await decodeRgbPng(this.aPng);
    const b = await decodeRgbPng(this.bPng);
    const ctx = this.abCanvas.getContext("2d")!;
    this.abCanvas.width = a.width;
    this.abCanvas.height = a.height;
    const out = new ImageData(a.width, a.height);
    if (this.abState === "heat") {
      const { heat, maxIndex, mse } = diffImages(a, b);
      for (let i = 0; i < heat.length; i++) {
        out.data[4 * i] = heat[i];
        out.data[4 * i + 1] = 0;
        out.data[4 * i + 2] = 255 - heat[i];
        out.data[4 * i + 3] = 255;
      }
      if (maxIndex >= 0) {
        out.data[4 * maxIndex] = 0;
        out.data[4 * maxIndex + 1] = 255;
        out.data[4 * maxIndex + 2] = 0;
      }
      el<HTMLSpanElement>("ab-label").textContent = `heat (mse ${mse.toExponential(3)})`;
    } else {
      const src = this.abState === "a" ? a : b;
      for (let i = 0; i < src.width * src.height; i++) {
        out.data[4 * i] = src.data[3 * i];
        out.data[4 * i + 1] = src.data[3 * i + 1];
        out.data[4 * i + 2] = src.data[3 * i + 2];
        out.data[4 * i + 3] = 255;
      }
      el<HTMLSpanElement>("ab-label").textContent = this.abState === "a" ? "original" : "composite";
    }
    ctx.putImageData(out, 0, 0);
  }
}

void new App().start().catch((err) => {
  document.body.insertAdjacentHTML("beforeend", `<p class="fatal">failed to start: ${err}</p>`);
});
