/**
 * DOM wiring for the browser editor.
 *
 * Flow: upload an image, segment it, click an object to select it, load a
 * second image as the reference and click the donor object, adjust the
 * lambda and guidance sliders (or paint a mask for shape/add edits), then
 * submit. Results poll at 1s and drop into the history strip, where any
 * result can be promoted to the next edit's reference.
 */
import { ApiClient } from "./api.js";
import { MaskPainter } from "./painter.js";
import { JobPoller } from "./polling.js";
import { maskFromWire } from "./rle.js";
import {
  DEFAULT_GUIDANCE,
  guidanceHints,
  SLIDER_RANGES,
} from "./sliders.js";
import {
  buildDraft,
  EditorState,
  initialState,
  pushHistory,
  selectObject,
  validateDraft,
  withReference,
  withScene,
} from "./state.js";
import { categoryName, EditKind, SceneWire } from "./types.js";

const OVERLAY_COLORS = [
  [230, 80, 80], [80, 180, 90], [90, 120, 230], [230, 200, 60],
  [180, 90, 220], [70, 200, 200], [240, 140, 60], [150, 150, 150],
];

class EditorApp {
  private api = new ApiClient("");
  private poller = new JobPoller(this.api, 1000);
  private state: EditorState = initialState();
  private painter: MaskPainter | null = null;
  private scale = 8;
  private painting = false;
  private lastPointer: [number, number] | null = null;

  constructor(private root: Document) {}

  private el<T extends HTMLElement>(id: string): T {
    const node = this.root.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node as T;
  }

  init(): void {
    this.el<HTMLInputElement>("upload-input").addEventListener("change", (e) =>
      this.onUpload(e, "input"),
    );
    this.el<HTMLInputElement>("upload-ref").addEventListener("change", (e) =>
      this.onUpload(e, "ref"),
    );
    for (const key of ["sS", "sF", "sy"] as const) {
      const slider = this.el<HTMLInputElement>(`slider-${key}`);
      slider.min = String(SLIDER_RANGES[key].min);
      slider.max = String(SLIDER_RANGES[key].max);
      slider.step = "0.5";
      slider.value = String(DEFAULT_GUIDANCE[key]);
      slider.addEventListener("input", () => this.onSliders());
    }
    this.el<HTMLInputElement>("slider-lambda").addEventListener("input", () =>
      this.onSliders(),
    );
    this.el<HTMLSelectElement>("edit-kind").addEventListener("change", () => {
      this.state = { ...this.state, kind: this.el<HTMLSelectElement>("edit-kind").value as EditKind };
      this.refreshControls();
    });
    this.el<HTMLInputElement>("prompt").addEventListener("input", () => {
      const text = this.el<HTMLInputElement>("prompt").value.trim();
      this.state = { ...this.state, prompt: text.length ? text : null };
      this.refreshControls();
    });
    this.el<HTMLInputElement>("seed").addEventListener("input", () => {
      this.state = { ...this.state, seed: Number(this.el<HTMLInputElement>("seed").value) || 0 };
    });
    this.el<HTMLButtonElement>("clear-mask").addEventListener("click", () => {
      this.painter?.clear();
      this.state = { ...this.state, paintedMask: null };
      this.drawPaintLayer();
      this.refreshControls();
    });
    this.el<HTMLButtonElement>("submit").addEventListener("click", () => void this.submit());

    const canvas = this.el<HTMLCanvasElement>("paint-layer");
    canvas.addEventListener("pointerdown", (e) => this.onPaint(e, true));
    canvas.addEventListener("pointermove", (e) => this.onPaint(e, false));
    window.addEventListener("pointerup", () => {
      this.painting = false;
      this.lastPointer = null;
      this.syncPaintedMask();
    });
    this.el<HTMLCanvasElement>("scene-canvas").addEventListener("click", (e) =>
      this.onSceneClick(e, "input"),
    );
    this.el<HTMLCanvasElement>("ref-canvas").addEventListener("click", (e) =>
      this.onSceneClick(e, "ref"),
    );
    void this.api.health().then(
      (h) => this.status(`service ready (checkpoint ${h.checkpoint_fingerprint})`),
      () => this.status("service unreachable"),
    );
    this.refreshControls();
  }

  private status(text: string): void {
    this.el("status").textContent = text;
  }

  private async onUpload(event: Event, pane: "input" | "ref"): Promise<void> {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    try {
      const imageId = await this.api.uploadImage(file);
      try {
        this.rememberBitmap(imageId, await createImageBitmap(file));
      } catch {
        // canvas falls back to a flat backdrop under the overlays
      }
      const caption = pane === "input" ? this.state.prompt ?? undefined : undefined;
      const scene = await this.api.segment(imageId, "oracle", caption);
      if (pane === "input") {
        this.state = withScene(this.state, imageId, scene);
        this.painter = new MaskPainter(scene.height, scene.width);
        await this.drawScene("scene-canvas", imageId, scene, this.state.selectedObject);
        this.drawPaintLayer();
      } else {
        this.state = withReference(this.state, imageId, scene);
        await this.drawScene("ref-canvas", imageId, scene, this.state.refObject);
      }
      this.status(`segmented ${imageId}: ${scene.objects.length} objects`);
    } catch (err) {
      this.status(`upload failed: ${(err as Error).message}`);
    }
    this.refreshControls();
  }

  private async drawScene(
    canvasId: string,
    imageId: string,
    scene: SceneWire,
    selected: number | null,
  ): Promise<void> {
    const canvas = this.el<HTMLCanvasElement>(canvasId);
    canvas.width = scene.width * this.scale;
    canvas.height = scene.height * this.scale;
    const ctx = canvas.getContext("2d")!;
    ctx.imageSmoothingEnabled = false;
    await this.drawImageFromId(ctx, imageId, scene);
    for (const obj of scene.objects) {
      const mask = maskFromWire(obj.mask_rle);
      const [r, g, b] = OVERLAY_COLORS[obj.id % OVERLAY_COLORS.length];
      const alpha = obj.id === selected ? 0.55 : 0.18;
      ctx.fillStyle = `rgba(${r},${g},${b},${alpha})`;
      for (let row = 0; row < scene.height; row++) {
        for (let col = 0; col < scene.width; col++) {
          if (mask[row * scene.width + col]) {
            ctx.fillRect(col * this.scale, row * this.scale, this.scale, this.scale);
          }
        }
      }
    }
  }

  private imageBitmaps = new Map<string, ImageBitmap>();

  private async drawImageFromId(
    ctx: CanvasRenderingContext2D,
    imageId: string,
    scene: SceneWire,
  ): Promise<void> {
    const bitmap = this.imageBitmaps.get(imageId);
    if (bitmap) {
      ctx.drawImage(bitmap, 0, 0, scene.width * this.scale, scene.height * this.scale);
    } else {
      ctx.fillStyle = "#202020";
      ctx.fillRect(0, 0, scene.width * this.scale, scene.height * this.scale);
    }
  }

  rememberBitmap(imageId: string, bitmap: ImageBitmap): void {
    this.imageBitmaps.set(imageId, bitmap);
  }

  private onSceneClick(event: MouseEvent, pane: "input" | "ref"): void {
    const scene = pane === "input" ? this.state.scene : this.state.refScene;
    if (!scene) return;
    const canvas = event.target as HTMLCanvasElement;
    const rect = canvas.getBoundingClientRect();
    const col = Math.floor(((event.clientX - rect.left) / rect.width) * scene.width);
    const row = Math.floor(((event.clientY - rect.top) / rect.height) * scene.height);
    const hit = scene.objects.find((obj) => {
      const mask = maskFromWire(obj.mask_rle);
      return mask[row * scene.width + col] === 1;
    });
    if (!hit) return;
    if (pane === "input") {
      this.state = selectObject(this.state, hit.id);
      void this.drawScene("scene-canvas", this.state.sceneId!, scene, hit.id);
      this.status(`selected object ${hit.id} (${categoryName(scene, hit.category)})`);
    } else {
      this.state = { ...this.state, refObject: hit.id };
      void this.drawScene("ref-canvas", this.state.refSceneId!, scene, hit.id);
      this.status(`reference object ${hit.id} (${categoryName(scene, hit.category)})`);
    }
    this.refreshControls();
  }

  private onPaint(event: PointerEvent, start: boolean): void {
    if (!this.painter || !this.state.scene) return;
    if (start) this.painting = true;
    if (!this.painting) return;
    const canvas = event.target as HTMLCanvasElement;
    const rect = canvas.getBoundingClientRect();
    const col = ((event.clientX - rect.left) / rect.width) * this.state.scene.width;
    const row = ((event.clientY - rect.top) / rect.height) * this.state.scene.height;
    const erase = event.shiftKey;
    if (this.lastPointer) {
      this.painter.stroke(this.lastPointer[0], this.lastPointer[1], row, col, 1.5, erase ? 0 : 1);
    } else if (erase) {
      this.painter.erase(row, col, 1.5);
    } else {
      this.painter.paint(row, col, 1.5);
    }
    this.lastPointer = [row, col];
    this.drawPaintLayer();
  }

  private syncPaintedMask(): void {
    if (!this.painter) return;
    this.state = {
      ...this.state,
      paintedMask: this.painter.isEmpty() ? null : this.painter.toWire(),
    };
    this.refreshControls();
  }

  private drawPaintLayer(): void {
    if (!this.painter || !this.state.scene) return;
    const canvas = this.el<HTMLCanvasElement>("paint-layer");
    canvas.width = this.state.scene.width * this.scale;
    canvas.height = this.state.scene.height * this.scale;
    const ctx = canvas.getContext("2d")!;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.fillStyle = "rgba(255, 255, 255, 0.5)";
    for (let row = 0; row < this.painter.height; row++) {
      for (let col = 0; col < this.painter.width; col++) {
        if (this.painter.get(row, col)) {
          ctx.fillRect(col * this.scale, row * this.scale, this.scale, this.scale);
        }
      }
    }
  }

  private onSliders(): void {
    const guidance = {
      sS: Number(this.el<HTMLInputElement>("slider-sS").value),
      sF: Number(this.el<HTMLInputElement>("slider-sF").value),
      sy: Number(this.el<HTMLInputElement>("slider-sy").value),
    };
    const lambda = Number(this.el<HTMLInputElement>("slider-lambda").value);
    this.state = { ...this.state, guidance, lambda };
    this.refreshControls();
  }

  private refreshControls(): void {
    const hints = guidanceHints(this.state.guidance, this.state.lambda);
    this.el("hints").innerHTML = hints
      .map((h) => `<span class="badge" data-hint="${h.id}">${h.message}</span>`)
      .join(" ");
    const draft = buildDraft(this.state);
    const problems = validateDraft(draft, this.state.scene);
    const submit = this.el<HTMLButtonElement>("submit");
    submit.disabled = problems.length > 0;
    this.el("problems").textContent = problems.join("; ");
    this.el("lambda-value").textContent = String(this.state.lambda ?? "");
  }

  private async submit(): Promise<void> {
    const draft = buildDraft(this.state);
    const problems = validateDraft(draft, this.state.scene);
    if (problems.length) {
      this.status(`cannot submit: ${problems[0]}`);
      return;
    }
    try {
      const jobId = await this.api.submitEdit(draft);
      this.status(`job ${jobId} queued`);
      this.poller.watch(jobId, (job) => {
        this.status(`job ${jobId}: ${job.state} (${job.progress.completed}/${job.progress.total})`);
        if (job.state === "done") {
          const url = this.api.resultUrl(jobId);
          this.state = pushHistory(this.state, { jobId, resultUrl: url, spec: draft });
          this.renderHistory();
        }
        if (job.state === "failed") this.status(`job ${jobId} failed: ${job.error}`);
      });
    } catch (err) {
      this.status(`submit failed: ${(err as Error).message}`);
    }
  }

  private renderHistory(): void {
    const strip = this.el("history");
    strip.innerHTML = "";
    for (const entry of this.state.history) {
      const wrapper = this.root.createElement("div");
      wrapper.className = "history-entry";
      const img = this.root.createElement("img");
      img.src = entry.resultUrl;
      img.title = `job ${entry.jobId}`;
      const button = this.root.createElement("button");
      button.textContent = "use as reference";
      button.addEventListener("click", () => void this.promoteResult(entry.resultUrl));
      wrapper.append(img, button);
      strip.append(wrapper);
    }
  }

  /** Feed a result back in as the next edit's reference image. */
  private async promoteResult(url: string): Promise<void> {
    const blob = await (await fetch(url)).blob();
    const imageId = await this.api.uploadImage(blob);
    try {
      this.rememberBitmap(imageId, await createImageBitmap(blob));
    } catch {
      // backdrop fallback
    }
    const scene = await this.api.segment(imageId, "oracle");
    this.state = withReference(this.state, imageId, scene);
    await this.drawScene("ref-canvas", imageId, scene, null);
    this.status(`result loaded as reference ${imageId}`);
    this.refreshControls();
  }
}

if (typeof document !== "undefined") {
  new EditorApp(document).init();
}

export { EditorApp };
