// Single-page tool: draw boxes on an image, request a decomposition, inspect
// the returned layers, recomposite client-side, and probe box sensitivity.

import { ApiClient, ApiError, DecomposeGate, type OverlapPolicy } from "./api.js";
import { dragToBox, hitTest, moveBox, resizeBox, snapOutward, type DragState } from "./boxes.js";
import {
  checkerboard,
  layerOnChecker,
  makeBitmap,
  recomposite,
  type PlacedLayer,
} from "./composite.js";
import { MAX_PERCENT, PERTURB_KINDS, perturbBoxes } from "./perturb.js";
import {
  addBox,
  deleteBox,
  initialState,
  reorderLayer,
  replaceBox,
  setImage,
  setResponse,
  toggleLayer,
  type SessionState,
} from "./state.js";
import type { Bitmap, Box, DecomposeResponse, PerturbKind } from "./types.js";
import { canAddBox, validateRequest } from "./validate.js";

const SCALE = 12; // screen pixels per image pixel
const HANDLE_TOL = 0.6; // image-space handle radius

async function decodeB64Png(b64: string): Promise<Bitmap> {
  const img = new Image();
  await new Promise<void>((resolve, reject) => {
    img.onload = () => resolve();
    img.onerror = () => reject(new Error("PNG decode failed"));
    img.src = `data:image/png;base64,${b64}`;
  });
  const cv = document.createElement("canvas");
  cv.width = img.naturalWidth;
  cv.height = img.naturalHeight;
  const ctx = cv.getContext("2d")!;
  ctx.drawImage(img, 0, 0);
  const data = ctx.getImageData(0, 0, cv.width, cv.height);
  return { width: cv.width, height: cv.height, data: data.data };
}

function drawBitmap(canvas: HTMLCanvasElement, bmp: Bitmap, scale: number): void {
  canvas.width = bmp.width * scale;
  canvas.height = bmp.height * scale;
  const ctx = canvas.getContext("2d")!;
  const off = new OffscreenCanvas(bmp.width, bmp.height);
  const octx = off.getContext("2d")!;
  octx.putImageData(new ImageData(new Uint8ClampedArray(bmp.data), bmp.width, bmp.height), 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  node.append(...children);
  return node;
}

export class App {
  readonly state: SessionState = initialState();
  readonly client = new ApiClient();
  readonly gate = new DecomposeGate(this.client);
  private drag: DragState | null = null;
  private layerBitmaps: PlacedLayer[] = [];
  private backgroundBitmap: Bitmap | null = null;

  private banner!: HTMLElement;
  private countLabel!: HTMLElement;
  private board!: HTMLCanvasElement;
  private resultPane!: HTMLElement;
  private layerPane!: HTMLElement;
  private previewCanvas!: HTMLCanvasElement;
  private whatifPane!: HTMLElement;

  mount(root: HTMLElement): void {
    root.append(this.buildToolbar(), this.buildMain());
    void this.showHealth();
  }

  private buildToolbar(): HTMLElement {
    const sceneBtn = el("button", { id: "fetch-scene" }, "Fetch scene");
    sceneBtn.onclick = () => void this.fetchScene();

    const file = el("input", { type: "file", accept: "image/png", id: "upload" });
    file.onchange = () => void this.loadUpload(file as HTMLInputElement);

    const steps = el("input", { type: "number", value: "20", min: "1", max: "512", id: "steps" });
    steps.onchange = () => {
      this.state.inference.steps = Number((steps as HTMLInputElement).value);
    };
    const seed = el("input", { type: "number", value: "0", min: "0", id: "seed" });
    seed.onchange = () => {
      const raw = (seed as HTMLInputElement).value.trim();
      this.state.inference.seed = raw === "" ? null : Number(raw);
    };
    const shared = el("input", { type: "checkbox", id: "shared-noise" });
    shared.onchange = () => {
      this.state.inference.shared_noise = (shared as HTMLInputElement).checked;
    };
    const policy = el(
      "select",
      { id: "overlap-policy" },
      el("option", { value: "cancel" }, "cancel in-flight"),
      el("option", { value: "queue" }, "queue"),
    );
    policy.onchange = () => {
      this.gate.policy = (policy as HTMLSelectElement).value as OverlapPolicy;
    };

    const decomposeBtn = el("button", { id: "decompose" }, "Decompose");
    decomposeBtn.onclick = () => void this.decomposeCurrent();

    this.banner = el("div", { id: "banner" });
    this.countLabel = el("span", { id: "box-count" }, "0 boxes");

    return el(
      "header",
      {},
      sceneBtn,
      el("label", {}, "or upload ", file),
      el("label", {}, "steps ", steps),
      el("label", {}, "seed ", seed),
      el("label", {}, "shared noise ", shared),
      el("label", {}, "overlap ", policy),
      decomposeBtn,
      this.countLabel,
      this.banner,
    );
  }

  private buildMain(): HTMLElement {
    this.board = el("canvas", { id: "board" });
    this.board.onpointerdown = (e) => this.onPointerDown(e);
    this.board.onpointermove = (e) => this.onPointerMove(e);
    this.board.onpointerup = () => this.onPointerUp();
    window.addEventListener("keydown", (e) => {
      if (e.key === "Delete" || e.key === "Backspace") this.deleteSelected();
    });

    this.resultPane = el("div", { id: "background-pane" });
    this.layerPane = el("div", { id: "layer-pane" });
    this.previewCanvas = el("canvas", { id: "preview" });
    this.whatifPane = el("div", { id: "whatif-results" });

    const kind = el(
      "select",
      { id: "whatif-kind" },
      ...PERTURB_KINDS.map((k) => el("option", { value: k }, k)),
    );
    const pct = el("input", {
      type: "range",
      min: "0",
      max: String(MAX_PERCENT),
      value: "0",
      id: "whatif-percent",
    });
    const pctLabel = el("span", { id: "whatif-label" }, "0%");
    pct.oninput = () => {
      pctLabel.textContent = `${(pct as HTMLInputElement).value}%`;
    };
    const whatifBtn = el("button", { id: "whatif-run" }, "What if?");
    whatifBtn.onclick = () =>
      void this.runWhatIf(
        (kind as HTMLSelectElement).value as PerturbKind,
        Number((pct as HTMLInputElement).value),
      );

    return el(
      "main",
      {},
      el("section", {}, el("h2", {}, "Source + boxes"), this.board),
      el("section", {}, el("h2", {}, "Background"), this.resultPane),
      el("section", {}, el("h2", {}, "Layers"), this.layerPane),
      el("section", {}, el("h2", {}, "Recomposite preview"), this.previewCanvas),
      el(
        "section",
        {},
        el("h2", {}, "Box sensitivity"),
        el("div", {}, kind, pct, pctLabel, whatifBtn),
        this.whatifPane,
      ),
    );
  }

  private say(text: string): void {
    this.state.message = text;
    this.banner.textContent = text;
    this.banner.classList.toggle("error", text !== "");
  }

  private async showHealth(): Promise<void> {
    try {
      const h = await this.client.health();
      this.say("");
      this.banner.textContent = `model ${h.checkpoint}`;
    } catch {
      this.say("server unreachable");
    }
  }

  async fetchScene(): Promise<void> {
    try {
      const resp = await this.client.scenes(1);
      const scene = resp.scenes[0]!;
      const bmp = await decodeB64Png(scene.composite);
      setImage(this.state, bmp, scene.composite);
      this.state.patch = resp.patch;
      for (const b of scene.boxes) addBox(this.state, b);
      this.redrawBoard();
      this.say("");
    } catch (err) {
      this.say(err instanceof ApiError ? err.message : "server unreachable");
    }
  }

  private async loadUpload(input: HTMLInputElement): Promise<void> {
    const f = input.files?.[0];
    if (!f) return;
    const buf = new Uint8Array(await f.arrayBuffer());
    let bin = "";
    for (const byte of buf) bin += String.fromCharCode(byte);
    const b64 = btoa(bin);
    const bmp = await decodeB64Png(b64);
    setImage(this.state, bmp, b64);
    this.redrawBoard();
  }

  // --- box editing --------------------------------------------------------

  private boardPoint(e: PointerEvent): [number, number] {
    const r = this.board.getBoundingClientRect();
    return [(e.clientX - r.left) / SCALE, (e.clientY - r.top) / SCALE];
  }

  private onPointerDown(e: PointerEvent): void {
    if (!this.state.image) return;
    const [x, y] = this.boardPoint(e);
    const hit = hitTest(this.state.draftBoxes, x, y, HANDLE_TOL);
    if (hit) {
      this.state.selected = hit.index;
      this.drag = {
        mode: hit.handle,
        index: hit.index,
        startX: x,
        startY: y,
        original: { ...this.state.draftBoxes[hit.index]! },
      };
    } else {
      if (!canAddBox(this.state.draftBoxes.length)) {
        this.say("at most 8 boxes; delete one first");
        return;
      }
      this.drag = { mode: "create", index: -1, startX: x, startY: y, original: null };
    }
    this.redrawBoard();
  }

  private onPointerMove(e: PointerEvent): void {
    if (!this.drag || !this.state.image) return;
    const [x, y] = this.boardPoint(e);
    const d = this.drag;
    const canvas = this.state.canvas;
    if (d.mode === "create") {
      const box = dragToBox(d.startX, d.startY, x, y, canvas);
      this.redrawBoard(box);
      return;
    }
    const base = d.original!;
    const next =
      d.mode === "move"
        ? moveBox(base, x - d.startX, y - d.startY, canvas)
        : resizeBox(base, d.mode, x, y, canvas, this.state.patch);
    replaceBox(this.state, d.index, next);
    this.redrawBoard();
  }

  private onPointerUp(): void {
    if (!this.drag) return;
    const ghost = this.lastGhost;
    if (this.drag.mode === "create" && ghost && ghost.w >= 1 && ghost.h >= 1) {
      addBox(this.state, ghost);
    }
    this.lastGhost = null;
    this.drag = null;
    this.redrawBoard();
  }

  private deleteSelected(): void {
    if (this.state.selected >= 0) {
      deleteBox(this.state, this.state.selected);
      this.redrawBoard();
    }
  }

  private lastGhost: Box | null = null;

  private redrawBoard(ghost?: Box): void {
    if (ghost) this.lastGhost = ghost;
    const img = this.state.image;
    if (!img) return;
    drawBitmap(this.board, img, SCALE);
    const ctx = this.board.getContext("2d")!;
    ctx.lineWidth = 2;
    this.state.draftBoxes.forEach((b, i) => {
      ctx.strokeStyle = i === this.state.selected ? "#ff3366" : "#22aaff";
      ctx.strokeRect(b.x * SCALE, b.y * SCALE, b.w * SCALE, b.h * SCALE);
      const snapped = snapOutward(b, this.state.patch, this.state.canvas);
      ctx.setLineDash([4, 4]);
      ctx.strokeStyle = "#88ddff";
      ctx.strokeRect(snapped.x * SCALE, snapped.y * SCALE, snapped.w * SCALE, snapped.h * SCALE);
      ctx.setLineDash([]);
    });
    if (ghost) {
      ctx.strokeStyle = "#ffcc00";
      ctx.strokeRect(ghost.x * SCALE, ghost.y * SCALE, ghost.w * SCALE, ghost.h * SCALE);
    }
    this.countLabel.textContent = `${this.state.draftBoxes.length} boxes`;
  }

  // --- decomposition ------------------------------------------------------

  async decomposeCurrent(boxesOverride?: Box[], target?: HTMLElement): Promise<DecomposeResponse | null> {
    const s = this.state;
    if (!s.imageB64) {
      this.say("load an image first");
      return null;
    }
    const boxes = boxesOverride ?? s.draftBoxes;
    const bad = validateRequest(boxes, s.canvas, s.inference.steps, s.inference.seed);
    if (bad) {
      this.say(bad.message);
      return null;
    }
    try {
      const resp = await this.gate.submit({
        image: s.imageB64,
        boxes,
        steps: s.inference.steps,
        ...(s.inference.seed === null ? {} : { seed: s.inference.seed }),
        shared_noise: s.inference.shared_noise,
      });
      if (!resp) return null; // superseded or aborted
      if (target) {
        await this.renderInto(resp, target);
      } else {
        setResponse(s, resp);
        await this.renderResponse(resp);
      }
      return resp;
    } catch (err) {
      this.say(err instanceof ApiError ? `${err.message}` : "server unreachable");
      return null;
    }
  }

  private async renderResponse(resp: DecomposeResponse): Promise<void> {
    this.backgroundBitmap = await decodeB64Png(resp.background);
    this.layerBitmaps = [];
    for (let i = 0; i < resp.layers.length; i++) {
      const entry = resp.layers[i]!;
      this.layerBitmaps.push({ bitmap: await decodeB64Png(entry.rgba), box: entry.box });
    }

    this.resultPane.replaceChildren();
    const bgCanvas = el("canvas", {});
    drawBitmap(bgCanvas, this.backgroundBitmap, SCALE / 2);
    this.resultPane.append(bgCanvas);

    this.layerPane.replaceChildren();
    this.layerBitmaps.forEach((pl, i) => {
      const card = el("div", { class: "layer-card" });
      const cv = el("canvas", {});
      drawBitmap(cv, layerOnChecker(pl.bitmap), SCALE / 2);
      const vis = el("input", { type: "checkbox" }) as HTMLInputElement;
      vis.checked = true;
      vis.onchange = () => {
        toggleLayer(this.state, i);
        this.renderPreview();
      };
      const up = el("button", {}, "up");
      up.onclick = () => {
        reorderLayer(this.state, i, 1);
        this.renderPreview();
      };
      const down = el("button", {}, "down");
      down.onclick = () => {
        reorderLayer(this.state, i, -1);
        this.renderPreview();
      };
      card.append(
        el("div", {}, `layer ${i} @ (${pl.box.x},${pl.box.y}) ${pl.box.w}x${pl.box.h}`),
        cv,
        el("label", {}, "visible ", vis),
        up,
        down,
      );
      this.layerPane.append(card);
    });
    this.renderPreview();
  }

  private renderPreview(): void {
    if (!this.backgroundBitmap) return;
    const preview = recomposite(
      this.backgroundBitmap,
      this.layerBitmaps,
      this.state.layerVisibility,
      this.state.layerOrder,
    );
    drawBitmap(this.previewCanvas, preview, SCALE / 2);
  }

  private async renderInto(resp: DecomposeResponse, target: HTMLElement): Promise<void> {
    const bg = await decodeB64Png(resp.background);
    const placed: PlacedLayer[] = [];
    for (const entry of resp.layers) {
      placed.push({ bitmap: await decodeB64Png(entry.rgba), box: entry.box });
    }
    const cv = el("canvas", {});
    drawBitmap(cv, recomposite(bg, placed), SCALE / 2);
    target.replaceChildren(cv);
  }

  // --- what-if ------------------------------------------------------------

  async runWhatIf(kind: PerturbKind, percent: number): Promise<void> {
    const s = this.state;
    if (!s.imageB64 || s.draftBoxes.length === 0) {
      this.say("draw boxes first");
      return;
    }
    const moved = perturbBoxes(s.draftBoxes, kind, percent, s.canvas, s.patch);
    if ("error" in moved) {
      this.say(moved.error);
      return;
    }
    this.whatifPane.replaceChildren(
      el("div", { class: "whatif-slot" }, el("h3", {}, "precise")),
      el("div", { class: "whatif-slot" }, el("h3", {}, `${kind} ${percent}%`)),
    );
    const [left, right] = Array.from(this.whatifPane.children) as HTMLElement[];
    await this.decomposeCurrent(s.draftBoxes, left!);
    await this.decomposeCurrent(moved.boxes, right!);
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  new App().mount(document.getElementById("app")!);
}
