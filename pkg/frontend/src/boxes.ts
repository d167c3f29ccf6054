// Box drawing and editing geometry: drag-to-create, move, resize via corner
// handles, all clamped to the image bounds.

import type { Box } from "./types.js";

export type Handle = "nw" | "ne" | "sw" | "se" | "move";

export interface DragState {
  mode: "create" | Handle;
  index: number; // box being edited; -1 while creating
  startX: number;
  startY: number;
  original: Box | null;
}

const clamp = (v: number, lo: number, hi: number) => Math.min(Math.max(v, lo), hi);

export function clampPoint(x: number, y: number, canvas: number): [number, number] {
  return [clamp(Math.round(x), 0, canvas), clamp(Math.round(y), 0, canvas)];
}

// Normalize a drag from (x0,y0) to (x1,y1) into a box, clamped to bounds.
export function dragToBox(x0: number, y0: number, x1: number, y1: number, canvas: number): Box {
  const [ax, ay] = clampPoint(x0, y0, canvas);
  const [bx, by] = clampPoint(x1, y1, canvas);
  const x = Math.min(ax, bx);
  const y = Math.min(ay, by);
  return { x, y, w: Math.abs(bx - ax), h: Math.abs(by - ay) };
}

export function moveBox(box: Box, dx: number, dy: number, canvas: number): Box {
  return {
    x: clamp(Math.round(box.x + dx), 0, canvas - box.w),
    y: clamp(Math.round(box.y + dy), 0, canvas - box.h),
    w: box.w,
    h: box.h,
  };
}

// Resize by dragging one corner; the opposite corner stays fixed. A resize
// that would drop either side below minSize keeps that side at minSize.
export function resizeBox(
  box: Box,
  handle: Exclude<Handle, "move">,
  px: number,
  py: number,
  canvas: number,
  minSize: number,
): Box {
  const [cx, cy] = clampPoint(px, py, canvas);
  let x0 = box.x;
  let y0 = box.y;
  let x1 = box.x + box.w;
  let y1 = box.y + box.h;
  if (handle === "nw" || handle === "sw") x0 = Math.min(cx, x1 - minSize);
  else x1 = Math.max(cx, x0 + minSize);
  if (handle === "nw" || handle === "ne") y0 = Math.min(cy, y1 - minSize);
  else y1 = Math.max(cy, y0 + minSize);
  x0 = clamp(x0, 0, canvas);
  y0 = clamp(y0, 0, canvas);
  x1 = clamp(x1, 0, canvas);
  y1 = clamp(y1, 0, canvas);
  return { x: x0, y: y0, w: x1 - x0, h: y1 - y0 };
}

// Hit-test in priority order: corner handles first, then box interiors,
// topmost box wins. `tol` is the handle radius in image pixels.
export function hitTest(
  boxes: Box[],
  x: number,
  y: number,
  tol: number,
): { index: number; handle: Handle } | null {
  for (let i = boxes.length - 1; i >= 0; i--) {
    const b = boxes[i]!;
    const corners: [Handle, number, number][] = [
      ["nw", b.x, b.y],
      ["ne", b.x + b.w, b.y],
      ["sw", b.x, b.y + b.h],
      ["se", b.x + b.w, b.y + b.h],
    ];
    for (const [handle, hx, hy] of corners) {
      if (Math.abs(x - hx) <= tol && Math.abs(y - hy) <= tol) {
        return { index: i, handle };
      }
    }
  }
  for (let i = boxes.length - 1; i >= 0; i--) {
    const b = boxes[i]!;
    if (x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h) {
      return { index: i, handle: "move" };
    }
  }
  return null;
}

// Snap preview mirroring the server: edges snap outward to the patch grid,
// then clamp to the canvas.
export function snapOutward(box: Box, patch: number, canvas: number): Box {
  const x0 = Math.floor(box.x / patch) * patch;
  const y0 = Math.floor(box.y / patch) * patch;
  const x1 = Math.min(Math.ceil((box.x + box.w) / patch) * patch, canvas);
  const y1 = Math.min(Math.ceil((box.y + box.h) / patch) * patch, canvas);
  return { x: x0, y: y0, w: x1 - x0, h: y1 - y0 };
}
