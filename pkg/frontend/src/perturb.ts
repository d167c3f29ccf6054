// What-if box degradations, applied client-side before a re-decompose so the
// user can judge sensitivity. Same three transform families the evaluation
// sweep uses; the slider picks a single fraction instead of a random range.

import type { Box, PerturbKind } from "./types.js";

export const PERTURB_KINDS: PerturbKind[] = ["excessive", "offset", "inadequate"];
export const MAX_PERCENT = 20; // slider range 0..20%

const clamp = (v: number, lo: number, hi: number) => Math.min(Math.max(v, lo), hi);

// Scale or translate one box by `fraction` of its size. Excessive grows
// around the center, inadequate shrinks, offset translates (down-right).
// Returns null when the result would collapse below minSize.
export function perturbBox(
  box: Box,
  kind: PerturbKind,
  fraction: number,
  canvas: number,
  minSize: number,
): Box | null {
  if (fraction < 0) throw new Error("fraction must be >= 0");
  if (kind === "offset") {
    const dx = Math.round(fraction * box.w);
    const dy = Math.round(fraction * box.h);
    return {
      x: clamp(box.x + dx, 0, canvas - box.w),
      y: clamp(box.y + dy, 0, canvas - box.h),
      w: box.w,
      h: box.h,
    };
  }
  const scale = kind === "excessive" ? 1 + fraction : 1 - fraction;
  const cx = box.x + box.w / 2;
  const cy = box.y + box.h / 2;
  const x0 = clamp(Math.round(cx - (box.w * scale) / 2), 0, canvas);
  const y0 = clamp(Math.round(cy - (box.h * scale) / 2), 0, canvas);
  const x1 = clamp(Math.round(cx + (box.w * scale) / 2), 0, canvas);
  const y1 = clamp(Math.round(cy + (box.h * scale) / 2), 0, canvas);
  if (x1 - x0 < minSize || y1 - y0 < minSize) return null;
  return { x: x0, y: y0, w: x1 - x0, h: y1 - y0 };
}

// Whole-list transform; degenerate results report which box collapsed.
export function perturbBoxes(
  boxes: Box[],
  kind: PerturbKind,
  percent: number,
  canvas: number,
  minSize: number,
): { boxes: Box[] } | { error: string } {
  const out: Box[] = [];
  for (let i = 0; i < boxes.length; i++) {
    const moved = perturbBox(boxes[i]!, kind, percent / 100, canvas, minSize);
    if (!moved) {
      return { error: `box ${i} collapses below ${minSize}px at ${percent}%` };
    }
    out.push(moved);
  }
  return { boxes: out };
}
