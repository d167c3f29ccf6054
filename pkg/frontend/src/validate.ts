// Client-side request validation. The rules mirror the server exactly so the
// UI can never emit a request the server would reject.

import type { Box } from "./types.js";

export const MAX_BOXES = 8;
export const MAX_STEPS = 512;

export interface Rejection {
  field: string;
  message: string;
}

function isInt(v: unknown): v is number {
  return typeof v === "number" && Number.isInteger(v);
}

export function validateBox(box: Box, index: number, canvas: number): Rejection | null {
  const field = `boxes[${index}]`;
  for (const key of ["x", "y", "w", "h"] as const) {
    if (!isInt(box[key])) {
      return { field, message: `${field}.${key} must be an integer` };
    }
  }
  if (box.w < 1 || box.h < 1) {
    return { field, message: `${field} must have positive extent` };
  }
  if (box.x < 0 || box.y < 0 || box.x + box.w > canvas || box.y + box.h > canvas) {
    return { field, message: `${field} lies outside the image` };
  }
  return null;
}

export function validateBoxes(boxes: Box[], canvas: number): Rejection | null {
  if (boxes.length < 1 || boxes.length > MAX_BOXES) {
    return { field: "boxes", message: `boxes must be a list of 1..${MAX_BOXES} boxes` };
  }
  for (let i = 0; i < boxes.length; i++) {
    const bad = validateBox(boxes[i]!, i, canvas);
    if (bad) return bad;
  }
  return null;
}

export function validateSteps(steps: number): Rejection | null {
  if (!isInt(steps) || steps < 1 || steps > MAX_STEPS) {
    return { field: "steps", message: `steps must be in [1, ${MAX_STEPS}]` };
  }
  return null;
}

export function validateSeed(seed: number | null): Rejection | null {
  if (seed === null) return null;
  if (!isInt(seed) || seed < 0) {
    return { field: "seed", message: "seed must be a non-negative integer" };
  }
  return null;
}

// Gate a whole request; returns the first rejection or null when sendable.
export function validateRequest(
  boxes: Box[],
  canvas: number,
  steps: number,
  seed: number | null,
): Rejection | null {
  return validateBoxes(boxes, canvas) ?? validateSteps(steps) ?? validateSeed(seed);
}

// Can another box be started? Used to block the 9th box at draw time.
export function canAddBox(count: number): boolean {
  return count < MAX_BOXES;
}
