// Session state and its transitions. Pure data + reducer-style helpers so
// the invariants (at most 8 in-bounds boxes, visibility array aligned with
// the last response) are testable without a DOM.

import type { Bitmap, Box, DecomposeResponse, InferenceSettings } from "./types.js";
import { MAX_BOXES, validateBox } from "./validate.js";

export interface SessionState {
  image: Bitmap | null;
  imageB64: string | null; // PNG bytes as sent to the server
  canvas: number;
  patch: number;
  draftBoxes: Box[];
  selected: number; // index into draftBoxes, -1 for none
  lastResponse: DecomposeResponse | null;
  layerVisibility: boolean[];
  layerOrder: number[]; // bottom-to-top indices into lastResponse.layers
  inference: InferenceSettings;
  message: string; // inline status/error banner text
}

export function initialState(): SessionState {
  return {
    image: null,
    imageB64: null,
    canvas: 0,
    patch: 1,
    draftBoxes: [],
    selected: -1,
    lastResponse: null,
    layerVisibility: [],
    layerOrder: [],
    inference: { steps: 20, seed: 0, shared_noise: false },
    message: "",
  };
}

export function setImage(s: SessionState, image: Bitmap, b64: string): void {
  s.image = image;
  s.imageB64 = b64;
  s.canvas = image.width;
  s.draftBoxes = [];
  s.selected = -1;
  s.lastResponse = null;
  s.layerVisibility = [];
  s.layerOrder = [];
  s.message = "";
}

// Returns false (and sets the banner) when the box cannot be added.
export function addBox(s: SessionState, box: Box): boolean {
  if (s.draftBoxes.length >= MAX_BOXES) {
    s.message = `at most ${MAX_BOXES} boxes; delete one first`;
    return false;
  }
  const bad = validateBox(box, s.draftBoxes.length, s.canvas);
  if (bad) {
    s.message = bad.message;
    return false;
  }
  s.draftBoxes.push(box);
  s.selected = s.draftBoxes.length - 1;
  s.message = "";
  return true;
}

export function replaceBox(s: SessionState, index: number, box: Box): boolean {
  if (validateBox(box, index, s.canvas)) return false;
  s.draftBoxes[index] = box;
  return true;
}

export function deleteBox(s: SessionState, index: number): void {
  s.draftBoxes.splice(index, 1);
  s.selected = -1;
}

export function setResponse(s: SessionState, resp: DecomposeResponse): void {
  s.lastResponse = resp;
  s.layerVisibility = resp.layers.map(() => true);
  s.layerOrder = resp.layers.map((_, i) => i);
  s.message = "";
}

export function toggleLayer(s: SessionState, index: number): void {
  if (index >= 0 && index < s.layerVisibility.length) {
    s.layerVisibility[index] = !s.layerVisibility[index];
  }
}

// Move a layer one slot up or down in the compositing order.
export function reorderLayer(s: SessionState, index: number, delta: -1 | 1): void {
  const pos = s.layerOrder.indexOf(index);
  const next = pos + delta;
  if (pos < 0 || next < 0 || next >= s.layerOrder.length) return;
  const tmp = s.layerOrder[pos]!;
  s.layerOrder[pos] = s.layerOrder[next]!;
  s.layerOrder[next] = tmp;
}
