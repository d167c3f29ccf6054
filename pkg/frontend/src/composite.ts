// Client-side recompositing. Layer PNGs arrive with coverage-premultiplied
// RGB (transparent pixels are mid-gray), so the alpha-over reduces to
//   out = layer + (1 - cover) * (below - mid)
// per channel in [0,1], with mid = 0.5. At cover=1 this is the layer color,
// at cover=0 it leaves `below` untouched, and for straight-alpha sources it
// is algebraically identical to cover*src + (1-cover)*below.

import type { Bitmap, Box } from "./types.js";

export function makeBitmap(width: number, height: number): Bitmap {
  return { width, height, data: new Uint8ClampedArray(width * height * 4) };
}

// Background RGB as float [0,1] working buffer (3 channels per pixel).
function toUnitRgb(src: Bitmap): Float64Array {
  const n = src.width * src.height;
  const out = new Float64Array(n * 3);
  for (let i = 0; i < n; i++) {
    out[i * 3] = src.data[i * 4]! / 255;
    out[i * 3 + 1] = src.data[i * 4 + 1]! / 255;
    out[i * 3 + 2] = src.data[i * 4 + 2]! / 255;
  }
  return out;
}

function overGray(acc: Float64Array, accWidth: number, layer: Bitmap, box: Box): void {
  for (let y = 0; y < box.h; y++) {
    for (let x = 0; x < box.w; x++) {
      const s = (y * layer.width + x) * 4;
      const cover = layer.data[s + 3]! / 255;
      const keep = 1 - cover;
      const d = ((box.y + y) * accWidth + (box.x + x)) * 3;
      for (let c = 0; c < 3; c++) {
        acc[d + c] = layer.data[s + c]! / 255 + keep * (acc[d + c]! - 0.5);
      }
    }
  }
}

function unitToBitmap(acc: Float64Array, width: number, height: number): Bitmap {
  const out = makeBitmap(width, height);
  for (let i = 0; i < width * height; i++) {
    out.data[i * 4] = Math.round(acc[i * 3]! * 255);
    out.data[i * 4 + 1] = Math.round(acc[i * 3 + 1]! * 255);
    out.data[i * 4 + 2] = Math.round(acc[i * 3 + 2]! * 255);
    out.data[i * 4 + 3] = 255;
  }
  return out;
}

export interface PlacedLayer {
  bitmap: Bitmap; // box-sized RGBA, gray-domain
  box: Box;
}

// Alpha-over the visible layers onto the background in the given order.
// `order` holds layer indices bottom-to-top; omitted means natural order.
export function recomposite(
  background: Bitmap,
  layers: PlacedLayer[],
  visible?: boolean[],
  order?: number[],
): Bitmap {
  const acc = toUnitRgb(background);
  const seq = order ?? layers.map((_, i) => i);
  for (const i of seq) {
    if (visible && !visible[i]) continue;
    const layer = layers[i]!;
    overGray(acc, background.width, layer.bitmap, layer.box);
  }
  return unitToBitmap(acc, background.width, background.height);
}

// Standard transparency backdrop: light/dark gray cells.
export function checkerboard(width: number, height: number, cell = 8): Bitmap {
  const out = makeBitmap(width, height);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const dark = (Math.floor(x / cell) + Math.floor(y / cell)) % 2 === 1;
      const v = dark ? 204 : 255;
      const i = (y * width + x) * 4;
      out.data[i] = v;
      out.data[i + 1] = v;
      out.data[i + 2] = v;
      out.data[i + 3] = 255;
    }
  }
  return out;
}

// A layer rendered over the checkerboard for its thumbnail card.
export function layerOnChecker(layer: Bitmap, cell = 8): Bitmap {
  const back = checkerboard(layer.width, layer.height, cell);
  const acc = toUnitRgb(back);
  overGray(acc, layer.width, layer, { x: 0, y: 0, w: layer.width, h: layer.height });
  return unitToBitmap(acc, layer.width, layer.height);
}

export function maxChannelDiff(a: Bitmap, b: Bitmap): number {
  if (a.width !== b.width || a.height !== b.height) {
    throw new Error("bitmap sizes differ");
  }
  let worst = 0;
  for (let i = 0; i < a.data.length; i += 4) {
    for (let c = 0; c < 3; c++) {
      worst = Math.max(worst, Math.abs(a.data[i + c]! - b.data[i + c]!));
    }
  }
  return worst;
}
