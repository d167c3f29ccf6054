import { describe, expect, it } from "vitest";

import {
  checkerboard,
  layerOnChecker,
  makeBitmap,
  maxChannelDiff,
  recomposite,
} from "../src/composite.js";
import type { Bitmap } from "../src/types.js";

function solid(width: number, height: number, rgba: [number, number, number, number]): Bitmap {
  const bmp = makeBitmap(width, height);
  for (let i = 0; i < width * height; i++) bmp.data.set(rgba, i * 4);
  return bmp;
}

// Gray-domain encoding of a solid color at a given coverage: the PNG byte is
// round(255 * (cover * trueUnit + (1 - cover) / 2)).
function grayLayer(
  width: number,
  height: number,
  trueRgb: [number, number, number],
  cover: number,
): Bitmap {
  const px: [number, number, number, number] = [
    Math.round(255 * (cover * (trueRgb[0] / 255) + (1 - cover) / 2)),
    Math.round(255 * (cover * (trueRgb[1] / 255) + (1 - cover) / 2)),
    Math.round(255 * (cover * (trueRgb[2] / 255) + (1 - cover) / 2)),
    Math.round(255 * cover),
  ];
  return solid(width, height, px);
}

describe("recomposite", () => {
  it("returns the background untouched with no layers", () => {
    const bg = solid(4, 4, [10, 200, 30, 255]);
    const out = recomposite(bg, []);
    expect(Array.from(out.data)).toEqual(Array.from(bg.data));
  });

  it("fully opaque layer replaces its box region only", () => {
    const bg = solid(4, 4, [0, 0, 0, 255]);
    const layer = grayLayer(2, 2, [255, 0, 0], 1);
    const out = recomposite(bg, [{ bitmap: layer, box: { x: 1, y: 1, w: 2, h: 2 } }]);
    const at = (x: number, y: number) => Array.from(out.data.slice((y * 4 + x) * 4, (y * 4 + x) * 4 + 3));
    expect(at(0, 0)).toEqual([0, 0, 0]);
    expect(at(1, 1)).toEqual([255, 0, 0]);
    expect(at(2, 2)).toEqual([255, 0, 0]);
    expect(at(3, 3)).toEqual([0, 0, 0]);
  });

  it("fully transparent layer leaves the background intact within rounding", () => {
    const bg = solid(3, 3, [40, 90, 200, 255]);
    const layer = grayLayer(3, 3, [255, 255, 255], 0);
    const out = recomposite(bg, [{ bitmap: layer, box: { x: 0, y: 0, w: 3, h: 3 } }]);
    expect(maxChannelDiff(out, bg)).toBeLessThanOrEqual(1);
  });

  it("half coverage blends toward the layer color", () => {
    const bg = solid(1, 1, [0, 0, 0, 255]);
    const layer = grayLayer(1, 1, [255, 255, 255], 0.5);
    const out = recomposite(bg, [{ bitmap: layer, box: { x: 0, y: 0, w: 1, h: 1 } }]);
    // 0.5*255 + 0.5*0 = 127.5; PNG-byte rounding allows 1 step
    expect(Math.abs(out.data[0]! - 128)).toBeLessThanOrEqual(1);
  });

  it("visibility toggles skip layers", () => {
    const bg = solid(2, 2, [0, 0, 0, 255]);
    const red = grayLayer(2, 2, [255, 0, 0], 1);
    const blue = grayLayer(2, 2, [0, 0, 255], 1);
    const layers = [
      { bitmap: red, box: { x: 0, y: 0, w: 2, h: 2 } },
      { bitmap: blue, box: { x: 0, y: 0, w: 2, h: 2 } },
    ];
    const both = recomposite(bg, layers, [true, true]);
    expect(Array.from(both.data.slice(0, 3))).toEqual([0, 0, 255]);
    const noBlue = recomposite(bg, layers, [true, false]);
    expect(Array.from(noBlue.data.slice(0, 3))).toEqual([255, 0, 0]);
    const none = recomposite(bg, layers, [false, false]);
    expect(Array.from(none.data.slice(0, 3))).toEqual([0, 0, 0]);
  });

  it("order controls which opaque layer wins", () => {
    const bg = solid(2, 2, [0, 0, 0, 255]);
    const red = grayLayer(2, 2, [255, 0, 0], 1);
    const blue = grayLayer(2, 2, [0, 0, 255], 1);
    const layers = [
      { bitmap: red, box: { x: 0, y: 0, w: 2, h: 2 } },
      { bitmap: blue, box: { x: 0, y: 0, w: 2, h: 2 } },
    ];
    const swapped = recomposite(bg, layers, undefined, [1, 0]);
    expect(Array.from(swapped.data.slice(0, 3))).toEqual([255, 0, 0]);
  });
});

describe("checkerboard", () => {
  it("uses 8px cells by default", () => {
    const cb = checkerboard(32, 32);
    const at = (x: number, y: number) => cb.data[(y * 32 + x) * 4]!;
    expect(at(0, 0)).toBe(255);
    expect(at(7, 7)).toBe(255);
    expect(at(8, 0)).toBe(204);
    expect(at(0, 8)).toBe(204);
    expect(at(8, 8)).toBe(255);
    expect(at(16, 0)).toBe(255);
  });

  it("transparent layer over the checker shows the checker", () => {
    const layer = grayLayer(16, 16, [0, 0, 0], 0);
    const shown = layerOnChecker(layer);
    const plain = checkerboard(16, 16);
    expect(maxChannelDiff(shown, plain)).toBeLessThanOrEqual(1);
  });

  it("opaque layer over the checker shows the layer", () => {
    const layer = grayLayer(16, 16, [10, 250, 60], 1);
    const shown = layerOnChecker(layer);
    expect(Array.from(shown.data.slice(0, 3))).toEqual([10, 250, 60]);
  });
});
