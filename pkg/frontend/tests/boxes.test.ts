import { describe, expect, it } from "vitest";

import { clampPoint, dragToBox, hitTest, moveBox, resizeBox, snapOutward } from "../src/boxes.js";

const CANVAS = 64;

describe("dragToBox", () => {
  it("drag from (10,10) to (50,40) yields {10,10,40,30}", () => {
    expect(dragToBox(10, 10, 50, 40, CANVAS)).toEqual({ x: 10, y: 10, w: 40, h: 30 });
  });

  it("normalizes reversed drags", () => {
    expect(dragToBox(50, 40, 10, 10, CANVAS)).toEqual({ x: 10, y: 10, w: 40, h: 30 });
  });

  it("clamps endpoints to the canvas", () => {
    expect(dragToBox(-5, 2, 70, 10, CANVAS)).toEqual({ x: 0, y: 2, w: 64, h: 8 });
  });
});

describe("clampPoint", () => {
  it("rounds and clamps into the canvas", () => {
    expect(clampPoint(-3.2, 70.6, CANVAS)).toEqual([0, 64]);
    expect(clampPoint(10.4, 10.6, CANVAS)).toEqual([10, 11]);
  });
});

describe("moveBox", () => {
  it("translates freely inside the canvas", () => {
    expect(moveBox({ x: 10, y: 10, w: 8, h: 8 }, 5, -3, CANVAS)).toEqual({ x: 15, y: 7, w: 8, h: 8 });
  });

  it("clamps so the box stays in bounds", () => {
    expect(moveBox({ x: 10, y: 10, w: 8, h: 8 }, 100, 100, CANVAS)).toEqual({
      x: CANVAS - 8,
      y: CANVAS - 8,
      w: 8,
      h: 8,
    });
    expect(moveBox({ x: 10, y: 10, w: 8, h: 8 }, -100, -100, CANVAS)).toEqual({ x: 0, y: 0, w: 8, h: 8 });
  });
});

describe("resizeBox", () => {
  it("keeps the opposite corner fixed", () => {
    const box = { x: 10, y: 10, w: 20, h: 20 };
    expect(resizeBox(box, "se", 40, 35, CANVAS, 1)).toEqual({ x: 10, y: 10, w: 30, h: 25 });
    expect(resizeBox(box, "nw", 5, 5, CANVAS, 1)).toEqual({ x: 5, y: 5, w: 25, h: 25 });
  });

  it("refuses to shrink below the minimum size", () => {
    const box = { x: 10, y: 10, w: 4, h: 4 };
    const out = resizeBox(box, "se", 10, 10, CANVAS, 4);
    expect(out.w).toBeGreaterThanOrEqual(4);
    expect(out.h).toBeGreaterThanOrEqual(4);
  });
});

describe("hitTest", () => {
  const boxes = [
    { x: 10, y: 10, w: 20, h: 20 },
    { x: 15, y: 15, w: 20, h: 20 },
  ];

  it("prefers corner handles over moves", () => {
    expect(hitTest(boxes, 10, 10, 1)).toEqual({ index: 0, handle: "nw" });
    expect(hitTest(boxes, 35, 35, 1)).toEqual({ index: 1, handle: "se" });
  });

  it("topmost box wins on overlap", () => {
    expect(hitTest(boxes, 20, 20, 0.5)).toEqual({ index: 1, handle: "move" });
  });

  it("misses outside every box", () => {
    expect(hitTest(boxes, 50, 50, 1)).toBeNull();
  });
});

describe("snapOutward", () => {
  it("expands edges to the patch grid", () => {
    expect(snapOutward({ x: 3, y: 5, w: 5, h: 2 }, 4, CANVAS)).toEqual({ x: 0, y: 4, w: 8, h: 4 });
  });

  it("is the identity on aligned boxes", () => {
    expect(snapOutward({ x: 8, y: 12, w: 16, h: 4 }, 4, CANVAS)).toEqual({ x: 8, y: 12, w: 16, h: 4 });
  });

  it("clamps to the canvas", () => {
    expect(snapOutward({ x: 61, y: 61, w: 3, h: 3 }, 4, CANVAS)).toEqual({ x: 60, y: 60, w: 4, h: 4 });
  });
});
