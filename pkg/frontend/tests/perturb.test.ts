import { describe, expect, it } from "vitest";

import { perturbBox, perturbBoxes } from "../src/perturb.js";

const CANVAS = 64;

describe("perturbBox", () => {
  it("0% is the identity for every kind", () => {
    const box = { x: 10, y: 10, w: 20, h: 20 };
    for (const kind of ["offset", "excessive", "inadequate"] as const) {
      expect(perturbBox(box, kind, 0, CANVAS, 1)).toEqual(box);
    }
  });

  it("excessive 10% grows (10,10,20,20) to (9,9,22,22)", () => {
    const box = { x: 10, y: 10, w: 20, h: 20 };
    expect(perturbBox(box, "excessive", 0.1, CANVAS, 1)).toEqual({ x: 9, y: 9, w: 22, h: 22 });
  });

  it("inadequate 10% shrinks around the center", () => {
    const box = { x: 10, y: 10, w: 20, h: 20 };
    expect(perturbBox(box, "inadequate", 0.1, CANVAS, 1)).toEqual({ x: 11, y: 11, w: 18, h: 18 });
  });

  it("offset translates down-right by round(f * extent), size preserved", () => {
    const box = { x: 10, y: 10, w: 20, h: 10 };
    expect(perturbBox(box, "offset", 0.1, CANVAS, 1)).toEqual({ x: 12, y: 11, w: 20, h: 10 });
  });

  it("offset clamps at the canvas edge", () => {
    const box = { x: 50, y: 58, w: 14, h: 6 };
    expect(perturbBox(box, "offset", 0.2, CANVAS, 1)).toEqual({ x: 50, y: 58, w: 14, h: 6 });
  });

  it("excessive growth clamps to the canvas", () => {
    const out = perturbBox({ x: 0, y: 0, w: 60, h: 60 }, "excessive", 0.2, CANVAS, 1);
    expect(out).not.toBeNull();
    expect(out!.x).toBeGreaterThanOrEqual(0);
    expect(out!.y).toBeGreaterThanOrEqual(0);
    expect(out!.x + out!.w).toBeLessThanOrEqual(CANVAS);
    expect(out!.y + out!.h).toBeLessThanOrEqual(CANVAS);
    expect(out!.w).toBeGreaterThanOrEqual(60);
  });

  it("inadequate that collapses below the minimum returns null", () => {
    const box = { x: 10, y: 10, w: 5, h: 5 };
    expect(perturbBox(box, "inadequate", 0.2, CANVAS, 5)).toBeNull();
  });
});

describe("perturbBoxes", () => {
  it("maps every box and keeps order", () => {
    const boxes = [
      { x: 0, y: 0, w: 8, h: 8 },
      { x: 20, y: 20, w: 10, h: 10 },
    ];
    const res = perturbBoxes(boxes, "offset", 10, CANVAS, 1);
    expect("boxes" in res).toBe(true);
    if ("boxes" in res) {
      expect(res.boxes).toHaveLength(2);
      expect(res.boxes[1]).toEqual({ x: 21, y: 21, w: 10, h: 10 });
    }
  });

  it("reports which box collapsed", () => {
    const boxes = [
      { x: 0, y: 0, w: 20, h: 20 },
      { x: 30, y: 30, w: 5, h: 5 },
    ];
    const res = perturbBoxes(boxes, "inadequate", 20, CANVAS, 5);
    expect("error" in res).toBe(true);
    if ("error" in res) expect(res.error).toMatch(/box 1/);
  });
});
