import { describe, expect, it } from "vitest";

import {
  RECORD_FLOATS,
  SH_C0,
  bufferHash,
  indicesInBox,
  parseSplats,
  sceneBounds,
} from "../src/splats.js";

function makeBuffer(splats: Array<{ pos: number[]; color?: number[]; logit?: number }>): ArrayBuffer {
  const raw = new Float32Array(splats.length * RECORD_FLOATS);
  splats.forEach((s, i) => {
    const base = i * RECORD_FLOATS;
    raw.set(s.pos, base);
    const color = s.color ?? [0.5, 0.5, 0.5];
    for (let c = 0; c < 3; c++) raw[base + 6 + c] = (color[c] - 0.5) / SH_C0;
    raw[base + 54] = s.logit ?? 0;
    raw[base + 58] = 1; // unit quaternion
  });
  return raw.buffer;
}

describe("parseSplats", () => {
  it("decodes positions, colors and alphas", () => {
    const buffer = makeBuffer([
      { pos: [1, 2, 3], color: [1, 0, 0], logit: 100 },
      { pos: [-1, 0, 4], color: [0, 0, 0], logit: -100 },
    ]);
    const splats = parseSplats(buffer);
    expect(splats.count).toBe(2);
    expect(Array.from(splats.positions.slice(0, 3))).toEqual([1, 2, 3]);
    expect(Array.from(splats.colors.slice(0, 3))).toEqual([255, 0, 0]);
    expect(Array.from(splats.colors.slice(3, 6))).toEqual([0, 0, 0]);
    expect(splats.alphas[0]).toBeCloseTo(1, 5);
    expect(splats.alphas[1]).toBeCloseTo(0, 5);
  });

  it("clamps colors outside [0,1]", () => {
    const raw = new Float32Array(RECORD_FLOATS);
    raw[6] = 10;   // far beyond white
    raw[7] = -10;  // far below black
    const splats = parseSplats(raw.buffer);
    expect(splats.colors[0]).toBe(255);
    expect(splats.colors[1]).toBe(0);
  });

  it("rejects misaligned buffers", () => {
    expect(() => parseSplats(new ArrayBuffer(13))).toThrow(/multiple/);
  });

  it("handles the empty scene", () => {
    const splats = parseSplats(new ArrayBuffer(0));
    expect(splats.count).toBe(0);
  });
});

describe("sceneBounds / indicesInBox", () => {
  it("computes exact min/max", () => {
    const splats = parseSplats(makeBuffer([
      { pos: [0, 0, 0] }, { pos: [1, 2, 3] }, { pos: [-1, 5, 0.5] },
    ]));
    const bounds = sceneBounds(splats.positions);
    expect(bounds.min).toEqual([-1, 0, 0]);
    expect(bounds.max).toEqual([1, 5, 3]);
  });

  it("selects splats inside a box, boundary inclusive", () => {
    const splats = parseSplats(makeBuffer([
      { pos: [0, 0, 0] }, { pos: [1, 1, 1] }, { pos: [2, 2, 2] },
    ]));
    const inside = indicesInBox(splats.positions, { min: [0, 0, 0], max: [1, 1, 1] });
    expect(Array.from(inside)).toEqual([0, 1]);
  });
});

describe("bufferHash", () => {
  it("is stable and content-sensitive", async () => {
    const a = makeBuffer([{ pos: [1, 2, 3] }]);
    const b = makeBuffer([{ pos: [1, 2, 3] }]);
    const c = makeBuffer([{ pos: [1, 2, 4] }]);
    expect(await bufferHash(a)).toBe(await bufferHash(b));
    expect(await bufferHash(a)).not.toBe(await bufferHash(c));
    expect(await bufferHash(a)).toMatch(/^[0-9a-f]{64}$/);
  });
});
