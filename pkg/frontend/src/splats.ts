// Parsing of the binary splat stream: 62 little-endian float32 per record in
// the order x y z nx ny nz f_dc_0..2 f_rest_0..44 opacity scale_0..2 rot_0..3.

import type { Box } from "./types.js";

export const RECORD_FLOATS = 62;
export const SH_C0 = 0.28209479177387814;

const OFF_DC = 6;
const OFF_OPACITY = 54;

export interface SplatBuffer {
  count: number;
  /** xyz triplets */
  positions: Float32Array;
  /** rgb triplets in [0,255] derived from the DC spherical harmonics */
  colors: Uint8ClampedArray;
  /** per-splat opacity in [0,1] (sigmoid of the stored logit) */
  alphas: Float32Array;
}

export function parseSplats(buffer: ArrayBuffer): SplatBuffer {
  if (buffer.byteLength % (RECORD_FLOATS * 4) !== 0) {
    throw new Error(
      `splat buffer size ${buffer.byteLength} is not a multiple of ${RECORD_FLOATS * 4}`,
    );
  }
  const count = buffer.byteLength / (RECORD_FLOATS * 4);
  const raw = new Float32Array(buffer);
  const positions = new Float32Array(count * 3);
  const colors = new Uint8ClampedArray(count * 3);
  const alphas = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    const base = i * RECORD_FLOATS;
    positions[i * 3] = raw[base];
    positions[i * 3 + 1] = raw[base + 1];
    positions[i * 3 + 2] = raw[base + 2];
    for (let c = 0; c < 3; c++) {
      colors[i * 3 + c] = Math.round(clamp01(raw[base + OFF_DC + c] * SH_C0 + 0.5) * 255);
    }
    alphas[i] = 1 / (1 + Math.exp(-raw[base + OFF_OPACITY]));
  }
  return { count, positions, colors, alphas };
}

function clamp01(v: number): number {
  return v < 0 ? 0 : v > 1 ? 1 : v;
}

export function sceneBounds(positions: Float32Array): Box {
  const min = [Infinity, Infinity, Infinity];
  const max = [-Infinity, -Infinity, -Infinity];
  for (let i = 0; i < positions.length; i += 3) {
    for (let a = 0; a < 3; a++) {
      const v = positions[i + a];
      if (v < min[a]) min[a] = v;
      if (v > max[a]) max[a] = v;
    }
  }
  return { min, max };
}

/** Splat indices whose positions fall inside the box (bounds inclusive). */
export function indicesInBox(positions: Float32Array, box: Box): Uint32Array {
  const out: number[] = [];
  const n = positions.length / 3;
  for (let i = 0; i < n; i++) {
    const x = positions[i * 3];
    const y = positions[i * 3 + 1];
    const z = positions[i * 3 + 2];
    if (
      x >= box.min[0] && x <= box.max[0] &&
      y >= box.min[1] && y <= box.max[1] &&
      z >= box.min[2] && z <= box.max[2]
    ) {
      out.push(i);
    }
  }
  return Uint32Array.from(out);
}

/** SHA-256 hex digest of a splat buffer (for undo verification). */
export async function bufferHash(buffer: ArrayBuffer): Promise<string> {
  const digest = await crypto.subtle.digest("SHA-256", buffer);
  return Array.from(new Uint8Array(digest))
    .map((b) => b.toString(16).padStart(2, "0"))
    .join("");
}
