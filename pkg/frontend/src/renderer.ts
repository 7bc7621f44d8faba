// Canvas2D splat renderer: depth-sorted point sprites with per-splat color,
// plus a wireframe ROI box and highlight tint for grounding previews.

import { depthSortIndices, projectPoint, projectPoints, type OrbitPose } from "./camera.js";
import type { SplatBuffer } from "./splats.js";
import type { Box } from "./types.js";

const BOX_EDGES: Array<[number, number]> = [
  [0, 1], [0, 2], [0, 4], [1, 3], [1, 5], [2, 3],
  [2, 6], [3, 7], [4, 5], [4, 6], [5, 7], [6, 7],
];

export function boxCorners(box: Box): Array<[number, number, number]> {
  const out: Array<[number, number, number]> = [];
  for (const x of [box.min[0], box.max[0]])
    for (const y of [box.min[1], box.max[1]])
      for (const z of [box.min[2], box.max[2]]) out.push([x, y, z]);
  return out;
}

export interface DrawOptions {
  pose: OrbitPose;
  upAxis?: "z" | "y";
  /** splat indices to tint (grounding preview members) */
  highlight?: Uint32Array | null;
  roi?: Box | null;
  /** sprite radius in px; splats above this count drop to 1px points */
  spriteRadius?: number;
  pointBudget?: number;
}

export class CanvasRenderer {
  private readonly ctx: CanvasRenderingContext2D;

  constructor(private readonly canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("2D canvas context unavailable");
    this.ctx = ctx;
  }

  draw(splats: SplatBuffer, options: DrawOptions): void {
    const { width, height } = this.canvas;
    const radius = splats.count > (options.pointBudget ?? 1_000_000)
      ? 1
      : options.spriteRadius ?? 2;
    const image = this.ctx.createImageData(width, height);
    const data = image.data;

    const projected = projectPoints(splats.positions, options.pose, width, height,
                                    options.upAxis ?? "z");
    const order = depthSortIndices(projected.depth);

    const tinted = new Uint8Array(splats.count);
    if (options.highlight) {
      for (const i of options.highlight) tinted[i] = 1;
    }

    for (const i of order) {
      const px = projected.xy[i * 2] | 0;
      const py = projected.xy[i * 2 + 1] | 0;
      if (px < -radius || px >= width + radius || py < -radius || py >= height + radius) {
        continue;
      }
      let r = splats.colors[i * 3];
      let g = splats.colors[i * 3 + 1];
      let b = splats.colors[i * 3 + 2];
      if (tinted[i]) {
        r = Math.min(255, 0.45 * r + 0.55 * 255);
        g = 0.45 * g + 0.55 * 77;
        b = 0.45 * b + 0.55 * 26;
      }
      const x0 = Math.max(px - radius + 1, 0);
      const x1 = Math.min(px + radius, width);
      const y0 = Math.max(py - radius + 1, 0);
      const y1 = Math.min(py + radius, height);
      for (let y = y0; y < y1; y++) {
        let offset = (y * width + x0) * 4;
        for (let x = x0; x < x1; x++, offset += 4) {
          data[offset] = r;
          data[offset + 1] = g;
          data[offset + 2] = b;
          data[offset + 3] = 255;
        }
      }
    }
    this.ctx.putImageData(image, 0, 0);

    if (options.roi) {
      this.drawRoi(options.roi, options.pose, options.upAxis ?? "z");
    }
  }

  private drawRoi(roi: Box, pose: OrbitPose, upAxis: "z" | "y"): void {
    const { width, height } = this.canvas;
    const corners = boxCorners(roi).map((c) => projectPoint(c, pose, width, height, upAxis));
    this.ctx.strokeStyle = "#ff6a3d";
    this.ctx.lineWidth = 1.5;
    this.ctx.beginPath();
    for (const [a, b] of BOX_EDGES) {
      this.ctx.moveTo(corners[a][0], corners[a][1]);
      this.ctx.lineTo(corners[b][0], corners[b][1]);
    }
    this.ctx.stroke();
  }
}
