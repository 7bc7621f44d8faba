// Orbit camera math: azimuth/elevation/distance around a target, orthographic
// projection into pixel coordinates. Pure functions, no DOM.

export type Vec3 = [number, number, number];

export interface OrbitPose {
  azimuth: number;   // degrees around the up axis
  elevation: number; // degrees above the lateral plane
  distance: number;  // half-extent of the orthographic window, world units
  target: Vec3;
}

export interface ViewBasis {
  right: Vec3;
  up: Vec3;
  forward: Vec3;
}

const DEG = Math.PI / 180;

function cross(a: Vec3, b: Vec3): Vec3 {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
}

function normalize(v: Vec3): Vec3 {
  const n = Math.hypot(v[0], v[1], v[2]);
  return n > 0 ? [v[0] / n, v[1] / n, v[2] / n] : [1, 0, 0];
}

export function viewBasis(pose: OrbitPose, upAxis: "z" | "y" = "z"): ViewBasis {
  const az = pose.azimuth * DEG;
  const el = pose.elevation * DEG;
  const [a1, a2, up]: [Vec3, Vec3, Vec3] =
    upAxis === "z"
      ? [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
      : [[1, 0, 0], [0, 0, 1], [0, 1, 0]];
  const toCam: Vec3 = [
    Math.cos(el) * Math.cos(az) * a1[0] + Math.cos(el) * Math.sin(az) * a2[0] + Math.sin(el) * up[0],
    Math.cos(el) * Math.cos(az) * a1[1] + Math.cos(el) * Math.sin(az) * a2[1] + Math.sin(el) * up[1],
    Math.cos(el) * Math.cos(az) * a1[2] + Math.cos(el) * Math.sin(az) * a2[2] + Math.sin(el) * up[2],
  ];
  const forward = normalize([-toCam[0], -toCam[1], -toCam[2]]);
  let right = cross(forward, up);
  const rn = Math.hypot(right[0], right[1], right[2]);
  right = rn < 1e-9 ? a1 : [right[0] / rn, right[1] / rn, right[2] / rn];
  const screenUp = cross(right, forward);
  return { right, up: screenUp, forward };
}

export interface Projected {
  /** interleaved pixel x,y per splat */
  xy: Float32Array;
  /** view depth per splat (larger = farther) */
  depth: Float32Array;
}

export function projectPoints(
  positions: Float32Array,
  pose: OrbitPose,
  width: number,
  height: number,
  upAxis: "z" | "y" = "z",
): Projected {
  const { right, up, forward } = viewBasis(pose, upAxis);
  const n = positions.length / 3;
  const xy = new Float32Array(n * 2);
  const depth = new Float32Array(n);
  const scale = Math.min(width, height) / (2 * pose.distance);
  const [tx, ty, tz] = pose.target;
  for (let i = 0; i < n; i++) {
    const x = positions[i * 3] - tx;
    const y = positions[i * 3 + 1] - ty;
    const z = positions[i * 3 + 2] - tz;
    const sx = x * right[0] + y * right[1] + z * right[2];
    const sy = x * up[0] + y * up[1] + z * up[2];
    xy[i * 2] = width / 2 + sx * scale;
    xy[i * 2 + 1] = height / 2 - sy * scale;
    depth[i] = x * forward[0] + y * forward[1] + z * forward[2];
  }
  return { xy, depth };
}

export function projectPoint(
  p: Vec3,
  pose: OrbitPose,
  width: number,
  height: number,
  upAxis: "z" | "y" = "z",
): [number, number] {
  const single = new Float32Array(p);
  const out = projectPoints(single, pose, width, height, upAxis);
  return [out.xy[0], out.xy[1]];
}

/** Far-to-near draw order; equal depths keep ascending splat index. */
export function depthSortIndices(depth: Float32Array): Uint32Array {
  const order = new Uint32Array(depth.length);
  for (let i = 0; i < order.length; i++) order[i] = i;
  // typed-array sort is not guaranteed stable: break ties by index explicitly
  return order.sort((a, b) => (depth[b] - depth[a]) || (a - b));
}
