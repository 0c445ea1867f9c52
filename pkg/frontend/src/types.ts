/** Shared data shapes of the bridge API.
 *
 * Dense arrays follow the engine's container layout: C order with x the
 * fastest spatial axis, so a [Z, Y, X] volume indexes as
 * `(z * Y + y) * X + x` and a mask field [Z, Y, X, D] appends the window
 * entry as the fastest axis.
 */

export type Shape3 = readonly [number, number, number]; // [Z, Y, X]
export type Triple = readonly [number, number, number];

export type LabelArray = Uint8Array | Uint32Array | BigUint64Array;

export interface LabelVolume {
  shape: Shape3;
  data: LabelArray;
  /** physical voxel size [rz, ry, rx]; informational only */
  resolution?: Triple;
}

export interface MaskField {
  shape: Shape3;
  /** window extents [Kz, Ky, Kx]; D = Kz * Ky * Kx */
  window: Triple;
  /** per-axis stride [sz, sy, sx] */
  scale: Triple;
  /** [Z, Y, X, D] in C order, values in [0, 1] */
  data: Float32Array;
}

export interface NeighborhoodSpec {
  /** offsets as [x, y, z], leading `directCount` entries are short-range */
  offsets: ReadonlyArray<Triple>;
  directCount: number;
}

export type NeighborhoodOption = "grid" | "short" | NeighborhoodSpec;

/** Per-edge statistics in enumeration order: voxel-major (z, y, x), then
 * offset index; only in-bounds edges are stored. */
export interface AffinityGraph {
  shape: Shape3;
  offsets: ReadonlyArray<Triple>;
  directCount: number;
  mean: Float32Array;
  variance: Float32Array;
  evidence: Float32Array;
  valid: Uint8Array;
}

export interface PartitionOptions {
  longRangeFraction?: number;
  subsampleSeed?: number;
}

export interface EvaluationReport {
  voi_split: number;
  voi_merge: number;
  arand: number;
  cremi: number;
}

export function edgeCount(shape: Shape3, offsets: ReadonlyArray<Triple>): number {
  const [z, y, x] = shape;
  let total = 0;
  for (const [ox, oy, oz] of offsets) {
    total +=
      Math.max(0, x - Math.abs(ox)) * Math.max(0, y - Math.abs(oy)) * Math.max(0, z - Math.abs(oz));
  }
  return total;
}
