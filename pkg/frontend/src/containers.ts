/** Readers and writers for the engine's JSON+raw file containers.
 *
 * Invariants (value ranges, shape/depth consistency, dtype support) are
 * validated eagerly at this boundary so the engine never sees malformed
 * data; violations throw BridgeError with code 2, missing or truncated
 * files with code 3.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { endianness } from "node:os";
import * as path from "node:path";

import { BridgeError, validationError } from "./errors.js";
import {
  AffinityGraph,
  LabelArray,
  LabelVolume,
  MaskField,
  Shape3,
  Triple,
  edgeCount,
} from "./types.js";

if (endianness() !== "LE") {
  throw new BridgeError("this bridge requires a little-endian host", 2);
}

const EDGE_RECORD_BYTES = 13;

type DtypeCode = "u8" | "u32" | "u64" | "f32";

function dtypeOf(data: LabelArray | Float32Array): DtypeCode {
  if (data instanceof Uint8Array) return "u8";
  if (data instanceof Uint32Array) return "u32";
  if (data instanceof BigUint64Array) return "u64";
  if (data instanceof Float32Array) return "f32";
  throw validationError(`unsupported array type ${(data as object).constructor.name}`);
}

function asBuffer(data: LabelArray | Float32Array): Buffer {
  return Buffer.from(data.buffer, data.byteOffset, data.byteLength);
}

function product(values: readonly number[]): number {
  return values.reduce((a, b) => a * b, 1);
}

function checkShape(shape: readonly number[], rank: number, what: string): void {
  if (shape.length !== rank || shape.some((v) => !Number.isInteger(v) || v < 1)) {
    throw validationError(`${what} must be ${rank} positive extents, got [${shape}]`);
  }
}

function writeContainer(
  base: string,
  data: LabelArray | Float32Array,
  shape: readonly number[],
  extra: Record<string, unknown> = {},
): string {
  if (data.length !== product(shape)) {
    throw validationError(`payload length ${data.length} does not match shape [${shape}]`);
  }
  const header = {
    dtype: dtypeOf(data),
    shape: [...shape],
    order: "row-major-x-fastest",
    endianness: "little",
    ...extra,
  };
  writeFileSync(base + ".json", JSON.stringify(header, null, 1) + "\n");
  writeFileSync(base + ".raw", asBuffer(data));
  return base + ".json";
}

function readContainer(file: string): { data: LabelArray | Float32Array; header: any } {
  const base = file.endsWith(".json") ? file.slice(0, -5) : file;
  let header: any;
  try {
    header = JSON.parse(readFileSync(base + ".json", "utf8"));
  } catch (e: any) {
    throw new BridgeError(`cannot read header ${base}.json: ${e.message}`, 3);
  }
  let payload: Buffer;
  try {
    payload = readFileSync(base + ".raw");
  } catch (e: any) {
    throw new BridgeError(`cannot read payload ${base}.raw: ${e.message}`, 3);
  }
  const shape: number[] = header.shape;
  const n = product(shape);
  const makers: Record<DtypeCode, (buf: Buffer) => LabelArray | Float32Array> = {
    u8: (b) => new Uint8Array(b.buffer.slice(b.byteOffset, b.byteOffset + b.byteLength)),
    u32: (b) => new Uint32Array(b.buffer.slice(b.byteOffset, b.byteOffset + b.byteLength)),
    u64: (b) => new BigUint64Array(b.buffer.slice(b.byteOffset, b.byteOffset + b.byteLength)),
    f32: (b) => new Float32Array(b.buffer.slice(b.byteOffset, b.byteOffset + b.byteLength)),
  };
  const make = makers[header.dtype as DtypeCode];
  if (!make) {
    throw new BridgeError(`unsupported dtype ${header.dtype}`, 3);
  }
  const data = make(payload);
  if (data.length !== n) {
    throw new BridgeError(`payload has ${data.length} elements, header says ${n}`, 3);
  }
  return { data, header };
}

export function writeVolume(dir: string, name: string, volume: LabelVolume): string {
  checkShape(volume.shape, 3, "volume shape");
  dtypeOf(volume.data); // rejects f32 label arrays via the LabelArray type
  const extra = volume.resolution ? { resolution: [...volume.resolution] } : {};
  return writeContainer(path.join(dir, name), volume.data, volume.shape, extra);
}

export function readVolume(file: string): LabelVolume {
  const { data, header } = readContainer(file);
  if (header.shape.length !== 3 || data instanceof Float32Array) {
    throw validationError(`${file} is not an integer label volume`);
  }
  const shape = header.shape as [number, number, number];
  return header.resolution
    ? { shape, data, resolution: header.resolution }
    : { shape, data };
}

export function validateMaskField(field: MaskField): void {
  checkShape(field.shape, 3, "mask field shape");
  checkShape(field.window, 3, "mask window");
  checkShape(field.scale, 3, "mask scale");
  const depth = product(field.window);
  if (field.data.length !== product(field.shape) * depth) {
    throw validationError(
      `mask field has ${field.data.length} values, expected ${product(field.shape)} voxels x D=${depth}`,
    );
  }
  for (let i = 0; i < field.data.length; i++) {
    const v = field.data[i];
    if (!(v >= 0 && v <= 1)) {
      throw validationError(`mask value ${v} at index ${i} outside [0, 1]`);
    }
  }
}

export function writeMaskField(dir: string, name: string, field: MaskField): string {
  validateMaskField(field);
  return writeContainer(path.join(dir, name), field.data, [...field.shape, product(field.window)], {
    window: [...field.window],
    scale: [...field.scale],
  });
}

export function readMaskField(file: string): MaskField {
  const { data, header } = readContainer(file);
  if (!(data instanceof Float32Array) || header.shape.length !== 4) {
    throw validationError(`${file} is not a mask-field container`);
  }
  const shape = header.shape.slice(0, 3) as [number, number, number];
  return { shape, window: header.window, scale: header.scale, data };
}

function graphBase(dir: string, name: string): string {
  return path.join(dir, name);
}

export function writeGraph(dir: string, name: string, graph: AffinityGraph): string {
  checkShape(graph.shape, 3, "graph shape");
  const nEdges = edgeCount(graph.shape, graph.offsets);
  for (const [label, arr] of [
    ["mean", graph.mean],
    ["variance", graph.variance],
    ["evidence", graph.evidence],
    ["valid", graph.valid],
  ] as const) {
    if (arr.length !== nEdges) {
      throw validationError(`graph ${label} has ${arr.length} entries, expected ${nEdges} edges`);
    }
  }
  const header = {
    shape: [...graph.shape],
    offsets: graph.offsets.map((o) => [...o]),
    direct_count: graph.directCount,
    edge_count: nEdges,
    order: "zyx-voxel-major-then-offset",
    endianness: "little",
  };
  const buf = Buffer.alloc(nEdges * EDGE_RECORD_BYTES);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  for (let i = 0; i < nEdges; i++) {
    const at = i * EDGE_RECORD_BYTES;
    view.setFloat32(at, graph.mean[i], true);
    view.setFloat32(at + 4, graph.variance[i], true);
    view.setFloat32(at + 8, graph.evidence[i], true);
    view.setUint8(at + 12, graph.valid[i]);
  }
  const base = graphBase(dir, name);
  writeFileSync(base + ".graph.json", JSON.stringify(header, null, 1) + "\n");
  writeFileSync(base + ".graph.raw", buf);
  return base + ".graph.json";
}

export function readGraph(file: string): AffinityGraph {
  let base = file;
  for (const suffix of [".graph.json", ".graph.raw", ".graph"]) {
    if (base.endsWith(suffix)) {
      base = base.slice(0, -suffix.length);
      break;
    }
  }
  let header: any;
  try {
    header = JSON.parse(readFileSync(base + ".graph.json", "utf8"));
  } catch (e: any) {
    throw new BridgeError(`cannot read graph header: ${e.message}`, 3);
  }
  let payload: Buffer;
  try {
    payload = readFileSync(base + ".graph.raw");
  } catch (e: any) {
    throw new BridgeError(`cannot read graph payload: ${e.message}`, 3);
  }
  const nEdges: number = header.edge_count;
  if (payload.byteLength !== nEdges * EDGE_RECORD_BYTES) {
    throw new BridgeError(
      `graph payload is ${payload.byteLength} bytes, expected ${nEdges * EDGE_RECORD_BYTES}`,
      3,
    );
  }
  const mean = new Float32Array(nEdges);
  const variance = new Float32Array(nEdges);
  const evidence = new Float32Array(nEdges);
  const valid = new Uint8Array(nEdges);
  const view = new DataView(payload.buffer, payload.byteOffset, payload.byteLength);
  for (let i = 0; i < nEdges; i++) {
    const at = i * EDGE_RECORD_BYTES;
    mean[i] = view.getFloat32(at, true);
    variance[i] = view.getFloat32(at + 4, true);
    evidence[i] = view.getFloat32(at + 8, true);
    valid[i] = view.getUint8(at + 12);
  }
  return {
    shape: header.shape as Shape3,
    offsets: header.offsets as Triple[],
    directCount: header.direct_count,
    mean,
    variance,
    evidence,
    valid,
  };
}
