/** Typed-array bridge to the maskseg engine.
 *
 * Six operations over dense in-memory arrays: affinity aggregation from
 * mask fields, the direct-readout baseline, mutex-watershed and
 * average-agglomeration partitioning, small-segment removal, and
 * segmentation metrics.  Results are numerically identical to driving the
 * CLI by hand on the same data (integers bitwise, floats within 1e-6),
 * because the bridge talks to the engine through the same containers.
 */

import * as path from "node:path";

import {
  readGraph,
  readVolume,
  validateMaskField,
  writeGraph,
  writeMaskField,
  writeVolume,
} from "./containers.js";
import { validationError } from "./errors.js";
import { runCli, withScratchDir } from "./runner.js";
import {
  AffinityGraph,
  EvaluationReport,
  LabelVolume,
  MaskField,
  NeighborhoodOption,
  PartitionOptions,
  Shape3,
} from "./types.js";

export { BridgeError } from "./errors.js";
export * from "./types.js";
export {
  readGraph,
  readMaskField,
  readVolume,
  writeGraph,
  writeMaskField,
  writeVolume,
} from "./containers.js";

export interface AggregateOptions {
  neighborhood?: NeighborhoodOption;
  threads?: number;
}

function sameShape(a: Shape3, b: Shape3): boolean {
  return a[0] === b[0] && a[1] === b[1] && a[2] === b[2];
}

async function neighborhoodArg(dir: string, option: NeighborhoodOption | undefined): Promise<string> {
  if (option === undefined || option === "grid") return "grid";
  if (option === "short") return "short";
  const file = path.join(dir, "neighborhood.json");
  const { writeFileSync } = await import("node:fs");
  writeFileSync(
    file,
    JSON.stringify({ offsets: option.offsets.map((o) => [...o]), direct_count: option.directCount }),
  );
  return file;
}

function checkFields(fields: MaskField[]): void {
  if (fields.length === 0) {
    throw validationError("at least one mask field is required");
  }
  for (const f of fields) {
    validateMaskField(f);
    if (!sameShape(f.shape, fields[0].shape)) {
      throw validationError("all mask fields must share one volume shape");
    }
  }
}

async function runAggregation(
  method: "mask_aggregation" | "baseline",
  fields: MaskField[],
  options: AggregateOptions,
): Promise<AffinityGraph> {
  checkFields(fields);
  return withScratchDir(async (dir) => {
    const fieldArgs: string[] = [];
    fields.forEach((f, i) => {
      fieldArgs.push(writeMaskField(dir, `field${i}`, f));
    });
    const nb = await neighborhoodArg(dir, options.neighborhood);
    await runCli([
      "aggregate",
      "--field",
      ...fieldArgs,
      "--neighborhood",
      nb,
      "--method",
      method,
      "--threads",
      String(options.threads ?? 1),
      "-o",
      path.join(dir, "out"),
    ]);
    return readGraph(path.join(dir, "out.graph.json"));
  });
}

/** Aggregate overlapping masks into per-edge affinity mean/variance. */
export function aggregateAffinities(
  fields: MaskField[],
  options: AggregateOptions = {},
): Promise<AffinityGraph> {
  return runAggregation("mask_aggregation", fields, options);
}

/** Read affinities directly from the mask centered at each edge source. */
export function baselineAffinities(
  fields: MaskField[],
  options: AggregateOptions = {},
): Promise<AffinityGraph> {
  return runAggregation("baseline", fields, options);
}

async function runSegment(
  method: "mws" | "gasp",
  graph: AffinityGraph,
  options: PartitionOptions & { unitWeights?: boolean },
): Promise<LabelVolume> {
  return withScratchDir(async (dir) => {
    writeGraph(dir, "g", graph);
    const args = [
      "segment",
      "--graph",
      path.join(dir, "g.graph.json"),
      "--method",
      method,
      "--long-range-fraction",
      String(options.longRangeFraction ?? 0.1),
      "--seed",
      String(options.subsampleSeed ?? 0),
      "-o",
      path.join(dir, "seg"),
    ];
    if (options.unitWeights) args.push("--unit-weights");
    await runCli(args);
    return readVolume(path.join(dir, "seg.json"));
  });
}

/** Partition a signed graph with the mutex watershed. */
export function mutexWatershed(
  graph: AffinityGraph,
  options: PartitionOptions = {},
): Promise<LabelVolume> {
  return runSegment("mws", graph, options);
}

/** Partition a signed graph by average agglomeration. */
export function gaspAverage(
  graph: AffinityGraph,
  options: PartitionOptions & { unitWeights?: boolean } = {},
): Promise<LabelVolume> {
  return runSegment("gasp", graph, options);
}

/** Delete segments below minSize voxels and regrow from the survivors. */
export function removeSmallSegments(
  seg: LabelVolume,
  graph: AffinityGraph,
  minSize: number,
): Promise<LabelVolume> {
  if (!sameShape(seg.shape, graph.shape)) {
    throw validationError(`segmentation shape [${seg.shape}] != graph shape [${graph.shape}]`);
  }
  return withScratchDir(async (dir) => {
    writeVolume(dir, "seg", seg);
    writeGraph(dir, "g", graph);
    await runCli([
      "postprocess",
      "--seg",
      path.join(dir, "seg.json"),
      "--graph",
      path.join(dir, "g.graph.json"),
      "--min-size",
      String(minSize),
      "-o",
      path.join(dir, "out"),
    ]);
    return readVolume(path.join(dir, "out.json"));
  });
}

/** Score a segmentation against ground truth (VOI, adapted Rand, summary). */
export function evaluate(seg: LabelVolume, gt: LabelVolume): Promise<EvaluationReport> {
  if (!sameShape(seg.shape, gt.shape)) {
    throw validationError(`segmentation shape [${seg.shape}] != ground-truth shape [${gt.shape}]`);
  }
  return withScratchDir(async (dir) => {
    writeVolume(dir, "seg", seg);
    writeVolume(dir, "gt", gt);
    const stdout = await runCli([
      "eval",
      "--seg",
      path.join(dir, "seg.json"),
      "--gt",
      path.join(dir, "gt.json"),
    ]);
    return JSON.parse(stdout) as EvaluationReport;
  });
}
