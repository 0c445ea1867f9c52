/** Subprocess plumbing: each bridge call marshals its arrays into a
 * scratch directory, invokes the engine CLI on it, and reads the results
 * back.  Nonzero exit codes surface as BridgeError with the same code.
 */

import { execFile } from "node:child_process";
import { mkdtemp, rm } from "node:fs/promises";
import { tmpdir } from "node:os";
import * as path from "node:path";

import { BridgeError } from "./errors.js";

const BIN = process.env.MASKSEG_BIN ?? "maskseg";

export function runCli(args: string[]): Promise<string> {
  return new Promise((resolve, reject) => {
    execFile(BIN, args, { maxBuffer: 1 << 26 }, (error: any, stdout, stderr) => {
      if (error) {
        const code = typeof error.code === "number" ? error.code : 1;
        const message = (stderr || error.message || "engine invocation failed").trim();
        reject(new BridgeError(message, code));
      } else {
        resolve(stdout);
      }
    });
  });
}

export async function withScratchDir<T>(fn: (dir: string) => Promise<T>): Promise<T> {
  const dir = await mkdtemp(path.join(tmpdir(), "maskseg-"));
  try {
    return await fn(dir);
  } finally {
    await rm(dir, { recursive: true, force: true });
  }
}
