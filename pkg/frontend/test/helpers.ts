/** Shared paths and fixtures for the test suite. */

import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

export const FRONTEND_DIR = fileURLToPath(new URL("..", import.meta.url));
export const TESTDATA_DIR = path.join(FRONTEND_DIR, "testdata");
export const FIXTURES_DIR = path.join(TESTDATA_DIR, "fixtures");
export const MANIFEST = path.join(TESTDATA_DIR, "manifest.csv");
export const PERSISTENCE_REPORT = path.join(TESTDATA_DIR, "report_persistence.csv");

/** Fresh scratch directory, removed by the caller's afterAll if desired. */
export function tmpDir(prefix: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), `${prefix}-`));
}

/** Copy of the generated manifest truncated to its first n windows. */
export function miniManifest(n: number, dir: string): string {
  const lines = fs.readFileSync(MANIFEST, "utf8").trim().split("\n");
  const out = path.join(dir, `mini${n}.csv`);
  fs.writeFileSync(out, lines.slice(0, n + 1).join("\n") + "\n");
  return out;
}

/** Deterministic pseudo-random values in (lo, hi), no RNG state. */
export function wave(n: number, lo: number, hi: number, phase = 0): number[] {
  const vals: number[] = [];
  for (let i = 0; i < n; i++) {
    const u = 0.5 + 0.5 * Math.sin(12.9898 * (i + 1) + phase);
    vals.push(lo + (hi - lo) * u);
  }
  return vals;
}

/** Per-horizon PSNR (dB) keyed by step, from an evaluation report CSV. */
export function readPsnrByHorizon(reportCsv: string): Map<number, number> {
  const lines = fs.readFileSync(reportCsv, "utf8").trim().split("\n");
  const header = lines[0].split(",");
  const hIdx = header.indexOf("horizon");
  const pIdx = header.indexOf("psnr_db");
  if (hIdx < 0 || pIdx < 0) throw new Error(`${reportCsv}: missing horizon/psnr_db columns`);
  const out = new Map<number, number>();
  for (const line of lines.slice(1)) {
    const cells = line.split(",");
    out.set(Number(cells[hIdx]), Number(cells[pIdx]));
  }
  return out;
}
