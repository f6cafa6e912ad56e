/**
 * Loss parity against the backend's fixture bundle.
 *
 * The intensity and gradient terms are recomputed here in double precision
 * from the fixture PNGs and must match the CSV to 1e-5 relative; both sides
 * quantized through the same 8-bit files, so agreement is limited only by
 * the CSV's 10 significant digits.  The motion term is recomputed with this
 * package's unrolled single-level flow operator while the backend uses a
 * coarse-to-fine pyramid with re-warping, so its deviation is reported for
 * inspection but deliberately not asserted; the two operators only agree
 * loosely (same stencils, different solver schedule).
 */

import * as path from "node:path";
import * as tf from "@tensorflow/tfjs";
import { readPng } from "./image.js";
import { intensityLossRef, gradientLossRef } from "./losses_ref.js";
import { motionLoss } from "./losses.js";
import { FlowOpParams, DEFAULT_FLOW_PARAMS } from "./flow.js";
import { readFixtures } from "./manifest.js";
import { imageToTensor } from "./data.js";

export const PARITY_TOLERANCE = 1e-5;

export interface ParityRow {
  pairId: string;
  lInt: number;
  lIntCsv: number;
  lIntRel: number;
  lGd: number;
  lGdCsv: number;
  lGdRel: number;
  lOp: number;
  lOpCsv: number;
  lOpRel: number;
  ok: boolean;
}

export interface ParityResult {
  rows: ParityRow[];
  ok: boolean;
  tolerance: number;
}

function relDiff(got: number, want: number): number {
  return Math.abs(got - want) / Math.max(Math.abs(want), 1e-12);
}

export function runParity(
  fixturesDir: string,
  tolerance = PARITY_TOLERANCE,
  flowParams: FlowOpParams = DEFAULT_FLOW_PARAMS,
): ParityResult {
  const fixtures = readFixtures(path.join(fixturesDir, "fixtures.csv"));
  const rows: ParityRow[] = [];
  for (const f of fixtures) {
    const cur = readPng(path.join(fixturesDir, `${f.pairId}_current.png`));
    const pred = readPng(path.join(fixturesDir, `${f.pairId}_pred.png`));
    const truth = readPng(path.join(fixturesDir, `${f.pairId}_truth.png`));

    const lInt = intensityLossRef(pred, truth);
    const lGd = gradientLossRef(pred, truth);
    const lOp = tf.tidy(() => {
      const p = imageToTensor(pred).expandDims(0) as tf.Tensor4D;
      const t = imageToTensor(truth).expandDims(0) as tf.Tensor4D;
      const c = imageToTensor(cur).expandDims(0) as tf.Tensor4D;
      return motionLoss(p, t, c, flowParams).dataSync()[0];
    });

    const lIntRel = relDiff(lInt, f.lInt);
    const lGdRel = relDiff(lGd, f.lGd);
    const lOpRel = relDiff(lOp, f.lOp);
    rows.push({
      pairId: f.pairId,
      lInt,
      lIntCsv: f.lInt,
      lIntRel,
      lGd,
      lGdCsv: f.lGd,
      lGdRel,
      lOp,
      lOpCsv: f.lOp,
      lOpRel,
      ok: lIntRel <= tolerance && lGdRel <= tolerance,
    });
  }
  return { rows, ok: rows.every((r) => r.ok), tolerance };
}
