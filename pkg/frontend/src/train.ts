/**
 * Training loop: Adam on the combined intensity + gradient + motion
 * objective over one-step-ahead pairs (the four window inputs predict the
 * t+1 target; the t frame anchors the motion term).
 *
 * Batches run in a fixed order with seeded initializers, so a given
 * (manifest, spec, config) triple trains identically every run.  A
 * non-finite loss aborts immediately with the offending epoch, batch and
 * per-term values rather than letting Adam walk on NaNs.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import * as tf from "@tensorflow/tfjs";
import { combinedLoss, LossWeights, DEFAULT_WEIGHTS } from "./losses.js";
import { FlowOpParams } from "./flow.js";
import { buildNetwork, downsampleFactor, ModelSpec, Network } from "./models.js";
import { readManifest, WindowRow } from "./manifest.js";
import {
  FrameCache,
  PadSpec,
  checkWindowFrames,
  cropBatch,
  padBatch,
  padToMultiple,
  sequenceInputFrames,
  stackInputFrames,
} from "./data.js";
import { CheckpointMeta, CHECKPOINT_FORMAT, CHECKPOINT_VERSION, saveCheckpoint } from "./checkpoint.js";

export const MAX_EPOCHS = 40;

export interface TrainConfig {
  learningRate: number;
  epochs: number;
  weights: LossWeights;
  flowIterations: number;
  flowAlpha: number;
  batchSize: number;
  seed: number;
}

export function defaultTrainConfig(overrides: Partial<TrainConfig> = {}): TrainConfig {
  return {
    learningRate: 0.001,
    epochs: MAX_EPOCHS,
    weights: { ...DEFAULT_WEIGHTS },
    flowIterations: 20,
    flowAlpha: 15,
    batchSize: 10,
    seed: 7,
    ...overrides,
  };
}

export interface EpochRow {
  epoch: number;
  lInt: number;
  lGd: number;
  lOp: number;
  lTotal: number;
}

export interface TrainResult {
  rows: EpochRow[];
  initialLoss: number;
  finalLoss: number;
  checkpointDir: string;
  lossCsv: string;
  net: Network;
}

/** Loss-log formatting: 10 significant digits, infinities spelled "inf". */
export function formatMetric(v: number): string {
  if (!Number.isFinite(v)) return v > 0 ? "inf" : v < 0 ? "-inf" : "nan";
  if (v === 0) return "0";
  return String(parseFloat(v.toPrecision(10)));
}

/** Run the network on a batch, handling pad/crop and both input layouts. */
export function forwardBatch(
  net: Network,
  x: tf.Tensor,
  pad: PadSpec,
  height: number,
  width: number,
): tf.Tensor4D {
  if (net.spec.kind === "unet") {
    const padded = padBatch(x as tf.Tensor4D, pad);
    return cropBatch(net.forward(padded), pad, height, width);
  }
  // sequence layout [b, frames, h, w, 3]: fold time into batch for the pad
  const [b, frames] = [x.shape[0]!, x.shape[1]!];
  const flat = tf.reshape(x, [b * frames, height, width, 3]) as tf.Tensor4D;
  const padded = padBatch(flat, pad);
  const seq = tf.reshape(padded, [b, frames, pad.paddedHeight, pad.paddedWidth, 3]);
  return cropBatch(net.forward(seq), pad, height, width);
}

interface Dataset {
  xAll: tf.Tensor;
  yAll: tf.Tensor4D;
  curAll: tf.Tensor4D;
  height: number;
  width: number;
  count: number;
}

function buildDataset(rows: WindowRow[], spec: ModelSpec, cache: FrameCache): Dataset {
  const first = cache.get(rows[0].inputs[0]);
  const [height, width] = [first.shape[0], first.shape[1]];
  const xs: tf.Tensor[] = [];
  const ys: tf.Tensor3D[] = [];
  const curs: tf.Tensor3D[] = [];
  for (const row of rows) {
    const frames = row.inputs.map((p) => cache.get(p));
    for (const f of frames) {
      if (f.shape[0] !== height || f.shape[1] !== width) {
        throw new Error(
          `window ${row.anchorTs}: frame size ${f.shape[0]}x${f.shape[1]} differs from ${height}x${width}`,
        );
      }
    }
    xs.push(spec.kind === "unet" ? stackInputFrames(frames) : sequenceInputFrames(frames));
    ys.push(cache.get(row.targets[0]));
    curs.push(frames[3]);
  }
  const xAll = tf.stack(xs);
  for (const x of xs) x.dispose();
  return {
    xAll,
    yAll: tf.stack(ys) as tf.Tensor4D,
    curAll: tf.stack(curs) as tf.Tensor4D,
    height,
    width,
    count: rows.length,
  };
}

export async function train(
  manifestPath: string,
  spec: ModelSpec,
  config: TrainConfig,
  outDir: string,
): Promise<TrainResult> {
  if (config.epochs < 1 || config.epochs > MAX_EPOCHS) {
    throw new Error(`epochs must be in 1..${MAX_EPOCHS}, got ${config.epochs}`);
  }
  const rows = readManifest(manifestPath);
  if (rows.length === 0) throw new Error(`${manifestPath}: manifest has no windows`);
  checkWindowFrames(rows);

  fs.mkdirSync(outDir, { recursive: true });
  const cache = new FrameCache();
  const data = buildDataset(rows, spec, cache);
  cache.dispose();
  const pad = padToMultiple(data.height, data.width, downsampleFactor(spec));
  const net = buildNetwork(spec, config.seed);
  const optimizer = tf.train.adam(config.learningRate);
  const flowParams: FlowOpParams = { alpha: config.flowAlpha, iterations: config.flowIterations };
  const w = config.weights;
  const allZero = w.lambdaInt === 0 && w.lambdaGd === 0 && w.lambdaOp === 0;
  const varList = net.variables();

  const epochRows: EpochRow[] = [];
  for (let epoch = 1; epoch <= config.epochs; epoch++) {
    let accInt = 0;
    let accGd = 0;
    let accOp = 0;
    let accTotal = 0;
    for (let start = 0; start < data.count; start += config.batchSize) {
      const size = Math.min(config.batchSize, data.count - start);
      let batchParts = { lInt: 0, lGd: 0, lOp: 0, total: 0 };
      tf.tidy(() => {
        const xShape = data.xAll.shape;
        const xB = tf.slice(
          data.xAll,
          [start, ...xShape.slice(1).map(() => 0)],
          [size, ...xShape.slice(1)],
        );
        const yB = tf.slice(data.yAll, [start, 0, 0, 0], [size, -1, -1, -1]) as tf.Tensor4D;
        const cB = tf.slice(data.curAll, [start, 0, 0, 0], [size, -1, -1, -1]) as tf.Tensor4D;
        const lossFn = (): tf.Scalar => {
          const pred = forwardBatch(net, xB, pad, data.height, data.width);
          const parts = combinedLoss(pred, yB, cB, w, flowParams);
          batchParts = {
            lInt: parts.lInt.dataSync()[0],
            lGd: parts.lGd.dataSync()[0],
            lOp: parts.lOp.dataSync()[0],
            total: parts.total.dataSync()[0],
          };
          return parts.total;
        };
        if (allZero) {
          // nothing to optimize: report the constant zero, touch no params
          lossFn();
        } else {
          optimizer.minimize(lossFn, false, varList);
        }
      });
      if (!Number.isFinite(batchParts.total)) {
        throw new Error(
          `non-finite loss at epoch ${epoch}, batch starting at window ${start}: ` +
            `l_int=${batchParts.lInt} l_gd=${batchParts.lGd} l_op=${batchParts.lOp}`,
        );
      }
      accInt += batchParts.lInt * size;
      accGd += batchParts.lGd * size;
      accOp += batchParts.lOp * size;
      accTotal += batchParts.total * size;
    }
    epochRows.push({
      epoch,
      lInt: accInt / data.count,
      lGd: accGd / data.count,
      lOp: accOp / data.count,
      lTotal: accTotal / data.count,
    });
  }

  const lossCsv = path.join(outDir, "losses.csv");
  const lines = ["epoch,l_int,l_gd,l_op,l_total"];
  for (const r of epochRows) {
    lines.push(
      [r.epoch, formatMetric(r.lInt), formatMetric(r.lGd), formatMetric(r.lOp), formatMetric(r.lTotal)].join(","),
    );
  }
  fs.writeFileSync(lossCsv, lines.join("\n") + "\n");

  const meta: CheckpointMeta = {
    format: CHECKPOINT_FORMAT,
    version: CHECKPOINT_VERSION,
    spec,
    frameHeight: data.height,
    frameWidth: data.width,
    pad: [pad.top, pad.bottom, pad.left, pad.right],
    seed: config.seed,
    created: new Date().toISOString(),
    train: {
      manifest: path.resolve(manifestPath),
      learningRate: config.learningRate,
      epochs: config.epochs,
      weights: { ...config.weights },
      flowIterations: config.flowIterations,
      flowAlpha: config.flowAlpha,
      batchSize: config.batchSize,
      seed: config.seed,
      windows: data.count,
    },
  };
  saveCheckpoint(net, meta, outDir);

  data.xAll.dispose();
  data.yAll.dispose();
  data.curAll.dispose();
  optimizer.dispose();

  return {
    rows: epochRows,
    initialLoss: epochRows[0].lTotal,
    finalLoss: epochRows[epochRows.length - 1].lTotal,
    checkpointDir: outDir,
    lossCsv,
    net,
  };
}
