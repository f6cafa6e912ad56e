/**
 * Recursive multi-step prediction from a checkpoint.
 *
 * Step k's inputs follow the shifted stencil: the first step sees the four
 * recorded window inputs, later steps swap in earlier predictions wherever
 * the stencil crosses the anchor (offsets >= 1), pulling the -4/-2 aux
 * frames from the manifest as the stencil slides.  Each prediction is
 * clipped to [0, 1], written as <anchor_ts>_pred<k>.png, and fed back for
 * the following steps, so the backend evaluator can consume the directory
 * as-is.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import * as tf from "@tensorflow/tfjs";
import { loadCheckpoint } from "./checkpoint.js";
import { FrameCache, PadSpec, sequenceInputFrames, stackInputFrames, tensorToImage } from "./data.js";
import { writePng } from "./image.js";
import { readManifest, recursionInputs } from "./manifest.js";
import { forwardBatch } from "./train.js";

export interface PredictResult {
  written: string[];
  windows: number;
  horizon: number;
}

export function predictRecursive(
  checkpointDir: string,
  manifestPath: string,
  outDir: string,
  horizon?: number,
): PredictResult {
  const { net, meta } = loadCheckpoint(checkpointDir);
  const rows = readManifest(manifestPath);
  if (rows.length === 0) throw new Error(`${manifestPath}: manifest has no windows`);
  const tF = horizon ?? rows[0].targets.length;
  if (tF < 1) throw new Error(`horizon must be >= 1, got ${tF}`);

  fs.mkdirSync(outDir, { recursive: true });
  const pad: PadSpec = {
    top: meta.pad[0],
    bottom: meta.pad[1],
    left: meta.pad[2],
    right: meta.pad[3],
    paddedHeight: meta.frameHeight + meta.pad[0] + meta.pad[1],
    paddedWidth: meta.frameWidth + meta.pad[2] + meta.pad[3],
  };

  const written: string[] = [];
  const cache = new FrameCache();
  for (const row of rows) {
    const preds: tf.Tensor3D[] = [];
    for (let step = 0; step < tF; step++) {
      const pred = tf.tidy(() => {
        const refs = recursionInputs<{ path?: string; predIndex?: number }>(
          {
            inputs: [
              { path: row.inputs[0] },
              { path: row.inputs[1] },
              { path: row.inputs[2] },
              { path: row.inputs[3] },
            ],
            aux: row.aux === null ? null : [{ path: row.aux[0] }, { path: row.aux[1] }],
          },
          step,
          preds.map((_, i) => ({ predIndex: i })),
        );
        const frames = refs.map((ref) => {
          const t = ref.path !== undefined ? cache.get(ref.path) : preds[ref.predIndex!];
          if (t.shape[0] !== meta.frameHeight || t.shape[1] !== meta.frameWidth) {
            throw new Error(
              `frame is ${t.shape[0]}x${t.shape[1]}, checkpoint expects ${meta.frameHeight}x${meta.frameWidth}` +
                (ref.path !== undefined ? ` (${ref.path})` : ""),
            );
          }
          return t;
        });
        const x =
          meta.spec.kind === "unet"
            ? stackInputFrames(frames).expandDims(0)
            : sequenceInputFrames(frames).expandDims(0);
        const out = forwardBatch(net, x as tf.Tensor, pad, meta.frameHeight, meta.frameWidth);
        return tf.clipByValue(tf.squeeze(out, [0]), 0, 1) as tf.Tensor3D;
      });
      preds.push(pred);
      const outPath = path.join(outDir, `${row.anchorTs}_pred${step + 1}.png`);
      writePng(tensorToImage(pred), outPath);
      written.push(outPath);
    }
    for (const p of preds) p.dispose();
  }
  cache.dispose();
  net.dispose();
  return { written, windows: rows.length, horizon: tF };
}
