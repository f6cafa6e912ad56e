/**
 * Frame loading and the pad/crop wrapper around the network.
 *
 * Warped canvases always have odd sides, so frames are reflection-padded up
 * to the model's downsampling multiple on the way in and predictions are
 * cropped back to frame size on the way out.  A small cache keeps each
 * distinct frame decoded once per run.
 */

import * as fs from "node:fs";
import * as tf from "@tensorflow/tfjs";
import { FloatImage, readPng } from "./image.js";
import { WindowRow } from "./manifest.js";

export function imageToTensor(img: FloatImage): tf.Tensor3D {
  return tf.tensor3d(Float32Array.from(img.data), [img.height, img.width, 3]);
}

export function tensorToImage(t: tf.Tensor3D): FloatImage {
  const [h, w, c] = t.shape;
  if (c !== 3) throw new Error(`expected 3 channels, got ${c}`);
  return { width: w, height: h, data: Float64Array.from(t.dataSync()) };
}

export class FrameCache {
  private frames = new Map<string, tf.Tensor3D>();

  get(path: string): tf.Tensor3D {
    let t = this.frames.get(path);
    if (t === undefined) {
      if (!fs.existsSync(path)) throw new Error(`missing frame: ${path}`);
      // keep() so a first access inside a tf.tidy still outlives it; the
      // cache owns disposal
      t = tf.keep(imageToTensor(readPng(path)));
      this.frames.set(path, t);
    }
    return t;
  }

  dispose(): void {
    for (const t of this.frames.values()) t.dispose();
    this.frames.clear();
  }
}

/** Assert every path a training run will touch exists before starting. */
export function checkWindowFrames(rows: WindowRow[]): void {
  for (const row of rows) {
    const paths = [...row.inputs, ...row.targets, ...(row.aux ?? [])];
    for (const p of paths) {
      if (!fs.existsSync(p)) {
        throw new Error(`window ${row.anchorTs}: missing frame ${p}`);
      }
    }
  }
}

export interface PadSpec {
  top: number;
  bottom: number;
  left: number;
  right: number;
  paddedHeight: number;
  paddedWidth: number;
}

export function padToMultiple(height: number, width: number, factor: number): PadSpec {
  const ph = Math.ceil(height / factor) * factor;
  const pw = Math.ceil(width / factor) * factor;
  const dh = ph - height;
  const dw = pw - width;
  const top = Math.floor(dh / 2);
  const left = Math.floor(dw / 2);
  return { top, bottom: dh - top, left, right: dw - left, paddedHeight: ph, paddedWidth: pw };
}

/** [b, h, w, c] -> padded [b, ph, pw, c] by reflection. */
export function padBatch(x: tf.Tensor4D, pad: PadSpec): tf.Tensor4D {
  if (pad.top === 0 && pad.bottom === 0 && pad.left === 0 && pad.right === 0) return x;
  return tf.mirrorPad(
    x,
    [[0, 0], [pad.top, pad.bottom], [pad.left, pad.right], [0, 0]],
    "symmetric",
  ) as tf.Tensor4D;
}

/** Crop a padded model output back to frame size. */
export function cropBatch(x: tf.Tensor4D, pad: PadSpec, height: number, width: number): tf.Tensor4D {
  if (x.shape[1] === height && x.shape[2] === width) return x;
  return tf.slice(x, [0, pad.top, pad.left, 0], [-1, height, width, -1]) as tf.Tensor4D;
}

/** Stack the four input frames on channels: 4 x [h, w, 3] -> [h, w, 12]. */
export function stackInputFrames(frames: tf.Tensor3D[]): tf.Tensor3D {
  if (frames.length !== 4) throw new Error(`expected 4 input frames, got ${frames.length}`);
  return tf.concat3d(frames, 2);
}

/** Stack the four input frames as a sequence: 4 x [h, w, 3] -> [4, h, w, 3]. */
export function sequenceInputFrames(frames: tf.Tensor3D[]): tf.Tensor4D {
  if (frames.length !== 4) throw new Error(`expected 4 input frames, got ${frames.length}`);
  return tf.stack(frames, 0) as tf.Tensor4D;
}
