/**
 * Double-precision reference implementations of the intensity and gradient
 * losses, operating directly on FloatImage buffers.
 *
 * These mirror the backend definitions sample for sample: the intensity
 * term is the mean squared difference over every RGB sample, and the
 * gradient term is the mean L1 difference of absolute forward differences
 * taken along both image axes.  They are the yardstick for the parity
 * check (the training losses run in float32 on the tensor backend) and
 * for finite-difference gradient verification.
 */

import { FloatImage, sameShape } from "./image.js";

export function intensityLossRef(pred: FloatImage, truth: FloatImage): number {
  if (!sameShape(pred, truth)) {
    throw new Error(
      `image shapes differ: ${pred.height}x${pred.width} vs ${truth.height}x${truth.width}`,
    );
  }
  const n = pred.data.length;
  let acc = 0;
  for (let i = 0; i < n; i++) {
    const d = pred.data[i] - truth.data[i];
    acc += d * d;
  }
  return acc / n;
}

export function gradientLossRef(pred: FloatImage, truth: FloatImage): number {
  if (!sameShape(pred, truth)) {
    throw new Error(
      `image shapes differ: ${pred.height}x${pred.width} vs ${truth.height}x${truth.width}`,
    );
  }
  const { width: w, height: h } = pred;
  if (w < 2 || h < 2) throw new Error("gradient loss needs at least 2 pixels per axis");
  const at = (img: FloatImage, y: number, x: number, c: number) =>
    img.data[(y * w + x) * 3 + c];

  let total = 0;
  let count = 0;
  // vertical forward differences
  for (let y = 0; y < h - 1; y++) {
    for (let x = 0; x < w; x++) {
      for (let c = 0; c < 3; c++) {
        const gp = Math.abs(at(pred, y + 1, x, c) - at(pred, y, x, c));
        const gt = Math.abs(at(truth, y + 1, x, c) - at(truth, y, x, c));
        total += Math.abs(gp - gt);
        count++;
      }
    }
  }
  // horizontal forward differences
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w - 1; x++) {
      for (let c = 0; c < 3; c++) {
        const gp = Math.abs(at(pred, y, x + 1, c) - at(pred, y, x, c));
        const gt = Math.abs(at(truth, y, x + 1, c) - at(truth, y, x, c));
        total += Math.abs(gp - gt);
        count++;
      }
    }
  }
  return count === 0 ? 0 : total / count;
}
