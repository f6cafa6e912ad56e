/**
 * Training losses on the tensor backend, mirroring the backend metric
 * definitions: intensity is the mean squared difference over RGB samples,
 * gradient is the mean L1 difference of absolute forward differences along
 * both axes (one pooled mean over both axes' samples, not a mean of
 * means), and motion is the mean per-pixel |du| + |dv| between the flow
 * current->pred and current->truth from the unrolled operator.
 */

import * as tf from "@tensorflow/tfjs";
import { estimateFlowDiff, FlowOpParams, DEFAULT_FLOW_PARAMS } from "./flow.js";

export interface LossWeights {
  lambdaInt: number;
  lambdaGd: number;
  lambdaOp: number;
}

export const DEFAULT_WEIGHTS: LossWeights = {
  lambdaInt: 0.5,
  lambdaGd: 0.001,
  lambdaOp: 0.01,
};

/** pred, truth: [b, h, w, 3] */
export function intensityLoss(pred: tf.Tensor4D, truth: tf.Tensor4D): tf.Scalar {
  return tf.mean(tf.square(tf.sub(pred, truth)));
}

function absForwardDiff(x: tf.Tensor4D, axis: 1 | 2): tf.Tensor4D {
  const h = x.shape[1];
  const w = x.shape[2];
  const head =
    axis === 1
      ? tf.slice(x, [0, 0, 0, 0], [-1, h - 1, -1, -1])
      : tf.slice(x, [0, 0, 0, 0], [-1, -1, w - 1, -1]);
  const tail =
    axis === 1
      ? tf.slice(x, [0, 1, 0, 0], [-1, h - 1, -1, -1])
      : tf.slice(x, [0, 0, 1, 0], [-1, -1, w - 1, -1]);
  return tf.abs(tf.sub(tail, head)) as tf.Tensor4D;
}

export function gradientLoss(pred: tf.Tensor4D, truth: tf.Tensor4D): tf.Scalar {
  const terms: tf.Tensor[] = [];
  for (const axis of [1, 2] as const) {
    const gp = absForwardDiff(pred, axis);
    const gt = absForwardDiff(truth, axis);
    terms.push(tf.reshape(tf.abs(tf.sub(gp, gt)), [-1]));
  }
  return tf.mean(tf.concat(terms));
}

export function motionLoss(
  pred: tf.Tensor4D,
  truth: tf.Tensor4D,
  current: tf.Tensor4D,
  flowParams: FlowOpParams = DEFAULT_FLOW_PARAMS,
): tf.Scalar {
  const fp = estimateFlowDiff(current, pred, flowParams);
  const ft = estimateFlowDiff(current, truth, flowParams);
  const l1 = tf.add(tf.abs(tf.sub(fp.u, ft.u)), tf.abs(tf.sub(fp.v, ft.v)));
  return tf.mean(l1);
}

export interface LossParts {
  lInt: tf.Scalar;
  lGd: tf.Scalar;
  lOp: tf.Scalar;
  total: tf.Scalar;
}

/** Weighted sum; zero-weight terms are never built, so (0,0,0) is a true
 * constant zero with no dependence on the prediction. */
export function combinedLoss(
  pred: tf.Tensor4D,
  truth: tf.Tensor4D,
  current: tf.Tensor4D,
  weights: LossWeights = DEFAULT_WEIGHTS,
  flowParams: FlowOpParams = DEFAULT_FLOW_PARAMS,
): LossParts {
  const zero = () => tf.scalar(0);
  const lInt = weights.lambdaInt !== 0 ? intensityLoss(pred, truth) : zero();
  const lGd = weights.lambdaGd !== 0 ? gradientLoss(pred, truth) : zero();
  const lOp = weights.lambdaOp !== 0 ? motionLoss(pred, truth, current, flowParams) : zero();
  const parts: tf.Tensor[] = [];
  if (weights.lambdaInt !== 0) parts.push(lInt.mul(weights.lambdaInt));
  if (weights.lambdaGd !== 0) parts.push(lGd.mul(weights.lambdaGd));
  if (weights.lambdaOp !== 0) parts.push(lOp.mul(weights.lambdaOp));
  const total = parts.length > 0 ? (tf.addN(parts) as tf.Scalar) : zero();
  return { lInt, lGd, lOp, total };
}
