/**
 * Self-describing checkpoints: a directory holding checkpoint.json (format
 * tag, model spec, frame geometry, training setup, and the variable list
 * with shapes) plus weights.bin, the float32 values packed little-endian
 * in listed order.  Everything needed to rebuild the network and run
 * prediction is in the pair; nothing is implied by file location.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import * as tf from "@tensorflow/tfjs";
import { buildNetwork, ModelSpec, Network } from "./models.js";

export const CHECKPOINT_FORMAT = "skynet-checkpoint";
export const CHECKPOINT_VERSION = 1;

export interface CheckpointMeta {
  format: typeof CHECKPOINT_FORMAT;
  version: number;
  spec: ModelSpec;
  /** dims of the frames the model was trained on (pre-padding) */
  frameHeight: number;
  frameWidth: number;
  /** reflection padding applied before the net: [top, bottom, left, right] */
  pad: [number, number, number, number];
  /** seed the variables were initialized from (rebuild order must match) */
  seed: number;
  created: string;
  train?: Record<string, unknown>;
}

interface WeightEntry {
  name: string;
  shape: number[];
}

interface CheckpointFile {
  meta: CheckpointMeta;
  weights: WeightEntry[];
}

export function saveCheckpoint(net: Network, meta: CheckpointMeta, dir: string): void {
  fs.mkdirSync(dir, { recursive: true });
  const vars = net.variables();
  const entries: WeightEntry[] = [];
  const buffers: Buffer[] = [];
  for (const v of vars) {
    entries.push({ name: v.name, shape: [...v.shape] });
    const data = v.dataSync() as Float32Array;
    buffers.push(Buffer.from(data.buffer, data.byteOffset, data.byteLength));
  }
  const file: CheckpointFile = { meta, weights: entries };
  fs.writeFileSync(path.join(dir, "checkpoint.json"), JSON.stringify(file, null, 1));
  fs.writeFileSync(path.join(dir, "weights.bin"), Buffer.concat(buffers));
}

export function loadCheckpoint(dir: string): { net: Network; meta: CheckpointMeta } {
  const jsonPath = path.join(dir, "checkpoint.json");
  const binPath = path.join(dir, "weights.bin");
  if (!fs.existsSync(jsonPath) || !fs.existsSync(binPath)) {
    throw new Error(`${dir}: not a checkpoint directory (missing checkpoint.json or weights.bin)`);
  }
  const file = JSON.parse(fs.readFileSync(jsonPath, "utf8")) as CheckpointFile;
  if (file.meta?.format !== CHECKPOINT_FORMAT) {
    throw new Error(`${dir}: unrecognized checkpoint format tag ${String(file.meta?.format)}`);
  }
  if (file.meta.version !== CHECKPOINT_VERSION) {
    throw new Error(`${dir}: unsupported checkpoint version ${file.meta.version}`);
  }
  const raw = fs.readFileSync(binPath);
  const net = buildNetwork(file.meta.spec, file.meta.seed);
  const vars = net.variables();
  if (vars.length !== file.weights.length) {
    throw new Error(
      `${dir}: checkpoint lists ${file.weights.length} variables, rebuilt network has ${vars.length}`,
    );
  }
  let offset = 0;
  for (let i = 0; i < vars.length; i++) {
    const entry = file.weights[i];
    const n = entry.shape.reduce((a, b) => a * b, 1);
    const byteLen = n * 4;
    if (offset + byteLen > raw.byteLength) {
      throw new Error(`${dir}: weights.bin shorter than the variable list implies`);
    }
    // fresh copy so the f32 view is 4-byte aligned regardless of buffer pooling
    const bytes = Uint8Array.from(raw.subarray(offset, offset + byteLen));
    const values = new Float32Array(bytes.buffer);
    const expect = vars[i].shape.join("x");
    const got = entry.shape.join("x");
    if (expect !== got) {
      throw new Error(`${dir}: variable ${entry.name} has shape ${got}, network expects ${expect}`);
    }
    vars[i].assign(tf.tensor(values, entry.shape, "float32"));
    offset += byteLen;
  }
  if (offset !== raw.byteLength) {
    throw new Error(`${dir}: weights.bin has ${raw.byteLength - offset} trailing byte(s)`);
  }
  return { net, meta: file.meta };
}
