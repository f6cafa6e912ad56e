/**
 * Network builders.
 *
 * The U-Net consumes the four input frames stacked on channels (12 in), has
 * encoder stages that double channels down to the bottleneck (base 32 and 4
 * stages give the full-scale 512-channel bottleneck; toy runs shrink
 * base_channels), mirrors the decoder with per-stage skip connections, and
 * emits a 3-channel frame.  3x3 kernels, ReLU, no normalization layers.
 *
 * The recurrent variant encodes the frames as a length-4 sequence through
 * exactly two convolutional-LSTM cells (each at half the resolution of the
 * previous stage) and decodes with convolutional upsampling back to the
 * input size.
 *
 * Convolutions are composed as im2col-by-slicing plus one matMul rather
 * than tf.conv2d: the pure-JS backend's conv backprop kernels are an order
 * of magnitude slower than its matMul, and this composition keeps the
 * whole gradient path on the fast kernel while remaining ordinary tfjs
 * autodiff territory.  Stride is always 1; resolution changes go through
 * pooling and nearest-neighbor upsampling, whose gradients are cheap.
 *
 * Spatial dims of the model input must be divisible by the total
 * downsampling factor; the trainer pads frames to that multiple and crops
 * predictions back.
 */

import * as tf from "@tensorflow/tfjs";

export interface SkyNetUNetSpec {
  kind: "unet";
  inChannels: number;
  baseChannels: number;
  stages: number;
  kernelSize: number;
  outChannels: number;
}

export interface SkyNetLSTMSpec {
  kind: "lstm";
  inChannels: number;
  frames: number;
  baseFilters: number;
  kernelSize: number;
  outChannels: number;
}

export type ModelSpec = SkyNetUNetSpec | SkyNetLSTMSpec;

export function defaultUNetSpec(overrides: Partial<SkyNetUNetSpec> = {}): SkyNetUNetSpec {
  return {
    kind: "unet",
    inChannels: 12,
    baseChannels: 32,
    stages: 4,
    kernelSize: 3,
    outChannels: 3,
    ...overrides,
  };
}

export function defaultLSTMSpec(overrides: Partial<SkyNetLSTMSpec> = {}): SkyNetLSTMSpec {
  return {
    kind: "lstm",
    inChannels: 3,
    frames: 4,
    baseFilters: 16,
    kernelSize: 3,
    outChannels: 3,
    ...overrides,
  };
}

/** Downsampling factor the input dims must divide by. */
export function downsampleFactor(spec: ModelSpec): number {
  return spec.kind === "unet" ? 2 ** spec.stages : 4;
}

type Activation = "relu" | "linear";

/**
 * Stride-1 same-padding convolution whose backward pass is itself two
 * tf.conv2d calls (input grad: correlate dy with the spatially flipped,
 * channel-swapped kernel; kernel grad: correlate x with dy over the batch
 * axis).  tf.conv2d's forward kernel on the JS CPU backend is an order of
 * magnitude faster than the registered Conv2DBackprop* kernels, so routing
 * the gradient through it is what makes training affordable here.
 * Requires odd kernel sizes ('same' padding is symmetric only then).
 */
export const convSame = tf.customGrad((...args: unknown[]) => {
  const [xIn, wIn, save] = args as [tf.Tensor4D, tf.Tensor4D, tf.GradSaveFunc];
  save([xIn, wIn]);
  const value = tf.conv2d(xIn, wIn, 1, "same");
  const gradFunc = (dy: tf.Tensor4D, saved: tf.Tensor[]) => {
    const [x, w] = saved as [tf.Tensor4D, tf.Tensor4D];
    const k = w.shape[0];
    const p = (k - 1) / 2;
    const wFlip = tf.transpose(tf.reverse(w, [0, 1]), [0, 1, 3, 2]) as tf.Tensor4D;
    const dx = tf.conv2d(dy, wFlip, 1, "same");
    const xp = p > 0 ? tf.pad(x, [[0, 0], [p, p], [p, p], [0, 0]]) : x;
    const xT = tf.transpose(xp, [3, 1, 2, 0]) as tf.Tensor4D;
    const dyT = tf.transpose(dy, [1, 2, 0, 3]) as tf.Tensor4D;
    const dwT = tf.conv2d(xT, dyT, 1, "valid");
    const dw = tf.transpose(dwT, [1, 2, 0, 3]);
    return [dx, dw];
  };
  return { value, gradFunc };
}) as (x: tf.Tensor4D, w: tf.Tensor4D) => tf.Tensor4D;

/** One convolution's parameters: kernel [k, k, cin, cout] + bias. */
/** tf registers variables by name globally, so each network instance gets
 * its own name scope; checkpoints match variables by order and shape. */
let netInstances = 0;
function nameScope(): string {
  return `net${netInstances++}`;
}

export class Conv {
  readonly w: tf.Variable;
  readonly b: tf.Variable;

  constructor(
    readonly name: string,
    readonly kernelSize: number,
    readonly cin: number,
    readonly cout: number,
    seed: number,
  ) {
    if (kernelSize % 2 !== 1) throw new Error("kernel size must be odd");
    const fanIn = kernelSize * kernelSize * cin;
    const std = Math.sqrt(2 / fanIn);
    this.w = tf.variable(
      tf.randomNormal([kernelSize, kernelSize, cin, cout], 0, std, "float32", seed),
      true,
      `${name}/w`,
    );
    this.b = tf.variable(tf.zeros([cout]), true, `${name}/b`);
  }

  apply(x: tf.Tensor4D, activation: Activation = "relu"): tf.Tensor4D {
    let out = tf.add(convSame(x, this.w as unknown as tf.Tensor4D), this.b);
    if (activation === "relu") out = tf.relu(out);
    return out as tf.Tensor4D;
  }
}

export function maxPool2(x: tf.Tensor4D): tf.Tensor4D {
  return tf.maxPool(x, 2, 2, "valid");
}

export function avgPool2(x: tf.Tensor4D): tf.Tensor4D {
  return tf.avgPool(x, 2, 2, "valid");
}

/** Nearest-neighbor 2x upsampling from concat + reshape only; the backward
 * pass is then a pair of slice-sums, which the JS backend handles well. */
export function upsample2(x: tf.Tensor4D): tf.Tensor4D {
  const [b, h, w, c] = x.shape;
  // duplicate rows: [b,h,1,w,c] -> [b,h,2,w,c] -> [b,2h,w,c]
  const rows = tf.reshape(x, [b, h, 1, w, c]);
  const tall = tf.reshape(tf.concat([rows, rows], 2), [b, h * 2, w, c]) as tf.Tensor4D;
  // duplicate columns: [b,2h,w,1,c] -> [b,2h,w,2,c] -> [b,2h,2w,c]
  const cols = tf.reshape(tall, [b, h * 2, w, 1, c]);
  return tf.reshape(tf.concat([cols, cols], 3), [b, h * 2, w * 2, c]) as tf.Tensor4D;
}

export interface Network {
  readonly spec: ModelSpec;
  /** unet: [b, h, w, 4*cin]; lstm: [b, frames, h, w, cin] */
  forward(x: tf.Tensor): tf.Tensor4D;
  variables(): tf.Variable[];
  dispose(): void;
}

export class SkyNetUNet implements Network {
  readonly spec: SkyNetUNetSpec;
  private encoder: Conv[][] = [];
  private bottleneck: Conv[] = [];
  private decoder: Conv[][] = [];
  private head: Conv;

  constructor(spec: SkyNetUNetSpec, seed = 7) {
    this.spec = spec;
    const scope = nameScope();
    let next = seed;
    let cin = spec.inChannels;
    for (let s = 0; s < spec.stages; s++) {
      const ch = spec.baseChannels * 2 ** s;
      this.encoder.push([
        new Conv(`${scope}/enc${s}a`, spec.kernelSize, cin, ch, next++),
        new Conv(`${scope}/enc${s}b`, spec.kernelSize, ch, ch, next++),
      ]);
      cin = ch;
    }
    const bn = spec.baseChannels * 2 ** spec.stages;
    this.bottleneck = [
      new Conv(`${scope}/bna`, spec.kernelSize, cin, bn, next++),
      new Conv(`${scope}/bnb`, spec.kernelSize, bn, bn, next++),
    ];
    cin = bn;
    for (let s = spec.stages - 1; s >= 0; s--) {
      const ch = spec.baseChannels * 2 ** s;
      this.decoder.push([
        new Conv(`${scope}/dec${s}up`, spec.kernelSize, cin, ch, next++),
        new Conv(`${scope}/dec${s}a`, spec.kernelSize, ch * 2, ch, next++),
        new Conv(`${scope}/dec${s}b`, spec.kernelSize, ch, ch, next++),
      ]);
      cin = ch;
    }
    this.head = new Conv(`${scope}/head`, 1, cin, spec.outChannels, next++);
  }

  forward(x: tf.Tensor): tf.Tensor4D {
    let t = x as tf.Tensor4D;
    const skips: tf.Tensor4D[] = [];
    for (const [a, b] of this.encoder.map((cs) => [cs[0], cs[1]] as const)) {
      t = b.apply(a.apply(t));
      skips.push(t);
      t = maxPool2(t);
    }
    t = this.bottleneck[1].apply(this.bottleneck[0].apply(t));
    for (let i = 0; i < this.decoder.length; i++) {
      const [up, a, b] = this.decoder[i];
      const skip = skips[this.spec.stages - 1 - i];
      t = up.apply(upsample2(t));
      t = tf.concat([skip, t], 3) as tf.Tensor4D;
      t = b.apply(a.apply(t));
    }
    return this.head.apply(t, "linear");
  }

  private convs(): Conv[] {
    return [...this.encoder.flat(), ...this.bottleneck, ...this.decoder.flat(), this.head];
  }

  variables(): tf.Variable[] {
    return this.convs().flatMap((c) => [c.w, c.b]);
  }

  dispose(): void {
    for (const v of this.variables()) v.dispose();
  }
}

/** One convolutional LSTM cell; gates share a single packed convolution. */
export class ConvLSTMCell {
  readonly gates: Conv;

  constructor(name: string, kernelSize: number, cin: number, readonly filters: number, seed: number) {
    this.gates = new Conv(name, kernelSize, cin + filters, 4 * filters, seed);
  }

  step(
    x: tf.Tensor4D,
    state: { h: tf.Tensor4D; c: tf.Tensor4D },
  ): { h: tf.Tensor4D; c: tf.Tensor4D } {
    const packed = this.gates.apply(tf.concat([x, state.h], 3) as tf.Tensor4D, "linear");
    const [i, f, o, g] = tf.split(packed, 4, 3) as tf.Tensor4D[];
    const c = tf.add(tf.mul(tf.sigmoid(f), state.c), tf.mul(tf.sigmoid(i), tf.tanh(g))) as tf.Tensor4D;
    const h = tf.mul(tf.sigmoid(o), tf.tanh(c)) as tf.Tensor4D;
    return { h, c };
  }

  zeroState(batch: number, height: number, width: number): { h: tf.Tensor4D; c: tf.Tensor4D } {
    return {
      h: tf.zeros([batch, height, width, this.filters]),
      c: tf.zeros([batch, height, width, this.filters]),
    };
  }
}

export class SkyNetLSTM implements Network {
  readonly spec: SkyNetLSTMSpec;
  /** the whole recurrent encoder: exactly two cells */
  readonly cells: readonly [ConvLSTMCell, ConvLSTMCell];
  private dec1: Conv;
  private dec2: Conv;
  private head: Conv;

  constructor(spec: SkyNetLSTMSpec, seed = 7) {
    this.spec = spec;
    const scope = nameScope();
    let next = seed;
    this.cells = [
      new ConvLSTMCell(`${scope}/cell1`, spec.kernelSize, spec.inChannels, spec.baseFilters, next++),
      new ConvLSTMCell(`${scope}/cell2`, spec.kernelSize, spec.baseFilters, spec.baseFilters * 2, next++),
    ];
    this.dec1 = new Conv(`${scope}/dec1`, spec.kernelSize, spec.baseFilters * 2, spec.baseFilters, next++);
    this.dec2 = new Conv(`${scope}/dec2`, spec.kernelSize, spec.baseFilters, spec.baseFilters, next++);
    this.head = new Conv(`${scope}/head`, 1, spec.baseFilters, spec.outChannels, next++);
  }

  /** x: [b, frames, h, w, cin], h and w divisible by 4. */
  forward(x: tf.Tensor): tf.Tensor4D {
    const [b, frames, h, w] = [x.shape[0]!, x.shape[1]!, x.shape[2]!, x.shape[3]!];
    const [cell1, cell2] = this.cells;
    let s1 = cell1.zeroState(b, h / 2, w / 2);
    let s2 = cell2.zeroState(b, h / 4, w / 4);
    for (let t = 0; t < frames; t++) {
      const frame = tf.reshape(
        tf.slice(x, [0, t, 0, 0, 0], [b, 1, h, w, this.spec.inChannels]),
        [b, h, w, this.spec.inChannels],
      ) as tf.Tensor4D;
      s1 = cell1.step(avgPool2(frame), s1);
      s2 = cell2.step(avgPool2(s1.h), s2);
    }
    let t = this.dec1.apply(upsample2(s2.h));
    t = this.dec2.apply(upsample2(t));
    return this.head.apply(t, "linear");
  }

  variables(): tf.Variable[] {
    const convs = [this.cells[0].gates, this.cells[1].gates, this.dec1, this.dec2, this.head];
    return convs.flatMap((c) => [c.w, c.b]);
  }

  dispose(): void {
    for (const v of this.variables()) v.dispose();
  }
}

export function buildNetwork(spec: ModelSpec, seed = 7): Network {
  return spec.kind === "unet" ? new SkyNetUNet(spec, seed) : new SkyNetLSTM(spec, seed);
}
