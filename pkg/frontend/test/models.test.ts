import * as tf from "@tensorflow/tfjs";
import { describe, expect, it } from "vitest";
import {
  buildNetwork,
  convSame,
  defaultLSTMSpec,
  defaultUNetSpec,
  downsampleFactor,
  SkyNetLSTM,
  SkyNetUNet,
  upsample2,
} from "../src/models.js";

describe("convSame custom gradient", () => {
  it("matches tf.conv2d and its autodiff gradients", () => {
    tf.tidy(() => {
      const x = tf.randomUniform([2, 6, 6, 3], -1, 1, "float32", 11) as tf.Tensor4D;
      const w = tf.randomUniform([3, 3, 3, 4], -0.5, 0.5, "float32", 12) as tf.Tensor4D;

      const fwdRef = tf.conv2d(x, w, 1, "same");
      const fwd = convSame(x, w);
      expect(tf.max(tf.abs(tf.sub(fwd, fwdRef))).dataSync()[0]).toBeLessThan(1e-6);

      const lossCustom = (a: tf.Tensor4D, b: tf.Tensor4D) =>
        tf.sum(tf.square(convSame(a, b))) as tf.Scalar;
      const lossRef = (a: tf.Tensor4D, b: tf.Tensor4D) =>
        tf.sum(tf.square(tf.conv2d(a, b, 1, "same"))) as tf.Scalar;
      const [dxC, dwC] = tf.grads(lossCustom)([x, w]);
      const [dxR, dwR] = tf.grads(lossRef)([x, w]);
      expect(tf.max(tf.abs(tf.sub(dxC, dxR))).dataSync()[0]).toBeLessThan(1e-4);
      expect(tf.max(tf.abs(tf.sub(dwC, dwR))).dataSync()[0]).toBeLessThan(1e-4);
    });
  });
});

describe("upsample2", () => {
  it("repeats each pixel into a 2x2 block", () => {
    tf.tidy(() => {
      const x = tf.tensor4d([1, 2, 3, 4], [1, 2, 2, 1]);
      const up = upsample2(x);
      expect(up.shape).toEqual([1, 4, 4, 1]);
      expect(Array.from(up.dataSync())).toEqual([
        1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4,
      ]);
    });
  });
});

describe("frame-stack encoder-decoder", () => {
  it("keeps the contracted channel progression at reference scale", () => {
    // base 32 with 4 stages: encoder 32/64/128/256, bottleneck 512.
    const spec = defaultUNetSpec();
    expect(spec.inChannels).toBe(12);
    expect(spec.baseChannels).toBe(32);
    expect(spec.stages).toBe(4);
    expect(spec.kernelSize).toBe(3);
    expect(spec.outChannels).toBe(3);
    expect(downsampleFactor(spec)).toBe(16);

    const net = buildNetwork(spec) as SkyNetUNet;
    const shapes = net.variables().map((v) => v.shape.join("x"));
    expect(shapes).toContain("3x3x12x32");
    expect(shapes).toContain("3x3x256x512");
    expect(shapes).toContain("3x3x512x512");
    net.dispose();
  });

  it("maps a stacked 4-frame input to one 3-channel frame", () => {
    const net = buildNetwork(defaultUNetSpec({ baseChannels: 4, stages: 2 }));
    tf.tidy(() => {
      const x = tf.randomUniform([2, 8, 8, 12], 0, 1, "float32", 3) as tf.Tensor4D;
      const y = net.forward(x);
      expect(y.shape).toEqual([2, 8, 8, 3]);
      expect(Number.isFinite(tf.sum(y).dataSync()[0])).toBe(true);
    });
    net.dispose();
  });

  it("rejects an even kernel size", () => {
    expect(() => buildNetwork(defaultUNetSpec({ kernelSize: 4 }))).toThrow(/odd/);
  });
});

describe("recurrent encoder-decoder", () => {
  it("has exactly two convolutional recurrent cells", () => {
    const net = buildNetwork(defaultLSTMSpec({ baseFilters: 4 })) as SkyNetLSTM;
    expect(net.cells.length).toBe(2);
    net.dispose();
  });

  it("maps a 4-frame sequence to one 3-channel frame", () => {
    const spec = defaultLSTMSpec({ baseFilters: 4 });
    expect(downsampleFactor(spec)).toBe(4);
    const net = buildNetwork(spec);
    tf.tidy(() => {
      const x = tf.randomUniform([2, 4, 8, 8, 3], 0, 1, "float32", 4);
      const y = net.forward(x);
      expect(y.shape).toEqual([2, 8, 8, 3]);
    });
    net.dispose();
  });
});

describe("seeded construction", () => {
  it("is reproducible for equal seeds and differs across seeds", () => {
    const spec = defaultUNetSpec({ baseChannels: 4, stages: 1 });
    const a = buildNetwork(spec, 9);
    const b = buildNetwork(spec, 9);
    const c = buildNetwork(spec, 10);
    const va = a.variables().map((v) => v.dataSync());
    const vb = b.variables().map((v) => v.dataSync());
    const vc = c.variables().map((v) => v.dataSync());
    expect(va.length).toBe(vb.length);
    for (let i = 0; i < va.length; i++) {
      expect(Array.from(va[i])).toEqual(Array.from(vb[i]));
    }
    const flatA = va.flatMap((x) => Array.from(x));
    const flatC = vc.flatMap((x) => Array.from(x));
    expect(flatA).not.toEqual(flatC);
    a.dispose();
    b.dispose();
    c.dispose();
  });
});
