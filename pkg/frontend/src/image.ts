/**
 * 8-bit PNG I/O and the float image type shared by every module.
 *
 * Frames cross the process boundary as plain PNGs: 8-bit values map to
 * k/255 on load and are written back with round-then-clip quantization,
 * matching the backend's conventions exactly so losses recomputed on a
 * re-encoded frame agree to the last bit of the quantization.
 */

import * as fs from "node:fs";
import { PNG } from "pngjs";

/** Row-major HxWx3 image with float64 samples in [0, 1]. */
export interface FloatImage {
  width: number;
  height: number;
  /** length = height * width * 3, layout [y][x][c] */
  data: Float64Array;
}

export function newImage(width: number, height: number): FloatImage {
  return { width, height, data: new Float64Array(width * height * 3) };
}

export function readPng(path: string): FloatImage {
  const png = PNG.sync.read(fs.readFileSync(path));
  const { width, height } = png;
  const out = newImage(width, height);
  const n = width * height;
  for (let i = 0; i < n; i++) {
    out.data[i * 3] = png.data[i * 4] / 255;
    out.data[i * 3 + 1] = png.data[i * 4 + 1] / 255;
    out.data[i * 3 + 2] = png.data[i * 4 + 2] / 255;
  }
  return out;
}

export function writePng(img: FloatImage, path: string): void {
  const png = new PNG({ width: img.width, height: img.height });
  const n = img.width * img.height;
  for (let i = 0; i < n; i++) {
    for (let c = 0; c < 3; c++) {
      const v = img.data[i * 3 + c];
      const q = Math.round(Math.min(1, Math.max(0, v)) * 255);
      png.data[i * 4 + c] = q;
    }
    png.data[i * 4 + 3] = 255;
  }
  fs.writeFileSync(path, PNG.sync.write(png, { colorType: 2 }));
}

/** Rec. 601 luma in [0, 1]; the flow operator works on luma * 255. */
export function lumaPlane(img: FloatImage): Float64Array {
  const n = img.width * img.height;
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    out[i] =
      0.299 * img.data[i * 3] + 0.587 * img.data[i * 3 + 1] + 0.114 * img.data[i * 3 + 2];
  }
  return out;
}

export function sameShape(a: FloatImage, b: FloatImage): boolean {
  return a.width === b.width && a.height === b.height;
}
