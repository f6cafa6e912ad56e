/**
 * Readers for the CSV files the backend emits, plus the recursive-input
 * bookkeeping used when predictions are fed back as inputs.
 *
 * Manifest layout: anchor_ts,in0..in3,target1..targetK[,in_tm4,in_tm2].
 * The four inputs sit at offsets {-5,-3,-1,0} relative to the anchor; the
 * two optional aux columns carry the frames at -4 and -2 that recursion
 * steps need.  Paths are kept verbatim, as the backend wrote them.
 */

import * as fs from "node:fs";

export interface WindowRow {
  anchorTs: string;
  /** frames at offsets -5, -3, -1, 0 */
  inputs: [string, string, string, string];
  /** frames at offsets +1 .. +T_f */
  targets: string[];
  /** frames at offsets -4, -2 when the manifest carries them */
  aux: [string, string] | null;
}

/** Strict splitter for the backend's CSVs: fields never contain commas. */
function splitCsvLine(line: string): string[] {
  return line.split(",");
}

function readCsv(path: string): string[][] {
  const text = fs.readFileSync(path, "utf8");
  return text
    .split(/\r?\n/)
    .filter((line) => line.length > 0)
    .map(splitCsvLine);
}

export function readManifest(path: string): WindowRow[] {
  const rows = readCsv(path);
  if (rows.length === 0) throw new Error(`${path}: empty manifest`);
  const header = rows[0];
  const expectedPrefix = ["anchor_ts", "in0", "in1", "in2", "in3"];
  for (let i = 0; i < expectedPrefix.length; i++) {
    if (header[i] !== expectedPrefix[i]) {
      throw new Error(`${path}: unexpected manifest header ${header.join(",")}`);
    }
  }
  const hasAux =
    header.length >= 7 &&
    header[header.length - 2] === "in_tm4" &&
    header[header.length - 1] === "in_tm2";
  const nTargets = header.length - 5 - (hasAux ? 2 : 0);
  if (nTargets < 1) throw new Error(`${path}: manifest has no target columns`);
  for (let k = 0; k < nTargets; k++) {
    if (header[5 + k] !== `target${k + 1}`) {
      throw new Error(`${path}: expected target${k + 1} in header, got ${header[5 + k]}`);
    }
  }

  const out: WindowRow[] = [];
  for (const row of rows.slice(1)) {
    if (row.length !== header.length) {
      throw new Error(`${path}: row has ${row.length} fields, header has ${header.length}`);
    }
    out.push({
      anchorTs: row[0],
      inputs: [row[1], row[2], row[3], row[4]],
      targets: row.slice(5, 5 + nTargets),
      aux: hasAux ? [row[5 + nTargets], row[6 + nTargets]] : null,
    });
  }
  return out;
}

export interface FixtureRow {
  pairId: string;
  lInt: number;
  lGd: number;
  lOp: number;
  lTotal: number;
}

export function readFixtures(path: string): FixtureRow[] {
  const rows = readCsv(path);
  const expected = ["pair_id", "l_int", "l_gd", "l_op", "l_total"];
  if (rows.length === 0 || rows[0].join(",") !== expected.join(",")) {
    throw new Error(`${path}: not a loss fixture CSV`);
  }
  return rows.slice(1).map((r) => ({
    pairId: r[0],
    lInt: Number(r[1]),
    lGd: Number(r[2]),
    lOp: Number(r[3]),
    lTotal: Number(r[4]),
  }));
}

/** Input offsets for prediction step k (0-based): the first step uses the
 * window inputs {-5,-3,-1,0}; each later step shifts the stencil forward. */
export function recursionOffsets(step: number): [number, number, number, number] {
  return [step - 5, step - 3, step - 1, step];
}

/**
 * Resolve the four input frames for prediction step k.  Offsets <= 0 come
 * from the window's recorded past; offsets >= 1 index into the predictions
 * made so far (offset o is predictionsSoFar[o - 1]).  T entries stand for
 * any frame representation the caller is tracking (paths or tensors).
 */
export function recursionInputs<T>(
  row: { inputs: [T, T, T, T]; aux: [T, T] | null },
  step: number,
  predictionsSoFar: T[],
): [T, T, T, T] {
  const byOffset = (o: number): T => {
    if (o >= 1) {
      if (o - 1 >= predictionsSoFar.length) {
        throw new Error(`recursion step needs prediction at offset ${o} before it is made`);
      }
      return predictionsSoFar[o - 1];
    }
    switch (o) {
      case -5:
        return row.inputs[0];
      case -3:
        return row.inputs[1];
      case -1:
        return row.inputs[2];
      case 0:
        return row.inputs[3];
      case -4:
      case -2:
        if (row.aux === null) {
          throw new Error("recursion needs the aux frames (in_tm4/in_tm2) but the manifest has none");
        }
        return o === -4 ? row.aux[0] : row.aux[1];
      default:
        throw new Error(`no frame recorded at offset ${o}`);
    }
  };
  const offs = recursionOffsets(step);
  return [byOffset(offs[0]), byOffset(offs[1]), byOffset(offs[2]), byOffset(offs[3])];
}
