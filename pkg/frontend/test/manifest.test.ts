import * as fs from "node:fs";
import * as path from "node:path";
import { describe, expect, it } from "vitest";
import {
  readFixtures,
  readManifest,
  recursionInputs,
  recursionOffsets,
  WindowRow,
} from "../src/manifest.js";
import { FIXTURES_DIR, MANIFEST, tmpDir } from "./helpers.js";

describe("readManifest", () => {
  it("parses the generated manifest with aux columns", () => {
    const rows = readManifest(MANIFEST);
    expect(rows.length).toBe(50);
    const r = rows[0];
    expect(r.inputs.length).toBe(4);
    expect(r.targets.length).toBe(5);
    expect(r.aux).not.toBeNull();
    expect(r.aux!.length).toBe(2);
    for (const p of [...r.inputs, ...r.targets, ...r.aux!]) {
      expect(path.isAbsolute(p)).toBe(true);
    }
  });

  it("accepts a manifest without aux columns", () => {
    const dir = tmpDir("manifest");
    const file = path.join(dir, "noaux.csv");
    fs.writeFileSync(
      file,
      "anchor_ts,in0,in1,in2,in3,target1\n" + "100,a.png,b.png,c.png,d.png,e.png\n",
    );
    const rows = readManifest(file);
    expect(rows.length).toBe(1);
    expect(rows[0].aux).toBeNull();
    expect(rows[0].targets).toEqual(["e.png"]);
  });

  it("rejects a malformed header", () => {
    const dir = tmpDir("manifest");
    const file = path.join(dir, "bad.csv");
    fs.writeFileSync(file, "timestamp,in0,in1,in2,in3,target1\n100,a,b,c,d,e\n");
    expect(() => readManifest(file)).toThrow(/header/);
  });

  it("rejects a row with the wrong number of cells", () => {
    const dir = tmpDir("manifest");
    const file = path.join(dir, "short.csv");
    fs.writeFileSync(file, "anchor_ts,in0,in1,in2,in3,target1\n100,a,b,c,d\n");
    expect(() => readManifest(file)).toThrow(/fields/);
  });
});

describe("readFixtures", () => {
  it("reads the fixture bundle CSV", () => {
    const rows = readFixtures(path.join(FIXTURES_DIR, "fixtures.csv"));
    expect(rows.length).toBeGreaterThanOrEqual(4);
    const ids = rows.map((r) => r.pairId);
    expect(ids).toContain("identical");
    expect(ids).toContain("const_offset");
    const identical = rows.find((r) => r.pairId === "identical")!;
    expect(identical.lInt).toBe(0);
    expect(identical.lGd).toBe(0);
    expect(identical.lOp).toBe(0);
  });
});

describe("recursion stencil", () => {
  it("slides the sampling offsets one frame per step", () => {
    expect(recursionOffsets(0)).toEqual([-5, -3, -1, 0]);
    expect(recursionOffsets(1)).toEqual([-4, -2, 0, 1]);
    expect(recursionOffsets(2)).toEqual([-3, -1, 1, 2]);
    expect(recursionOffsets(3)).toEqual([-2, 0, 2, 3]);
    expect(recursionOffsets(4)).toEqual([-1, 1, 3, 4]);
  });

  const row: WindowRow = {
    anchorTs: "100",
    inputs: ["in0", "in1", "in2", "in3"],
    targets: ["t1", "t2", "t3", "t4", "t5"],
    aux: ["tm4", "tm2"],
  };

  it("substitutes recorded frames and feeds predictions back", () => {
    const preds = ["p1", "p2", "p3", "p4"];
    expect(recursionInputs(row, 0, preds)).toEqual(["in0", "in1", "in2", "in3"]);
    expect(recursionInputs(row, 1, preds)).toEqual(["tm4", "tm2", "in3", "p1"]);
    expect(recursionInputs(row, 2, preds)).toEqual(["in1", "in2", "p1", "p2"]);
    expect(recursionInputs(row, 3, preds)).toEqual(["tm2", "in3", "p2", "p3"]);
    expect(recursionInputs(row, 4, preds)).toEqual(["in2", "p1", "p3", "p4"]);
  });

  it("requires aux frames when the stencil lands on -4 or -2", () => {
    const noAux: WindowRow = { ...row, aux: null };
    expect(() => recursionInputs(noAux, 1, ["p1"])).toThrow(/aux|in_tm/);
    expect(recursionInputs(noAux, 2, ["p1", "p2"])).toEqual(["in1", "in2", "p1", "p2"]);
  });

  it("rejects references to predictions that do not exist yet", () => {
    expect(() => recursionInputs(row, 2, ["p1"])).toThrow(/prediction/);
  });
});
