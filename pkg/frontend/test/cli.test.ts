import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as path from "node:path";
import { beforeAll, describe, expect, it } from "vitest";
import { FIXTURES_DIR, FRONTEND_DIR, miniManifest, tmpDir } from "./helpers.js";

const CLI = path.join(FRONTEND_DIR, "dist", "cli.js");

function run(...args: string[]): { status: number; stdout: string; stderr: string } {
  const res = spawnSync("node", [CLI, ...args], { encoding: "utf8", timeout: 300_000 });
  return { status: res.status ?? -1, stdout: res.stdout ?? "", stderr: res.stderr ?? "" };
}

beforeAll(() => {
  if (!fs.existsSync(CLI)) {
    throw new Error(`${CLI} not built; run \`npm run build\` first (\`npm test\` does)`);
  }
});

describe("cli exit codes", () => {
  it("prints usage and exits 2 with no arguments", () => {
    const res = run();
    expect(res.status).toBe(2);
    expect(res.stderr).toContain("usage:");
  });

  it("exits 2 on unknown commands and missing flags", () => {
    expect(run("frobnicate").status).toBe(2);
    expect(run("train", "--out", "/tmp/x").status).toBe(2);
    expect(run("predict", "--manifest", "nope.csv").status).toBe(2);
  });

  it("runs parity green against the backend fixtures", () => {
    const res = run("parity", "--fixtures", FIXTURES_DIR);
    expect(res.status, res.stderr).toBe(0);
    expect(res.stdout).toContain("parity ok");
    expect(res.stdout).toContain("l_op_rel (reported only)");
  });

  it("exits 1 when the parity tolerance cannot be met", () => {
    const res = run("parity", "--fixtures", FIXTURES_DIR, "--tolerance", "1e-18");
    expect(res.status).toBe(1);
    expect(res.stderr).toContain("parity FAILED");
  });
});

describe("cli train and predict", () => {
  it("trains a tiny model and predicts recursively from the checkpoint", () => {
    const dir = tmpDir("cli");
    const manifest = miniManifest(2, dir);
    const ck = path.join(dir, "ck");

    const trainRes = run(
      "train",
      "--manifest", manifest,
      "--out", ck,
      "--base-channels", "4",
      "--stages", "1",
      "--epochs", "2",
      "--batch-size", "2",
      "--lambda-op", "0",
    );
    expect(trainRes.status, trainRes.stderr).toBe(0);
    expect(trainRes.stdout).toContain("epoch 1:");
    expect(fs.existsSync(path.join(ck, "checkpoint.json"))).toBe(true);
    expect(fs.existsSync(path.join(ck, "weights.bin"))).toBe(true);
    expect(fs.existsSync(path.join(ck, "losses.csv"))).toBe(true);

    const out = path.join(dir, "preds");
    const predRes = run("predict", "--checkpoint", ck, "--manifest", manifest, "--out", out);
    expect(predRes.status, predRes.stderr).toBe(0);
    const files = fs.readdirSync(out).sort();
    expect(files.length).toBe(10); // 2 windows x 5 recorded targets
    for (const f of files) expect(f).toMatch(/^\d+_pred[1-5]\.png$/);

    const limited = path.join(dir, "preds1");
    const oneStep = run(
      "predict",
      "--checkpoint", ck,
      "--manifest", manifest,
      "--out", limited,
      "--horizon", "1",
    );
    expect(oneStep.status, oneStep.stderr).toBe(0);
    expect(fs.readdirSync(limited).length).toBe(2);
  });
});
