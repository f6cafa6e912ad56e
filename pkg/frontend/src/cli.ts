/**
 * Command line entry: train / predict / parity.
 *
 * Exit codes mirror the backend CLI: 0 success, 1 operational failure
 * (parity mismatch, aborted training), 2 usage or bad input.
 */

import { pathToFileURL } from "node:url";
import { defaultUNetSpec, defaultLSTMSpec, ModelSpec } from "./models.js";
import { train, defaultTrainConfig } from "./train.js";
import { predictRecursive } from "./predict.js";
import { runParity, PARITY_TOLERANCE } from "./parity.js";
import { DEFAULT_FLOW_PARAMS } from "./flow.js";

const EXIT_OK = 0;
const EXIT_FAIL = 1;
const EXIT_USAGE = 2;

const USAGE = `usage:
  skynet train   --manifest FILE --out DIR [--model unet|lstm] [--base-channels N]
                 [--stages N] [--epochs N] [--lr F] [--batch-size N] [--seed N]
                 [--lambda-int F] [--lambda-gd F] [--lambda-op F]
                 [--flow-iterations N] [--flow-alpha F]
  skynet predict --checkpoint DIR --manifest FILE --out DIR [--horizon K]
  skynet parity  --fixtures DIR [--tolerance F] [--flow-iterations N]`;

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) throw new Error(`unexpected argument ${arg}`);
    const value = argv[i + 1];
    if (value === undefined || value.startsWith("--")) {
      throw new Error(`flag ${arg} needs a value`);
    }
    flags.set(arg.slice(2), value);
    i++;
  }
  return flags;
}

function need(flags: Map<string, string>, name: string): string {
  const v = flags.get(name);
  if (v === undefined) throw new Error(`--${name} is required`);
  return v;
}

function num(flags: Map<string, string>, name: string, fallback: number): number {
  const v = flags.get(name);
  if (v === undefined) return fallback;
  const n = Number(v);
  if (!Number.isFinite(n)) throw new Error(`--${name}: not a number: ${v}`);
  return n;
}

async function cmdTrain(flags: Map<string, string>): Promise<number> {
  const manifest = need(flags, "manifest");
  const out = need(flags, "out");
  const kind = flags.get("model") ?? "unet";
  let spec: ModelSpec;
  if (kind === "unet") {
    spec = defaultUNetSpec({
      baseChannels: num(flags, "base-channels", 32),
      stages: num(flags, "stages", 4),
    });
  } else if (kind === "lstm") {
    spec = defaultLSTMSpec({ baseFilters: num(flags, "base-channels", 16) });
  } else {
    throw new Error(`--model must be unet or lstm, got ${kind}`);
  }
  const config = defaultTrainConfig({
    learningRate: num(flags, "lr", 0.001),
    epochs: num(flags, "epochs", 40),
    batchSize: num(flags, "batch-size", 10),
    seed: num(flags, "seed", 7),
    weights: {
      lambdaInt: num(flags, "lambda-int", 0.5),
      lambdaGd: num(flags, "lambda-gd", 0.001),
      lambdaOp: num(flags, "lambda-op", 0.01),
    },
    flowIterations: num(flags, "flow-iterations", 20),
    flowAlpha: num(flags, "flow-alpha", 15),
  });
  const result = await train(manifest, spec, config, out);
  for (const r of result.rows) {
    console.log(`epoch ${r.epoch}: l_total=${r.lTotal.toPrecision(6)}`);
  }
  console.log(`checkpoint written to ${result.checkpointDir}`);
  return EXIT_OK;
}

function cmdPredict(flags: Map<string, string>): number {
  const checkpoint = need(flags, "checkpoint");
  const manifest = need(flags, "manifest");
  const out = need(flags, "out");
  const horizon = flags.has("horizon") ? num(flags, "horizon", 0) : undefined;
  const result = predictRecursive(checkpoint, manifest, out, horizon);
  console.log(`wrote ${result.written.length} prediction(s) for ${result.windows} window(s) to ${out}`);
  return EXIT_OK;
}

function cmdParity(flags: Map<string, string>): number {
  const fixtures = need(flags, "fixtures");
  const tolerance = num(flags, "tolerance", PARITY_TOLERANCE);
  const flowIterations = num(flags, "flow-iterations", DEFAULT_FLOW_PARAMS.iterations);
  const result = runParity(fixtures, tolerance, {
    alpha: DEFAULT_FLOW_PARAMS.alpha,
    iterations: flowIterations,
  });
  console.log("pair_id          l_int_rel    l_gd_rel     l_op_rel (reported only)");
  for (const r of result.rows) {
    const mark = r.ok ? "ok  " : "FAIL";
    console.log(
      `${mark} ${r.pairId.padEnd(12)} ${r.lIntRel.toExponential(3)}    ${r.lGdRel.toExponential(3)}    ${r.lOpRel.toExponential(3)}`,
    );
  }
  if (!result.ok) {
    console.error(`parity FAILED: l_int/l_gd deviate beyond ${tolerance} relative`);
    return EXIT_FAIL;
  }
  console.log(`parity ok: l_int and l_gd within ${tolerance} relative on ${result.rows.length} pair(s)`);
  return EXIT_OK;
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  if (command === "--help" || command === "-h") {
    console.log(USAGE);
    return EXIT_OK;
  }
  if (command === undefined) {
    console.error(USAGE);
    return EXIT_USAGE;
  }
  let flags: Map<string, string>;
  try {
    flags = parseFlags(rest);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    console.error(USAGE);
    return EXIT_USAGE;
  }
  try {
    switch (command) {
      case "train":
        return await cmdTrain(flags);
      case "predict":
        return cmdPredict(flags);
      case "parity":
        return cmdParity(flags);
      default:
        console.error(`unknown command: ${command}`);
        console.error(USAGE);
        return EXIT_USAGE;
    }
  } catch (err) {
    const msg = err instanceof Error ? err.message : String(err);
    console.error(msg);
    // bad inputs (missing files, malformed CSVs, bad flags) are usage
    // errors; mid-run aborts (non-finite loss) are operational failures
    return msg.startsWith("non-finite loss") ? EXIT_FAIL : EXIT_USAGE;
  }
}

const isDirectRun =
  process.argv[1] !== undefined && import.meta.url === pathToFileURL(process.argv[1]).href;
if (isDirectRun) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
