/** Conformance checklist runner for stage-contract models.
 *
 * Runs a scripted battery against a tiny benchmark and grades six checks:
 * flag parsing, parameter precedence, artifact names, predictions schema,
 * scores schema, and exit codes. The overall report passes iff every
 * check passes. Usage:
 *
 *   node dist/src/conformance.js --model <manifest.json|baseline-ridge|baseline-knn>
 *        --benchmark <dir> --workdir <dir> --out <report.json>
 *        [--source synth0] [--target synth0] [--split 0]
 *        [--probe_stage train --probe_key seed --probe_a 1 --probe_b 2]
 *
 * The probe parameter must be a declared stage parameter with an
 * observable effect on predictions; it drives the precedence check
 * (config file vs command line).
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { spawnSync } from "node:child_process";
import { readPredictions } from "./csvio";
import { parseArgv } from "./params";

type Argv = string[];

export interface StageSpec {
  name: string;
  stages: Record<string, Argv>;
}

export interface CheckResult {
  pass: boolean;
  detail: string;
}

export interface ConformanceReport {
  model: string;
  pass: boolean;
  checks: Record<string, CheckResult>;
}

const CHECKS = [
  "flag_parsing",
  "precedence",
  "artifact_names",
  "predictions_schema",
  "scores_schema",
  "exit_codes",
] as const;

const BUILTIN_PYTHON_MODELS: Record<string, string> = {
  "baseline-ridge": "ridge",
  "baseline-knn": "knn",
};

export function resolveModel(spec: string, pythonExe: string): StageSpec {
  const kind = BUILTIN_PYTHON_MODELS[spec];
  if (kind) {
    const stages: Record<string, Argv> = {};
    for (const stage of ["preprocess", "train", "infer"]) {
      stages[stage] = [pythonExe, "-m", "csabench.baseline", kind, stage];
    }
    return { name: spec, stages };
  }
  const manifest = JSON.parse(fs.readFileSync(spec, "utf-8"));
  const base = path.dirname(path.resolve(spec));
  const stages: Record<string, Argv> = {};
  for (const stage of ["preprocess", "train", "infer"]) {
    const argv: Argv = manifest.stages[stage].map(String);
    stages[stage] = argv.map((tok) =>
      tok.includes("/") && !path.isAbsolute(tok) && fs.existsSync(path.join(base, tok))
        ? path.join(base, tok)
        : tok,
    );
  }
  return { name: String(manifest.name), stages };
}

interface RunOutcome {
  status: number;
  output: string;
}

function runArgv(argv: Argv, flags: Record<string, string>, cwd: string): RunOutcome {
  const full = [...argv];
  for (const [k, v] of Object.entries(flags)) full.push(`--${k}`, v);
  const proc = spawnSync(full[0], full.slice(1), {
    cwd,
    encoding: "utf-8",
    timeout: 120_000,
  });
  return {
    status: proc.status ?? -1,
    output: `${proc.stdout ?? ""}${proc.stderr ?? ""}`,
  };
}

export interface BatteryOptions {
  model: StageSpec;
  benchmark: string;
  workdir: string;
  source: string;
  target: string;
  split: number;
  probeStage: string;
  probeKey: string;
  probeA: string;
  probeB: string;
}

export function runConformance(opts: BatteryOptions): ConformanceReport {
  const checks = {} as Record<(typeof CHECKS)[number], CheckResult>;
  const work = path.resolve(opts.workdir);
  fs.mkdirSync(work, { recursive: true });
  const preOut = path.join(work, "preprocess");
  const trainOut = path.join(work, "train");
  const inferOut = path.join(work, "infer");

  const preFlags = {
    benchmark_root: path.resolve(opts.benchmark),
    source_dataset: opts.source,
    target_dataset: opts.target,
    split_index: String(opts.split),
    split_dir: path.join(path.resolve(opts.benchmark), opts.source, "splits"),
    output_dir: preOut,
  };

  // exit_codes: a valid invocation returns 0; a missing required flag
  // returns nonzero
  const preOk = runArgv(opts.model.stages["preprocess"], preFlags, work);
  const { output_dir: _skip, ...incomplete } = preFlags;
  const preMissing = runArgv(opts.model.stages["preprocess"], incomplete, work);
  checks.exit_codes = {
    pass: preOk.status === 0 && preMissing.status !== 0,
    detail: `valid run exit ${preOk.status}; missing required flag exit ${preMissing.status}`,
  };

  // flag_parsing: unknown flags must be rejected with a nonzero exit
  const unknown = runArgv(
    opts.model.stages["preprocess"],
    { ...preFlags, output_dir: path.join(work, "pre_unknown"), definitely_not_a_flag: "1" },
    work,
  );
  checks.flag_parsing = {
    pass: unknown.status !== 0,
    detail: `unknown flag exit ${unknown.status}`,
  };

  // artifact_names across all three stages
  const trainFlags = { input_dir: preOut, output_dir: trainOut };
  const trainRun = runArgv(opts.model.stages["train"], trainFlags, work);
  const inferFlags = {
    input_dir: preOut,
    model_dir: path.join(trainOut, "model"),
    test_data_dir: path.join(preOut, "test"),
    output_dir: inferOut,
  };
  const inferRun = runArgv(opts.model.stages["infer"], inferFlags, work);
  const expected = [
    path.join(preOut, "train"),
    path.join(preOut, "val"),
    path.join(preOut, "test"),
    path.join(trainOut, "model"),
    path.join(trainOut, "val_y_data_predicted.csv"),
    path.join(trainOut, "val_scores.json"),
    path.join(inferOut, "test_y_data_predicted.csv"),
    path.join(inferOut, "test_scores.json"),
  ];
  const missingArtifacts = expected.filter((p) => !fs.existsSync(p));
  checks.artifact_names = {
    pass: trainRun.status === 0 && inferRun.status === 0 && missingArtifacts.length === 0,
    detail: missingArtifacts.length
      ? `missing: ${missingArtifacts.join(", ")}`
      : `all ${expected.length} contract artifacts present`,
  };

  // predictions_schema: header, unique sample ids, bounded finite truth
  checks.predictions_schema = checkPredictions([
    path.join(trainOut, "val_y_data_predicted.csv"),
    path.join(inferOut, "test_y_data_predicted.csv"),
  ]);

  // scores_schema: flat JSON object with the five standard metrics
  checks.scores_schema = checkScores([
    path.join(trainOut, "val_scores.json"),
    path.join(inferOut, "test_scores.json"),
  ]);

  // precedence: with the probe key set to A in the config file and B on
  // the command line, the command line must win
  checks.precedence = checkPrecedence(opts, work, preOut);

  const pass = CHECKS.every((name) => checks[name].pass);
  return { model: opts.model.name, pass, checks };
}

function checkPredictions(files: string[]): CheckResult {
  for (const file of files) {
    try {
      const records = readPredictions(file);
      if (records.length < 2) return { pass: false, detail: `${file}: too few records` };
      for (const r of records) {
        if (!Number.isFinite(r.aucTrue) || r.aucTrue < 0 || r.aucTrue > 1) {
          return { pass: false, detail: `${file}: auc_true ${r.aucTrue} outside [0, 1]` };
        }
        if (Number.isNaN(r.aucPred)) {
          return { pass: false, detail: `${file}: non-numeric auc_pred` };
        }
      }
    } catch (err) {
      return { pass: false, detail: `${file}: ${err instanceof Error ? err.message : err}` };
    }
  }
  return { pass: true, detail: `${files.length} prediction files conform` };
}

function checkScores(files: string[]): CheckResult {
  const required = ["r2", "mse", "rmse", "pearson_r", "spearman_rho"];
  for (const file of files) {
    try {
      const doc = JSON.parse(fs.readFileSync(file, "utf-8"));
      if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
        return { pass: false, detail: `${file}: not a JSON object` };
      }
      for (const key of required) {
        if (!(key in doc)) return { pass: false, detail: `${file}: missing ${key}` };
        const v = doc[key];
        if (v !== null && typeof v !== "number") {
          return { pass: false, detail: `${file}: ${key} is neither number nor null` };
        }
      }
    } catch (err) {
      return { pass: false, detail: `${file}: ${err instanceof Error ? err.message : err}` };
    }
  }
  return { pass: true, detail: `${files.length} score files conform` };
}

function checkPrecedence(opts: BatteryOptions, work: string, preOut: string): CheckResult {
  const stageArgv = opts.model.stages[opts.probeStage];
  if (!stageArgv) return { pass: false, detail: `no stage ${opts.probeStage}` };
  const config = path.join(work, "probe.ini");
  fs.writeFileSync(config, `[${opts.probeStage}]\n${opts.probeKey} = ${opts.probeA}\n`);

  const run = (tag: string, flags: Record<string, string>): string | null => {
    const out = path.join(work, `probe_${tag}`);
    const outcome = runArgv(stageArgv, { input_dir: preOut, output_dir: out, ...flags }, work);
    if (outcome.status !== 0) return null;
    const preds = path.join(out, "val_y_data_predicted.csv");
    return fs.existsSync(preds) ? fs.readFileSync(preds, "utf-8") : null;
  };

  const both = run("both", { config, [opts.probeKey]: opts.probeB });
  const cliOnly = run("cli", { [opts.probeKey]: opts.probeB });
  const configOnly = run("config", { config });
  if (both === null || cliOnly === null || configOnly === null) {
    return { pass: false, detail: "probe stage invocation failed" };
  }
  if (cliOnly === configOnly) {
    return {
      pass: false,
      detail: `probe values ${opts.probeA} and ${opts.probeB} produce identical output; probe is unobservable`,
    };
  }
  const pass = both === cliOnly;
  return {
    pass,
    detail: pass
      ? "command line overrides config file"
      : "config file value won over the command line",
  };
}

function main(argv: string[]): number {
  let cli: Record<string, string>;
  try {
    cli = parseArgv(argv);
  } catch (err) {
    process.stderr.write(`conformance: ${err instanceof Error ? err.message : err}\n`);
    return 2;
  }
  for (const required of ["model", "benchmark", "workdir", "out"]) {
    if (!(required in cli)) {
      process.stderr.write(`conformance: missing required flag --${required}\n`);
      return 2;
    }
  }
  const model = resolveModel(cli["model"], cli["python"] ?? "python3");
  const report = runConformance({
    model,
    benchmark: cli["benchmark"],
    workdir: cli["workdir"],
    source: cli["source"] ?? "synth0",
    target: cli["target"] ?? "synth0",
    split: Number(cli["split"] ?? "0"),
    probeStage: cli["probe_stage"] ?? "train",
    probeKey: cli["probe_key"] ?? "seed",
    probeA: cli["probe_a"] ?? "1",
    probeB: cli["probe_b"] ?? "2",
  });
  fs.writeFileSync(cli["out"], JSON.stringify(report, null, 2) + "\n");
  for (const [name, result] of Object.entries(report.checks)) {
    process.stdout.write(`${result.pass ? "PASS" : "FAIL"} ${name}: ${result.detail}\n`);
  }
  process.stdout.write(`${report.pass ? "PASS" : "FAIL"} overall: ${report.model}\n`);
  return report.pass ? 0 : 1;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
