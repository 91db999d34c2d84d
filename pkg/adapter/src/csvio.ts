/** Benchmark file readers and the contract's prediction/score formats. */

import * as fs from "node:fs";
import * as path from "node:path";

export interface ResponseTable {
  cellIds: string[];
  drugIds: string[];
  auc: number[];
}

export interface FeatureTable {
  ids: string[];
  matrix: number[][];
  featureNames: string[];
}

export interface DatasetDescriptor {
  name: string;
  response_path: string;
  omics_paths: Record<string, string>;
  drug_feature_paths: Record<string, string>;
  n_samples: number;
}

export function loadBenchmarkIndex(root: string): Map<string, DatasetDescriptor> {
  const doc = JSON.parse(fs.readFileSync(path.join(root, "benchmark.json"), "utf-8"));
  const out = new Map<string, DatasetDescriptor>();
  for (const d of doc.datasets as DatasetDescriptor[]) out.set(d.name, d);
  return out;
}

function dataLines(file: string): { header: string[]; rows: string[][] } {
  const lines = fs.readFileSync(file, "utf-8").split(/\r?\n/).filter((l) => l.trim());
  if (lines.length === 0) throw new Error(`${file}: empty file`);
  const header = lines[0].split(",").map((c) => c.trim());
  return { header, rows: lines.slice(1).map((l) => l.split(",")) };
}

export function loadResponseTable(file: string): ResponseTable {
  const { header, rows } = dataLines(file);
  const ci = header.indexOf("cell_id");
  const di = header.indexOf("drug_id");
  const ai = header.indexOf("auc");
  if (ci < 0 || di < 0 || ai < 0) {
    throw new Error(`${file}: header must contain cell_id, drug_id, auc`);
  }
  const seen = new Set<string>();
  const table: ResponseTable = { cellIds: [], drugIds: [], auc: [] };
  for (const row of rows) {
    const key = `${row[ci]}|${row[di]}`;
    if (seen.has(key)) throw new Error(`${file}: duplicate pair ${key}`);
    seen.add(key);
    table.cellIds.push(row[ci]);
    table.drugIds.push(row[di]);
    table.auc.push(Number(row[ai]));
  }
  return table;
}

export function loadFeatureTable(file: string): FeatureTable {
  const { header, rows } = dataLines(file);
  const table: FeatureTable = { ids: [], matrix: [], featureNames: header.slice(1) };
  for (const row of rows) {
    const values = row.slice(1).map(Number);
    if (values.some((v) => !Number.isFinite(v))) {
      throw new Error(`${file}: non-finite feature row for ${row[0]}`);
    }
    table.ids.push(row[0]);
    table.matrix.push(values);
  }
  return table;
}

export function readSplitFile(dir: string, dataset: string, n: number, part: string): number[] {
  const file = path.join(dir, `${dataset}_split_${n}_${part}.txt`);
  const idx = fs.readFileSync(file, "utf-8")
    .split(/\r?\n/)
    .filter((l) => l.trim())
    .map((l) => Number(l));
  if (idx.length === 0) throw new Error(`${file}: empty partition`);
  if (idx.some((i) => !Number.isInteger(i) || i < 0)) {
    throw new Error(`${file}: malformed row index`);
  }
  return idx;
}

// --- predictions ----------------------------------------------------------

export interface PredictionRecord {
  sampleId: string;
  cellId: string;
  drugId: string;
  aucTrue: number;
  aucPred: number;
}

export const PREDICTION_HEADER = "sample_id,cell_id,drug_id,auc_true,auc_pred";

function fmt(v: number): string {
  return v.toPrecision(17);
}

export function writePredictions(records: PredictionRecord[], file: string): void {
  const lines = [PREDICTION_HEADER];
  for (const r of records) {
    lines.push(`${r.sampleId},${r.cellId},${r.drugId},${fmt(r.aucTrue)},${fmt(r.aucPred)}`);
  }
  fs.writeFileSync(file, lines.join("\n") + "\n");
}

export function readPredictions(file: string): PredictionRecord[] {
  const { header, rows } = dataLines(file);
  if (header.join(",") !== PREDICTION_HEADER) {
    throw new Error(`${file}: bad predictions header`);
  }
  const seen = new Set<string>();
  return rows.map((row) => {
    if (seen.has(row[0])) throw new Error(`${file}: duplicate sample_id ${row[0]}`);
    seen.add(row[0]);
    return {
      sampleId: row[0],
      cellId: row[1],
      drugId: row[2],
      aucTrue: Number(row[3]),
      aucPred: Number(row[4]),
    };
  });
}
