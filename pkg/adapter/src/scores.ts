/** Regression scores in the contract's JSON shape. */

import * as fs from "node:fs";
import { PredictionRecord } from "./csvio";

export interface ScoreSet {
  r2: number | null;
  mse: number | null;
  rmse: number | null;
  pearson_r: number | null;
  spearman_rho: number | null;
  n: number;
  null_reasons?: Record<string, string>;
}

function averageRanks(x: number[]): number[] {
  const order = x.map((_, i) => i).sort((a, b) => x[a] - x[b] || a - b);
  const ranks = new Array<number>(x.length);
  let i = 0;
  while (i < x.length) {
    let j = i;
    while (j + 1 < x.length && x[order[j + 1]] === x[order[i]]) j++;
    const rank = (i + j) / 2 + 1;
    for (let k = i; k <= j; k++) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

function pearson(a: number[], b: number[]): number | null {
  if (a.every((v) => v === a[0]) || b.every((v) => v === b[0])) return null;
  const ma = a.reduce((s, v) => s + v, 0) / a.length;
  const mb = b.reduce((s, v) => s + v, 0) / b.length;
  let num = 0;
  let na = 0;
  let nb = 0;
  for (let i = 0; i < a.length; i++) {
    const da = a[i] - ma;
    const db = b[i] - mb;
    num += da * db;
    na += da * da;
    nb += db * db;
  }
  if (na === 0 || nb === 0) return null;
  return num / Math.sqrt(na * nb);
}

export function computeScores(records: PredictionRecord[]): ScoreSet {
  if (records.length < 2) throw new Error("need at least 2 prediction records");
  const ordered = [...records].sort((a, b) =>
    a.sampleId < b.sampleId ? -1 : a.sampleId > b.sampleId ? 1 : 0,
  );
  const y = ordered.map((r) => r.aucTrue);
  const p = ordered.map((r) => r.aucPred);
  const n = y.length;
  const allMetrics = ["r2", "mse", "rmse", "pearson_r", "spearman_rho"];

  if (p.some((v) => !Number.isFinite(v))) {
    const reasons = Object.fromEntries(allMetrics.map((m) => [m, "non-finite-predictions"]));
    return { r2: null, mse: null, rmse: null, pearson_r: null, spearman_rho: null, n,
             null_reasons: reasons };
  }
  const mean = y.reduce((s, v) => s + v, 0) / n;
  const ssTot = y.reduce((s, v) => s + (v - mean) ** 2, 0);
  if (ssTot === 0) {
    const reasons = Object.fromEntries(allMetrics.map((m) => [m, "degenerate-variance"]));
    return { r2: null, mse: null, rmse: null, pearson_r: null, spearman_rho: null, n,
             null_reasons: reasons };
  }
  const ssRes = y.reduce((s, v, i) => s + (v - p[i]) ** 2, 0);
  const mse = ssRes / n;
  const out: ScoreSet = {
    r2: 1 - ssRes / ssTot,
    mse,
    rmse: Math.sqrt(mse),
    pearson_r: pearson(y, p),
    spearman_rho: pearson(averageRanks(y), averageRanks(p)),
    n,
  };
  const reasons: Record<string, string> = {};
  if (out.pearson_r === null) reasons["pearson_r"] = "constant-predictions";
  if (out.spearman_rho === null) reasons["spearman_rho"] = "constant-predictions";
  if (Object.keys(reasons).length) out.null_reasons = reasons;
  return out;
}

export function writeScores(scores: ScoreSet, file: string): void {
  fs.writeFileSync(file, JSON.stringify(scores, null, 2) + "\n");
}
