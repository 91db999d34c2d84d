/** Partition serialization (the adapter's own model-input format) and the
 * feature join/standardization shared by the stages.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { FeatureTable, ResponseTable } from "./csvio";

export interface Partition {
  sampleIds: string[];
  cellIds: string[];
  drugIds: string[];
  x: number[][];
  y: number[];
}

export function writePartition(dir: string, part: Partition): void {
  fs.mkdirSync(dir, { recursive: true });
  fs.writeFileSync(path.join(dir, "data.json"), JSON.stringify(part));
}

export function readPartition(dir: string): Partition {
  const file = path.join(dir, "data.json");
  if (!fs.existsSync(file)) throw new Error(`partition data missing: ${file}`);
  return JSON.parse(fs.readFileSync(file, "utf-8")) as Partition;
}

export function joinFeatures(
  response: ResponseTable,
  rows: number[],
  cellTables: FeatureTable[],
  drugTables: FeatureTable[],
): Partition {
  const cellIndex = cellTables.map((t) => new Map(t.ids.map((id, i) => [id, i])));
  const drugIndex = drugTables.map((t) => new Map(t.ids.map((id, i) => [id, i])));

  const missing = new Set<string>();
  for (const r of rows) {
    cellIndex.forEach((idx) => {
      if (!idx.has(response.cellIds[r])) missing.add(`cell:${response.cellIds[r]}`);
    });
    drugIndex.forEach((idx) => {
      if (!idx.has(response.drugIds[r])) missing.add(`drug:${response.drugIds[r]}`);
    });
  }
  if (missing.size) {
    throw new Error(`unknown entities: ${[...missing].sort().join(", ")}`);
  }

  const part: Partition = { sampleIds: [], cellIds: [], drugIds: [], x: [], y: [] };
  for (const r of rows) {
    const cell = response.cellIds[r];
    const drug = response.drugIds[r];
    const row: number[] = [];
    cellTables.forEach((t, k) => row.push(...t.matrix[cellIndex[k].get(cell)!]));
    drugTables.forEach((t, k) => row.push(...t.matrix[drugIndex[k].get(drug)!]));
    part.sampleIds.push(String(r));
    part.cellIds.push(cell);
    part.drugIds.push(drug);
    part.x.push(row);
    part.y.push(response.auc[r]);
  }
  return part;
}

export interface Scaler {
  mean: number[];
  divisor: number[];
}

const STD_FLOOR = 1e-8;

export function fitScaler(x: number[][]): Scaler {
  const n = x.length;
  const f = x[0]?.length ?? 0;
  const mean = new Array<number>(f).fill(0);
  for (const row of x) for (let j = 0; j < f; j++) mean[j] += row[j];
  for (let j = 0; j < f; j++) mean[j] /= n;
  const variance = new Array<number>(f).fill(0);
  for (const row of x) {
    for (let j = 0; j < f; j++) variance[j] += (row[j] - mean[j]) ** 2;
  }
  const divisor = variance.map((v) => {
    const std = Math.sqrt(v / n);
    return std > STD_FLOOR ? std : 1.0;
  });
  return { mean, divisor };
}

export function applyScaler(scaler: Scaler, x: number[][]): number[][] {
  return x.map((row) => row.map((v, j) => (v - scaler.mean[j]) / scaler.divisor[j]));
}
