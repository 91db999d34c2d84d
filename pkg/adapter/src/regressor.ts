/** The adapter's internal model: ordinary least squares on a seeded random
 * feature subsample. It exists to exercise the stage contract, not to win
 * benchmarks, so it has no dependencies and is fully deterministic.
 */

import { SplitMix64, pickDistinct } from "./rng";

export interface OlsModel {
  columns: number[];
  weights: number[];
  intercept: number;
  seed: number;
}

/** Solve A x = b (symmetric positive definite-ish) by Gaussian elimination
 * with partial pivoting; A and b are consumed. */
export function solveDense(a: number[][], b: number[]): number[] {
  const n = b.length;
  for (let col = 0; col < n; col++) {
    let pivot = col;
    for (let r = col + 1; r < n; r++) {
      if (Math.abs(a[r][col]) > Math.abs(a[pivot][col])) pivot = r;
    }
    if (a[pivot][col] === 0) throw new Error("singular system");
    if (pivot !== col) {
      [a[col], a[pivot]] = [a[pivot], a[col]];
      [b[col], b[pivot]] = [b[pivot], b[col]];
    }
    for (let r = col + 1; r < n; r++) {
      const factor = a[r][col] / a[col][col];
      if (factor === 0) continue;
      for (let c = col; c < n; c++) a[r][c] -= factor * a[col][c];
      b[r] -= factor * b[col];
    }
  }
  const x = new Array<number>(n).fill(0);
  for (let r = n - 1; r >= 0; r--) {
    let acc = b[r];
    for (let c = r + 1; c < n; c++) acc -= a[r][c] * x[c];
    x[r] = acc / a[r][r];
  }
  return x;
}

export function fitOls(x: number[][], y: number[], seed: number, subsample: number): OlsModel {
  const nFeatures = x[0]?.length ?? 0;
  if (nFeatures === 0) throw new Error("empty design matrix");
  const k = Math.min(subsample, nFeatures);
  const columns = pickDistinct(k, nFeatures, new SplitMix64(seed)).sort((a, b) => a - b);

  const meanY = y.reduce((s, v) => s + v, 0) / y.length;
  const meanX = columns.map(
    (c) => x.reduce((s, row) => s + row[c], 0) / x.length,
  );
  // normal equations on centered data with a tiny jitter for rank safety
  const gram = columns.map(() => new Array<number>(k).fill(0));
  const rhs = new Array<number>(k).fill(0);
  for (let i = 0; i < x.length; i++) {
    const dy = y[i] - meanY;
    for (let a = 0; a < k; a++) {
      const da = x[i][columns[a]] - meanX[a];
      rhs[a] += da * dy;
      for (let b = a; b < k; b++) {
        gram[a][b] += da * (x[i][columns[b]] - meanX[b]);
      }
    }
  }
  for (let a = 0; a < k; a++) {
    gram[a][a] += 1e-9;
    for (let b = 0; b < a; b++) gram[a][b] = gram[b][a];
  }
  const weights = solveDense(gram, rhs);
  const intercept = meanY - weights.reduce((s, w, a) => s + w * meanX[a], 0);
  return { columns, weights, intercept, seed };
}

export function predictOls(model: OlsModel, x: number[][]): number[] {
  return x.map((row) =>
    model.columns.reduce((s, c, a) => s + model.weights[a] * row[c], model.intercept),
  );
}
