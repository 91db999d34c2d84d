/** SplitMix64: deterministic 64-bit generator for the feature subsample. */

const MASK = (1n << 64n) - 1n;

export class SplitMix64 {
  private state: bigint;

  constructor(seed: number | bigint) {
    this.state = BigInt(seed) & MASK;
  }

  nextU64(): bigint {
    this.state = (this.state + 0x9e3779b97f4a7c15n) & MASK;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK;
    return z ^ (z >> 31n);
  }

  /** Uniform integer in [0, n) via rejection sampling. */
  nextBelow(n: number): number {
    const bound = BigInt(n);
    const limit = MASK + 1n - ((MASK + 1n) % bound);
    for (;;) {
      const z = this.nextU64();
      if (z < limit) return Number(z % bound);
    }
  }
}

/** k distinct indices from [0, n), in draw order. */
export function pickDistinct(k: number, n: number, rng: SplitMix64): number[] {
  if (k > n) throw new Error(`cannot pick ${k} distinct from ${n}`);
  const chosen = new Set<number>();
  const out: number[] = [];
  while (out.length < k) {
    const idx = rng.nextBelow(n);
    if (!chosen.has(idx)) {
      chosen.add(idx);
      out.push(idx);
    }
  }
  return out;
}
