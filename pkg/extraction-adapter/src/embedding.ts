/**
 * Offline text embedder: hashed character n-grams, unit-normalized.
 *
 * A pure function of (seed, dimension, text), so the fingerprint fully
 * identifies the vector space and restarts can never silently change
 * an index's geometry.  Stands in for a sentence-embedding model where
 * determinism and zero model weights matter more than semantics.
 */

const FNV_OFFSET = 0x811c9dc5;
const FNV_PRIME = 0x01000193;
const NGRAM_SIZE = 3;

export class HashedNgramEmbedder {
  readonly dimension: number;
  readonly seed: number;

  constructor(seed = 0, dimension = 384) {
    if (!Number.isInteger(dimension) || dimension < 1) {
      throw new Error(`dimension must be a positive integer, got ${dimension}`);
    }
    this.seed = seed;
    this.dimension = dimension;
  }

  fingerprint(): string {
    return `ngram-hash-v1:d=${this.dimension}:seed=${this.seed}`;
  }

  private hash(gram: string): number {
    let h = (FNV_OFFSET ^ this.seed) >>> 0;
    for (let i = 0; i < gram.length; i++) {
      h ^= gram.charCodeAt(i);
      h = Math.imul(h, FNV_PRIME) >>> 0;
    }
    return h;
  }

  embed(text: string): number[] {
    const normalized = text.toLowerCase().trim();
    if (!normalized) {
      throw new Error("cannot embed empty text");
    }
    const vector = new Float64Array(this.dimension);
    const padded = ` ${normalized.replace(/\s+/g, " ")} `;
    for (let i = 0; i + NGRAM_SIZE <= padded.length; i++) {
      const h = this.hash(padded.slice(i, i + NGRAM_SIZE));
      const bucket = h % this.dimension;
      const sign = (h >>> 16) & 1 ? 1 : -1;
      vector[bucket] = vector[bucket]! + sign;
    }
    let norm = 0;
    for (const v of vector) norm += v * v;
    norm = Math.sqrt(norm);
    if (norm === 0) {
      // all grams cancelled; give the text a deterministic fallback axis
      vector[this.hash(padded) % this.dimension] = 1;
      norm = 1;
    }
    return [...vector].map((v) => v / norm);
  }
}
