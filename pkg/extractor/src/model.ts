/**
 * Pinned deterministic embedding models.
 *
 * No network access is assumed: the "tiny-proj-v1" model is a fixed random
 * projection pipeline whose weights derive from the model id via SHA-256,
 * so the same id always reproduces the same embeddings, byte for byte.
 * Real encoders can be added behind the same interface.
 */

import { createHash } from "node:crypto";

export const PROMPT_TEMPLATE = "a photo of a {name}";

export interface EmbeddingModel {
  readonly id: string;
  readonly dim: number;
  embedImage(pixels: Float64Array, width: number, height: number): Float64Array;
  embedText(text: string): Float64Array;
}

/** splitmix64 over a 64-bit state, returning doubles in [0, 1). */
class SeededRng {
  private state: bigint;

  constructor(seedBytes: Buffer) {
    this.state = seedBytes.readBigUInt64LE(0);
  }

  next(): number {
    this.state = (this.state + 0x9e3779b97f4a7c15n) & 0xffffffffffffffffn;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & 0xffffffffffffffffn;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & 0xffffffffffffffffn;
    z = z ^ (z >> 31n);
    return Number(z >> 11n) / 9007199254740992; // 2^53
  }

  gaussian(): number {
    // Box-Muller; discards the second variate to keep the stream simple
    const u1 = Math.max(this.next(), 1e-12);
    const u2 = this.next();
    return Math.sqrt(-2.0 * Math.log(u1)) * Math.cos(2.0 * Math.PI * u2);
  }
}

function seedFor(parts: string[]): Buffer {
  return createHash("sha256").update(parts.join(":")).digest();
}

function gaussianMatrix(rows: number, cols: number, seed: Buffer): Float64Array {
  const rng = new SeededRng(seed);
  const out = new Float64Array(rows * cols);
  for (let i = 0; i < out.length; i++) {
    out[i] = rng.gaussian() / Math.sqrt(cols);
  }
  return out;
}

function normalize(v: Float64Array): Float64Array {
  let norm = 0;
  for (const x of v) norm += x * x;
  norm = Math.sqrt(norm);
  if (norm === 0) throw new Error("cannot normalize a zero embedding");
  const out = new Float64Array(v.length);
  for (let i = 0; i < v.length; i++) out[i] = v[i] / norm;
  return out;
}

/** Area-average resize of an RGB image to size x size. */
export function resizeArea(
  pixels: Float64Array, width: number, height: number, size: number,
): Float64Array {
  const out = new Float64Array(size * size * 3);
  for (let oy = 0; oy < size; oy++) {
    const y0 = Math.floor((oy * height) / size);
    const y1 = Math.max(y0 + 1, Math.floor(((oy + 1) * height) / size));
    for (let ox = 0; ox < size; ox++) {
      const x0 = Math.floor((ox * width) / size);
      const x1 = Math.max(x0 + 1, Math.floor(((ox + 1) * width) / size));
      for (let c = 0; c < 3; c++) {
        let acc = 0;
        for (let y = y0; y < y1; y++) {
          for (let x = x0; x < x1; x++) {
            acc += pixels[(y * width + x) * 3 + c];
          }
        }
        out[(oy * size + ox) * 3 + c] = acc / ((y1 - y0) * (x1 - x0));
      }
    }
  }
  return out;
}

const PATCH_SIZE = 16;

class TinyProjModel implements EmbeddingModel {
  readonly id: string;
  readonly dim: number;
  private readonly imageMatrix: Float64Array;
  private readonly textMatrix: Float64Array;
  private static readonly TEXT_BUCKETS = 512;

  constructor(id: string, dim: number) {
    this.id = id;
    this.dim = dim;
    this.imageMatrix = gaussianMatrix(dim, PATCH_SIZE * PATCH_SIZE * 3, seedFor([id, "image"]));
    this.textMatrix = gaussianMatrix(dim, TinyProjModel.TEXT_BUCKETS, seedFor([id, "text"]));
  }

  embedImage(pixels: Float64Array, width: number, height: number): Float64Array {
    const patch = resizeArea(pixels, width, height, PATCH_SIZE);
    for (let i = 0; i < patch.length; i++) patch[i] = patch[i] * 2 - 1; // [0,1] -> [-1,1]
    const out = new Float64Array(this.dim);
    for (let d = 0; d < this.dim; d++) {
      let acc = 0;
      const row = d * patch.length;
      for (let i = 0; i < patch.length; i++) acc += this.imageMatrix[row + i] * patch[i];
      out[d] = acc;
    }
    return normalize(out);
  }

  embedText(text: string): Float64Array {
    // character-trigram hashing into signed buckets, then projection
    const buckets = new Float64Array(TinyProjModel.TEXT_BUCKETS);
    const padded = `^^${text.toLowerCase()}$$`;
    for (let i = 0; i + 3 <= padded.length; i++) {
      const h = seedFor([this.id, "trigram", padded.slice(i, i + 3)]);
      const idx = h.readUInt32LE(0) % TinyProjModel.TEXT_BUCKETS;
      const sign = h[4] & 1 ? 1 : -1;
      buckets[idx] += sign;
    }
    const out = new Float64Array(this.dim);
    for (let d = 0; d < this.dim; d++) {
      let acc = 0;
      const row = d * buckets.length;
      for (let i = 0; i < buckets.length; i++) {
        if (buckets[i] !== 0) acc += this.textMatrix[row + i] * buckets[i];
      }
      out[d] = acc;
    }
    return normalize(out);
  }
}

const KNOWN_MODELS: Record<string, () => EmbeddingModel> = {
  "tiny-proj-v1": () => new TinyProjModel("tiny-proj-v1", 64),
  "tiny-proj-v1-d32": () => new TinyProjModel("tiny-proj-v1-d32", 32),
};

export function loadModel(id: string): EmbeddingModel {
  const factory = KNOWN_MODELS[id];
  if (!factory) {
    throw new Error(`unknown model id '${id}'; available: ${Object.keys(KNOWN_MODELS).join(", ")}`);
  }
  return factory();
}

export function promptFor(name: string): string {
  return PROMPT_TEMPLATE.replace("{name}", name);
}
