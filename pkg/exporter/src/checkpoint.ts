/**
 * Frozen byte-level recurrent encoder used as the embedding backbone.
 *
 * This is a stand-in with the same contract a large multimodal
 * checkpoint would have: fixed weights on disk, a hidden size, per-token
 * hidden states, and no randomness at inference time. The recurrence is
 * h_t = tanh(M h_{t-1} + E[byte_t]) over the raw input bytes, so any
 * change to the image bytes or the text changes the states.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { z } from "zod";

export const VOCAB_SIZE = 256;

const matrix = (rows: number | null) =>
  z
    .array(z.array(z.number()))
    .refine((m) => (rows === null ? m.length > 0 : m.length === rows), {
      message: "wrong row count",
    });

const checkpointSchema = z
  .object({
    format_version: z.literal(1),
    hidden_size: z.number().int().positive(),
    vocab_size: z.literal(VOCAB_SIZE),
    emb: matrix(VOCAB_SIZE),
    mix: matrix(null),
  })
  .refine(
    (c) =>
      c.emb.every((row) => row.length === c.hidden_size) &&
      c.mix.length === c.hidden_size &&
      c.mix.every((row) => row.length === c.hidden_size),
    { message: "weight shapes do not match hidden_size" },
  );

export type Checkpoint = z.infer<typeof checkpointSchema>;

export class CheckpointError extends Error {}

/** Deterministic 32-bit PRNG; good enough for reproducible weight init. */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function makeCheckpoint(seed: number, hiddenSize: number): Checkpoint {
  if (!Number.isInteger(hiddenSize) || hiddenSize < 1) {
    throw new CheckpointError(`hidden size must be a positive integer, got ${hiddenSize}`);
  }
  const rand = mulberry32(seed);
  const uniform = () => 2.0 * rand() - 1.0;
  const emb: number[][] = [];
  for (let i = 0; i < VOCAB_SIZE; i++) {
    emb.push(Array.from({ length: hiddenSize }, () => 0.8 * uniform()));
  }
  // Mixing matrix scaled down so the tanh recurrence neither saturates
  // nor forgets the prefix entirely.
  const scale = 0.9 / Math.sqrt(hiddenSize);
  const mix: number[][] = [];
  for (let i = 0; i < hiddenSize; i++) {
    mix.push(Array.from({ length: hiddenSize }, () => scale * uniform()));
  }
  return { format_version: 1, hidden_size: hiddenSize, vocab_size: VOCAB_SIZE, emb, mix };
}

export function saveCheckpoint(path: string, checkpoint: Checkpoint): void {
  writeFileSync(path, JSON.stringify(checkpoint) + "\n", "utf-8");
}

export function loadCheckpoint(path: string): Checkpoint {
  let raw: string;
  try {
    raw = readFileSync(path, "utf-8");
  } catch (err) {
    throw new CheckpointError(`cannot read checkpoint ${path}: ${(err as Error).message}`);
  }
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch (err) {
    throw new CheckpointError(`checkpoint ${path} is not valid JSON: ${(err as Error).message}`);
  }
  const result = checkpointSchema.safeParse(parsed);
  if (!result.success) {
    throw new CheckpointError(
      `checkpoint ${path} is malformed: ${result.error.issues[0]?.message ?? "schema mismatch"}`,
    );
  }
  return result.data;
}

export const POOLING_POLICIES = ["last_token", "mean_tokens"] as const;
export type PoolingPolicy = (typeof POOLING_POLICIES)[number];

/**
 * Run the recurrence over ``bytes`` and pool the per-token hidden
 * states into one vector. Arithmetic is double precision; the result is
 * rounded to float32 at the end, which is the exported precision.
 */
export function encodeBytes(
  checkpoint: Checkpoint,
  bytes: Uint8Array,
  pooling: PoolingPolicy,
): Float32Array {
  if (bytes.length === 0) {
    throw new CheckpointError("cannot encode an empty byte stream");
  }
  const d = checkpoint.hidden_size;
  const h = new Float64Array(d);
  const next = new Float64Array(d);
  const acc = new Float64Array(d);
  for (const byte of bytes) {
    const embRow = checkpoint.emb[byte]!;
    for (let i = 0; i < d; i++) {
      const mixRow = checkpoint.mix[i]!;
      let z = embRow[i]!;
      for (let j = 0; j < d; j++) {
        z += mixRow[j]! * h[j]!;
      }
      next[i] = Math.tanh(z);
    }
    h.set(next);
    if (pooling === "mean_tokens") {
      for (let i = 0; i < d; i++) acc[i] = acc[i]! + h[i]!;
    }
  }
  const pooled = pooling === "last_token" ? h : acc;
  const out = new Float32Array(d);
  const denom = pooling === "last_token" ? 1.0 : bytes.length;
  for (let i = 0; i < d; i++) {
    out[i] = Math.fround(pooled[i]! / denom);
  }
  return out;
}
