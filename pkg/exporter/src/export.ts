/**
 * Export pipeline: manifest in, embedding store out.
 *
 * Each record is rendered through the prompt template, encoded by the
 * frozen checkpoint, and written as one store row keyed by record id.
 * Records whose image file cannot be read are skipped, not fatal: their
 * ids land in a sidecar skip list next to the output store so a rerun
 * can be diffed against it.
 */

import { readFileSync, unlinkSync, writeFileSync } from "node:fs";
import { dirname, isAbsolute, resolve } from "node:path";

import { Checkpoint, PoolingPolicy, encodeBytes, loadCheckpoint } from "./checkpoint.js";
import { Manifest, ManifestRecord, loadManifest } from "./manifest.js";
import { StoreEntry, writeStore } from "./store.js";

export const DEFAULT_TEMPLATE = "USER: <image> {request}\nASSISTANT: {candidate}";
export const IMAGE_MARKER = "<image>";

export class TemplateError extends Error {}

export interface ExportConfig {
  model: string;
  pooling: PoolingPolicy;
  template: string;
  batchSize: number;
  device: string;
}

export interface SkippedRecord {
  id: string;
  imageRef: string;
  reason: string;
}

export interface ExportResult {
  written: number;
  dim: number;
  skipped: SkippedRecord[];
  skipListPath: string;
}

export function checkTemplate(template: string): void {
  for (const marker of [IMAGE_MARKER, "{request}", "{candidate}"]) {
    if (!template.includes(marker)) {
      throw new TemplateError(`template must contain ${marker}`);
    }
  }
  if (template.indexOf(IMAGE_MARKER) !== template.lastIndexOf(IMAGE_MARKER)) {
    throw new TemplateError(`template must contain ${IMAGE_MARKER} exactly once`);
  }
}

const encoder = new TextEncoder();

/**
 * Build the byte stream for one record: template text around the image
 * marker becomes UTF-8, the marker itself is replaced by the raw image
 * bytes, and the text placeholders are substituted before encoding.
 */
export function renderPrompt(
  template: string,
  record: ManifestRecord,
  imageBytes: Uint8Array,
): Uint8Array {
  const cut = template.indexOf(IMAGE_MARKER);
  const substitute = (part: string) =>
    part.replaceAll("{request}", record.request).replaceAll("{candidate}", record.candidate);
  const before = encoder.encode(substitute(template.slice(0, cut)));
  const after = encoder.encode(substitute(template.slice(cut + IMAGE_MARKER.length)));
  const out = new Uint8Array(before.length + imageBytes.length + after.length);
  out.set(before, 0);
  out.set(imageBytes, before.length);
  out.set(after, before.length + imageBytes.length);
  return out;
}

export function resolveImagePath(manifestPath: string, imageRef: string): string {
  return isAbsolute(imageRef) ? imageRef : resolve(dirname(manifestPath), imageRef);
}

function encodeBatch(
  checkpoint: Checkpoint,
  pooling: PoolingPolicy,
  template: string,
  manifestPath: string,
  batch: ManifestRecord[],
  entries: StoreEntry[],
  skipped: SkippedRecord[],
): void {
  for (const record of batch) {
    const imagePath = resolveImagePath(manifestPath, record.imageRef);
    let imageBytes: Uint8Array;
    try {
      imageBytes = readFileSync(imagePath);
    } catch (err) {
      skipped.push({ id: record.id, imageRef: record.imageRef, reason: (err as Error).message });
      continue;
    }
    const prompt = renderPrompt(template, record, imageBytes);
    entries.push({ id: record.id, values: encodeBytes(checkpoint, prompt, pooling) });
  }
}

export function exportEmbeddings(
  manifestPath: string,
  config: ExportConfig,
  outPath: string,
): ExportResult {
  checkTemplate(config.template);
  const manifest: Manifest = loadManifest(manifestPath);
  const checkpoint = loadCheckpoint(config.model);

  const entries: StoreEntry[] = [];
  const skipped: SkippedRecord[] = [];
  for (let start = 0; start < manifest.records.length; start += config.batchSize) {
    const batch = manifest.records.slice(start, start + config.batchSize);
    encodeBatch(checkpoint, config.pooling, config.template, manifestPath, batch, entries, skipped);
  }

  // All rows are buffered first so the store write is one synchronous
  // pass; a crash mid-export never leaves a half-written store behind.
  writeStore(outPath, entries);

  const skipListPath = outPath + ".skipped.jsonl";
  if (skipped.length > 0) {
    const lines = skipped.map((s) =>
      JSON.stringify({ id: s.id, image_ref: s.imageRef, reason: s.reason }),
    );
    writeFileSync(skipListPath, lines.join("\n") + "\n", "utf-8");
  } else {
    // A clean rerun after a fixed-up manifest must not leave a stale
    // skip list next to the store.
    try {
      unlinkSync(skipListPath);
    } catch {
      /* nothing to remove */
    }
  }

  return { written: entries.length, dim: checkpoint.hidden_size, skipped, skipListPath };
}
