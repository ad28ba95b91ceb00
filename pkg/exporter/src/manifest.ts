/**
 * Reader for the JSON-lines dataset manifest format.
 *
 * Line one is a meta object under the "_meta" key declaring the dataset
 * kind and its score dimensions; every following non-empty line is one
 * record. The exporter only consumes the identity fields (id,
 * image_ref, request, candidate); scores and pair fields pass through
 * unread.
 */

import { readFileSync } from "node:fs";

export const MANIFEST_KINDS = ["pointwise", "pairwise", "multi_objective"] as const;
export type ManifestKind = (typeof MANIFEST_KINDS)[number];

export interface ManifestRecord {
  id: string;
  imageRef: string;
  request: string;
  candidate: string;
}

export interface Manifest {
  kind: ManifestKind;
  dimensions: string[];
  records: ManifestRecord[];
}

export class ManifestError extends Error {}

function fail(lineNo: number, message: string): never {
  throw new ManifestError(`line ${lineNo}: ${message}`);
}

function asObject(value: unknown, lineNo: number, what: string): Record<string, unknown> {
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    fail(lineNo, `${what} must be a JSON object`);
  }
  return value as Record<string, unknown>;
}

function requireString(
  obj: Record<string, unknown>,
  key: string,
  lineNo: number,
): string {
  const value = obj[key];
  if (typeof value !== "string") {
    fail(lineNo, `${JSON.stringify(key)} must be a string`);
  }
  return value;
}

export function parseManifest(text: string): Manifest {
  const lines = text.split("\n");
  let meta: { kind: ManifestKind; dimensions: string[] } | null = null;
  const records: ManifestRecord[] = [];
  const seen = new Set<string>();

  for (let i = 0; i < lines.length; i++) {
    const lineNo = i + 1;
    const line = lines[i]!.trim();
    if (line === "") continue;

    let parsed: unknown;
    try {
      parsed = JSON.parse(line);
    } catch (err) {
      fail(lineNo, `not valid JSON (${(err as Error).message})`);
    }
    const obj = asObject(parsed, lineNo, "each line");

    if (meta === null) {
      const metaObj = asObject(obj["_meta"], lineNo, '"_meta"');
      const kind = requireString(metaObj, "kind", lineNo);
      if (!(MANIFEST_KINDS as readonly string[]).includes(kind)) {
        fail(lineNo, `unknown kind ${JSON.stringify(kind)}`);
      }
      const dims = metaObj["dimensions"];
      if (!Array.isArray(dims) || dims.some((d) => typeof d !== "string")) {
        fail(lineNo, '"dimensions" must be an array of strings');
      }
      meta = { kind: kind as ManifestKind, dimensions: dims as string[] };
      continue;
    }

    const id = requireString(obj, "id", lineNo);
    if (id === "") fail(lineNo, "record id is empty");
    if (seen.has(id)) fail(lineNo, `duplicate id ${JSON.stringify(id)}`);
    seen.add(id);
    const imageRef = requireString(obj, "image_ref", lineNo);
    const candidate = requireString(obj, "candidate", lineNo);
    const request = obj["request"] === undefined ? "" : requireString(obj, "request", lineNo);
    records.push({ id, imageRef, request, candidate });
  }

  if (meta === null) {
    throw new ManifestError("manifest has no _meta line");
  }
  return { ...meta, records };
}

export function loadManifest(path: string): Manifest {
  return parseManifest(readFileSync(path, "utf-8"));
}
