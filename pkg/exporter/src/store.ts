/**
 * Binary embedding store codec (MTAP).
 *
 * Layout, all little-endian: 4 magic bytes "MTAP", u32 format version,
 * u32 dim, u64 record count, then per record a u32 id byte length, the
 * UTF-8 id, and dim float32 values. No padding anywhere; an empty store
 * is just the 20-byte header with dim 0.
 */

import { readFileSync, writeFileSync } from "node:fs";

export const MAGIC = "MTAP";
export const FORMAT_VERSION = 1;

const HEADER_BYTES = 4 + 4 + 4 + 8;

export interface StoreEntry {
  id: string;
  values: Float32Array;
}

export class StoreFormatError extends Error {}

// Buffer.toString("utf-8") substitutes U+FFFD for bad sequences; ids
// must round-trip exactly, so decoding is strict.
const utf8 = new TextDecoder("utf-8", { fatal: true });

function checkEntries(entries: StoreEntry[]): number {
  const seen = new Set<string>();
  let dim = -1;
  for (const entry of entries) {
    if (entry.id.length === 0) {
      throw new StoreFormatError("empty record id");
    }
    if (seen.has(entry.id)) {
      throw new StoreFormatError(`duplicate id ${JSON.stringify(entry.id)}`);
    }
    seen.add(entry.id);
    if (dim === -1) {
      dim = entry.values.length;
    } else if (entry.values.length !== dim) {
      throw new StoreFormatError(
        `mixed dimensions: ${dim} and ${entry.values.length}`,
      );
    }
    for (const v of entry.values) {
      if (!Number.isFinite(v)) {
        throw new StoreFormatError(
          `vector for ${JSON.stringify(entry.id)} holds a non-finite value`,
        );
      }
    }
  }
  return dim === -1 ? 0 : dim;
}

export function encodeStore(entries: StoreEntry[]): Buffer {
  const dim = checkEntries(entries);
  const ids = entries.map((e) => Buffer.from(e.id, "utf-8"));
  let size = HEADER_BYTES;
  for (const id of ids) {
    size += 4 + id.length + 4 * dim;
  }
  const buf = Buffer.alloc(size);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(FORMAT_VERSION, 4);
  buf.writeUInt32LE(dim, 8);
  buf.writeBigUInt64LE(BigInt(entries.length), 12);
  let offset = HEADER_BYTES;
  for (let i = 0; i < entries.length; i++) {
    const id = ids[i]!;
    buf.writeUInt32LE(id.length, offset);
    offset += 4;
    id.copy(buf, offset);
    offset += id.length;
    for (const v of entries[i]!.values) {
      buf.writeFloatLE(v, offset);
      offset += 4;
    }
  }
  return buf;
}

export function writeStore(path: string, entries: StoreEntry[]): void {
  writeFileSync(path, encodeStore(entries));
}

export function decodeStore(data: Buffer): { dim: number; entries: StoreEntry[] } {
  if (data.length < HEADER_BYTES) {
    throw new StoreFormatError("file ends inside the header");
  }
  if (data.toString("ascii", 0, 4) !== MAGIC) {
    throw new StoreFormatError("bad magic; not an embedding store");
  }
  const version = data.readUInt32LE(4);
  if (version !== FORMAT_VERSION) {
    throw new StoreFormatError(`unsupported format version ${version}`);
  }
  const dim = data.readUInt32LE(8);
  const count = data.readBigUInt64LE(12);
  if (count > BigInt(Number.MAX_SAFE_INTEGER)) {
    throw new StoreFormatError(`record count ${count} is not addressable`);
  }
  const n = Number(count);
  const entries: StoreEntry[] = [];
  const seen = new Set<string>();
  let offset = HEADER_BYTES;
  for (let i = 0; i < n; i++) {
    if (offset + 4 > data.length) {
      throw new StoreFormatError(`file ends inside an id length at ${offset}`);
    }
    const idLen = data.readUInt32LE(offset);
    offset += 4;
    if (offset + idLen > data.length) {
      throw new StoreFormatError(`file ends inside an id at ${offset}`);
    }
    let id: string;
    try {
      id = utf8.decode(data.subarray(offset, offset + idLen));
    } catch {
      throw new StoreFormatError(`record ${i}: id is not valid UTF-8`);
    }
    offset += idLen;
    if (id.length === 0) {
      throw new StoreFormatError(`record ${i}: empty id`);
    }
    if (seen.has(id)) {
      throw new StoreFormatError(`duplicate id ${JSON.stringify(id)}`);
    }
    seen.add(id);
    if (offset + 4 * dim > data.length) {
      throw new StoreFormatError(`file ends inside a vector at ${offset}`);
    }
    const values = new Float32Array(dim);
    for (let j = 0; j < dim; j++) {
      values[j] = data.readFloatLE(offset);
      offset += 4;
    }
    for (const v of values) {
      if (!Number.isFinite(v)) {
        throw new StoreFormatError(`record ${JSON.stringify(id)}: non-finite values`);
      }
    }
    entries.push({ id, values });
  }
  if (offset !== data.length) {
    throw new StoreFormatError(
      `${data.length - offset} trailing byte(s) after the last record`,
    );
  }
  return { dim, entries };
}

export function readStore(path: string): { dim: number; entries: StoreEntry[] } {
  return decodeStore(readFileSync(path));
}
