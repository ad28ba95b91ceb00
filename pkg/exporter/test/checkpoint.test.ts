import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import {
  CheckpointError,
  encodeBytes,
  loadCheckpoint,
  makeCheckpoint,
  saveCheckpoint,
} from "../src/checkpoint.js";

let dir: string;
beforeEach(() => {
  dir = mkdtempSync(join(tmpdir(), "ckpt-"));
});
afterEach(() => {
  rmSync(dir, { recursive: true, force: true });
});

const bytes = (s: string) => new TextEncoder().encode(s);

describe("makeCheckpoint", () => {
  it("is deterministic in the seed", () => {
    const a = makeCheckpoint(7, 12);
    const b = makeCheckpoint(7, 12);
    expect(a).toEqual(b);
  });

  it("differs across seeds", () => {
    const a = makeCheckpoint(1, 8);
    const b = makeCheckpoint(2, 8);
    expect(a.emb[0]).not.toEqual(b.emb[0]);
  });

  it("has the declared shapes", () => {
    const c = makeCheckpoint(3, 10);
    expect(c.emb).toHaveLength(256);
    expect(c.emb[255]).toHaveLength(10);
    expect(c.mix).toHaveLength(10);
    expect(c.mix[9]).toHaveLength(10);
  });

  it("rejects a non-positive hidden size", () => {
    expect(() => makeCheckpoint(0, 0)).toThrow(CheckpointError);
    expect(() => makeCheckpoint(0, 2.5)).toThrow(CheckpointError);
  });
});

describe("saveCheckpoint / loadCheckpoint", () => {
  it("round-trips through a file", () => {
    const c = makeCheckpoint(11, 6);
    const path = join(dir, "c.ckpt.json");
    saveCheckpoint(path, c);
    expect(loadCheckpoint(path)).toEqual(c);
  });

  it("rejects a missing file, bad JSON, and schema violations", () => {
    expect(() => loadCheckpoint(join(dir, "absent.json"))).toThrow(/cannot read/);

    const badJson = join(dir, "bad.json");
    writeFileSync(badJson, "{oops");
    expect(() => loadCheckpoint(badJson)).toThrow(/not valid JSON/);

    const c = makeCheckpoint(1, 4) as unknown as Record<string, unknown>;
    const wrongVersion = join(dir, "v2.json");
    writeFileSync(wrongVersion, JSON.stringify({ ...c, format_version: 2 }));
    expect(() => loadCheckpoint(wrongVersion)).toThrow(/malformed/);

    const shapes = join(dir, "shapes.json");
    writeFileSync(shapes, JSON.stringify({ ...c, hidden_size: 5 }));
    expect(() => loadCheckpoint(shapes)).toThrow(/malformed/);
  });
});

describe("encodeBytes", () => {
  const ckpt = makeCheckpoint(42, 16);

  it("is deterministic and dependent on every input byte", () => {
    const a = encodeBytes(ckpt, bytes("hello world"), "last_token");
    const b = encodeBytes(ckpt, bytes("hello world"), "last_token");
    expect(Array.from(a)).toEqual(Array.from(b));
    const c = encodeBytes(ckpt, bytes("hello worle"), "last_token");
    expect(Array.from(a)).not.toEqual(Array.from(c));
    const d = encodeBytes(ckpt, bytes("jello world"), "last_token");
    expect(Array.from(a)).not.toEqual(Array.from(d));
  });

  it("produces different vectors under the two pooling policies", () => {
    const input = bytes("the quick brown fox");
    const last = encodeBytes(ckpt, input, "last_token");
    const mean = encodeBytes(ckpt, input, "mean_tokens");
    expect(Array.from(last)).not.toEqual(Array.from(mean));
  });

  it("pools a single byte identically under both policies", () => {
    const input = Uint8Array.of(65);
    const last = encodeBytes(ckpt, input, "last_token");
    const mean = encodeBytes(ckpt, input, "mean_tokens");
    expect(Array.from(last)).toEqual(Array.from(mean));
  });

  it("emits float32-exact finite values in (-1, 1]", () => {
    const out = encodeBytes(ckpt, bytes("precision check"), "last_token");
    for (const v of out) {
      expect(Number.isFinite(v)).toBe(true);
      expect(Math.fround(v)).toBe(v);
      expect(Math.abs(v)).toBeLessThanOrEqual(1);
    }
  });

  it("depends on byte order", () => {
    const ab = encodeBytes(ckpt, Uint8Array.of(10, 20), "last_token");
    const ba = encodeBytes(ckpt, Uint8Array.of(20, 10), "last_token");
    expect(Array.from(ab)).not.toEqual(Array.from(ba));
  });

  it("rejects an empty byte stream", () => {
    expect(() => encodeBytes(ckpt, new Uint8Array(0), "last_token")).toThrow(/empty/);
  });
});
