import { execFileSync } from "node:child_process";
import { mkdtempSync, readdirSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { convert, MissingFieldError, SchemaError } from "../src/convert.js";
import { buildMat, decodeEmg1, fixture3x10, FixtureMatrix } from "./helpers.js";

const FIXTURES = fileURLToPath(new URL("./fixtures", import.meta.url));

function tempDir(): string {
  return mkdtempSync(join(tmpdir(), "matconvert-"));
}

function writeFixtureMat(dir: string, matrices: FixtureMatrix[], compress = false): string {
  const path = join(dir, "fixture.mat");
  writeFileSync(path, buildMat(matrices, { compress }));
  return path;
}

function primaryCli(): string[] | null {
  // the companion pipeline exposes `emgformer`; fall back to module form
  for (const candidate of [["emgformer"], ["python3", "-m", "emgformer.cli"]]) {
    try {
      execFileSync(candidate[0], [...candidate.slice(1), "--help"], { stdio: "ignore" });
      return candidate;
    } catch {
      /* try next */
    }
  }
  return null;
}

describe("convert", () => {
  it("reproduces the committed golden bytes for the 3x10 fixture", () => {
    const dir = tempDir();
    const input = writeFixtureMat(dir, fixture3x10());
    const written = convert({ input, outDir: join(dir, "out"), sensors: 3 });
    expect(written.map(w => w.variant).sort()).toEqual(["raw", "refined"]);
    for (const w of written) {
      const golden = readFileSync(join(FIXTURES, `golden_s07_D_${w.variant}.emg1`));
      expect(readFileSync(w.path).equals(golden), `${w.variant} bytes`).toBe(true);
    }
  });

  it("is byte-identical across runs and writes matching sidecars", () => {
    const dir = tempDir();
    const input = writeFixtureMat(dir, fixture3x10(), true);
    const first = convert({ input, outDir: join(dir, "a"), sensors: 3 });
    const second = convert({ input, outDir: join(dir, "b"), sensors: 3 });
    for (let i = 0; i < first.length; i++) {
      expect(readFileSync(first[i].path).equals(readFileSync(second[i].path))).toBe(true);
      const sidecar = readFileSync(first[i].sidecar, "utf8");
      expect(sidecar).toMatch(new RegExp(`^${first[i].sha256}  `));
    }
  });

  it("round-trips the source arrays after the f32 cast", () => {
    const dir = tempDir();
    const matrices = fixture3x10();
    const input = writeFixtureMat(dir, matrices);
    const [raw] = convert({ input, outDir: join(dir, "out"), labels: "raw", sensors: 3 });
    const decoded = decodeEmg1(readFileSync(raw.path));
    expect(decoded.subject).toBe(7);
    expect(decoded.exercise).toBe("D");
    expect(decoded.fsHz).toBe(2000);
    expect(decoded.samples).toBe(10);
    expect(decoded.sensors).toBe(3);
    const emg = matrices[0];
    for (let t = 0; t < 10; t++) {
      for (let s = 0; s < 3; s++) {
        const source = emg.values[s * 10 + t]; // column-major fixture
        expect(decoded.signal[t * 3 + s]).toBe(Math.fround(source));
      }
    }
    expect([...decoded.stimulus]).toEqual(matrices[1].values);
    expect([...decoded.repetition]).toEqual(matrices[2].values);
  });

  it("honors --labels selection", () => {
    const dir = tempDir();
    const input = writeFixtureMat(dir, fixture3x10());
    const refined = convert({ input, outDir: join(dir, "r"), labels: "refined", sensors: 3 });
    expect(refined).toHaveLength(1);
    const decoded = decodeEmg1(readFileSync(refined[0].path));
    expect([...decoded.stimulus]).toEqual([0, 0, 0, 1, 1, 0, 0, 0, 2, 2]);
  });

  it("rejects wrong sensor counts by default", () => {
    const dir = tempDir();
    const input = writeFixtureMat(dir, fixture3x10());
    expect(() => convert({ input, outDir: join(dir, "out") }))
      .toThrow(/expected 12 sensors/);
  });

  it("rejects an empty stimulus field and writes nothing", () => {
    const dir = tempDir();
    const matrices = fixture3x10().map(m =>
      m.name === "stimulus" ? { ...m, dims: [0, 1], values: [] } : m);
    const input = writeFixtureMat(dir, matrices);
    const out = join(dir, "out");
    expect(() => convert({ input, outDir: out, sensors: 3 })).toThrow(SchemaError);
    expect(() => readdirSync(out)).toThrow(); // directory never created
  });

  it("names the missing field", () => {
    const dir = tempDir();
    const matrices = fixture3x10().filter(m => m.name !== "repetition");
    const input = writeFixtureMat(dir, matrices);
    expect(() => convert({ input, outDir: join(dir, "out"), sensors: 3 }))
      .toThrow(MissingFieldError);
    expect(() => convert({ input, outDir: join(dir, "out"), sensors: 3 }))
      .toThrow(/"repetition"/);
  });

  it("produces files the companion pipeline validates", () => {
    const cli = primaryCli();
    if (!cli) {
      console.warn("companion CLI not found; skipping cross-package validation");
      return;
    }
    const dir = tempDir();
    // a 12-sensor fixture so the strict layout check applies
    const samples = 20;
    const emg: number[] = [];
    for (let s = 0; s < 12; s++) {
      for (let t = 0; t < samples; t++) emg.push(Math.sin(t + s) / 2);
    }
    const stim = Array.from({ length: samples }, (_, t) => (t >= 5 && t < 15 ? 2 : 0));
    const input = writeFixtureMat(dir, [
      { name: "emg", dims: [samples, 12], values: emg },
      { name: "stimulus", dims: [samples, 1], values: stim },
      { name: "repetition", dims: [samples, 1], values: stim.map(v => (v ? 1 : 0)) },
      { name: "subject", dims: [1, 1], values: [3] },
      { name: "exercise", dims: [1, 1], values: [1] },
    ]);
    const out = join(dir, "out");
    const written = convert({ input, outDir: out });
    expect(written).toHaveLength(1);
    const report = execFileSync(cli[0],
      [...cli.slice(1), "convert-validate", "--data", out, "--strict-sensors"],
      { encoding: "utf8" });
    expect(report).toContain("validated 1 file(s)");
    expect(report).toContain("sha256 ok");
  });
});
