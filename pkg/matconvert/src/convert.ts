/**
 * MAT archive -> EMG1 conversion.
 *
 * One subject/exercise MAT file yields one EMG1 file per label variant:
 * the raw stimulus/repetition labels always, the refined variant when the
 * source provides it. Every output gets a sha256 sidecar. Nothing is
 * written until the whole file has validated.
 */

import { createHash } from "node:crypto";
import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { basename, join } from "node:path";

import { encodeEmg1, SchemaError } from "./emg1.js";
import { MatMatrix, parseMat } from "./mat5.js";

export { SchemaError } from "./emg1.js";
export class MissingFieldError extends Error {}

export type LabelMode = "raw" | "refined" | "both";

export interface FieldNames {
  signal: string;
  stimulus: string;
  repetition: string;
  refinedStimulus: string;
  refinedRepetition: string;
  subject: string;
  exercise: string;
}

export const DEFAULT_FIELDS: FieldNames = {
  signal: "emg",
  stimulus: "stimulus",
  repetition: "repetition",
  refinedStimulus: "restimulus",
  refinedRepetition: "rerepetition",
  subject: "subject",
  exercise: "exercise",
};

/** source exercise index -> canonical exercise letter */
export const DEFAULT_EXERCISE_MAP: Record<number, string> = { 1: "B", 2: "C", 3: "D" };

export interface ConversionJob {
  input: string;
  outDir: string;
  labels?: LabelMode;
  fields?: Partial<FieldNames>;
  exerciseMap?: Record<number, string>;
  fsHz?: number;
  sensors?: number;
  /** override the subject id from the file */
  subject?: number;
  /** override the exercise letter from the file */
  exercise?: string;
}

export interface WrittenFile {
  path: string;
  sidecar: string;
  variant: "raw" | "refined";
  sha256: string;
}

export function convert(job: ConversionJob): WrittenFile[] {
  const fields: FieldNames = { ...DEFAULT_FIELDS, ...job.fields };
  const exerciseMap = job.exerciseMap ?? DEFAULT_EXERCISE_MAP;
  const sensors = job.sensors ?? 12;
  const fsHz = job.fsHz ?? 2000;
  const mode: LabelMode = job.labels ?? "both";

  const mat = parseMat(readFileSync(job.input));
  const have = [...mat.vars.keys()];
  const get = (name: string, what: string): MatMatrix => {
    const m = mat.vars.get(name);
    if (!m) {
      throw new MissingFieldError(
        `${job.input}: missing ${what} field ${JSON.stringify(name)} ` +
        `(numeric variables present: ${have.join(", ") || "none"})`);
    }
    return m;
  };

  const signal = get(fields.signal, "signal");
  if (signal.dims.length !== 2) {
    throw new SchemaError(`${fields.signal} must be 2-D, got dims [${signal.dims}]`);
  }
  const [samples, nSensors] = signal.dims;
  if (nSensors !== sensors) {
    throw new SchemaError(
      `${job.input}: expected ${sensors} sensors, ${fields.signal} has ${nSensors} columns`);
  }

  const subject = job.subject ?? scalarField(get(fields.subject, "subject"));
  let exercise = job.exercise;
  if (exercise === undefined) {
    const idx = scalarField(get(fields.exercise, "exercise"));
    exercise = exerciseMap[idx];
    if (exercise === undefined) {
      throw new SchemaError(`${job.input}: no exercise letter mapped for index ${idx}`);
    }
  }

  const variants: Array<{ variant: "raw" | "refined"; stim: MatMatrix; rep: MatMatrix }> = [];
  if (mode === "raw" || mode === "both") {
    variants.push({
      variant: "raw",
      stim: get(fields.stimulus, "stimulus"),
      rep: get(fields.repetition, "repetition"),
    });
  }
  if (mode === "refined") {
    variants.push({
      variant: "refined",
      stim: get(fields.refinedStimulus, "refined stimulus"),
      rep: get(fields.refinedRepetition, "refined repetition"),
    });
  } else if (mode === "both" && mat.vars.has(fields.refinedStimulus)
             && mat.vars.has(fields.refinedRepetition)) {
    variants.push({
      variant: "refined",
      stim: mat.vars.get(fields.refinedStimulus)!,
      rep: mat.vars.get(fields.refinedRepetition)!,
    });
  }

  // build every output before writing anything
  const rowMajor = columnToRowMajorF32(signal, samples, nSensors);
  const pending: Array<{ name: string; bytes: Buffer; variant: "raw" | "refined" }> = [];
  for (const { variant, stim, rep } of variants) {
    const bytes = encodeEmg1({
      subject,
      exercise,
      fsHz,
      sensors: nSensors,
      samples,
      signal: rowMajor,
      stimulus: labelVector(stim, samples, `${variant} stimulus`),
      repetition: labelVector(rep, samples, `${variant} repetition`),
    });
    const name = `s${String(subject).padStart(2, "0")}_${exercise}_${variant}.emg1`;
    pending.push({ name, bytes, variant });
  }

  mkdirSync(job.outDir, { recursive: true });
  const written: WrittenFile[] = [];
  for (const { name, bytes, variant } of pending) {
    const path = join(job.outDir, name);
    writeFileSync(path, bytes);
    const sha256 = createHash("sha256").update(bytes).digest("hex");
    const sidecar = `${path}.sha256`;
    writeFileSync(sidecar, `${sha256}  ${basename(path)}\n`);
    written.push({ path, sidecar, variant, sha256 });
  }
  return written;
}

function scalarField(m: MatMatrix): number {
  if (m.data.length !== 1) {
    throw new SchemaError(`${m.name} must be a scalar, got dims [${m.dims}]`);
  }
  return m.data[0];
}

function labelVector(m: MatMatrix, samples: number, what: string): Uint16Array {
  if (m.data.length === 0) {
    throw new SchemaError(`${what} field ${JSON.stringify(m.name)} is empty`);
  }
  if (m.data.length !== samples) {
    throw new SchemaError(
      `${what} has ${m.data.length} entries for ${samples} signal samples`);
  }
  const out = new Uint16Array(samples);
  for (let i = 0; i < samples; i++) {
    const v = m.data[i];
    if (!Number.isInteger(v) || v < 0 || v > 0xffff) {
      throw new SchemaError(`${what}[${i}] = ${v} is not a u16 label`);
    }
    out[i] = v;
  }
  return out;
}

function columnToRowMajorF32(m: MatMatrix, rows: number, cols: number): Float32Array {
  const out = new Float32Array(rows * cols);
  for (let c = 0; c < cols; c++) {
    const base = c * rows;
    for (let r = 0; r < rows; r++) {
      out[r * cols + c] = Math.fround(m.data[base + r]);
    }
  }
  return out;
}
