/**
 * Test-side builders kept independent of src/: a from-scratch MAT v5 writer
 * to feed the parser, and a from-scratch EMG1 decoder to audit the writer.
 */

import { deflateSync } from "node:zlib";

const MI_INT32 = 5;
const MI_UINT32 = 6;
const MI_DOUBLE = 9;
const MI_INT8 = 1;
const MI_UINT16 = 4;
const MI_MATRIX = 14;
const MI_COMPRESSED = 15;
const MX_DOUBLE_CLASS = 6;
const MX_UINT16_CLASS = 11;

function pad8(buf: Buffer): Buffer {
  const rem = buf.length % 8;
  return rem === 0 ? buf : Buffer.concat([buf, Buffer.alloc(8 - rem)]);
}

function element(type: number, payload: Buffer): Buffer {
  const tag = Buffer.alloc(8);
  tag.writeUInt32LE(type, 0);
  tag.writeUInt32LE(payload.length, 4);
  return Buffer.concat([tag, pad8(payload)]);
}

export function matHeader(text = "MATLAB 5.0 MAT-file, synthetic fixture"): Buffer {
  const head = Buffer.alloc(128);
  head.write(text.slice(0, 116), 0, "latin1");
  head.writeUInt16LE(0x0100, 124);
  head.write("IM", 126, "latin1");
  return head;
}

export interface FixtureMatrix {
  name: string;
  dims: number[];
  /** column-major values */
  values: number[];
  storage?: "double" | "uint16";
}

export function matrixElement(m: FixtureMatrix): Buffer {
  const flags = Buffer.alloc(8);
  flags.writeUInt32LE(m.storage === "uint16" ? MX_UINT16_CLASS : MX_DOUBLE_CLASS, 0);
  const dims = Buffer.alloc(4 * m.dims.length);
  m.dims.forEach((d, i) => dims.writeInt32LE(d, 4 * i));
  const name = Buffer.from(m.name, "ascii");
  let data: Buffer;
  let dataType: number;
  if (m.storage === "uint16") {
    data = Buffer.alloc(2 * m.values.length);
    m.values.forEach((v, i) => data.writeUInt16LE(v, 2 * i));
    dataType = MI_UINT16;
  } else {
    data = Buffer.alloc(8 * m.values.length);
    m.values.forEach((v, i) => data.writeDoubleLE(v, 8 * i));
    dataType = MI_DOUBLE;
  }
  const body = Buffer.concat([
    element(MI_UINT32, flags),
    element(MI_INT32, dims),
    element(MI_INT8, name),
    element(dataType, data),
  ]);
  return element(MI_MATRIX, body);
}

export function buildMat(matrices: FixtureMatrix[], opts?: { compress?: boolean }): Buffer {
  const parts = [matHeader()];
  for (const m of matrices) {
    const el = matrixElement(m);
    if (opts?.compress) {
      const z = deflateSync(el);
      const tag = Buffer.alloc(8);
      tag.writeUInt32LE(MI_COMPRESSED, 0);
      tag.writeUInt32LE(z.length, 4);
      parts.push(Buffer.concat([tag, pad8(z)]));
    } else {
      parts.push(el);
    }
  }
  return Buffer.concat(parts);
}

export interface DecodedEmg1 {
  subject: number;
  exercise: string;
  fsHz: number;
  sensors: number;
  samples: number;
  /** row-major samples x sensors */
  signal: Float32Array;
  stimulus: Uint16Array;
  repetition: Uint16Array;
}

export function decodeEmg1(buf: Buffer): DecodedEmg1 {
  if (buf.toString("ascii", 0, 4) !== "EMG1") {
    throw new Error(`bad magic ${buf.subarray(0, 4).toString("hex")}`);
  }
  let off = 4;
  const version = buf.readUInt32LE(off); off += 4;
  if (version !== 1) throw new Error(`unsupported version ${version}`);
  const subject = buf.readUInt32LE(off); off += 4;
  const exercise = String.fromCharCode(buf.readUInt8(off)); off += 1;
  const fsHz = buf.readUInt32LE(off); off += 4;
  const sensors = buf.readUInt32LE(off); off += 4;
  const samples = Number(buf.readBigUInt64LE(off)); off += 8;
  const n = samples * sensors;
  const signal = new Float32Array(n);
  for (let i = 0; i < n; i++) signal[i] = buf.readFloatLE(off + 4 * i);
  off += 4 * n;
  const stimulus = new Uint16Array(samples);
  for (let i = 0; i < samples; i++) stimulus[i] = buf.readUInt16LE(off + 2 * i);
  off += 2 * samples;
  const repetition = new Uint16Array(samples);
  for (let i = 0; i < samples; i++) repetition[i] = buf.readUInt16LE(off + 2 * i);
  off += 2 * samples;
  if (off !== buf.length) throw new Error(`${buf.length - off} trailing bytes`);
  return { subject, exercise, fsHz, sensors, samples, signal, stimulus, repetition };
}

/** The hand-written 3-sensor x 10-sample fixture used by the golden test. */
export function fixture3x10(): FixtureMatrix[] {
  const samples = 10;
  const sensors = 3;
  // emg[t][s] = (t + 1) / 4 - s / 8, stored column-major like MAT does
  const emg: number[] = [];
  for (let s = 0; s < sensors; s++) {
    for (let t = 0; t < samples; t++) {
      emg.push((t + 1) / 4 - s / 8);
    }
  }
  return [
    { name: "emg", dims: [samples, sensors], values: emg },
    { name: "stimulus", dims: [samples, 1], values: [0, 0, 1, 1, 1, 1, 0, 2, 2, 2] },
    { name: "repetition", dims: [samples, 1], values: [0, 0, 1, 1, 1, 1, 0, 2, 2, 2] },
    { name: "restimulus", dims: [samples, 1], values: [0, 0, 0, 1, 1, 0, 0, 0, 2, 2] },
    { name: "rerepetition", dims: [samples, 1], values: [0, 0, 0, 1, 1, 0, 0, 0, 2, 2] },
    { name: "subject", dims: [1, 1], values: [7] },
    { name: "exercise", dims: [1, 1], values: [3] },
  ];
}
