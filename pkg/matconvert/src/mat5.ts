/**
 * Minimal MAT-file (version 5) reader.
 *
 * Covers what sEMG subject archives actually contain: little-endian files
 * whose top-level variables are dense numeric matrices, optionally inside
 * zlib-compressed elements. Values come back as Float64Array in the file's
 * own column-major order together with the dimension vector.
 */

import { inflateSync } from "node:zlib";

// MAT data-element type tags
const MI_INT8 = 1;
const MI_UINT8 = 2;
const MI_INT16 = 3;
const MI_UINT16 = 4;
const MI_INT32 = 5;
const MI_UINT32 = 6;
const MI_SINGLE = 7;
const MI_DOUBLE = 9;
const MI_INT64 = 12;
const MI_UINT64 = 13;
const MI_MATRIX = 14;
const MI_COMPRESSED = 15;
const MI_UTF8 = 16;

// mxArray class codes (low byte of the array-flags word)
const NUMERIC_CLASSES = new Set([6, 7, 8, 9, 10, 11, 12, 13, 14, 15]); // double..uint64

export class MatFormatError extends Error {}

export interface MatMatrix {
  name: string;
  /** dimension vector, e.g. [rows, cols] */
  dims: number[];
  /** values in column-major order, widened to float64 */
  data: Float64Array;
}

export interface MatFile {
  header: string;
  /** numeric matrices by name */
  vars: Map<string, MatMatrix>;
  /** names of top-level variables that were skipped (non-numeric classes) */
  skipped: string[];
}

/** Matrix element at (row, col) honoring the column-major layout. */
export function matAt(m: MatMatrix, row: number, col: number): number {
  return m.data[col * m.dims[0] + row];
}

export function parseMat(buf: Buffer): MatFile {
  if (buf.length < 128) {
    throw new MatFormatError(`file too short for a MAT v5 header (${buf.length} bytes)`);
  }
  const version = buf.readUInt16LE(124);
  const endian = buf.toString("latin1", 126, 128);
  if (endian === "MI") {
    throw new MatFormatError("big-endian MAT files are not supported");
  }
  if (endian !== "IM" || version !== 0x0100) {
    throw new MatFormatError(
      `not a MAT v5 file (version 0x${version.toString(16)}, endian ${JSON.stringify(endian)})`);
  }
  const header = buf.toString("latin1", 0, 116).replace(/\0.*$/s, "").trimEnd();

  const vars = new Map<string, MatMatrix>();
  const skipped: string[] = [];
  let offset = 128;
  while (offset < buf.length) {
    const el = readElement(buf, offset);
    handleTopLevel(el, vars, skipped);
    offset = el.next;
  }
  return { header, vars, skipped };
}

interface RawElement {
  type: number;
  /** payload view (no tag) */
  payload: Buffer;
  next: number;
}

function readElement(buf: Buffer, offset: number): RawElement {
  if (offset + 8 > buf.length) {
    throw new MatFormatError(`truncated element tag at byte ${offset}`);
  }
  const word = buf.readUInt32LE(offset);
  const small = word >>> 16;
  if (small !== 0) {
    // small data element: size in the upper half-word, payload inline
    const type = word & 0xffff;
    return { type, payload: buf.subarray(offset + 4, offset + 4 + small), next: offset + 8 };
  }
  const type = word;
  const size = buf.readUInt32LE(offset + 4);
  const start = offset + 8;
  if (start + size > buf.length) {
    throw new MatFormatError(`element at byte ${offset} claims ${size} bytes past EOF`);
  }
  const padded = size % 8 === 0 ? size : size + (8 - (size % 8));
  return { type, payload: buf.subarray(start, start + size), next: start + padded };
}

function handleTopLevel(el: RawElement, vars: Map<string, MatMatrix>, skipped: string[]): void {
  if (el.type === MI_COMPRESSED) {
    const inner = inflateSync(el.payload);
    const nested = readElement(inner, 0);
    handleTopLevel(nested, vars, skipped);
    return;
  }
  if (el.type !== MI_MATRIX) {
    throw new MatFormatError(`unexpected top-level element type ${el.type}`);
  }
  const parsed = parseMatrix(el.payload);
  if (parsed.matrix) {
    vars.set(parsed.matrix.name, parsed.matrix);
  } else {
    skipped.push(parsed.name);
  }
}

function parseMatrix(body: Buffer): { name: string; matrix: MatMatrix | null } {
  let offset = 0;

  const flagsEl = readElement(body, offset);
  if (flagsEl.type !== MI_UINT32 || flagsEl.payload.length < 8) {
    throw new MatFormatError("matrix without a valid array-flags sub-element");
  }
  const flagsWord = flagsEl.payload.readUInt32LE(0);
  const klass = flagsWord & 0xff;
  const complex = (flagsWord & 0x0800) !== 0;
  offset = flagsEl.next;

  const dimsEl = readElement(body, offset);
  if (dimsEl.type !== MI_INT32) {
    throw new MatFormatError("matrix without a dimensions sub-element");
  }
  const dims: number[] = [];
  for (let i = 0; i < dimsEl.payload.length; i += 4) {
    dims.push(dimsEl.payload.readInt32LE(i));
  }
  offset = dimsEl.next;

  const nameEl = readElement(body, offset);
  if (nameEl.type !== MI_INT8 && nameEl.type !== MI_UTF8) {
    throw new MatFormatError("matrix without a name sub-element");
  }
  const name = nameEl.payload.toString("utf8");
  offset = nameEl.next;

  if (!NUMERIC_CLASSES.has(klass) || klass === 14 || klass === 15) {
    return { name, matrix: null }; // cell/struct/char/sparse and friends
  }
  if (complex) {
    return { name, matrix: null }; // imaginary sEMG would be news
  }

  const dataEl = readElement(body, offset);
  const count = dims.reduce((a, b) => a * b, 1);
  const data = widenNumeric(dataEl.type, dataEl.payload, count, name);
  return { name, matrix: { name, dims, data } };
}

function widenNumeric(type: number, payload: Buffer, count: number, name: string): Float64Array {
  const view = new DataView(payload.buffer, payload.byteOffset, payload.byteLength);
  const out = new Float64Array(count);
  const need = (bytes: number) => {
    if (payload.length < count * bytes) {
      throw new MatFormatError(
        `variable ${name}: ${payload.length} data bytes for ${count} x ${bytes}-byte values`);
    }
  };
  switch (type) {
    case MI_DOUBLE:
      need(8);
      for (let i = 0; i < count; i++) out[i] = view.getFloat64(i * 8, true);
      return out;
    case MI_SINGLE:
      need(4);
      for (let i = 0; i < count; i++) out[i] = view.getFloat32(i * 4, true);
      return out;
    case MI_INT8:
      need(1);
      for (let i = 0; i < count; i++) out[i] = view.getInt8(i);
      return out;
    case MI_UINT8:
      need(1);
      for (let i = 0; i < count; i++) out[i] = view.getUint8(i);
      return out;
    case MI_INT16:
      need(2);
      for (let i = 0; i < count; i++) out[i] = view.getInt16(i * 2, true);
      return out;
    case MI_UINT16:
      need(2);
      for (let i = 0; i < count; i++) out[i] = view.getUint16(i * 2, true);
      return out;
    case MI_INT32:
      need(4);
      for (let i = 0; i < count; i++) out[i] = view.getInt32(i * 4, true);
      return out;
    case MI_UINT32:
      need(4);
      for (let i = 0; i < count; i++) out[i] = view.getUint32(i * 4, true);
      return out;
    case MI_INT64:
      need(8);
      for (let i = 0; i < count; i++) out[i] = Number(view.getBigInt64(i * 8, true));
      return out;
    case MI_UINT64:
      need(8);
      for (let i = 0; i < count; i++) out[i] = Number(view.getBigUint64(i * 8, true));
      return out;
    default:
      throw new MatFormatError(`variable ${name}: unsupported numeric storage type ${type}`);
  }
}
