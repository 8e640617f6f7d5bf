/**
 * Writer for the EMG1 canonical recording container.
 *
 * Layout (little-endian):
 *   magic "EMG1", version u32, subject u32, exercise u8 (ASCII letter),
 *   fs u32, sensors u32, samples u64,
 *   f32 signal row-major (samples x sensors), u16 stimulus[], u16 repetition[].
 */

export const EMG1_MAGIC = "EMG1";
export const EMG1_VERSION = 1;

export class SchemaError extends Error {}

export interface Emg1Session {
  subject: number;
  exercise: string; // "B" | "C" | "D"
  fsHz: number;
  sensors: number;
  samples: number;
  /** row-major samples x sensors */
  signal: Float32Array;
  stimulus: Uint16Array;
  repetition: Uint16Array;
}

export function encodeEmg1(s: Emg1Session): Buffer {
  if (s.exercise.length !== 1) {
    throw new SchemaError(`exercise must be a single letter, got ${JSON.stringify(s.exercise)}`);
  }
  if (s.signal.length !== s.samples * s.sensors) {
    throw new SchemaError(
      `signal has ${s.signal.length} values, expected ${s.samples} x ${s.sensors}`);
  }
  if (s.stimulus.length !== s.samples || s.repetition.length !== s.samples) {
    throw new SchemaError(
      `label lengths ${s.stimulus.length}/${s.repetition.length} do not match ${s.samples} samples`);
  }
  const header = Buffer.alloc(4 + 4 + 4 + 1 + 4 + 4 + 8);
  let off = 0;
  header.write(EMG1_MAGIC, off, "ascii"); off += 4;
  header.writeUInt32LE(EMG1_VERSION, off); off += 4;
  header.writeUInt32LE(s.subject, off); off += 4;
  header.writeUInt8(s.exercise.charCodeAt(0), off); off += 1;
  header.writeUInt32LE(s.fsHz, off); off += 4;
  header.writeUInt32LE(s.sensors, off); off += 4;
  header.writeBigUInt64LE(BigInt(s.samples), off);

  return Buffer.concat([
    header,
    toLittleEndianBytes(s.signal),
    toLittleEndianBytes(s.stimulus),
    toLittleEndianBytes(s.repetition),
  ]);
}

function toLittleEndianBytes(arr: Float32Array | Uint16Array): Buffer {
  // node only runs little-endian in practice, but make the contract explicit
  const bytes = Buffer.from(arr.buffer, arr.byteOffset, arr.byteLength);
  if (!isLittleEndianHost()) {
    throw new SchemaError("big-endian hosts are not supported by this writer");
  }
  return bytes;
}

function isLittleEndianHost(): boolean {
  return new Uint8Array(new Uint16Array([1]).buffer)[0] === 1;
}
