/**
 * Minimal MATLAB level-5 MAT-file reader and writer.
 *
 * Covers what the public multi-view benchmark releases actually use:
 * little-endian files, real 2-D numeric matrices (double, single, and the
 * 8..32-bit integer classes), cell arrays of such matrices, and
 * zlib-compressed elements. Sparse, struct, complex and char variables are
 * surfaced as unsupported keys so callers can report them, and big-endian
 * files are rejected outright.
 */

import * as zlib from 'node:zlib';

// MAT data types
const miINT8 = 1;
const miUINT8 = 2;
const miINT16 = 3;
const miUINT16 = 4;
const miINT32 = 5;
const miUINT32 = 6;
const miSINGLE = 7;
const miDOUBLE = 9;
const miMATRIX = 14;
const miCOMPRESSED = 15;

// array classes
const mxCELL = 1;
const mxDOUBLE = 6;
const mxSINGLE = 7;
const mxINT8 = 8;
const mxUINT8 = 9;
const mxINT16 = 10;
const mxUINT16 = 11;
const mxINT32 = 12;
const mxUINT32 = 13;

const NUMERIC_CLASSES = new Set([mxDOUBLE, mxSINGLE, mxINT8, mxUINT8, mxINT16,
  mxUINT16, mxINT32, mxUINT32]);

export interface MatMatrix {
  kind: 'matrix';
  name: string;
  rows: number;
  cols: number;
  /** row-major values */
  data: Float64Array;
}

export interface MatCell {
  kind: 'cell';
  name: string;
  items: MatMatrix[];
}

export interface MatUnsupported {
  kind: 'unsupported';
  name: string;
  reason: string;
}

export type MatVariable = MatMatrix | MatCell | MatUnsupported;

export class MatFormatError extends Error {}

interface Tag {
  type: number;
  bytes: number;
  dataOffset: number;
  next: number;
}

function readTag(buf: Buffer, offset: number): Tag {
  const typeWord = buf.readUInt32LE(offset);
  const small = typeWord >>> 16;
  if (small !== 0) {
    // small data element: length in the upper half, data in the next 4 bytes
    return { type: typeWord & 0xffff, bytes: small, dataOffset: offset + 4, next: offset + 8 };
  }
  const bytes = buf.readUInt32LE(offset + 4);
  const padded = (bytes + 7) & ~7;
  return { type: typeWord, bytes, dataOffset: offset + 8, next: offset + 8 + padded };
}

function numericToFloat64(buf: Buffer, tag: Tag): Float64Array {
  const { type, bytes, dataOffset } = tag;
  const slice = buf.subarray(dataOffset, dataOffset + bytes);
  const copy = Buffer.from(slice); // ensures alignment for typed-array views
  switch (type) {
    case miDOUBLE:
      return new Float64Array(copy.buffer, copy.byteOffset, bytes / 8).slice();
    case miSINGLE:
      return Float64Array.from(new Float32Array(copy.buffer, copy.byteOffset, bytes / 4));
    case miINT8:
      return Float64Array.from(new Int8Array(copy.buffer, copy.byteOffset, bytes));
    case miUINT8:
      return Float64Array.from(new Uint8Array(copy.buffer, copy.byteOffset, bytes));
    case miINT16:
      return Float64Array.from(new Int16Array(copy.buffer, copy.byteOffset, bytes / 2));
    case miUINT16:
      return Float64Array.from(new Uint16Array(copy.buffer, copy.byteOffset, bytes / 2));
    case miINT32:
      return Float64Array.from(new Int32Array(copy.buffer, copy.byteOffset, bytes / 4));
    case miUINT32:
      return Float64Array.from(new Uint32Array(copy.buffer, copy.byteOffset, bytes / 4));
    default:
      throw new MatFormatError(`unsupported numeric storage type ${type}`);
  }
}

function columnMajorToRowMajor(data: Float64Array, rows: number, cols: number): Float64Array {
  const out = new Float64Array(rows * cols);
  for (let c = 0; c < cols; c++) {
    for (let r = 0; r < rows; r++) {
      out[r * cols + c] = data[c * rows + r];
    }
  }
  return out;
}

function parseMatrixElement(buf: Buffer, offset: number, end: number, fallbackName: string): MatVariable {
  // array flags
  const flagsTag = readTag(buf, offset);
  if (flagsTag.type !== miUINT32 || flagsTag.bytes < 8) {
    throw new MatFormatError('malformed array-flags subelement');
  }
  const flagsWord = buf.readUInt32LE(flagsTag.dataOffset);
  const klass = flagsWord & 0xff;
  const complex = (flagsWord & 0x0800) !== 0;

  // dimensions
  const dimsTag = readTag(buf, flagsTag.next);
  if (dimsTag.type !== miINT32) {
    throw new MatFormatError('malformed dimensions subelement');
  }
  const ndims = dimsTag.bytes / 4;
  const dims: number[] = [];
  for (let i = 0; i < ndims; i++) {
    dims.push(buf.readInt32LE(dimsTag.dataOffset + 4 * i));
  }

  // name
  const nameTag = readTag(buf, dimsTag.next);
  const name = nameTag.bytes > 0
    ? buf.subarray(nameTag.dataOffset, nameTag.dataOffset + nameTag.bytes).toString('utf8')
    : fallbackName;

  if (klass === mxCELL) {
    const count = dims.reduce((a, b) => a * b, 1);
    const items: MatMatrix[] = [];
    let cursor = nameTag.next;
    for (let i = 0; i < count; i++) {
      const itemTag = readTag(buf, cursor);
      if (itemTag.type !== miMATRIX) {
        throw new MatFormatError(`cell ${name}: item ${i} is not a matrix element`);
      }
      const item = parseMatrixElement(buf, itemTag.dataOffset, itemTag.next, `${name}{${i}}`);
      if (item.kind !== 'matrix') {
        throw new MatFormatError(`cell ${name}: item ${i} is ${item.kind} (${(item as MatUnsupported).reason ?? ''})`);
      }
      items.push(item);
      cursor = itemTag.next;
    }
    return { kind: 'cell', name, items };
  }

  if (!NUMERIC_CLASSES.has(klass)) {
    return { kind: 'unsupported', name, reason: `array class ${klass}` };
  }
  if (complex) {
    return { kind: 'unsupported', name, reason: 'complex data' };
  }
  if (dims.length !== 2) {
    return { kind: 'unsupported', name, reason: `${dims.length}-D array` };
  }

  const dataTag = readTag(buf, nameTag.next);
  const raw = numericToFloat64(buf, dataTag);
  const [rows, cols] = dims;
  if (raw.length !== rows * cols) {
    throw new MatFormatError(`${name}: expected ${rows * cols} values, found ${raw.length}`);
  }
  return { kind: 'matrix', name, rows, cols, data: columnMajorToRowMajor(raw, rows, cols) };
}

/** Parse a MAT v5 buffer into its top-level variables. */
export function readMat(buf: Buffer): Map<string, MatVariable> {
  if (buf.length < 128) {
    throw new MatFormatError('file too short for a MAT v5 header');
  }
  const endian = buf.toString('latin1', 126, 128);
  if (endian === 'MI') {
    throw new MatFormatError('big-endian MAT files are not supported');
  }
  if (endian !== 'IM') {
    throw new MatFormatError('not a MAT v5 file (bad endian indicator)');
  }

  const vars = new Map<string, MatVariable>();
  let offset = 128;
  let anon = 0;
  while (offset + 8 <= buf.length) {
    const tag = readTag(buf, offset);
    if (tag.type === miCOMPRESSED) {
      const inflated = zlib.inflateSync(buf.subarray(tag.dataOffset, tag.dataOffset + tag.bytes));
      const inner = readTag(inflated, 0);
      if (inner.type === miMATRIX) {
        const v = parseMatrixElement(inflated, inner.dataOffset, inner.next, `var${anon++}`);
        vars.set(v.name, v);
      }
    } else if (tag.type === miMATRIX) {
      const v = parseMatrixElement(buf, tag.dataOffset, tag.next, `var${anon++}`);
      vars.set(v.name, v);
    }
    // any other top-level element type is skipped
    offset = tag.next;
  }
  return vars;
}

// ---------------------------------------------------------------------------
// Writer (used for synthetic containers and round-trip tests)
// ---------------------------------------------------------------------------

export type WriteClass = 'double' | 'single' | 'uint8';

export interface WriteMatrix {
  name: string;
  rows: number;
  cols: number;
  /** row-major values */
  data: ArrayLike<number>;
  klass?: WriteClass;
}

export interface WriteCell {
  name: string;
  cell: Omit<WriteMatrix, 'name'>[];
}

function padTo8(chunks: Buffer[], length: number): void {
  const rem = length % 8;
  if (rem !== 0) {
    chunks.push(Buffer.alloc(8 - rem));
  }
}

function tagOf(type: number, bytes: number): Buffer {
  const b = Buffer.alloc(8);
  b.writeUInt32LE(type, 0);
  b.writeUInt32LE(bytes, 4);
  return b;
}

function numericPayload(m: Omit<WriteMatrix, 'name'>): Buffer {
  const klass = m.klass ?? 'double';
  const count = m.rows * m.cols;
  let out: Buffer;
  let write: (v: number, i: number) => void;
  if (klass === 'double') {
    out = Buffer.alloc(8 * count);
    write = (v, i) => out.writeDoubleLE(v, 8 * i);
  } else if (klass === 'single') {
    out = Buffer.alloc(4 * count);
    write = (v, i) => out.writeFloatLE(Math.fround(v), 4 * i);
  } else {
    out = Buffer.alloc(count);
    write = (v, i) => out.writeUInt8(v, i);
  }
  // column-major on disk
  let i = 0;
  for (let c = 0; c < m.cols; c++) {
    for (let r = 0; r < m.rows; r++) {
      write(m.data[r * m.cols + c] as number, i++);
    }
  }
  return out;
}

function matrixElement(name: string, m: Omit<WriteMatrix, 'name'>): Buffer {
  const klass = m.klass ?? 'double';
  const classId = klass === 'double' ? mxDOUBLE : klass === 'single' ? mxSINGLE : mxUINT8;
  const dataType = klass === 'double' ? miDOUBLE : klass === 'single' ? miSINGLE : miUINT8;

  const chunks: Buffer[] = [];
  // array flags
  chunks.push(tagOf(miUINT32, 8));
  const flags = Buffer.alloc(8);
  flags.writeUInt32LE(classId, 0);
  chunks.push(flags);
  // dimensions
  chunks.push(tagOf(miINT32, 8));
  const dims = Buffer.alloc(8);
  dims.writeInt32LE(m.rows, 0);
  dims.writeInt32LE(m.cols, 4);
  chunks.push(dims);
  // name
  const nameBytes = Buffer.from(name, 'utf8');
  chunks.push(tagOf(miINT8, nameBytes.length));
  chunks.push(nameBytes);
  padTo8(chunks, nameBytes.length);
  // data
  const payload = numericPayload(m);
  chunks.push(tagOf(dataType, payload.length));
  chunks.push(payload);
  padTo8(chunks, payload.length);

  const body = Buffer.concat(chunks);
  return Buffer.concat([tagOf(miMATRIX, body.length), body]);
}

function cellElement(name: string, items: Omit<WriteMatrix, 'name'>[]): Buffer {
  const chunks: Buffer[] = [];
  chunks.push(tagOf(miUINT32, 8));
  const flags = Buffer.alloc(8);
  flags.writeUInt32LE(mxCELL, 0);
  chunks.push(flags);
  chunks.push(tagOf(miINT32, 8));
  const dims = Buffer.alloc(8);
  dims.writeInt32LE(1, 0);
  dims.writeInt32LE(items.length, 4);
  chunks.push(dims);
  const nameBytes = Buffer.from(name, 'utf8');
  chunks.push(tagOf(miINT8, nameBytes.length));
  chunks.push(nameBytes);
  padTo8(chunks, nameBytes.length);
  for (const item of items) {
    chunks.push(matrixElement('', item));
  }
  const body = Buffer.concat(chunks);
  return Buffer.concat([tagOf(miMATRIX, body.length), body]);
}

export interface WriteOptions {
  compress?: boolean;
}

/** Serialize variables into a MAT v5 buffer (little-endian). */
export function writeMat(variables: (WriteMatrix | WriteCell)[], opts: WriteOptions = {}): Buffer {
  const header = Buffer.alloc(128);
  header.write('MATLAB 5.0 MAT-file, created by scsd-convert', 0, 'latin1');
  header.writeUInt16LE(0x0100, 124);
  header.write('IM', 126, 'latin1');

  const elements: Buffer[] = [header];
  for (const v of variables) {
    const element = 'cell' in v ? cellElement(v.name, v.cell) : matrixElement(v.name, v);
    if (opts.compress) {
      const deflated = zlib.deflateSync(element);
      elements.push(tagOf(miCOMPRESSED, deflated.length), deflated);
      padTo8(elements, deflated.length);
    } else {
      elements.push(element);
    }
  }
  return Buffer.concat(elements);
}
