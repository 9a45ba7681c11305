/**
 * The scsd native dataset directory format (write + read side).
 *
 * manifest        "scsd-dataset v1" magic plus `key value` lines
 * view_<v>.f32    little-endian float32, row-major, n x d_v
 * labels.u8       n x c bytes of 0/1
 */

import * as crypto from 'node:crypto';
import * as fs from 'node:fs';
import * as path from 'node:path';

export const MANIFEST_NAME = 'manifest';
export const MAGIC_LINE = 'scsd-dataset v1';

export interface ViewOut {
  /** row-major (n x d) values */
  data: Float64Array | Float32Array;
  d: number;
}

export interface NativeDataset {
  n: number;
  m: number;
  c: number;
  views: { d: number; data: Float32Array }[];
  labels: Uint8Array;
  labelNames?: string[];
}

export function writeNativeDataset(
  outDir: string,
  n: number,
  views: ViewOut[],
  labels: Uint8Array,
  labelNames?: string[],
): Record<string, string> {
  fs.mkdirSync(outDir, { recursive: true });
  const c = labels.length / n;
  const lines: string[] = [MAGIC_LINE, `n ${n}`, `m ${views.length}`, `c ${c}`];
  const checksums: Record<string, string> = {};

  views.forEach((view, v) => {
    const fname = `view_${v}.f32`;
    lines.push(`view ${v} d ${view.d} file ${fname}`);
    const f32 = view.data instanceof Float32Array ? view.data : Float32Array.from(view.data);
    const buf = Buffer.from(f32.buffer, f32.byteOffset, f32.byteLength);
    fs.writeFileSync(path.join(outDir, fname), buf);
    checksums[fname] = sha256(buf);
  });

  lines.push('labels file labels.u8');
  const labelBuf = Buffer.from(labels.buffer, labels.byteOffset, labels.byteLength);
  fs.writeFileSync(path.join(outDir, 'labels.u8'), labelBuf);
  checksums['labels.u8'] = sha256(labelBuf);

  if (labelNames && labelNames.length > 0) {
    lines.push(`label_names ${labelNames.join(',')}`);
  }
  const manifest = lines.join('\n') + '\n';
  fs.writeFileSync(path.join(outDir, MANIFEST_NAME), manifest, 'utf8');
  checksums[MANIFEST_NAME] = sha256(Buffer.from(manifest, 'utf8'));
  return checksums;
}

export function readNativeDataset(dir: string): NativeDataset {
  const manifestPath = path.join(dir, MANIFEST_NAME);
  const text = fs.readFileSync(manifestPath, 'utf8');
  let n = -1;
  let m = -1;
  let c = -1;
  const viewFiles: { v: number; d: number; file: string }[] = [];
  let labelsFile = '';
  let labelNames: string[] | undefined;
  for (const raw of text.split('\n')) {
    const line = raw.trim();
    if (!line || line === MAGIC_LINE || line.startsWith('#')) continue;
    const parts = line.split(/\s+/);
    if (parts[0] === 'n') n = Number(parts[1]);
    else if (parts[0] === 'm') m = Number(parts[1]);
    else if (parts[0] === 'c') c = Number(parts[1]);
    else if (parts[0] === 'view') viewFiles.push({ v: Number(parts[1]), d: Number(parts[3]), file: parts[5] });
    else if (parts[0] === 'labels') labelsFile = parts[2];
    else if (parts[0] === 'label_names') labelNames = line.slice('label_names '.length).split(',');
  }
  if (n < 0 || m < 0 || c < 0 || !labelsFile) {
    throw new Error(`${manifestPath}: incomplete manifest`);
  }
  viewFiles.sort((a, b) => a.v - b.v);
  const views = viewFiles.map(({ d, file }) => {
    const buf = fs.readFileSync(path.join(dir, file));
    if (buf.length !== 4 * n * d) {
      throw new Error(`${file}: expected ${4 * n * d} bytes, found ${buf.length}`);
    }
    return { d, data: new Float32Array(buf.buffer, buf.byteOffset, n * d).slice() };
  });
  const labelBuf = fs.readFileSync(path.join(dir, labelsFile));
  if (labelBuf.length !== n * c) {
    throw new Error(`${labelsFile}: expected ${n * c} bytes, found ${labelBuf.length}`);
  }
  return { n, m, c, views, labels: Uint8Array.from(labelBuf), labelNames };
}

export function sha256(buf: Buffer): string {
  return crypto.createHash('sha256').update(buf).digest('hex');
}
