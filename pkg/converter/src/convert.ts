/**
 * Container -> native dataset conversion.
 *
 * The source is a MAT v5 file holding per-view feature matrices and a binary
 * label matrix. Views may come as one cell array or as separate matrix keys;
 * matrices stored feature-by-sample are transposed to sample-by-feature using
 * the sample count implied by the label matrix.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

import { MatMatrix, MatVariable, readMat } from './mat';
import { writeNativeDataset } from './dataset';

export class ConversionError extends Error {}

export interface ConversionManifest {
  source: string;
  labelKey: string;
  viewKeys: string[];
  viewDims: number[];
  n: number;
  m: number;
  c: number;
  transposed: string[];
  checksums: Record<string, string>;
}

export interface ConvertOptions {
  views?: string[];
  labels?: string;
}

export function describeKeys(vars: Map<string, MatVariable>): string[] {
  const out: string[] = [];
  for (const [name, v] of vars) {
    if (v.kind === 'matrix') {
      out.push(`${name}: matrix ${v.rows}x${v.cols}`);
    } else if (v.kind === 'cell') {
      const shapes = v.items.map((i) => `${i.rows}x${i.cols}`).join(', ');
      out.push(`${name}: cell of ${v.items.length} matrices (${shapes})`);
    } else {
      out.push(`${name}: unsupported (${v.reason})`);
    }
  }
  return out;
}

function isBinary(m: MatMatrix): boolean {
  for (let i = 0; i < m.data.length; i++) {
    const v = m.data[i];
    if (v !== 0 && v !== 1) return false;
  }
  return true;
}

function pickLabels(vars: Map<string, MatVariable>, explicit?: string): MatMatrix {
  if (explicit) {
    const v = vars.get(explicit);
    if (!v) throw new ConversionError(`label key ${explicit} not found; keys:\n  ${describeKeys(vars).join('\n  ')}`);
    if (v.kind !== 'matrix') throw new ConversionError(`label key ${explicit} is ${v.kind}, expected a matrix`);
    return v;
  }
  const candidates: MatMatrix[] = [];
  for (const [name, v] of vars) {
    if (v.kind === 'matrix' && (/label/i.test(name) || name.toLowerCase() === 'y')) {
      candidates.push(v);
    }
  }
  if (candidates.length !== 1) {
    throw new ConversionError(
      `cannot auto-detect the label matrix (found ${candidates.length} candidates); ` +
      `pass --labels; keys:\n  ${describeKeys(vars).join('\n  ')}`);
  }
  return candidates[0];
}

function pickViews(vars: Map<string, MatVariable>, labelKey: string, explicit?: string[]): MatMatrix[] {
  if (explicit && explicit.length > 0) {
    return explicit.map((key) => {
      const v = vars.get(key);
      if (!v) throw new ConversionError(`view key ${key} not found; keys:\n  ${describeKeys(vars).join('\n  ')}`);
      if (v.kind === 'cell') throw new ConversionError(`view key ${key} is a cell; name its entries implicitly by passing the cell as the only --views key`);
      if (v.kind !== 'matrix') throw new ConversionError(`view key ${key} is unsupported (${v.reason})`);
      return v;
    });
  }
  const cells: MatCellLike[] = [];
  const matrices: MatMatrix[] = [];
  for (const [name, v] of vars) {
    if (name === labelKey) continue;
    if (v.kind === 'cell') cells.push(v);
    else if (v.kind === 'matrix') matrices.push(v);
  }
  if (cells.length === 1) {
    return cells[0].items;
  }
  if (cells.length === 0 && matrices.length > 0) {
    return matrices.sort((a, b) => (a.name < b.name ? -1 : 1));
  }
  throw new ConversionError(
    `ambiguous view layout (${cells.length} cell arrays, ${matrices.length} matrices); ` +
    `pass --views; keys:\n  ${describeKeys(vars).join('\n  ')}`);
}

interface MatCellLike {
  items: MatMatrix[];
}

function transpose(m: MatMatrix): MatMatrix {
  const data = new Float64Array(m.data.length);
  for (let r = 0; r < m.rows; r++) {
    for (let c = 0; c < m.cols; c++) {
      data[c * m.rows + r] = m.data[r * m.cols + c];
    }
  }
  return { kind: 'matrix', name: m.name, rows: m.cols, cols: m.rows, data };
}

function orientAll(labels: MatMatrix, views: MatMatrix[]): {
  labels: MatMatrix; views: MatMatrix[]; n: number; transposed: string[];
} {
  const fits = (candidate: number) => views.every((v) => v.rows === candidate || v.cols === candidate);
  let n: number;
  if (labels.rows !== labels.cols) {
    if (fits(labels.rows) && !fits(labels.cols)) n = labels.rows;
    else if (fits(labels.cols) && !fits(labels.rows)) n = labels.cols;
    else if (fits(labels.rows) && fits(labels.cols)) {
      // both label dimensions appear in every view; treat rows as samples
      n = labels.rows;
    } else {
      throw new ConversionError(
        `no label dimension (${labels.rows} or ${labels.cols}) is shared by every view matrix`);
    }
  } else {
    n = labels.rows;
    if (!fits(n)) throw new ConversionError(`views do not share the label dimension ${n}`);
  }
  const transposed: string[] = [];
  let outLabels = labels;
  if (outLabels.rows !== n) {
    outLabels = transpose(outLabels);
    transposed.push(labels.name || 'labels');
  }
  const outViews = views.map((v) => {
    if (v.rows === n) return v;
    transposed.push(v.name);
    return transpose(v);
  });
  return { labels: outLabels, views: outViews, n, transposed };
}

function validate(labels: MatMatrix, views: MatMatrix[]): void {
  const offenders: string[] = [];
  if (!isBinary(labels)) offenders.push(`${labels.name || 'labels'}: non-binary label entries`);
  for (const v of views) {
    for (let i = 0; i < v.data.length; i++) {
      if (!Number.isFinite(v.data[i])) {
        offenders.push(`${v.name}: non-finite feature at flat index ${i}`);
        break;
      }
    }
  }
  if (offenders.length > 0) {
    throw new ConversionError(`source failed validation:\n  ${offenders.join('\n  ')}`);
  }
}

export function convert(sourcePath: string, outDir: string, opts: ConvertOptions = {}): ConversionManifest {
  const vars = readMat(fs.readFileSync(sourcePath));
  if (vars.size === 0) throw new ConversionError(`${sourcePath}: no variables found`);
  const labelsRaw = pickLabels(vars, opts.labels);
  const viewsRaw = pickViews(vars, labelsRaw.name, opts.views);
  if (viewsRaw.length === 0) throw new ConversionError('no view matrices selected');

  const { labels, views, n, transposed } = orientAll(labelsRaw, viewsRaw);
  validate(labels, views);

  const labelBytes = Uint8Array.from(labels.data);
  const checksums = writeNativeDataset(
    outDir, n,
    views.map((v) => ({ d: v.cols, data: v.data })),
    labelBytes,
  );

  const manifest: ConversionManifest = {
    source: path.resolve(sourcePath),
    labelKey: labelsRaw.name,
    viewKeys: viewsRaw.map((v) => v.name),
    viewDims: views.map((v) => v.cols),
    n,
    m: views.length,
    c: labels.cols,
    transposed,
    checksums,
  };
  fs.writeFileSync(path.join(outDir, 'conversion.json'),
    JSON.stringify(manifest, null, 2) + '\n', 'utf8');
  return manifest;
}
