import * as assert from 'node:assert/strict';
import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';
import { describe, it } from 'node:test';

import { readMat, writeMat, MatMatrix, MatFormatError } from '../src/mat';
import { readNativeDataset, MAGIC_LINE, MANIFEST_NAME } from '../src/dataset';
import { convert, ConversionError } from '../src/convert';
import { verifyRoundtrip } from '../src/verify';

function tmpdir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), 'scsd-convert-'));
}

function seq(n: number, f: (i: number) => number): number[] {
  return Array.from({ length: n }, (_, i) => f(i));
}

function toyContainer(opts: { compress?: boolean; transposeView?: boolean } = {}): string {
  // 2 views (3x4, 3x2), labels 3x5
  const viewA = { rows: 3, cols: 4, data: seq(12, (i) => i + 0.25) };
  const viewB = { rows: 3, cols: 2, data: seq(6, (i) => -i * 1.5) };
  const labels = {
    name: 'labels', rows: 3, cols: 5,
    data: [1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 1, 1, 0, 0, 0],
  };
  const a = opts.transposeView
    ? { rows: 4, cols: 3, data: seq(12, (i) => {
        const r = Math.floor(i / 3);
        const c = i % 3;
        return viewA.data[c * 4 + r]; // store feature-by-sample
      }) }
    : viewA;
  const file = path.join(tmpdir(), 'toy.mat');
  fs.writeFileSync(file, writeMat([
    { name: 'view_a', ...a },
    { name: 'view_b', ...viewB, klass: 'single' },
    labels,
  ], { compress: opts.compress }));
  return file;
}

describe('mat v5 reader/writer', () => {
  it('round-trips double, single and uint8 matrices', () => {
    const doubles = { name: 'd', rows: 2, cols: 3, data: [1.5, -2.25, 3, 4, 5.125, -6] };
    const singles = { name: 's', rows: 3, cols: 1, data: [0.5, 1.5, -2.5], klass: 'single' as const };
    const bytes = { name: 'b', rows: 2, cols: 2, data: [0, 1, 1, 0], klass: 'uint8' as const };
    const vars = readMat(writeMat([doubles, singles, bytes]));
    assert.equal(vars.size, 3);
    const d = vars.get('d') as MatMatrix;
    assert.deepEqual(Array.from(d.data), doubles.data);
    assert.equal(d.rows, 2);
    assert.equal(d.cols, 3);
    const s = vars.get('s') as MatMatrix;
    assert.deepEqual(Array.from(s.data), singles.data);
    const b = vars.get('b') as MatMatrix;
    assert.deepEqual(Array.from(b.data), bytes.data);
  });

  it('round-trips cell arrays and names their items', () => {
    const cell = {
      name: 'X',
      cell: [
        { rows: 2, cols: 2, data: [1, 2, 3, 4] },
        { rows: 1, cols: 3, data: [5, 6, 7], klass: 'single' as const },
      ],
    };
    const vars = readMat(writeMat([cell]));
    const x = vars.get('X');
    assert.ok(x && x.kind === 'cell');
    assert.equal(x.items.length, 2);
    assert.equal(x.items[0].name, 'X{0}');
    assert.deepEqual(Array.from(x.items[0].data), [1, 2, 3, 4]);
    assert.deepEqual(Array.from(x.items[1].data), [5, 6, 7]);
  });

  it('reads zlib-compressed elements', () => {
    const m = { name: 'z', rows: 1, cols: 4, data: [9, 8, 7, 6] };
    const vars = readMat(writeMat([m], { compress: true }));
    const z = vars.get('z') as MatMatrix;
    assert.deepEqual(Array.from(z.data), [9, 8, 7, 6]);
  });

  it('rejects non-MAT input', () => {
    assert.throws(() => readMat(Buffer.alloc(200)), MatFormatError);
  });
});

describe('convert', () => {
  it('converts a toy container into a loadable native directory', () => {
    const out = tmpdir();
    const manifest = convert(toyContainer(), out);
    assert.equal(manifest.n, 3);
    assert.equal(manifest.m, 2);
    assert.equal(manifest.c, 5);
    assert.deepEqual(manifest.viewDims, [4, 2]);
    assert.equal(manifest.labelKey, 'labels');

    const ds = readNativeDataset(out);
    assert.equal(ds.n, 3);
    assert.equal(ds.views[0].d, 4);
    assert.equal(ds.views[0].data[5], Math.fround(5.25)); // row 1, col 1
    assert.deepEqual(Array.from(ds.labels.slice(0, 5)), [1, 0, 0, 1, 0]);

    const manifestText = fs.readFileSync(path.join(out, MANIFEST_NAME), 'utf8');
    assert.ok(manifestText.startsWith(MAGIC_LINE));
    assert.ok(manifestText.includes('view 0 d 4 file view_0.f32'));
    assert.ok(Object.keys(manifest.checksums).includes('labels.u8'));
  });

  it('transposes feature-by-sample sources and matches spot values', () => {
    const out = tmpdir();
    const manifest = convert(toyContainer({ transposeView: true }), out);
    assert.deepEqual(manifest.transposed, ['view_a']);
    const ds = readNativeDataset(out);
    // emitted (i, j) must equal the dense (i, j) of the sample-major matrix
    assert.equal(ds.views[0].data[1 * 4 + 2], Math.fround(6.25));
    assert.equal(manifest.viewDims[0], 4);
  });

  it('detects views from a single cell array', () => {
    const file = path.join(tmpdir(), 'cell.mat');
    fs.writeFileSync(file, writeMat([
      { name: 'X', cell: [
        { rows: 3, cols: 2, data: seq(6, (i) => i) },
        { rows: 3, cols: 3, data: seq(9, (i) => i * 0.5) },
      ] },
      { name: 'label', rows: 3, cols: 2, data: [1, 0, 0, 1, 1, 1] },
    ]));
    const manifest = convert(file, tmpdir());
    assert.equal(manifest.m, 2);
    assert.deepEqual(manifest.viewKeys, ['X{0}', 'X{1}']);
  });

  it('rejects non-binary labels naming the offender', () => {
    const file = path.join(tmpdir(), 'bad.mat');
    fs.writeFileSync(file, writeMat([
      { name: 'view_a', rows: 2, cols: 2, data: [1, 2, 3, 4] },
      { name: 'labels', rows: 2, cols: 1, data: [0.5, 1] },
    ]));
    assert.throws(() => convert(file, tmpdir()), /non-binary/);
  });

  it('rejects NaN features naming the view', () => {
    const file = path.join(tmpdir(), 'nan.mat');
    fs.writeFileSync(file, writeMat([
      { name: 'view_a', rows: 2, cols: 2, data: [1, NaN, 3, 4] },
      { name: 'labels', rows: 2, cols: 1, data: [0, 1] },
    ]));
    assert.throws(() => convert(file, tmpdir()), /view_a.*non-finite/);
  });

  it('requires --views when the layout is ambiguous', () => {
    const file = path.join(tmpdir(), 'ambig.mat');
    fs.writeFileSync(file, writeMat([
      { name: 'A', cell: [{ rows: 2, cols: 2, data: [1, 2, 3, 4] }] },
      { name: 'B', cell: [{ rows: 2, cols: 2, data: [5, 6, 7, 8] }] },
      { name: 'labels', rows: 2, cols: 1, data: [0, 1] },
    ]));
    assert.throws(() => convert(file, tmpdir()),
      (err: Error) => err instanceof ConversionError && /ambiguous|--views/.test(err.message)
        && /A: cell/.test(err.message));
  });

  it('honors explicit --views and --labels', () => {
    const file = path.join(tmpdir(), 'explicit.mat');
    fs.writeFileSync(file, writeMat([
      { name: 'gist', rows: 2, cols: 3, data: seq(6, (i) => i) },
      { name: 'hsv', rows: 2, cols: 2, data: seq(4, (i) => i + 10) },
      { name: 'truth', rows: 2, cols: 2, data: [1, 0, 0, 1] },
    ]));
    const manifest = convert(file, tmpdir(), { views: ['hsv', 'gist'], labels: 'truth' });
    assert.deepEqual(manifest.viewKeys, ['hsv', 'gist']);
    assert.deepEqual(manifest.viewDims, [2, 3]);
  });
});

describe('verify_roundtrip', () => {
  it('passes immediately after conversion', () => {
    const src = toyContainer({ compress: true });
    const out = tmpdir();
    const manifest = convert(src, out);
    const report = verifyRoundtrip(src, out, manifest);
    assert.equal(report.ok, true);
    assert.equal(report.mismatches.length, 0);
    assert.equal(report.featuresChecked, 18);
    assert.equal(report.labelsChecked, 15);
  });

  it('labels are preserved exactly', () => {
    const src = toyContainer();
    const out = tmpdir();
    convert(src, out);
    const ds = readNativeDataset(out);
    assert.deepEqual(Array.from(ds.labels),
      [1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 1, 1, 0, 0, 0]);
  });

  it('fails with a located report after corrupting one byte', () => {
    const src = toyContainer();
    const out = tmpdir();
    const manifest = convert(src, out);
    const target = path.join(out, 'view_0.f32');
    const bytes = fs.readFileSync(target);
    bytes[6] ^= 0xff;
    fs.writeFileSync(target, bytes);
    const report = verifyRoundtrip(src, out, manifest);
    assert.equal(report.ok, false);
    assert.ok(report.mismatches.length >= 1);
    assert.equal(report.mismatches[0].where, 'view_0.f32');
    assert.equal(report.mismatches[0].index, 1);
  });
});

describe('corel5k (extended, requires COREL5K_MAT)', { skip: !process.env.COREL5K_MAT }, () => {
  it('reports the published dataset dimensions', () => {
    const out = tmpdir();
    const manifest = convert(process.env.COREL5K_MAT as string, out);
    assert.equal(manifest.n, 4999);
    assert.equal(manifest.m, 6);
    assert.equal(manifest.c, 260);
  });
});
