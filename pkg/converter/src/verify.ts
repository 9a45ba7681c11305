/**
 * Round-trip verification: re-read the source container and the emitted
 * directory, assert labels match exactly and features match within the
 * float32 cast tolerance (1e-6 relative).
 */

import * as fs from 'node:fs';

import { ConversionManifest, ConversionError } from './convert';
import { MatMatrix, readMat } from './mat';
import { readNativeDataset } from './dataset';

export interface Mismatch {
  where: string;
  index: number;
  source: number;
  emitted: number;
}

export interface VerifyReport {
  ok: boolean;
  featuresChecked: number;
  labelsChecked: number;
  mismatches: Mismatch[];
}

const REL_TOL = 1e-6;
const MAX_REPORTED = 10;

function relErr(a: number, b: number): number {
  const scale = Math.max(Math.abs(a), Math.abs(b), 1e-12);
  return Math.abs(a - b) / scale;
}

export function verifyRoundtrip(sourcePath: string, outDir: string,
                                manifest: ConversionManifest): VerifyReport {
  const vars = readMat(fs.readFileSync(sourcePath));
  const emitted = readNativeDataset(outDir);
  const mismatches: Mismatch[] = [];
  let featuresChecked = 0;

  const lookup = (key: string): MatMatrix => {
    for (const v of vars.values()) {
      if (v.kind === 'matrix' && v.name === key) return v;
      if (v.kind === 'cell') {
        const hit = v.items.find((i) => i.name === key);
        if (hit) return hit;
      }
    }
    throw new ConversionError(`source no longer contains ${key}`);
  };

  manifest.viewKeys.forEach((key, vIdx) => {
    let src = lookup(key);
    if (src.rows !== emitted.n) {
      src = transposed(src);
    }
    const out = emitted.views[vIdx];
    for (let i = 0; i < src.data.length; i++) {
      featuresChecked++;
      if (relErr(src.data[i], out.data[i]) > REL_TOL) {
        if (mismatches.length < MAX_REPORTED) {
          mismatches.push({ where: `view_${vIdx}.f32`, index: i,
                            source: src.data[i], emitted: out.data[i] });
        }
      }
    }
  });

  let labelsSrc = lookup(manifest.labelKey);
  if (labelsSrc.rows !== emitted.n) {
    labelsSrc = transposed(labelsSrc);
  }
  for (let i = 0; i < labelsSrc.data.length; i++) {
    if (labelsSrc.data[i] !== emitted.labels[i]) {
      if (mismatches.length < MAX_REPORTED) {
        mismatches.push({ where: 'labels.u8', index: i,
                          source: labelsSrc.data[i], emitted: emitted.labels[i] });
      }
    }
  }

  return {
    ok: mismatches.length === 0,
    featuresChecked,
    labelsChecked: labelsSrc.data.length,
    mismatches,
  };
}

function transposed(m: MatMatrix): MatMatrix {
  const data = new Float64Array(m.data.length);
  for (let r = 0; r < m.rows; r++) {
    for (let c = 0; c < m.cols; c++) {
      data[c * m.rows + r] = m.data[r * m.cols + c];
    }
  }
  return { kind: 'matrix', name: m.name, rows: m.cols, cols: m.rows, data };
}
