#!/usr/bin/env node
/**
 * scsd-convert --in container.mat --out DIR [--views k1,k2] [--labels key]
 *              [--list-keys] [--no-verify]
 */

import * as fs from 'node:fs';

import { convert, describeKeys, ConversionError } from './convert';
import { readMat } from './mat';
import { verifyRoundtrip } from './verify';

interface Args {
  in?: string;
  out?: string;
  views?: string[];
  labels?: string;
  listKeys: boolean;
  verify: boolean;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { listKeys: false, verify: true };
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    switch (a) {
      case '--in': args.in = argv[++i]; break;
      case '--out': args.out = argv[++i]; break;
      case '--views': args.views = argv[++i].split(',').map((s) => s.trim()).filter(Boolean); break;
      case '--labels': args.labels = argv[++i]; break;
      case '--list-keys': args.listKeys = true; break;
      case '--no-verify': args.verify = false; break;
      case '--help':
      case '-h':
        usage(0);
        break;
      default:
        console.error(`unknown argument: ${a}`);
        usage(2);
    }
  }
  return args;
}

function usage(code: number): never {
  const text = [
    'usage: scsd-convert --in FILE --out DIR [--views k1,k2,...] [--labels KEY]',
    '       scsd-convert --in FILE --list-keys',
    '',
    'Converts a MAT v5 multi-view multi-label container into the scsd native',
    'dataset directory format and verifies the round trip.',
  ].join('\n');
  (code === 0 ? console.log : console.error)(text);
  process.exit(code);
}

export function main(argv: string[]): number {
  const args = parseArgs(argv);
  if (!args.in) usage(2);

  if (args.listKeys) {
    const vars = readMat(fs.readFileSync(args.in));
    for (const line of describeKeys(vars)) console.log(line);
    return 0;
  }
  if (!args.out) usage(2);

  try {
    const manifest = convert(args.in, args.out, { views: args.views, labels: args.labels });
    console.log(`converted ${manifest.m} views, n=${manifest.n}, c=${manifest.c}`
      + (manifest.transposed.length ? ` (transposed: ${manifest.transposed.join(', ')})` : ''));
    if (args.verify) {
      const report = verifyRoundtrip(args.in, args.out, manifest);
      if (!report.ok) {
        console.error('round-trip verification FAILED:');
        for (const mm of report.mismatches) {
          console.error(`  ${mm.where}[${mm.index}]: source=${mm.source} emitted=${mm.emitted}`);
        }
        return 1;
      }
      console.log(`round-trip verified: ${report.featuresChecked} feature values, `
        + `${report.labelsChecked} labels`);
    }
    console.log(`written to ${args.out}`);
    return 0;
  } catch (err) {
    if (err instanceof ConversionError) {
      console.error(`conversion error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
