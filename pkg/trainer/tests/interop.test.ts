/**
 * End-to-end interop with the Python pipeline, exercised over the compiled
 * CLI: the package must build, train from a corpus plus split manifest
 * written in the exchange formats, and produce predictions the pipeline's
 * evaluator accepts with no joining errors. Negative controls confirm the
 * evaluator would actually catch a gap or a stray row.
 */

import { execFileSync, spawnSync } from 'node:child_process';
import { existsSync, readFileSync, rmSync, writeFileSync } from 'node:fs';
import { dirname, join, resolve } from 'node:path';
import { fileURLToPath } from 'node:url';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';
import { COMPONENTS } from '../src/schema.js';
import { FixtureFiles, writeFixture } from './helpers.js';

const root = resolve(dirname(fileURLToPath(import.meta.url)), '..');
const EVALUATOR = 'cvsspredict';

let fixture: FixtureFiles;
let outDir: string;
let predictionsPath: string;

const evaluate = (predictions: string, report: string) =>
  spawnSync(EVALUATOR, [
    'evaluate',
    '--corpus', fixture.corpusPath,
    '--manifest', fixture.manifestPath,
    '--predictions', predictions,
    '--out', report,
  ], { encoding: 'utf8' });

beforeAll(() => {
  execFileSync('npx', ['tsc', '-p', 'tsconfig.json'], { cwd: root, encoding: 'utf8' });
  fixture = writeFixture(120, 0.75);
  outDir = join(fixture.dir, 'run');
  predictionsPath = join(outDir, 'predictions.jsonl');
  execFileSync(process.execPath, [
    join(root, 'dist', 'cli.js'), 'train',
    '--corpus', fixture.corpusPath,
    '--manifest', fixture.manifestPath,
    '--out-dir', outDir,
    '--epochs', '2',
    '--frozen-epochs', '1',
  ], { encoding: 'utf8' });
}, 300_000);

afterAll(() => {
  rmSync(fixture.dir, { recursive: true, force: true });
});

describe('compiled CLI run', () => {
  it('writes predictions, a training log and one model file per component', () => {
    expect(existsSync(predictionsPath)).toBe(true);
    const log = JSON.parse(readFileSync(join(outDir, 'training-log.json'), 'utf8'));
    expect(log.header.epochs).toBe(2);
    expect(log.header.frozenEpochs).toBe(1);
    expect(log.header.pretrained).toBe(false);
    for (const component of COMPONENTS) {
      expect(existsSync(join(outDir, 'models', `${component}.json`))).toBe(true);
      const epochs = log.components[component].epochs;
      expect(epochs.map((e: { frozen: boolean }) => e.frozen)).toEqual([true, false]);
      expect(epochs[0].encoderChecksum).not.toBe(epochs[1].encoderChecksum);
    }
  });

  it('covers every test example for every component', () => {
    const rows = readFileSync(predictionsPath, 'utf8').trim().split('\n').map(l => JSON.parse(l));
    expect(rows).toHaveLength(30 * COMPONENTS.length);
    const testIds = new Set(fixture.manifest.test);
    for (const row of rows) expect(testIds.has(row.cve_id)).toBe(true);
  });
});

describe('pipeline evaluator', () => {
  it('accepts the predictions with no joining errors', () => {
    const reportPath = join(fixture.dir, 'report.json');
    const result = evaluate(predictionsPath, reportPath);
    expect(result.status, result.stderr).toBe(0);
    const report = JSON.parse(readFileSync(reportPath, 'utf8'));
    expect(Object.keys(report.components).sort()).toEqual([...COMPONENTS].sort());
    expect(report.test_examples).toBe(30);
    for (const component of COMPONENTS) {
      expect(report.components[component].support).toBe(30);
    }
  });

  it('would flag a dropped row as a missing prediction', () => {
    const lines = readFileSync(predictionsPath, 'utf8').trim().split('\n');
    const gapPath = join(fixture.dir, 'gap.jsonl');
    writeFileSync(gapPath, lines.slice(0, -1).join('\n') + '\n');
    const result = evaluate(gapPath, join(fixture.dir, 'gap-report.json'));
    expect(result.status).not.toBe(0);
    expect(result.stderr).toContain('missing');
  });

  it('would flag a fabricated row as an unknown example', () => {
    const stray = {
      cve_id: 'CVE-2021-99999',
      component: 'AV',
      scores: { A: 0.25, L: 0.25, N: 0.25, P: 0.25 },
      text_ref: 'deadbeefdead',
      value: 'N',
    };
    const strayPath = join(fixture.dir, 'stray.jsonl');
    writeFileSync(strayPath, readFileSync(predictionsPath, 'utf8') + JSON.stringify(stray) + '\n');
    const result = evaluate(strayPath, join(fixture.dir, 'stray-report.json'));
    expect(result.status).not.toBe(0);
    expect(result.stderr).toContain('not test-set examples');
  });
});
