/**
 * Shared builders for a synthetic, cleanly separable corpus: two disjoint
 * vocabularies tied to two label vectors that differ in every component, so
 * a model that learns anything learns all eight tasks.
 */

import { mkdtempSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { mulberry32 } from '../src/rng.js';
import {
  CorpusExample,
  parseCorpusRow,
  SplitManifest,
  stableStringify,
} from '../src/schema.js';

export const V_NET = 'AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H';
export const V_LOCAL = 'AV:L/AC:H/PR:L/UI:R/S:C/C:L/I:N/A:N';

export const NET_WORDS = [
  'remote', 'attacker', 'crafted', 'packet', 'server',
  'network', 'request', 'unauthenticated', 'overflow', 'execute',
];
export const LOCAL_WORDS = [
  'local', 'user', 'filesystem', 'symlink', 'privilege',
  'console', 'race', 'physical', 'session', 'misconfiguration',
];

export interface CorpusRecord {
  cve_id: string;
  labels: string;
  source: string;
  text: string;
}

export function syntheticRecords(n: number, seed = 7): CorpusRecord[] {
  const rng = mulberry32(seed);
  const records: CorpusRecord[] = [];
  for (let i = 0; i < n; i++) {
    const net = i % 2 === 0;
    const words = net ? NET_WORDS : LOCAL_WORDS;
    const pick = () => words[Math.floor(rng() * words.length)];
    records.push({
      cve_id: `CVE-2021-${10000 + i}`,
      labels: net ? V_NET : V_LOCAL,
      source: 'nvd',
      text:
        `A ${net ? 'remotely exploitable' : 'locally triggered'} flaw: ` +
        `${pick()} ${pick()} ${pick()} via ${pick()} handling allows ${pick()}.`,
    });
  }
  return records;
}

export function syntheticExamples(n: number, seed = 7): CorpusExample[] {
  return syntheticRecords(n, seed).map(parseCorpusRow);
}

export function splitIds(ids: string[], trainFraction: number, seed = 7): SplitManifest {
  const shuffled = [...ids];
  const rng = mulberry32(seed ^ 0x5bd1e995);
  for (let i = shuffled.length - 1; i > 0; i--) {
    const j = Math.floor(rng() * (i + 1));
    const tmp = shuffled[i];
    shuffled[i] = shuffled[j];
    shuffled[j] = tmp;
  }
  const cut = Math.round(ids.length * trainFraction);
  return new SplitManifest(seed, trainFraction, shuffled.slice(0, cut), shuffled.slice(cut));
}

export interface FixtureFiles {
  dir: string;
  corpusPath: string;
  manifestPath: string;
  records: CorpusRecord[];
  manifest: SplitManifest;
}

export function writeFixture(n: number, trainFraction: number, seed = 7): FixtureFiles {
  const dir = mkdtempSync(join(tmpdir(), 'trainer-fixture-'));
  const records = syntheticRecords(n, seed);
  const manifest = splitIds(records.map(r => r.cve_id), trainFraction, seed);
  const corpusPath = join(dir, 'corpus.jsonl');
  const manifestPath = join(dir, 'split.json');
  writeFileSync(corpusPath, records.map(r => stableStringify(r)).join('\n') + '\n');
  writeFileSync(manifestPath, stableStringify(manifest.toRecord(), 2) + '\n');
  return { dir, corpusPath, manifestPath, records, manifest };
}
