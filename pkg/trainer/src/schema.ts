/**
 * File contracts shared with the Python pipeline: corpus JSONL and split
 * manifest in, prediction JSONL out. This package talks to the pipeline
 * only through these files, so everything here is validated on read and
 * written byte-stably (sorted keys, one JSON object per line).
 */

import { createHash } from 'node:crypto';
import { mkdirSync, readFileSync, writeFileSync } from 'node:fs';
import { dirname } from 'node:path';
import { z } from 'zod';

export const COMPONENTS = ['AV', 'AC', 'PR', 'UI', 'S', 'C', 'I', 'A'] as const;
export type Component = (typeof COMPONENTS)[number];

// Allowed values per component. Duplicated from the pipeline on purpose:
// the two sides share files, not code, and each validates independently.
export const COMPONENT_VALUES: Record<Component, readonly string[]> = {
  AV: ['N', 'A', 'L', 'P'],
  AC: ['L', 'H'],
  PR: ['N', 'L', 'H'],
  UI: ['N', 'R'],
  S: ['U', 'C'],
  C: ['N', 'L', 'H'],
  I: ['N', 'L', 'H'],
  A: ['N', 'L', 'H'],
};

const CVE_ID_RE = /^CVE-\d{4}-\d{4,}$/;

export class CorpusError extends Error {}

/** A corpus label value falls outside its component's enumeration. */
export class InvalidLabelSetError extends Error {}

export type LabelVector = Record<Component, string>;

/**
 * Parse a serialized label vector like "AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H".
 *
 * Structure errors (wrong components, wrong order) are CorpusError; a legal
 * structure carrying an unknown value (say AV:Q) is InvalidLabelSetError,
 * since that is a label-set problem rather than a malformed file.
 */
export function parseLabels(serialized: string): LabelVector {
  let body = serialized;
  for (const prefix of ['CVSS:3.0/', 'CVSS:3.1/']) {
    if (body.startsWith(prefix)) body = body.slice(prefix.length);
  }
  const parts = body.split('/');
  if (parts.length !== COMPONENTS.length) {
    throw new CorpusError(`label vector needs ${COMPONENTS.length} components: ${serialized}`);
  }
  const out = {} as LabelVector;
  for (let i = 0; i < COMPONENTS.length; i++) {
    const expected = COMPONENTS[i];
    const sep = parts[i].indexOf(':');
    if (sep < 0) throw new CorpusError(`bad label pair ${parts[i]} in ${serialized}`);
    const key = parts[i].slice(0, sep);
    const value = parts[i].slice(sep + 1);
    if (key !== expected) {
      throw new CorpusError(`expected component ${expected} at position ${i}, got ${key}`);
    }
    if (!COMPONENT_VALUES[expected].includes(value)) {
      throw new InvalidLabelSetError(`component ${expected} has no value ${value}`);
    }
    out[expected] = value;
  }
  return out;
}

export function serializeLabels(labels: LabelVector): string {
  return COMPONENTS.map(c => `${c}:${labels[c]}`).join('/');
}

/**
 * Stable 12-hex id joining predictions back to corpus examples. It must hash
 * exactly the same bytes as the pipeline's version or every prediction row
 * turns into a stray, so the key format is part of the file contract.
 */
export function textRef(cveId: string, source: string, text: string): string {
  return createHash('sha1').update(`${cveId}|${source}|${text}`, 'utf8').digest('hex').slice(0, 12);
}

const corpusRowSchema = z.object({
  cve_id: z.string().regex(CVE_ID_RE, 'invalid CVE id'),
  labels: z.string(),
  source: z.string().min(1),
  text: z.string().min(1),
});

export interface CorpusExample {
  cveId: string;
  text: string;
  source: string;
  labels: LabelVector;
  textRef: string;
}

export function parseCorpusRow(record: unknown): CorpusExample {
  const parsed = corpusRowSchema.safeParse(record);
  if (!parsed.success) {
    throw new CorpusError(`bad corpus record: ${parsed.error.issues[0]?.message}`);
  }
  const row = parsed.data;
  return {
    cveId: row.cve_id,
    text: row.text,
    source: row.source,
    labels: parseLabels(row.labels),
    textRef: textRef(row.cve_id, row.source, row.text),
  };
}

export function readCorpus(path: string): CorpusExample[] {
  const examples: CorpusExample[] = [];
  for (const line of readFileSync(path, 'utf8').split('\n')) {
    const trimmed = line.trim();
    if (!trimmed) continue;
    let record: unknown;
    try {
      record = JSON.parse(trimmed);
    } catch (err) {
      throw new CorpusError(`corpus line is not JSON: ${(err as Error).message}`);
    }
    examples.push(parseCorpusRow(record));
  }
  if (examples.length === 0) throw new CorpusError(`corpus is empty: ${path}`);
  return examples;
}

const manifestSchema = z.object({
  ratio: z.number().gt(0).lt(1),
  seed: z.number().int(),
  train: z.array(z.string()),
  test: z.array(z.string()),
});

export class SplitManifest {
  readonly seed: number;
  readonly ratio: number;
  readonly train: Set<string>;
  readonly test: Set<string>;

  constructor(seed: number, ratio: number, train: Iterable<string>, test: Iterable<string>) {
    this.seed = seed;
    this.ratio = ratio;
    this.train = new Set(train);
    this.test = new Set(test);
    for (const id of this.train) {
      if (this.test.has(id)) throw new CorpusError(`CVE on both sides of the split: ${id}`);
    }
  }

  sideOf(cveId: string): 'train' | 'test' {
    if (this.train.has(cveId)) return 'train';
    if (this.test.has(cveId)) return 'test';
    throw new CorpusError(`manifest does not cover ${cveId}`);
  }

  toRecord(): Record<string, unknown> {
    return {
      ratio: this.ratio,
      seed: this.seed,
      test: [...this.test].sort(),
      train: [...this.train].sort(),
    };
  }
}

export function readManifest(path: string): SplitManifest {
  let record: unknown;
  try {
    record = JSON.parse(readFileSync(path, 'utf8'));
  } catch (err) {
    throw new CorpusError(`manifest is not JSON: ${(err as Error).message}`);
  }
  const parsed = manifestSchema.safeParse(record);
  if (!parsed.success) {
    throw new CorpusError(`bad split manifest: ${parsed.error.issues[0]?.message}`);
  }
  return new SplitManifest(parsed.data.seed, parsed.data.ratio, parsed.data.train, parsed.data.test);
}

export const predictionRowSchema = z.object({
  cve_id: z.string().regex(CVE_ID_RE),
  component: z.enum(COMPONENTS),
  scores: z.record(z.string(), z.number()),
  text_ref: z.string().regex(/^[0-9a-f]{12}$/),
  value: z.string().min(1),
});

export type PredictionRow = z.infer<typeof predictionRowSchema>;

/** Stringify with sorted keys at every level, matching the pipeline's files. */
export function stableStringify(value: unknown, indent?: number): string {
  const sortKeys = (node: unknown): unknown => {
    if (Array.isArray(node)) return node.map(sortKeys);
    if (node !== null && typeof node === 'object') {
      const out: Record<string, unknown> = {};
      for (const key of Object.keys(node as Record<string, unknown>).sort()) {
        out[key] = sortKeys((node as Record<string, unknown>)[key]);
      }
      return out;
    }
    return node;
  };
  return JSON.stringify(sortKeys(value), null, indent);
}

export function writeJsonl(path: string, records: Iterable<Record<string, unknown>>): number {
  mkdirSync(dirname(path), { recursive: true });
  let body = '';
  let n = 0;
  for (const record of records) {
    body += stableStringify(record) + '\n';
    n += 1;
  }
  writeFileSync(path, body, 'utf8');
  return n;
}

export function writeJson(path: string, payload: unknown): void {
  mkdirSync(dirname(path), { recursive: true });
  writeFileSync(path, stableStringify(payload, 2) + '\n', 'utf8');
}
