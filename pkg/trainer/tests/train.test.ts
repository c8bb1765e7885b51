/**
 * Training loop tests. The central guarantee: while the encoder is frozen
 * only the head moves, so the encoder checksum logged each epoch stays at
 * its initialization value through the frozen epochs and changes once
 * fine-tuning starts.
 */

import { mkdtempSync, rmSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';
import { selectBackend } from '../src/backend.js';
import { PRESETS, TransformerClassifier } from '../src/model.js';
import {
  COMPONENT_VALUES,
  COMPONENTS,
  CorpusError,
  InvalidLabelSetError,
  parseLabels,
  predictionRowSchema,
  SplitManifest,
  textRef,
} from '../src/schema.js';
import {
  buildTrainingLog,
  ConfigError,
  loadModelFile,
  prepareData,
  resolveConfig,
  saveModelFile,
  trainAll,
  trainComponent,
  trainPrepared,
  TRAINING_DEFAULTS,
} from '../src/train.js';
import { splitIds, syntheticExamples, V_NET } from './helpers.js';

beforeAll(async () => {
  await selectBackend();
});

const dirs: string[] = [];
afterAll(() => {
  for (const dir of dirs) rmSync(dir, { recursive: true, force: true });
});

describe('resolveConfig', () => {
  it('fills defaults when nothing is overridden', () => {
    expect(resolveConfig()).toEqual(TRAINING_DEFAULTS);
  });

  it('rejects out-of-range settings', () => {
    expect(() => resolveConfig({ preset: 'bert-giant' as never })).toThrow(ConfigError);
    expect(() => resolveConfig({ epochs: 0 })).toThrow(ConfigError);
    expect(() => resolveConfig({ epochs: 2.5 })).toThrow(ConfigError);
    expect(() => resolveConfig({ frozenEpochs: -1 })).toThrow(ConfigError);
    expect(() => resolveConfig({ epochs: 3, frozenEpochs: 3 })).toThrow(ConfigError);
    expect(() => resolveConfig({ batchSize: 0 })).toThrow(ConfigError);
    expect(() => resolveConfig({ learningRate: 0 })).toThrow(ConfigError);
    expect(() => resolveConfig({ maxLen: 1 })).toThrow(ConfigError);
    expect(() => resolveConfig({ seed: 0.5 })).toThrow(ConfigError);
    expect(() => resolveConfig({ maxExamples: 0 })).toThrow(ConfigError);
  });
});

describe('prepareData', () => {
  it('splits by the manifest and keeps train rows on the train side', () => {
    const corpus = syntheticExamples(20);
    const manifest = splitIds(corpus.map(e => e.cveId), 0.75);
    const prepared = prepareData(corpus, manifest, resolveConfig());
    expect(prepared.trainRows).toHaveLength(15);
    expect(prepared.testRows).toHaveLength(5);
    for (const row of prepared.trainRows) expect(manifest.train.has(row.cveId)).toBe(true);
    expect(prepared.trainIds.length).toBe(15 * prepared.width);
  });

  it('caps the train set deterministically', () => {
    const corpus = syntheticExamples(30);
    const manifest = splitIds(corpus.map(e => e.cveId), 0.8);
    const config = resolveConfig({ maxExamples: 10 });
    const a = prepareData(corpus, manifest, config);
    const b = prepareData(corpus, manifest, config);
    expect(a.trainRows).toHaveLength(10);
    for (const row of a.trainRows) expect(manifest.train.has(row.cveId)).toBe(true);
    expect(a.trainRows.map(r => r.cveId)).toEqual(b.trainRows.map(r => r.cveId));
  });

  it('rejects a corpus example the manifest does not cover', () => {
    const corpus = syntheticExamples(10);
    const manifest = splitIds(corpus.slice(0, 8).map(e => e.cveId), 0.75);
    expect(() => prepareData(corpus, manifest, resolveConfig())).toThrow(CorpusError);
  });

  it('rejects a manifest that selects no training examples', () => {
    const corpus = syntheticExamples(6);
    const manifest = new SplitManifest(0, 0.5, [], corpus.map(e => e.cveId));
    expect(() => prepareData(corpus, manifest, resolveConfig())).toThrow(CorpusError);
  });
});

describe('freeze schedule', () => {
  it('keeps the encoder at its initialization through the frozen epochs and moves it after thawing', () => {
    const corpus = syntheticExamples(250);
    const manifest = splitIds(corpus.map(e => e.cveId), 0.8);
    const config = resolveConfig({ epochs: 4, frozenEpochs: 3, maxExamples: null });
    const prepared = prepareData(corpus, manifest, config);
    expect(prepared.trainRows).toHaveLength(200);

    // An identically seeded fresh model gives the initialization checksum
    // the frozen epochs must preserve.
    const reference = new TransformerClassifier({
      component: 'AV',
      shape: PRESETS[config.preset],
      vocabSize: prepared.tokenizer.vocabSize,
      maxLen: prepared.width,
      seed: config.seed,
    });
    const initialChecksum = reference.encoderChecksum();
    reference.dispose();

    const run = trainPrepared('AV', config, prepared);
    expect(run.log.map(e => e.frozen)).toEqual([true, true, true, false]);
    expect(run.log[0].encoderChecksum).toBe(initialChecksum);
    expect(run.log[1].encoderChecksum).toBe(initialChecksum);
    expect(run.log[2].encoderChecksum).toBe(initialChecksum);
    expect(run.log[3].encoderChecksum).not.toBe(initialChecksum);
    expect(run.log[3].loss).toBeLessThan(run.log[0].loss);
    expect(run.model.trained).toBe(true);
    run.model.dispose();
  });

  it('reproduces checksums, losses and predictions for a repeated seed', () => {
    const corpus = syntheticExamples(80);
    const manifest = splitIds(corpus.map(e => e.cveId), 0.75);
    const config = resolveConfig({ epochs: 2, frozenEpochs: 1 });
    const a = trainComponent('AV', config, corpus, manifest);
    const b = trainComponent('AV', config, corpus, manifest);
    expect(a.log).toEqual(b.log);
    expect(a.predictions).toEqual(b.predictions);
    a.model.dispose();
    b.model.dispose();
  });
});

describe('labels', () => {
  it('rejects a label value outside the component enumeration', () => {
    const text = 'a flaw';
    const example = {
      cveId: 'CVE-2021-1000',
      text,
      source: 'nvd',
      labels: { ...parseLabels(V_NET), AV: 'Q' },
      textRef: textRef('CVE-2021-1000', 'nvd', text),
    };
    const manifest = new SplitManifest(0, 0.5, ['CVE-2021-1000'], []);
    const config = resolveConfig({ epochs: 1, frozenEpochs: 0 });
    expect(() => trainComponent('AV', config, [example], manifest)).toThrow(InvalidLabelSetError);
  });
});

describe('predictions', () => {
  it('emits rows in the exchange schema with probabilities summing to one', () => {
    const corpus = syntheticExamples(40);
    const manifest = splitIds(corpus.map(e => e.cveId), 0.75);
    const config = resolveConfig({ epochs: 1, frozenEpochs: 0 });
    const run = trainComponent('AC', config, corpus, manifest);
    expect(run.predictions).toHaveLength(10);
    const byId = new Map(corpus.map(e => [e.cveId, e]));
    for (const row of run.predictions) {
      expect(predictionRowSchema.safeParse(row).success).toBe(true);
      expect(row.component).toBe('AC');
      expect(row.text_ref).toBe(byId.get(row.cve_id)?.textRef);
      expect(Object.keys(row.scores).sort()).toEqual([...COMPONENT_VALUES.AC].sort());
      const total = Object.values(row.scores).reduce((s, x) => s + x, 0);
      expect(Math.abs(total - 1)).toBeLessThan(1e-4);
      for (const score of Object.values(row.scores)) {
        expect(row.scores[row.value]).toBeGreaterThanOrEqual(score);
      }
    }
    run.model.dispose();
  });

  it('interleaves the merged predictions example-major across components', () => {
    const corpus = syntheticExamples(24);
    const manifest = splitIds(corpus.map(e => e.cveId), 0.75);
    const config = resolveConfig({ epochs: 1, frozenEpochs: 0, batchSize: 8 });
    const { runs, predictions } = trainAll(config, corpus, manifest);
    expect(Object.keys(runs)).toEqual([...COMPONENTS]);
    expect(predictions).toHaveLength(6 * COMPONENTS.length);
    const testIds = runs.AV.predictions.map(p => p.cve_id);
    predictions.forEach((row, i) => {
      expect(row.component).toBe(COMPONENTS[i % COMPONENTS.length]);
      expect(row.cve_id).toBe(testIds[Math.floor(i / COMPONENTS.length)]);
    });

    const log = buildTrainingLog(config, runs) as {
      header: Record<string, unknown>;
      components: Record<string, { epochs: unknown[] }>;
    };
    expect(log.header.tool).toBe('cvsspredict-trainer/0.1.0');
    expect(log.header.pretrained).toBe(false);
    expect(log.header.preset).toBe(config.preset);
    expect(Object.keys(log.components)).toEqual([...COMPONENTS]);
    for (const component of COMPONENTS) {
      expect(log.components[component].epochs).toHaveLength(1);
      runs[component].model.dispose();
    }
  });
});

describe('model files', () => {
  it('round-trips a trained model and rejects foreign files', () => {
    const dir = mkdtempSync(join(tmpdir(), 'trainer-models-'));
    dirs.push(dir);
    const corpus = syntheticExamples(20);
    const manifest = splitIds(corpus.map(e => e.cveId), 0.75);
    const run = trainComponent('AV', resolveConfig({ epochs: 1, frozenEpochs: 0 }), corpus, manifest);
    const path = join(dir, 'AV.json');
    saveModelFile(path, run.model, run.tokenizer);
    const loaded = loadModelFile(path);
    expect(loaded.model.trained).toBe(true);
    expect(loaded.model.component).toBe('AV');
    expect(loaded.model.encoderChecksum()).toBe(run.model.encoderChecksum());
    expect(loaded.tokenizer.vocabSize).toBe(run.tokenizer.vocabSize);
    run.model.dispose();
    loaded.model.dispose();

    const foreign = join(dir, 'foreign.json');
    writeFileSync(foreign, JSON.stringify({ format: 'something-else' }));
    expect(() => loadModelFile(foreign)).toThrow(ConfigError);
  });
});
