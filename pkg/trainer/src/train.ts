/**
 * Per-component training: one encoder-plus-head model per CVSS component,
 * with the encoder frozen for the first epochs and only the head learning,
 * then the whole network fine-tuned. Emits prediction rows in the pipeline's
 * exchange schema and a per-epoch log carrying the encoder checksum, so the
 * freeze schedule is auditable from the artifacts alone.
 */

import * as tf from '@tensorflow/tfjs';
import { readFileSync } from 'node:fs';
import {
  Component,
  COMPONENTS,
  COMPONENT_VALUES,
  CorpusError,
  CorpusExample,
  InvalidLabelSetError,
  PredictionRow,
  SplitManifest,
  writeJson,
} from './schema.js';
import { mulberry32, shuffle } from './rng.js';
import { WordTokenizer, TokenizerJson } from './tokenizer.js';
import { ModelArtifact, PresetName, PRESETS, TransformerClassifier } from './model.js';

export class ConfigError extends Error {}

export interface TrainingConfig {
  preset: PresetName;
  epochs: number;
  frozenEpochs: number;
  batchSize: number;
  learningRate: number;
  maxLen: number;
  seed: number;
  // train-set cap per component so runs stay desk-sized; null lifts it
  maxExamples: number | null;
}

export const TRAINING_DEFAULTS: TrainingConfig = {
  preset: 'distilbert',
  epochs: 6,
  frozenEpochs: 3,
  batchSize: 16,
  learningRate: 1e-3,
  maxLen: 64,
  seed: 0,
  maxExamples: 2000,
};

export function resolveConfig(overrides: Partial<TrainingConfig> = {}): TrainingConfig {
  const config = { ...TRAINING_DEFAULTS, ...overrides };
  if (!(config.preset in PRESETS)) {
    throw new ConfigError(`unknown preset ${config.preset}; use one of ${Object.keys(PRESETS).join(', ')}`);
  }
  if (!Number.isInteger(config.epochs) || config.epochs < 1) {
    throw new ConfigError(`epochs must be a positive integer, got ${config.epochs}`);
  }
  if (!Number.isInteger(config.frozenEpochs) || config.frozenEpochs < 0) {
    throw new ConfigError(`frozen epochs must be a non-negative integer, got ${config.frozenEpochs}`);
  }
  if (config.frozenEpochs >= config.epochs) {
    throw new ConfigError(
      `frozen epochs (${config.frozenEpochs}) must stay below total epochs (${config.epochs})`,
    );
  }
  if (!Number.isInteger(config.batchSize) || config.batchSize < 1) {
    throw new ConfigError(`batch size must be a positive integer, got ${config.batchSize}`);
  }
  if (!Number.isFinite(config.learningRate) || config.learningRate <= 0) {
    throw new ConfigError(`learning rate must be positive, got ${config.learningRate}`);
  }
  if (!Number.isInteger(config.maxLen) || config.maxLen < 2) {
    throw new ConfigError(`max length must be an integer of at least 2, got ${config.maxLen}`);
  }
  if (!Number.isInteger(config.seed)) {
    throw new ConfigError(`seed must be an integer, got ${config.seed}`);
  }
  if (config.maxExamples !== null && (!Number.isInteger(config.maxExamples) || config.maxExamples < 1)) {
    throw new ConfigError(`max examples must be null or a positive integer, got ${config.maxExamples}`);
  }
  return config;
}

export interface EpochLog {
  epoch: number;
  loss: number;
  trainAccuracy: number;
  encoderChecksum: string;
  frozen: boolean;
}

export interface ComponentRun {
  component: Component;
  model: TransformerClassifier;
  tokenizer: WordTokenizer;
  log: EpochLog[];
  predictions: PredictionRow[];
}

export interface TrainHooks {
  onEpochEnd?: (component: Component, entry: EpochLog) => void;
}

export interface PreparedData {
  tokenizer: WordTokenizer;
  width: number;
  trainRows: CorpusExample[];
  testRows: CorpusExample[];
  trainIds: Int32Array;
}

/**
 * Split the corpus by the manifest, apply the desk-scale cap, and tokenize
 * the training texts once; all eight component runs share this.
 */
export function prepareData(
  corpus: CorpusExample[],
  manifest: SplitManifest,
  config: TrainingConfig,
): PreparedData {
  const trainAll: CorpusExample[] = [];
  const testRows: CorpusExample[] = [];
  for (const example of corpus) {
    (manifest.sideOf(example.cveId) === 'train' ? trainAll : testRows).push(example);
  }
  if (trainAll.length === 0) {
    throw new CorpusError('the manifest selects no training examples from this corpus');
  }
  let trainRows = trainAll;
  if (config.maxExamples !== null && trainAll.length > config.maxExamples) {
    trainRows = shuffle([...trainAll], mulberry32(config.seed ^ 0x9e3779b9)).slice(0, config.maxExamples);
  }
  const tokenizer = WordTokenizer.fit(trainRows.map(e => e.text));
  const { data: trainIds, width } = tokenizer.encodeBatch(trainRows.map(e => e.text), config.maxLen);
  return { tokenizer, width, trainRows, testRows, trainIds };
}

function labelIndices(rows: CorpusExample[], component: Component): Int32Array {
  const values = COMPONENT_VALUES[component];
  const out = new Int32Array(rows.length);
  rows.forEach((row, i) => {
    const idx = values.indexOf(row.labels[component]);
    if (idx < 0) {
      throw new InvalidLabelSetError(
        `${row.cveId}: component ${component} has no value ${row.labels[component]}`,
      );
    }
    out[i] = idx;
  });
  return out;
}

function sliceRows(flat: Int32Array, width: number, rows: number[]): Int32Array {
  const out = new Int32Array(rows.length * width);
  rows.forEach((row, i) => out.set(flat.subarray(row * width, (row + 1) * width), i * width));
  return out;
}

function accuracyOf(
  model: TransformerClassifier,
  ids: Int32Array,
  labels: Int32Array,
  width: number,
  batchSize: number,
): number {
  const n = labels.length;
  let correct = 0;
  for (let start = 0; start < n; start += batchSize) {
    const size = Math.min(batchSize, n - start);
    correct += tf.tidy(() => {
      const batch = tf.tensor2d(ids.subarray(start * width, (start + size) * width), [size, width], 'int32');
      const truth = tf.tensor1d(labels.subarray(start, start + size), 'int32');
      return model.logitsFromIds(batch).argMax(1).equal(truth).sum().dataSync()[0];
    });
  }
  return correct / n;
}

const round6 = (x: number): number => Math.round(x * 1e6) / 1e6;

function predictRows(
  model: TransformerClassifier,
  tokenizer: WordTokenizer,
  rows: CorpusExample[],
  batchSize: number,
): PredictionRow[] {
  if (rows.length === 0) return [];
  const values = model.values;
  const { data, width } = tokenizer.encodeBatch(rows.map(r => r.text), model.maxLen);
  const out: PredictionRow[] = [];
  for (let start = 0; start < rows.length; start += batchSize) {
    const size = Math.min(batchSize, rows.length - start);
    const probs = tf.tidy(() => {
      const batch = tf.tensor2d(data.subarray(start * width, (start + size) * width), [size, width], 'int32');
      return model.logitsFromIds(batch).softmax().dataSync() as Float32Array;
    });
    for (let i = 0; i < size; i++) {
      const row = rows[start + i];
      const scores: Record<string, number> = {};
      let best = 0;
      for (let c = 0; c < values.length; c++) {
        scores[values[c]] = round6(probs[i * values.length + c]);
        if (probs[i * values.length + c] > probs[i * values.length + best]) best = c;
      }
      out.push({
        cve_id: row.cveId,
        component: model.component,
        scores,
        text_ref: row.textRef,
        value: values[best],
      });
    }
  }
  return out;
}

/** Train one component on data already prepared (and shared) by prepareData. */
export function trainPrepared(
  component: Component,
  config: TrainingConfig,
  prepared: PreparedData,
  hooks: TrainHooks = {},
): ComponentRun {
  const values = COMPONENT_VALUES[component];
  const labels = labelIndices(prepared.trainRows, component);
  const model = new TransformerClassifier({
    component,
    shape: PRESETS[config.preset],
    vocabSize: prepared.tokenizer.vocabSize,
    maxLen: prepared.width,
    seed: config.seed,
  });
  let optimizer = tf.train.adam(config.learningRate);
  const n = prepared.trainRows.length;
  const order = [...Array(n).keys()];
  const rng = mulberry32(config.seed);
  const log: EpochLog[] = [];

  for (let epoch = 1; epoch <= config.epochs; epoch++) {
    const frozen = epoch <= config.frozenEpochs;
    // tfjs Adam keeps moment accumulators by position in the gradient list,
    // so the list must never change shape mid-optimizer; unfreezing swaps
    // in a fresh optimizer over the full variable set.
    if (epoch === config.frozenEpochs + 1 && config.frozenEpochs > 0) {
      optimizer.dispose();
      optimizer = tf.train.adam(config.learningRate);
    }
    const varList = frozen ? model.headVariables() : model.allVariables();
    shuffle(order, rng);
    let lossSum = 0;
    for (let start = 0; start < n; start += config.batchSize) {
      const batch = order.slice(start, start + config.batchSize);
      const ids = tf.tensor2d(sliceRows(prepared.trainIds, prepared.width, batch), [batch.length, prepared.width], 'int32');
      const oneHot = tf.tidy(() =>
        tf.oneHot(tf.tensor1d(batch.map(i => labels[i]), 'int32'), values.length).cast('float32'),
      );
      const cost = optimizer.minimize(
        () => tf.losses.softmaxCrossEntropy(oneHot, model.logitsFromIds(ids)) as tf.Scalar,
        true,
        varList,
      );
      lossSum += (cost as tf.Scalar).dataSync()[0] * batch.length;
      tf.dispose([ids, oneHot, cost as tf.Scalar]);
    }
    const entry: EpochLog = {
      epoch,
      loss: lossSum / n,
      trainAccuracy: accuracyOf(model, prepared.trainIds, labels, prepared.width, config.batchSize),
      encoderChecksum: model.encoderChecksum(),
      frozen,
    };
    log.push(entry);
    hooks.onEpochEnd?.(component, entry);
  }
  optimizer.dispose();
  model.trained = true;
  return {
    component,
    model,
    tokenizer: prepared.tokenizer,
    log,
    predictions: predictRows(model, prepared.tokenizer, prepared.testRows, config.batchSize),
  };
}

export function trainComponent(
  component: Component,
  config: TrainingConfig,
  corpus: CorpusExample[],
  manifest: SplitManifest,
  hooks: TrainHooks = {},
): ComponentRun {
  return trainPrepared(component, config, prepareData(corpus, manifest, config), hooks);
}

export interface RunResult {
  runs: Record<Component, ComponentRun>;
  // example-major, component-minor, mirroring the pipeline's own row order
  predictions: PredictionRow[];
}

export function trainAll(
  config: TrainingConfig,
  corpus: CorpusExample[],
  manifest: SplitManifest,
  hooks: TrainHooks = {},
): RunResult {
  const prepared = prepareData(corpus, manifest, config);
  const runs = {} as Record<Component, ComponentRun>;
  for (const component of COMPONENTS) {
    runs[component] = trainPrepared(component, config, prepared, hooks);
  }
  const predictions = prepared.testRows.flatMap((_, i) =>
    COMPONENTS.map(component => runs[component].predictions[i]),
  );
  return { runs, predictions };
}

export function buildTrainingLog(config: TrainingConfig, runs: Record<Component, ComponentRun>): object {
  return {
    header: {
      tool: 'cvsspredict-trainer/0.1.0',
      preset: config.preset,
      shape: { ...PRESETS[config.preset] },
      pretrained: false,
      optimizer: 'adam',
      learningRate: config.learningRate,
      batchSize: config.batchSize,
      maxLen: config.maxLen,
      epochs: config.epochs,
      frozenEpochs: config.frozenEpochs,
      seed: config.seed,
      maxExamples: config.maxExamples,
      note:
        'optimizer, learning rate and sequence cap are local defaults recorded ' +
        'for reproducibility, not tuned or externally specified values',
    },
    components: Object.fromEntries(
      COMPONENTS.filter(c => c in runs).map(c => [c, { epochs: runs[c].log }]),
    ),
  };
}

const MODEL_FORMAT = 'cvsspredict-trainer-model';

interface ModelFile {
  format: string;
  version: number;
  model: ModelArtifact;
  tokenizer: TokenizerJson;
}

export function saveModelFile(path: string, model: TransformerClassifier, tokenizer: WordTokenizer): void {
  const payload: ModelFile = {
    format: MODEL_FORMAT,
    version: 1,
    model: model.toArtifact(),
    tokenizer: tokenizer.toJSON(),
  };
  writeJson(path, payload);
}

export function loadModelFile(path: string): { model: TransformerClassifier; tokenizer: WordTokenizer } {
  const payload = JSON.parse(readFileSync(path, 'utf8')) as ModelFile;
  if (payload.format !== MODEL_FORMAT) {
    throw new ConfigError(`${path} is not a ${MODEL_FORMAT} file`);
  }
  return {
    model: TransformerClassifier.fromArtifact(payload.model),
    tokenizer: WordTokenizer.fromJSON(payload.tokenizer),
  };
}
