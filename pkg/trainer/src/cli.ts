#!/usr/bin/env node
/**
 * Command-line entry point. Two commands: "train" fine-tunes per-component
 * models from a corpus plus split manifest and writes model files, the
 * prediction JSONL the pipeline's evaluator consumes, and a training log;
 * "attribute" explains one text under a trained model.
 *
 * Exit codes follow the pipeline's convention: 2 for unusable invocations
 * (bad flags, missing input files), 1 for failures inside a run.
 */

import { existsSync, readFileSync } from 'node:fs';
import { join } from 'node:path';
import { pathToFileURL } from 'node:url';
import { parseArgs } from 'node:util';
import { attributeTokens, UntrainedModelError } from './attribution.js';
import { selectBackend } from './backend.js';
import { PRESETS, PresetName } from './model.js';
import {
  Component,
  COMPONENTS,
  CorpusError,
  InvalidLabelSetError,
  readCorpus,
  readManifest,
  stableStringify,
  writeJson,
  writeJsonl,
} from './schema.js';
import {
  buildTrainingLog,
  ComponentRun,
  ConfigError,
  EpochLog,
  loadModelFile,
  prepareData,
  resolveConfig,
  saveModelFile,
  trainPrepared,
  TrainingConfig,
} from './train.js';

class UsageError extends Error {}

class MissingArtifactError extends Error {}

// Diagnostics go straight to the stream, not through console, so they reach
// stderr no matter how the host process has patched console.
const note = (line: string): void => {
  process.stderr.write(line + '\n');
};

const USAGE = `usage: cvsspredict-trainer <command> [options]

commands:
  train       fine-tune per-component models and write prediction rows
  attribute   per-token attribution for one text under a trained model

train:
  --corpus PATH          corpus JSONL from the pipeline (required)
  --manifest PATH        split manifest JSON (required)
  --out-dir PATH         where models/, predictions.jsonl and training-log.json go (required)
  --component NAME       train only this component; repeatable; default all eight
  --preset NAME          ${Object.keys(PRESETS).join(' | ')}
  --epochs N             total epochs
  --frozen-epochs N      epochs with the encoder frozen at the start
  --batch-size N
  --learning-rate X
  --max-len N            token cap per text, counting the leading CLS slot
  --seed N
  --max-examples N|none  train-set cap per component

attribute:
  --model PATH           model file written by train (required)
  --text STR             text to explain (or --text-file)
  --text-file PATH
  --target VALUE         class value to focus on; default: the predicted one
  --steps N              integration intervals (default 64)
`;

function requireString(value: string | undefined, flag: string): string {
  if (value === undefined) throw new UsageError(`${flag} is required`);
  return value;
}

function requireFile(path: string, what: string): string {
  if (!existsSync(path)) throw new MissingArtifactError(`${what} not found: ${path}`);
  return path;
}

function parseNumber(value: string | undefined, flag: string): number | undefined {
  if (value === undefined) return undefined;
  const parsed = Number(value);
  if (!Number.isFinite(parsed)) throw new UsageError(`${flag} needs a number, got ${value}`);
  return parsed;
}

async function runTrain(args: string[]): Promise<number> {
  const { values } = parseArgs({
    args,
    options: {
      corpus: { type: 'string' },
      manifest: { type: 'string' },
      'out-dir': { type: 'string' },
      component: { type: 'string', multiple: true },
      preset: { type: 'string' },
      epochs: { type: 'string' },
      'frozen-epochs': { type: 'string' },
      'batch-size': { type: 'string' },
      'learning-rate': { type: 'string' },
      'max-len': { type: 'string' },
      seed: { type: 'string' },
      'max-examples': { type: 'string' },
    },
  });
  const corpusPath = requireFile(requireString(values.corpus, '--corpus'), 'corpus');
  const manifestPath = requireFile(requireString(values.manifest, '--manifest'), 'manifest');
  const outDir = requireString(values['out-dir'], '--out-dir');

  const overrides: Partial<TrainingConfig> = {};
  if (values.preset !== undefined) overrides.preset = values.preset as PresetName;
  const numeric: Array<[keyof TrainingConfig, string | undefined, string]> = [
    ['epochs', values.epochs, '--epochs'],
    ['frozenEpochs', values['frozen-epochs'], '--frozen-epochs'],
    ['batchSize', values['batch-size'], '--batch-size'],
    ['learningRate', values['learning-rate'], '--learning-rate'],
    ['maxLen', values['max-len'], '--max-len'],
    ['seed', values.seed, '--seed'],
  ];
  for (const [key, raw, flag] of numeric) {
    const parsed = parseNumber(raw, flag);
    if (parsed !== undefined) (overrides as Record<string, number>)[key] = parsed;
  }
  if (values['max-examples'] !== undefined) {
    overrides.maxExamples =
      values['max-examples'] === 'none' ? null : parseNumber(values['max-examples'], '--max-examples') ?? null;
  }
  const config = resolveConfig(overrides);

  const requested = (values.component ?? [...COMPONENTS]) as string[];
  const components: Component[] = [];
  for (const name of requested) {
    if (!COMPONENTS.includes(name as Component)) {
      throw new UsageError(`unknown component ${name}; use one of ${COMPONENTS.join(', ')}`);
    }
    if (!components.includes(name as Component)) components.push(name as Component);
  }

  const corpus = readCorpus(corpusPath);
  const manifest = readManifest(manifestPath);
  const backend = await selectBackend();
  const prepared = prepareData(corpus, manifest, config);
  note(
    `training ${components.length} component(s) on ${prepared.trainRows.length} examples ` +
      `(${prepared.testRows.length} test), preset ${config.preset}, vocab ` +
      `${prepared.tokenizer.vocabSize}, backend ${backend}`,
  );

  const runs = {} as Record<Component, ComponentRun>;
  const selected = COMPONENTS.filter(c => components.includes(c));
  for (const component of selected) {
    runs[component] = trainPrepared(component, config, prepared, {
      onEpochEnd: (c: Component, entry: EpochLog) => {
        note(
          `${c} epoch ${entry.epoch}/${config.epochs} loss ${entry.loss.toFixed(4)} ` +
            `acc ${entry.trainAccuracy.toFixed(4)}${entry.frozen ? ' (encoder frozen)' : ''}`,
        );
      },
    });
    saveModelFile(join(outDir, 'models', `${component}.json`), runs[component].model, prepared.tokenizer);
  }

  const predictions = prepared.testRows.flatMap((_, i) =>
    selected.map(component => runs[component].predictions[i]),
  );
  const written = writeJsonl(join(outDir, 'predictions.jsonl'), predictions);
  writeJson(join(outDir, 'training-log.json'), buildTrainingLog(config, runs));
  note(`wrote ${written} prediction rows and ${selected.length} model file(s) to ${outDir}`);
  for (const component of selected) runs[component].model.dispose();
  return 0;
}

async function runAttribute(args: string[]): Promise<number> {
  const { values } = parseArgs({
    args,
    options: {
      model: { type: 'string' },
      text: { type: 'string' },
      'text-file': { type: 'string' },
      target: { type: 'string' },
      steps: { type: 'string' },
    },
  });
  const modelPath = requireFile(requireString(values.model, '--model'), 'model file');
  if ((values.text === undefined) === (values['text-file'] === undefined)) {
    throw new UsageError('provide exactly one of --text or --text-file');
  }
  const text =
    values.text ?? readFileSync(requireFile(values['text-file'] as string, 'text file'), 'utf8');
  const steps = parseNumber(values.steps, '--steps');

  await selectBackend();
  const { model, tokenizer } = loadModelFile(modelPath);
  if (values.target !== undefined && !model.values.includes(values.target)) {
    throw new UsageError(
      `component ${model.component} has no value ${values.target}; use one of ${model.values.join(', ')}`,
    );
  }
  const result = attributeTokens(model, tokenizer, text, steps === undefined ? {} : { steps });
  let target = values.target ?? null;
  if (target === null && result.tokens.length > 0) {
    // default focus: the class the model assigns the highest total evidence
    let best = model.values[0];
    for (const value of model.values) {
      if (result.scores[value].reduce((a, b) => a + b, 0) > result.scores[best].reduce((a, b) => a + b, 0)) {
        best = value;
      }
    }
    target = best;
  }
  process.stdout.write(
    stableStringify({ component: model.component, target, ...result }, 2) + '\n',
  );
  model.dispose();
  return 0;
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    if (command === 'train') return await runTrain(rest);
    if (command === 'attribute') return await runAttribute(rest);
    process.stderr.write(USAGE);
    return command === undefined || command === '--help' || command === '-h' ? 0 : 2;
  } catch (err) {
    if (
      err instanceof UsageError ||
      err instanceof MissingArtifactError ||
      err instanceof ConfigError ||
      (err as { code?: string }).code === 'ERR_PARSE_ARGS_UNKNOWN_OPTION'
    ) {
      note(`error: ${(err as Error).message}`);
      return 2;
    }
    if (
      err instanceof CorpusError ||
      err instanceof InvalidLabelSetError ||
      err instanceof UntrainedModelError
    ) {
      note(`error: ${(err as Error).message}`);
      return 1;
    }
    throw err;
  }
}

if (process.argv[1] !== undefined && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exitCode = await main(process.argv.slice(2));
}
