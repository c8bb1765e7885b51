/**
 * Integrated-gradients token attribution. The path runs from a baseline
 * where every word position holds the padding embedding (CLS kept as is) to
 * the real token embeddings, so the per-token sums can be checked against
 * the logit difference between input and baseline: the completeness gap is
 * reported per class rather than hidden.
 */

import * as tf from '@tensorflow/tfjs';
import { TransformerClassifier } from './model.js';
import { CLS_ID, PAD_ID, tokenize, WordTokenizer } from './tokenizer.js';

export class UntrainedModelError extends Error {}

export interface AttributionOptions {
  // trapezoid intervals along the straight-line path
  steps?: number;
}

export interface AttributionResult {
  tokens: string[];
  // per class value, one signed contribution per token
  scores: Record<string, number[]>;
  // per class: sum(scores) minus (logit(input) - logit(baseline))
  delta: Record<string, number>;
}

export function attributeTokens(
  model: TransformerClassifier,
  tokenizer: WordTokenizer,
  text: string,
  options: AttributionOptions = {},
): AttributionResult {
  if (!model.trained) {
    throw new UntrainedModelError('train or load a model before asking for attributions');
  }
  const steps = Math.max(1, Math.floor(options.steps ?? 64));
  const tokens = tokenize(text).slice(0, model.maxLen - 1);
  const scores: Record<string, number[]> = {};
  const delta: Record<string, number> = {};
  if (tokens.length === 0) {
    for (const value of model.values) {
      scores[value] = [];
      delta[value] = 0;
    }
    return { tokens: [], scores, delta };
  }

  const ids = [CLS_ID, ...tokens.map(t => tokenizer.idOf(t))];
  const width = ids.length;
  tf.tidy(() => {
    const input = model.tokenEmbeddings(tf.tensor2d(ids, [1, width], 'int32'));
    const baseline = model.tokenEmbeddings(
      tf.tensor2d([CLS_ID, ...Array(width - 1).fill(PAD_ID)], [1, width], 'int32'),
    );
    // The input sequence is unpadded, so an all-ones mask along the whole
    // path makes the endpoint exactly the training-time function.
    const pathMask = tf.ones([steps + 1, width]) as tf.Tensor2D;
    const singleMask = tf.ones([1, width]) as tf.Tensor2D;
    const diff = input.sub(baseline);
    const alphas = tf.linspace(0, 1, steps + 1).reshape([steps + 1, 1, 1]);
    const points = baseline.add(diff.mul(alphas)) as tf.Tensor3D;
    // trapezoid weights: half at the endpoints
    const weightValues = new Float32Array(steps + 1).fill(1 / steps);
    weightValues[0] = 0.5 / steps;
    weightValues[steps] = 0.5 / steps;
    const weights = tf.tensor(weightValues).reshape([steps + 1, 1, 1]);

    const inputLogits = model.logitsFromEmbeddings(input, singleMask).dataSync();
    const baselineLogits = model.logitsFromEmbeddings(baseline, singleMask).dataSync();

    model.values.forEach((value, classIndex) => {
      const gradFn = tf.grad((e: tf.Tensor) =>
        model.logitsFromEmbeddings(e as tf.Tensor3D, pathMask).slice([0, classIndex], [-1, 1]).sum(),
      );
      const avgGrad = gradFn(points).mul(weights).sum(0);
      const perToken = avgGrad.mul(diff.squeeze([0])).sum(1).dataSync() as Float32Array;
      // position 0 is CLS; its path never moves, so its term is zero
      scores[value] = Array.from(perToken.subarray(1));
      let total = 0;
      for (const s of perToken) total += s;
      delta[value] = total - (inputLogits[classIndex] - baselineLogits[classIndex]);
    });
  });
  return { tokens, scores, delta };
}
