/**
 * Transformer encoder with a per-component classification head, written
 * against raw tfjs variables so the training loop can freeze the encoder
 * exactly (frozen variables are simply left out of the gradient list) and
 * checksum its parameters byte for byte.
 */

import * as tf from '@tensorflow/tfjs';
import { createHash } from 'node:crypto';
import { Component, COMPONENT_VALUES } from './schema.js';
import { mulberry32, normalArray, Rng } from './rng.js';
import { PAD_ID } from './tokenizer.js';

export type PresetName = 'distilbert' | 'bert-small' | 'bert-medium';

export interface EncoderShape {
  layers: number;
  dim: number;
  heads: number;
  ff: number;
}

// Desk-scale encoder shapes trained from scratch. The names keep the
// relative depth ordering of their full-size namesakes; no pretrained
// weights are bundled or fetched, which the training log states up front.
export const PRESETS: Record<PresetName, EncoderShape> = {
  'bert-small': { layers: 2, dim: 32, heads: 2, ff: 64 },
  distilbert: { layers: 3, dim: 32, heads: 2, ff: 64 },
  'bert-medium': { layers: 4, dim: 48, heads: 4, ff: 96 },
};

const INIT_SCALE = 0.02;
const LN_EPSILON = 1e-5;

export interface ModelOptions {
  component: Component;
  shape: EncoderShape;
  vocabSize: number;
  maxLen: number;
  seed: number;
}

interface WeightRecord {
  shape: number[];
  data: string; // base64 little-endian float32
}

export interface ModelArtifact {
  component: Component;
  values: string[];
  shape: EncoderShape;
  vocabSize: number;
  maxLen: number;
  seed: number;
  trained: boolean;
  weights: Record<string, WeightRecord>;
}

function layerNorm(x: tf.Tensor3D, gamma: tf.Tensor, beta: tf.Tensor): tf.Tensor3D {
  const { mean, variance } = tf.moments(x, [2], true);
  return x.sub(mean).div(variance.add(LN_EPSILON).sqrt()).mul(gamma).add(beta) as tf.Tensor3D;
}

// tfjs cannot backprop a broadcast [B,T,D]x[D,F] matMul into the rank-2
// weight, so every trainable projection flattens to rank 2 first.
function project(x: tf.Tensor3D, w: tf.Tensor2D, b: tf.Tensor): tf.Tensor3D {
  const [batch, width, inDim] = x.shape;
  return x
    .reshape([batch * width, inDim])
    .matMul(w)
    .add(b)
    .reshape([batch, width, w.shape[1]]) as tf.Tensor3D;
}

export class TransformerClassifier {
  readonly component: Component;
  readonly values: readonly string[];
  readonly shape: EncoderShape;
  readonly vocabSize: number;
  readonly maxLen: number;
  readonly seed: number;
  trained = false;

  private readonly vars = new Map<string, tf.Variable>();

  constructor(opts: ModelOptions) {
    const { shape } = opts;
    if (shape.dim % shape.heads !== 0) {
      throw new Error(`model dim ${shape.dim} not divisible by ${shape.heads} heads`);
    }
    this.component = opts.component;
    this.values = COMPONENT_VALUES[opts.component];
    this.shape = shape;
    this.vocabSize = opts.vocabSize;
    this.maxLen = opts.maxLen;
    this.seed = opts.seed;

    const rng = mulberry32(opts.seed);
    this.addWeight('emb/token', [opts.vocabSize, shape.dim], rng);
    this.addWeight('emb/pos', [opts.maxLen, shape.dim], rng);
    for (let i = 0; i < shape.layers; i++) {
      for (const name of ['wq', 'wk', 'wv', 'wo']) {
        this.addWeight(`block${i}/att/${name}`, [shape.dim, shape.dim], rng);
        this.addBias(`block${i}/att/${name.replace('w', 'b')}`, [shape.dim]);
      }
      this.addOnes(`block${i}/ln1/gamma`, [shape.dim]);
      this.addBias(`block${i}/ln1/beta`, [shape.dim]);
      this.addWeight(`block${i}/ffn/w1`, [shape.dim, shape.ff], rng);
      this.addBias(`block${i}/ffn/b1`, [shape.ff]);
      this.addWeight(`block${i}/ffn/w2`, [shape.ff, shape.dim], rng);
      this.addBias(`block${i}/ffn/b2`, [shape.dim]);
      this.addOnes(`block${i}/ln2/gamma`, [shape.dim]);
      this.addBias(`block${i}/ln2/beta`, [shape.dim]);
    }
    this.addWeight('head/w', [shape.dim, this.values.length], rng);
    this.addBias('head/b', [this.values.length]);
  }

  // Logical names live in this.vars only; the engine-side names are left
  // auto-assigned so several models can coexist in one process.
  private addWeight(name: string, shape: number[], rng: Rng): void {
    const n = shape.reduce((a, b) => a * b, 1);
    this.vars.set(name, tf.variable(tf.tensor(normalArray(n, INIT_SCALE, rng), shape), true));
  }

  private addBias(name: string, shape: number[]): void {
    this.vars.set(name, tf.variable(tf.zeros(shape), true));
  }

  private addOnes(name: string, shape: number[]): void {
    this.vars.set(name, tf.variable(tf.ones(shape), true));
  }

  private v(name: string): tf.Variable {
    const found = this.vars.get(name);
    if (!found) throw new Error(`no such weight: ${name}`);
    return found;
  }

  private sortedNames(): string[] {
    return [...this.vars.keys()].sort();
  }

  encoderVariables(): tf.Variable[] {
    return this.sortedNames().filter(n => !n.startsWith('head/')).map(n => this.v(n));
  }

  headVariables(): tf.Variable[] {
    return this.sortedNames().filter(n => n.startsWith('head/')).map(n => this.v(n));
  }

  allVariables(): tf.Variable[] {
    return this.sortedNames().map(n => this.v(n));
  }

  /** sha1 over the encoder weights in name order; the freeze contract's probe. */
  encoderChecksum(): string {
    const hash = createHash('sha1');
    for (const name of this.sortedNames()) {
      if (name.startsWith('head/')) continue;
      const data = this.v(name).dataSync() as Float32Array;
      hash.update(Buffer.from(data.buffer, data.byteOffset, data.byteLength));
    }
    return hash.digest('hex');
  }

  paddingMask(ids: tf.Tensor2D): tf.Tensor2D {
    return ids.notEqual(tf.scalar(PAD_ID, 'int32')).cast('float32') as tf.Tensor2D;
  }

  // Lookup as oneHot x matrix rather than gather: gather's gradient kernel
  // is missing on the wasm backend, and at desk-scale vocabularies the
  // matmul costs the same as any other projection.
  tokenEmbeddings(ids: tf.Tensor2D): tf.Tensor3D {
    const [batch, width] = ids.shape;
    return tf
      .oneHot(ids.reshape([-1]), this.vocabSize)
      .cast('float32')
      .matMul(this.v('emb/token') as tf.Tensor2D)
      .reshape([batch, width, this.shape.dim]) as tf.Tensor3D;
  }

  logitsFromIds(ids: tf.Tensor2D): tf.Tensor2D {
    return tf.tidy(() => this.logitsFromEmbeddings(this.tokenEmbeddings(ids), this.paddingMask(ids)));
  }

  /**
   * Forward pass from token embeddings. Positions are added inside, so the
   * attribution path can interpolate token embeddings alone and still get
   * the exact training-time function.
   */
  logitsFromEmbeddings(emb: tf.Tensor3D, mask: tf.Tensor2D): tf.Tensor2D {
    const width = emb.shape[1];
    const pos = (this.v('emb/pos') as tf.Tensor2D).slice([0, 0], [width, -1]).expandDims(0);
    let x = emb.add(pos) as tf.Tensor3D;
    for (let i = 0; i < this.shape.layers; i++) {
      x = this.encoderBlock(i, x, mask);
    }
    const cls = x.slice([0, 0, 0], [-1, 1, -1]).squeeze([1]) as tf.Tensor2D;
    return cls.matMul(this.v('head/w') as tf.Tensor2D).add(this.v('head/b')) as tf.Tensor2D;
  }

  private encoderBlock(i: number, x: tf.Tensor3D, mask: tf.Tensor2D): tf.Tensor3D {
    const attended = layerNorm(
      x.add(this.attention(i, x, mask)) as tf.Tensor3D,
      this.v(`block${i}/ln1/gamma`),
      this.v(`block${i}/ln1/beta`),
    );
    const ff = project(
      project(
        attended,
        this.v(`block${i}/ffn/w1`) as tf.Tensor2D,
        this.v(`block${i}/ffn/b1`),
      ).relu() as tf.Tensor3D,
      this.v(`block${i}/ffn/w2`) as tf.Tensor2D,
      this.v(`block${i}/ffn/b2`),
    );
    return layerNorm(
      attended.add(ff) as tf.Tensor3D,
      this.v(`block${i}/ln2/gamma`),
      this.v(`block${i}/ln2/beta`),
    );
  }

  private attention(i: number, x: tf.Tensor3D, mask: tf.Tensor2D): tf.Tensor3D {
    const [batch, width] = [x.shape[0], x.shape[1]];
    const { heads, dim } = this.shape;
    const headDim = dim / heads;
    const split = (t: tf.Tensor) =>
      t.reshape([batch, width, heads, headDim]).transpose([0, 2, 1, 3]);
    const proj = (name: string) =>
      split(project(x, this.v(`block${i}/att/w${name}`) as tf.Tensor2D, this.v(`block${i}/att/b${name}`)));
    const q = proj('q');
    const k = proj('k');
    const val = proj('v');
    // padded key positions get a large negative score before softmax
    const keyMask = mask.expandDims(1).expandDims(1);
    const scores = q
      .matMul(k, false, true)
      .div(Math.sqrt(headDim))
      .add(keyMask.sub(1).mul(1e9));
    const context = scores
      .softmax()
      .matMul(val)
      .transpose([0, 2, 1, 3])
      .reshape([batch, width, dim]) as tf.Tensor3D;
    return project(context, this.v(`block${i}/att/wo`) as tf.Tensor2D, this.v(`block${i}/att/bo`));
  }

  dispose(): void {
    for (const variable of this.vars.values()) variable.dispose();
    this.vars.clear();
  }

  toArtifact(): ModelArtifact {
    const weights: Record<string, WeightRecord> = {};
    for (const name of this.sortedNames()) {
      const variable = this.v(name);
      const data = variable.dataSync() as Float32Array;
      weights[name] = {
        shape: variable.shape.slice(),
        data: Buffer.from(data.buffer, data.byteOffset, data.byteLength).toString('base64'),
      };
    }
    return {
      component: this.component,
      values: this.values.slice(),
      shape: { ...this.shape },
      vocabSize: this.vocabSize,
      maxLen: this.maxLen,
      seed: this.seed,
      trained: this.trained,
      weights,
    };
  }

  static fromArtifact(artifact: ModelArtifact): TransformerClassifier {
    const model = new TransformerClassifier({
      component: artifact.component,
      shape: artifact.shape,
      vocabSize: artifact.vocabSize,
      maxLen: artifact.maxLen,
      seed: artifact.seed,
    });
    for (const [name, record] of Object.entries(artifact.weights)) {
      const raw = Buffer.from(record.data, 'base64');
      // copy out of the shared buffer pool so the float view is aligned
      const bytes = new Uint8Array(raw.length);
      bytes.set(raw);
      const values = new Float32Array(bytes.buffer);
      model.v(name).assign(tf.tensor(values, record.shape));
    }
    model.trained = artifact.trained;
    return model;
  }
}
