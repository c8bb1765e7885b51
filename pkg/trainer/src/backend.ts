/**
 * Backend selection. The wasm backend runs matmuls roughly an order of
 * magnitude faster than the plain JS cpu backend on Node, so prefer it and
 * fall back quietly when it cannot initialize.
 */

import * as tf from '@tensorflow/tfjs';
import '@tensorflow/tfjs-backend-wasm';

let selected: Promise<string> | null = null;

export function selectBackend(): Promise<string> {
  selected ??= (async () => {
    tf.enableProdMode();
    try {
      if (!(await tf.setBackend('wasm'))) await tf.setBackend('cpu');
    } catch {
      await tf.setBackend('cpu');
    }
    await tf.ready();
    return tf.getBackend();
  })();
  return selected;
}
