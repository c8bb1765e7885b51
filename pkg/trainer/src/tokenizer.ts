/**
 * Word-level tokenizer. The pipeline stores corpus texts raw, so
 * normalization (lowercasing, splitting) happens here, on both the training
 * and the attribution path, keeping the two views of a text aligned.
 */

export const PAD_ID = 0;
export const UNK_ID = 1;
export const CLS_ID = 2;
const SPECIALS = 3;

export function tokenize(text: string): string[] {
  return text.toLowerCase().split(/[^a-z0-9]+/).filter(t => t.length > 0);
}

export interface TokenizerJson {
  tokens: string[];
}

export class WordTokenizer {
  // token -> id, ids starting after the specials
  private readonly ids: Map<string, number>;

  constructor(tokens: string[]) {
    this.ids = new Map(tokens.map((t, i) => [t, SPECIALS + i]));
  }

  /**
   * Build a vocabulary from training texts: tokens kept in frequency order
   * (ties broken lexicographically) so ids are a pure function of the texts.
   */
  static fit(texts: string[], minCount = 1): WordTokenizer {
    const counts = new Map<string, number>();
    for (const text of texts) {
      for (const token of tokenize(text)) {
        counts.set(token, (counts.get(token) ?? 0) + 1);
      }
    }
    const kept = [...counts.entries()]
      .filter(([, n]) => n >= minCount)
      .sort((a, b) => b[1] - a[1] || (a[0] < b[0] ? -1 : 1))
      .map(([t]) => t);
    return new WordTokenizer(kept);
  }

  get vocabSize(): number {
    return SPECIALS + this.ids.size;
  }

  idOf(token: string): number {
    return this.ids.get(token) ?? UNK_ID;
  }

  /** [CLS, token ids...] truncated to maxLen. */
  encode(text: string, maxLen: number): number[] {
    const out = [CLS_ID];
    for (const token of tokenize(text)) {
      if (out.length >= maxLen) break;
      out.push(this.idOf(token));
    }
    return out;
  }

  /**
   * Encode a batch into one padded Int32Array of shape [texts.length, width],
   * width being the longest encoding capped at maxLen.
   */
  encodeBatch(texts: string[], maxLen: number): { data: Int32Array; width: number } {
    const encoded = texts.map(t => this.encode(t, maxLen));
    const width = Math.max(1, ...encoded.map(e => e.length));
    const data = new Int32Array(texts.length * width).fill(PAD_ID);
    encoded.forEach((ids, row) => data.set(ids, row * width));
    return { data, width };
  }

  toJSON(): TokenizerJson {
    const tokens = new Array<string>(this.ids.size);
    for (const [token, id] of this.ids) tokens[id - SPECIALS] = token;
    return { tokens };
  }

  static fromJSON(json: TokenizerJson): WordTokenizer {
    return new WordTokenizer(json.tokens);
  }
}
