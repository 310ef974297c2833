/**
 * Deterministic stub model shared with the engine's in-process reference.
 *
 * Both implementations must produce bit-identical doubles, so every value
 * is integer arithmetic followed by a single IEEE-754 division:
 *
 *   logits[i]       = (((n*31 + m*17 + c*29 + i*13) % 97) - 48) / 8
 *   attention[j][k] = w / W,  w = ((n*7 + j*11 + k*3) % 23) + 1,
 *                     W = sum of w over k in [0, n)
 *
 * with n the prefix length, m the modality mask code (video 1, audio 2,
 * language 4, OR-ed), and c the layer-policy code (all_but_last 0,
 * all 1, explicit list 2).
 */

export const STUB_VOCAB = 16;
export const STUB_LAYERS = 2;

export type SpanJson = [string, number, number];

export const STUB_LAYOUT: SpanJson[] = [
  ["video", 0, 4],
  ["audio", 4, 8],
  ["language", 8, 12],
];

export const STUB_TOTAL_TOKENS = 12;

const MODALITY_BIT: Record<string, number> = { video: 1, audio: 2, language: 4 };

export type LayerPolicy = "all" | "all_but_last" | number[];

export interface MaskSpec {
  key_indices: number[];
  layer_policy: LayerPolicy;
}

export function modalityOf(index: number): string | null {
  for (const [name, start, end] of STUB_LAYOUT) {
    if (index >= start && index < end) return name;
  }
  return null;
}

/** Mask code (modality bits) and policy code for the logit formula. */
export function maskCode(mask: MaskSpec | null): [number, number] {
  if (mask === null || mask.key_indices.length === 0) return [0, 0];
  let m = 0;
  for (const index of mask.key_indices) {
    const name = modalityOf(index);
    if (name === null) throw new Error(`mask index ${index} outside the stub layout`);
    m |= MODALITY_BIT[name];
  }
  let c: number;
  if (mask.layer_policy === "all_but_last") c = 0;
  else if (mask.layer_policy === "all") c = 1;
  else if (Array.isArray(mask.layer_policy)) c = 2;
  else throw new Error(`unknown layer policy ${JSON.stringify(mask.layer_policy)}`);
  return [m, c];
}

export function stubLogits(prefixLen: number, m: number, c: number): number[] {
  const out: number[] = [];
  for (let i = 0; i < STUB_VOCAB; i++) {
    out.push(((prefixLen * 31 + m * 17 + c * 29 + i * 13) % 97 - 48) / 8);
  }
  return out;
}

export function stubAttention(prefixLen: number): number[][] {
  const rows: number[][] = [];
  for (let j = 0; j < STUB_LAYERS; j++) {
    const weights: number[] = [];
    for (let k = 0; k < prefixLen; k++) {
      weights.push(((prefixLen * 7 + j * 11 + k * 3) % 23) + 1);
    }
    const total = weights.reduce((a, b) => a + b, 0);
    rows.push(weights.map((w) => w / total));
  }
  return rows;
}
