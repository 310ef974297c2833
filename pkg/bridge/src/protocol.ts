/**
 * Message handling for the newline-delimited JSON forward-evaluation
 * protocol, as a pure function so it is testable without a process.
 *
 * Requests:
 *   {"id": n, "type": "hello"}
 *   {"id": n, "type": "forward", "prefix": [...], "mask"?: {"key_indices": [...], "layer_policy": ...}}
 * Replies:
 *   {"id": n, "type": "descriptor", "vocab_size", "layers", "layout", "name"}
 *   {"id": n, "type": "result", "logits": [...], "attention": [[...], ...]}
 *   {"id": n, "type": "error", "message": "..."}
 *
 * Malformed input never kills the server: it answers an error reply
 * (id null when the request id is unusable) and keeps reading.
 */

import {
  MaskSpec,
  STUB_LAYERS,
  STUB_LAYOUT,
  STUB_VOCAB,
  maskCode,
  stubAttention,
  stubLogits,
} from "./stub.js";

export type Reply = Record<string, unknown>;

function errorReply(id: number | null, message: string): Reply {
  return { id, type: "error", message };
}

function isIntArray(value: unknown): value is number[] {
  return Array.isArray(value) && value.every((t) => Number.isInteger(t));
}

function parseMask(value: unknown, prefixLen: number): MaskSpec | null {
  if (value === undefined || value === null) return null;
  if (typeof value !== "object" || Array.isArray(value)) {
    throw new Error("mask must be an object");
  }
  const raw = value as Record<string, unknown>;
  if (!isIntArray(raw.key_indices)) {
    throw new Error("mask.key_indices must be an array of integers");
  }
  for (const index of raw.key_indices) {
    if (index < 0 || index >= prefixLen) {
      throw new Error(`mask index ${index} outside prefix [0, ${prefixLen})`);
    }
  }
  const policy = raw.layer_policy ?? "all_but_last";
  if (policy !== "all" && policy !== "all_but_last" && !isIntArray(policy)) {
    throw new Error(`unknown layer policy ${JSON.stringify(policy)}`);
  }
  if (isIntArray(policy)) {
    for (const j of policy) {
      if (j < 0 || j >= STUB_LAYERS) {
        throw new Error(`layer index ${j} out of range (J=${STUB_LAYERS})`);
      }
    }
  }
  return { key_indices: raw.key_indices, layer_policy: policy as MaskSpec["layer_policy"] };
}

/** Handle one parsed request object; always returns exactly one reply. */
export function handleMessage(message: unknown): Reply {
  if (typeof message !== "object" || message === null || Array.isArray(message)) {
    return errorReply(null, "request must be a JSON object");
  }
  const raw = message as Record<string, unknown>;
  const id = Number.isInteger(raw.id) ? (raw.id as number) : null;
  if (id === null) {
    return errorReply(null, "request id must be an integer");
  }
  if (raw.type === "hello") {
    return {
      id,
      type: "descriptor",
      vocab_size: STUB_VOCAB,
      layers: STUB_LAYERS,
      layout: STUB_LAYOUT,
      name: "bridge-stub",
    };
  }
  if (raw.type === "forward") {
    if (!isIntArray(raw.prefix) || raw.prefix.length === 0) {
      return errorReply(id, "prefix must be a non-empty array of integers");
    }
    let mask: MaskSpec | null;
    try {
      mask = parseMask(raw.mask, raw.prefix.length);
    } catch (err) {
      return errorReply(id, (err as Error).message);
    }
    const [m, c] = maskCode(mask);
    return {
      id,
      type: "result",
      logits: stubLogits(raw.prefix.length, m, c),
      attention: stubAttention(raw.prefix.length),
    };
  }
  return errorReply(id, `unknown request type ${JSON.stringify(raw.type)}`);
}

/** Parse one raw line and handle it; parse failures get an error reply. */
export function handleLine(line: string): Reply | null {
  const trimmed = line.trim();
  if (trimmed === "") return null;
  let parsed: unknown;
  try {
    parsed = JSON.parse(trimmed);
  } catch {
    return errorReply(null, "malformed JSON line");
  }
  return handleMessage(parsed);
}
