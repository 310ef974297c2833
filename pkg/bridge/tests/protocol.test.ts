import { describe, expect, it } from "vitest";

import { handleLine, handleMessage } from "../src/protocol.js";
import { STUB_LAYERS, STUB_VOCAB, stubLogits } from "../src/stub.js";

describe("handshake", () => {
  it("answers hello with the model descriptor", () => {
    const reply = handleMessage({ id: 0, type: "hello" });
    expect(reply).toMatchObject({
      id: 0,
      type: "descriptor",
      vocab_size: STUB_VOCAB,
      layers: STUB_LAYERS,
    });
    expect(reply.layout).toEqual([
      ["video", 0, 4],
      ["audio", 4, 8],
      ["language", 8, 12],
    ]);
  });
});

describe("forward", () => {
  const prefix = Array.from({ length: 12 }, (_, i) => i);

  it("returns logits and attention for an unmasked forward", () => {
    const reply = handleMessage({ id: 3, type: "forward", prefix });
    expect(reply.id).toBe(3);
    expect(reply.type).toBe("result");
    expect(reply.logits).toEqual(stubLogits(12, 0, 0));
    expect(reply.attention).toHaveLength(STUB_LAYERS);
  });

  it("applies the mask code", () => {
    const masked = handleMessage({
      id: 4,
      type: "forward",
      prefix,
      mask: { key_indices: [0, 1], layer_policy: "all_but_last" },
    });
    expect(masked.logits).toEqual(stubLogits(12, 1, 0));
  });

  it("treats an absent and an empty mask identically", () => {
    const bare = handleMessage({ id: 5, type: "forward", prefix });
    const empty = handleMessage({
      id: 5,
      type: "forward",
      prefix,
      mask: { key_indices: [], layer_policy: "all_but_last" },
    });
    expect(empty.logits).toEqual(bare.logits);
  });

  it("rejects an empty prefix", () => {
    const reply = handleMessage({ id: 6, type: "forward", prefix: [] });
    expect(reply).toMatchObject({ id: 6, type: "error" });
  });

  it("rejects mask indices outside the prefix", () => {
    const reply = handleMessage({
      id: 7,
      type: "forward",
      prefix: [1, 2],
      mask: { key_indices: [5], layer_policy: "all" },
    });
    expect(reply.type).toBe("error");
    expect(reply.message).toMatch(/outside prefix/);
  });

  it("rejects an unknown layer policy", () => {
    const reply = handleMessage({
      id: 8,
      type: "forward",
      prefix,
      mask: { key_indices: [0], layer_policy: "every_other" },
    });
    expect(reply.type).toBe("error");
  });
});

describe("malformed input", () => {
  it("answers unknown request types with an error carrying the id", () => {
    const reply = handleMessage({ id: 9, type: "banana" });
    expect(reply).toMatchObject({ id: 9, type: "error" });
  });

  it("answers a missing id with id null", () => {
    const reply = handleMessage({ type: "hello" });
    expect(reply).toMatchObject({ id: null, type: "error" });
  });

  it("answers non-object requests with an error", () => {
    expect(handleMessage([1, 2, 3]).type).toBe("error");
    expect(handleMessage("hello").type).toBe("error");
  });

  it("answers unparseable lines with an error instead of crashing", () => {
    const reply = handleLine("{not json");
    expect(reply).toMatchObject({ id: null, type: "error" });
  });

  it("ignores blank lines", () => {
    expect(handleLine("   ")).toBeNull();
  });

  it("keeps serving after an error", () => {
    expect(handleLine("garbage")?.type).toBe("error");
    expect(handleLine('{"id": 1, "type": "hello"}')?.type).toBe("descriptor");
  });
});
