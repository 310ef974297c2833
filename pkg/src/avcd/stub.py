"""Closed-form stub provider used for wire-protocol conformance testing.

The bridge process ships the same table (reimplemented there); both sides
must produce bit-identical doubles, so everything below is integer
arithmetic followed by a single IEEE-754 division.

Definition (V=16, J=2, layout video [0,4) audio [4,8) language [8,12)):

  mask code   m = sum over masked modalities of {video: 1, audio: 2, language: 4}
  policy code c = 0 for "all_but_last", 1 for "all", 2 for an explicit list
  with n = len(prefix):
    logits[i]          = (((n*31 + m*17 + c*29 + i*13) % 97) - 48) / 8
    attention[j][k]    = w / W,  w = ((n*7 + j*11 + k*3) % 23) + 1,
                         W = sum of w over k in [0, n)
"""

from __future__ import annotations

import numpy as np

from .core import AttentionSnapshot, ModalityLayout, Span
from .provider import (
    ForwardRequest,
    ForwardResponse,
    LAYER_POLICY_ALL,
    LAYER_POLICY_ALL_BUT_LAST,
    MaskSpec,
    ProviderDescriptor,
)

STUB_VOCAB = 16
STUB_LAYERS = 2
STUB_LAYOUT = ModalityLayout(
    spans=(Span("video", 0, 4), Span("audio", 4, 8), Span("language", 8, 12)),
    total_tokens=12,
)

_MODALITY_BIT = {"video": 1, "audio": 2, "language": 4}


def _mask_code(mask: MaskSpec | None) -> tuple[int, int]:
    if mask is None or mask.is_empty():
        return 0, 0
    m = 0
    for idx in mask.key_indices:
        name = STUB_LAYOUT.modality_of(idx)
        if name is None:
            raise ValueError(f"mask index {idx} outside the stub layout")
        m |= _MODALITY_BIT[name]
    if mask.layer_policy == LAYER_POLICY_ALL_BUT_LAST:
        c = 0
    elif mask.layer_policy == LAYER_POLICY_ALL:
        c = 1
    else:
        c = 2
    return m, c


def stub_logits(prefix_len: int, mask_code: int, policy_code: int) -> np.ndarray:
    vals = [
        (((prefix_len * 31 + mask_code * 17 + policy_code * 29 + i * 13) % 97) - 48) / 8
        for i in range(STUB_VOCAB)
    ]
    return np.asarray(vals, dtype=np.float64)


def stub_attention(prefix_len: int) -> AttentionSnapshot:
    rows = []
    for j in range(STUB_LAYERS):
        weights = [((prefix_len * 7 + j * 11 + k * 3) % 23) + 1 for k in range(prefix_len)]
        total = sum(weights)
        rows.append([w / total for w in weights])
    return AttentionSnapshot(np.asarray(rows, dtype=np.float64))


class StubProvider:
    """In-process reference for the bridge's built-in stub model."""

    def __init__(self, name: str = "stub"):
        self._descriptor = ProviderDescriptor(
            vocab_size=STUB_VOCAB, layer_count=STUB_LAYERS, layout=STUB_LAYOUT, name=name
        )

    @property
    def descriptor(self) -> ProviderDescriptor:
        return self._descriptor

    def forward(self, request: ForwardRequest) -> ForwardResponse:
        m, c = _mask_code(request.mask)
        return ForwardResponse(
            logits=stub_logits(len(request.prefix), m, c),
            attention=stub_attention(len(request.prefix)),
        )
