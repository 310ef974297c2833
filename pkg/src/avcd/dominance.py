"""Modality dominance from attention snapshots, and attentive mask construction.

Dominance of a modality is the share of the final query token's
attention mass landing on that modality's span, averaged over all
layers. Masking thresholds, by contrast, use the all-but-last layer
mean; the asymmetry is deliberate and matches the two rules this engine
implements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import AttentionSnapshot, AvcdError, ModalityLayout
from .provider import LAYER_POLICY_ALL_BUT_LAST, MaskSpec, canonical_mask_label


@dataclass(frozen=True)
class DominanceScores:
    scores: dict[str, float]  # per-modality mean over layers
    per_layer: dict[str, list[float]]
    ordering: tuple[str, ...]  # descending score, lowest span start breaks ties

    @property
    def dominant(self) -> str:
        return self.ordering[0]

    def non_dominant(self) -> tuple[str, ...]:
        return self.ordering[1:]


def dominance_scores(attention: AttentionSnapshot, layout: ModalityLayout) -> DominanceScores:
    if attention.layers < 1:
        raise AvcdError("need at least one attention layer")
    per_layer: dict[str, list[float]] = {}
    scores: dict[str, float] = {}
    for span in layout.spans:
        block = attention.rows[:, span.start : min(span.end, attention.keys)]
        layer_scores = block.sum(axis=1) if block.size else np.zeros(attention.layers)
        per_layer[span.name] = [float(v) for v in layer_scores]
        scores[span.name] = float(layer_scores.mean())
    ordering = tuple(
        sorted(scores, key=lambda name: (-scores[name], layout.span(name).start))
    )
    return DominanceScores(scores=scores, per_layer=per_layer, ordering=ordering)


def mean_attention_per_token(
    attention: AttentionSnapshot, layer_policy: str = LAYER_POLICY_ALL_BUT_LAST
) -> np.ndarray:
    """Elementwise mean attention over the layers included by the policy."""
    if attention.layers < 1:
        raise AvcdError("need at least one attention layer")
    if layer_policy == LAYER_POLICY_ALL_BUT_LAST and attention.layers > 1:
        rows = attention.rows[:-1]
    else:
        rows = attention.rows
    return rows.mean(axis=0)


def top_attention_indices(mean_attn: np.ndarray, start: int, end: int, ratio: float) -> list[int]:
    """Indices of the top ceil(ratio/100 * span) mean-attention values in a span.

    Ties break toward the lowest index.
    """
    length = end - start
    if length <= 0:
        return []
    count = math.ceil(ratio / 100.0 * length)
    window = mean_attn[start:end]
    # stable sort on (-value, index) gives lowest-index tie-breaking
    order = sorted(range(length), key=lambda i: (-window[i], i))
    return sorted(start + i for i in order[:count])


def build_attentive_masks(
    mean_attn: np.ndarray,
    layout: ModalityLayout,
    dominant: str,
    ratio: float,
) -> list[tuple[str, MaskSpec]]:
    """Masks over each non-dominant modality plus, in the trimodal case,
    their union; each applies to all layers but the last.

    Returns an empty list when every non-dominant span is empty, which
    callers treat as a fall-back to base decoding.
    """
    if not 0.0 < ratio <= 100.0:
        raise ValueError("mask ratio must be in (0, 100]")
    layout.span(dominant)  # KeyError on unknown modality
    per_modality: list[frozenset[int]] = []
    for span in layout.spans:
        if span.name == dominant:
            continue
        per_modality.append(frozenset(top_attention_indices(mean_attn, span.start, span.end, ratio)))
    index_sets = [s for s in per_modality if s]
    if not index_sets:
        return []
    combos = list(index_sets)
    if len(index_sets) == 2:
        combos.append(index_sets[0] | index_sets[1])
    masks = []
    for indices in combos:
        mask = MaskSpec(key_indices=indices, layer_policy=LAYER_POLICY_ALL_BUT_LAST)
        masks.append((canonical_mask_label(mask, layout), mask))
    return masks
