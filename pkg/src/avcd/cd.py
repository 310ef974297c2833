"""Contrastive logit combiners, the adaptive plausibility constraint, the
entropy gate, and the full adaptive decode loop.

Combination happens on raw logits rather than log-probabilities: the
combiners are affine, so a per-variant additive constant shifts every
vocabulary entry uniformly and the post-softmax distribution is
unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    NEG_INF,
    AvcdError,
    DecodeConfig,
    DecodeTrace,
    ModalityLayout,
    ShapeMismatchError,
    StepRecord,
    argmax_tiebreak,
    entropy,
    softmax,
)
from .dominance import build_attentive_masks, dominance_scores, mean_attention_per_token
from .provider import ForwardRequest, Provider, ProviderError, forward

_LETTER_MODALITY = {"V": "video", "A": "audio", "L": "language"}

COMBINERS = ("avcd", "naive", "bimodal", "base")


@dataclass(frozen=True)
class CombineInputs:
    """Original logits plus per-mask variants keyed by canonical label."""

    original: np.ndarray
    variants: dict[str, np.ndarray]

    def require(self, *labels: str) -> None:
        missing = [l for l in labels if l not in self.variants]
        if missing:
            raise AvcdError(f"missing masked variants: {missing}")
        for label, vec in self.variants.items():
            if vec.shape != self.original.shape:
                raise ShapeMismatchError(f"variant {label!r} length mismatch")


def avcd_coefficients(alpha_v: float, alpha_a: float) -> tuple[float, float, float, float]:
    """Weights on (original, video-masked, audio-masked, both-masked); they sum to 4."""
    return (
        2.0 + alpha_v + alpha_a,
        1.0 - alpha_v + alpha_a,
        1.0 + alpha_v - alpha_a,
        -(alpha_v + alpha_a),
    )


def _combine_three(
    original: np.ndarray,
    first_masked: np.ndarray,
    second_masked: np.ndarray,
    both_masked: np.ndarray,
    alpha_first: float,
    alpha_second: float,
) -> np.ndarray:
    c0, c1, c2, c3 = avcd_coefficients(alpha_first, alpha_second)
    return c0 * original + c1 * first_masked + c2 * second_masked + c3 * both_masked


def combine_trimodal(inputs: CombineInputs, alpha_v: float, alpha_a: float) -> np.ndarray:
    """Trimodal contrast: the (1-av+aa) weight lands on the video-masked
    variant and (1+av-aa) on the audio-masked one."""
    inputs.require("V", "A", "A+V")
    return _combine_three(
        inputs.original, inputs.variants["V"], inputs.variants["A"], inputs.variants["A+V"],
        alpha_v, alpha_a,
    )


def combine_bimodal(original: np.ndarray, masked: np.ndarray, alpha: float) -> np.ndarray:
    if original.shape != masked.shape:
        raise ShapeMismatchError("bimodal combine length mismatch")
    return (1.0 + alpha) * original - alpha * masked


def combine_naive_trimodal(inputs: CombineInputs, alpha: float) -> np.ndarray:
    """Single-alpha trimodal ablation: contrast every masked variant equally."""
    inputs.require("V", "A", "A+V")
    total = inputs.variants["V"] + inputs.variants["A"] + inputs.variants["A+V"]
    return (1.0 + 3.0 * alpha) * inputs.original - alpha * total


def apply_plausibility(combined: np.ndarray, original_probs: np.ndarray, beta: float) -> np.ndarray:
    """Truncate tokens whose original probability falls below beta * max.

    The original argmax always survives (its probability equals the max).
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must be in [0, 1]")
    if combined.shape != original_probs.shape:
        raise ShapeMismatchError("plausibility length mismatch")
    threshold = beta * float(original_probs.max())
    return np.where(original_probs < threshold, NEG_INF, combined)


def entropy_gate(original_logits: np.ndarray, tau: float) -> tuple[bool, float]:
    """skip iff the original distribution's entropy is strictly below tau."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    h = entropy(softmax(original_logits))
    return h < tau, h


def sample_token(constrained: np.ndarray, strategy: str, rng: np.random.Generator | None = None) -> int:
    if strategy == "greedy":
        return argmax_tiebreak(constrained)
    if strategy == "sample":
        if rng is None:
            raise AvcdError("sampling requires a seeded generator")
        probs = softmax(constrained)
        return int(rng.choice(len(probs), p=probs))
    raise ValueError(f"unknown strategy {strategy!r}")


def _alpha_for(modality: str, config: DecodeConfig) -> float:
    if modality == "audio":
        return config.alpha_a
    return config.alpha_v  # video; language reuses the video-side strength


def _base_record(step: int, response, dom, h: float, gated: bool, fallback: bool) -> StepRecord:
    return StepRecord(
        step=step,
        entropy=h,
        gate_skipped=gated,
        dominance=dom.scores,
        dominant=dom.dominant,
        masked_variants=[],
        original=response.logits,
        combined=response.logits,
        chosen=argmax_tiebreak(response.logits),
        forward_passes=1,
        fallback_base=fallback,
    )


def decode_step(
    provider: Provider,
    prefix: tuple[int, ...],
    layout: ModalityLayout,
    config: DecodeConfig,
    combiner: str = "avcd",
    rng: np.random.Generator | None = None,
    step: int = 0,
    single_mask_index: int | None = None,
) -> StepRecord:
    """One adaptive decode step.

    combiner selects the contrast rule: "avcd" dispatches on modality
    count (trimodal vs bimodal), "naive" uses the equal-weight trimodal
    ablation, "bimodal" forces the single-mask rule, and "base" performs
    plain greedy decoding. single_mask_index restricts masking to one of
    the dominance-derived mask combinations (ablation rows); the masks
    are ordered single non-dominant spans first, their union last.
    """
    if combiner not in COMBINERS:
        raise ValueError(f"unknown combiner {combiner!r}")
    response = forward(provider, ForwardRequest(prefix=prefix))
    dom = dominance_scores(response.attention, layout)
    if combiner == "base":
        return _base_record(step, response, dom, entropy(softmax(response.logits)), False, False)

    skip, h = entropy_gate(response.logits, config.tau)
    if skip:
        return _base_record(step, response, dom, h, True, False)

    mean_attn = mean_attention_per_token(response.attention)
    masks = build_attentive_masks(mean_attn, layout, dom.dominant, config.mask_ratio)
    if single_mask_index is not None:
        masks = masks[single_mask_index : single_mask_index + 1]
    elif combiner == "bimodal" and len(masks) > 1:
        masks = masks[-1:]  # contrast against the joint mask only
    if not masks:
        return _base_record(step, response, dom, h, False, True)

    variants: list[tuple[str, np.ndarray]] = []
    for label, mask in masks:
        masked = forward(provider, ForwardRequest(prefix=prefix, mask=mask))
        variants.append((label, masked.logits))
    inputs = CombineInputs(original=response.logits, variants=dict(variants))

    if len(variants) == 3 and combiner == "naive":
        total = sum(inputs.variants[label] for label, _ in variants)
        combined = (1.0 + 3.0 * config.alpha_v) * inputs.original - config.alpha_v * total
    elif len(variants) == 3:
        single = [l for l, _ in variants if "+" not in l]
        both = next(l for l, _ in variants if "+" in l)
        combined = _combine_three(
            inputs.original,
            inputs.variants[single[0]],
            inputs.variants[single[1]],
            inputs.variants[both],
            _alpha_for(_LETTER_MODALITY[single[0]], config),
            _alpha_for(_LETTER_MODALITY[single[1]], config),
        )
    else:
        label, masked_logits = variants[0]
        letters = label.split("+")
        alpha = _alpha_for(_LETTER_MODALITY[letters[0]], config)
        combined = combine_bimodal(inputs.original, masked_logits, alpha)

    constrained = apply_plausibility(combined, softmax(response.logits), config.beta)
    chosen = sample_token(constrained, config.strategy, rng)
    return StepRecord(
        step=step,
        entropy=h,
        gate_skipped=False,
        dominance=dom.scores,
        dominant=dom.dominant,
        masked_variants=variants,
        original=response.logits,
        combined=constrained,
        chosen=chosen,
        forward_passes=1 + len(variants),
    )


def decode(
    provider: Provider,
    prompt: tuple[int, ...],
    layout: ModalityLayout,
    config: DecodeConfig,
    combiner: str = "avcd",
    single_mask_index: int | None = None,
) -> DecodeTrace:
    """Autoregressive decode until the EOS token or the length limit.

    Provider failures mid-decode return the partial trace with an error
    status instead of raising.
    """
    if not prompt:
        raise AvcdError("prompt must be non-empty")
    rng = np.random.Generator(np.random.PCG64(config.seed))
    trace = DecodeTrace(steps=[], config=config, combiner=combiner)
    prefix = tuple(int(t) for t in prompt)
    for step in range(config.max_tokens):
        try:
            record = decode_step(
                provider, prefix, layout, config,
                combiner=combiner, rng=rng, step=step, single_mask_index=single_mask_index,
            )
        except ProviderError as exc:
            trace.status = "provider_error"
            trace.error = str(exc)
            return trace
        trace.steps.append(record)
        trace.tokens.append(record.chosen)
        prefix = prefix + (record.chosen,)
        if record.chosen == config.eos_token:
            break
    return trace
