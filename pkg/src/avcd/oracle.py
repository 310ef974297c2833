"""Independent brute-force and analytical checks.

oracle_avcd expands the per-modality contrasts literally and sums them;
it exists only to cross-validate the fused trimodal combiner. The
Taylor study measures how the log-of-mean vs mean-of-logs substitution
error scales with the relative spread of its inputs. The KL diagnostic
compares attention-level masking against Gaussian embedding corruption
at matched modality scope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import AvcdError, ShapeMismatchError, entropy, kl_divergence, softmax
from .dominance import build_attentive_masks, dominance_scores, mean_attention_per_token
from .provider import ForwardRequest
from .toymodel import ToyModelProvider


def oracle_avcd(
    l_va: np.ndarray,
    l_nva: np.ndarray,
    l_vna: np.ndarray,
    l_nvna: np.ndarray,
    alpha_v: float,
    alpha_a: float,
) -> np.ndarray:
    """Literal two-contrast expansion, summed.

    Arguments are the log-prob vectors for (video, audio) states
    (intact, intact), (masked, intact), (intact, masked), and
    (masked, masked).
    """
    if not (l_va.shape == l_nva.shape == l_vna.shape == l_nvna.shape):
        raise ShapeMismatchError("oracle input length mismatch")
    logit_v = (1.0 + alpha_v) * (l_va + l_vna) - alpha_v * (l_nva + l_nvna)
    logit_a = (1.0 + alpha_a) * (l_va + l_nva) - alpha_a * (l_vna + l_nvna)
    return logit_v + logit_a


@dataclass(frozen=True)
class TaylorSample:
    a: float
    b: float
    mean: float
    delta: float
    exact: float
    approx: float
    error: float
    predicted_error: float  # leading term delta^2 / (2 mean^2)

    def to_json(self) -> dict:
        return {
            "a": self.a, "b": self.b, "mean": self.mean, "delta": self.delta,
            "exact": self.exact, "approx": self.approx, "error": self.error,
            "predicted_error": self.predicted_error,
        }


def taylor_error(a: float, b: float) -> TaylorSample:
    """Exact log-of-mean vs mean-of-logs, with the predicted leading error."""
    if a <= 0 or b <= 0:
        raise ValueError("inputs must be positive")
    mean = (a + b) / 2.0
    delta = (a - b) / 2.0
    exact = math.log(mean)
    approx = (math.log(a) + math.log(b)) / 2.0
    return TaylorSample(
        a=a, b=b, mean=mean, delta=delta, exact=exact, approx=approx,
        error=abs(exact - approx),
        predicted_error=delta * delta / (2.0 * mean * mean),
    )


def taylor_scaling_study(
    num_samples: int = 400, seed: int = 0, delta_max_ratio: float = 0.1
) -> dict:
    """Regress log(error) on log(delta/mean); the fitted slope should be ~2."""
    if num_samples < 100:
        raise ValueError("need at least 100 samples")
    rng = np.random.Generator(np.random.PCG64(seed))
    xs, ys, samples = [], [], []
    for _ in range(num_samples):
        mean = rng.uniform(0.5, 2.0)
        delta = rng.uniform(1e-4, delta_max_ratio) * mean
        s = taylor_error(mean + delta, mean - delta)
        if s.error <= 0:
            continue
        xs.append(math.log(s.delta / s.mean))
        ys.append(math.log(s.error))
        samples.append(s)
    if len(xs) < 2 or max(xs) == min(xs):
        raise AvcdError("degenerate sample set: no spread in delta/mean")
    slope, intercept = np.polyfit(np.asarray(xs), np.asarray(ys), 1)
    errors = np.asarray([s.error for s in samples])
    return {
        "fitted_order": float(slope),
        "intercept": float(intercept),
        "num_samples": len(samples),
        "delta_max_ratio": delta_max_ratio,
        "seed": seed,
        "mean_error": float(errors.mean()),
        "max_error": float(errors.max()),
    }


def halving_ratio(num_samples: int = 200, seed: int = 0) -> float:
    """Mean error ratio when every delta is halved; ~4 under quadratic scaling."""
    rng = np.random.Generator(np.random.PCG64(seed))
    full, half = [], []
    for _ in range(num_samples):
        mean = rng.uniform(0.5, 2.0)
        delta = rng.uniform(1e-3, 0.1) * mean
        full.append(taylor_error(mean + delta, mean - delta).error)
        half.append(taylor_error(mean + delta / 2, mean - delta / 2).error)
    return float(np.mean(full) / np.mean(half))


def marginalize_states(p_intact: np.ndarray, p_corrupt: np.ndarray) -> np.ndarray:
    """Uniform half-half mixture of the intact and corrupted distributions."""
    if p_intact.shape != p_corrupt.shape:
        raise ShapeMismatchError("marginalization length mismatch")
    return (np.asarray(p_intact, dtype=np.float64) + np.asarray(p_corrupt, dtype=np.float64)) / 2.0


def kl_masking_vs_noise(
    provider: ToyModelProvider,
    prompts: list[tuple[int, ...]],
    mask_ratio: float = 50.0,
    sigma: float = 1.0,
    noise_seed: int = 0,
) -> dict:
    """Per-prompt KL of masked and noise-corrupted outputs vs the original.

    Both perturbations hit the same modality (the least dominant one at
    that prompt), so the comparison is scope-matched.
    """
    if len(prompts) < 1:
        raise AvcdError("need at least one prompt")
    layout = provider.descriptor.layout
    kl_mask, kl_noise, per_sample = [], [], []
    for i, prompt in enumerate(prompts):
        prefix = tuple(int(t) for t in prompt)
        original = provider.forward(ForwardRequest(prefix=prefix))
        dom = dominance_scores(original.attention, layout)
        target = dom.ordering[-1]  # least dominant modality
        mean_attn = mean_attention_per_token(original.attention)
        masks = build_attentive_masks(mean_attn, layout, dom.dominant, mask_ratio)
        single = {label: mask for label, mask in masks if "+" not in label}
        mask = None
        for label, spec in single.items():
            if layout.modality_of(min(spec.key_indices)) == target:
                mask = spec
        if mask is None:
            continue  # target span empty; nothing to compare
        p0 = softmax(original.logits)
        masked = provider.forward(ForwardRequest(prefix=prefix, mask=mask))
        noisy = provider.corrupt_forward(prefix, target, sigma, noise_seed + i)
        km = kl_divergence(p0, softmax(masked.logits))
        kn = kl_divergence(p0, softmax(noisy.logits))
        kl_mask.append(km)
        kl_noise.append(kn)
        per_sample.append({"prompt": list(prefix), "modality": target, "kl_mask": km, "kl_noise": kn})
    if not kl_mask:
        raise AvcdError("no comparable prompts in the suite")
    return {
        "mean_kl_mask": float(np.mean(kl_mask)),
        "mean_kl_noise": float(np.mean(kl_noise)),
        "sigma": sigma,
        "mask_ratio": mask_ratio,
        "samples": per_sample,
    }
