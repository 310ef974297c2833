"""A seeded tiny multimodal transformer provider for desk-scale verification.

No training happens here: fixed random weights suffice because every
check downstream is structural or diagnostic, not accuracy-based.

Reproducibility contract: all weights are drawn from NumPy's PCG64
generator (seeded with ``config.seed``) as standard normals, in the
fixed order documented in :func:`init_toy_model`. Position information
is additive embeddings from the same stream. A reimplementation that
follows PCG64 and this draw order reproduces the golden files.

Masking semantics: masked keys are hidden from *all* queries (full
column suppression) at every layer covered by the mask's layer policy;
the paper-level alternative (hiding only from the final query) is not
used. Each attention row renormalizes over the surviving keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import AttentionSnapshot, AvcdError, ModalityLayout, ShapeMismatchError
from .provider import ForwardRequest, ForwardResponse, MaskSpec, ProviderDescriptor


class FullyMaskedError(AvcdError):
    """Raised when a mask removes every key from a covered layer."""


@dataclass(frozen=True)
class ToyModelConfig:
    layout: ModalityLayout
    vocab_size: int = 64
    embed_dim: int = 32
    layers: int = 4
    heads: int = 2
    context_len: int = 128
    seed: int = 0

    def __post_init__(self) -> None:
        if self.embed_dim % self.heads != 0:
            raise ValueError("embed_dim must be divisible by heads")
        if self.layers < 2:
            raise ValueError("need at least 2 layers")
        if self.layout.total_tokens > self.context_len:
            raise ValueError("layout does not fit in the context length")

    def to_json(self) -> dict:
        return {
            "layout": self.layout.to_json(),
            "total_tokens": self.layout.total_tokens,
            "vocab_size": self.vocab_size,
            "embed_dim": self.embed_dim,
            "layers": self.layers,
            "heads": self.heads,
            "context_len": self.context_len,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ToyModelConfig":
        return cls(
            layout=ModalityLayout.from_json(data["layout"], data.get("total_tokens")),
            vocab_size=int(data.get("vocab_size", 64)),
            embed_dim=int(data.get("embed_dim", 32)),
            layers=int(data.get("layers", 4)),
            heads=int(data.get("heads", 2)),
            context_len=int(data.get("context_len", 128)),
            seed=int(data.get("seed", 0)),
        )


@dataclass
class ToyModelState:
    config: ToyModelConfig
    token_embed: np.ndarray
    pos_embed: np.ndarray
    blocks: list[dict[str, np.ndarray]] = field(default_factory=list)
    out_proj: np.ndarray = None  # type: ignore[assignment]


def init_toy_model(config: ToyModelConfig) -> ToyModelState:
    """Deterministic initialization; identical seed + config gives identical weights.

    Draw order: token embeddings, position embeddings, then per layer
    Wq, Wk, Wv, Wo, W1, b1, W2, b2, and finally the output projection.
    """
    rng = np.random.Generator(np.random.PCG64(config.seed))
    d = config.embed_dim
    scale = 1.0 / np.sqrt(d)
    state = ToyModelState(
        config=config,
        token_embed=rng.standard_normal((config.vocab_size, d)),
        pos_embed=rng.standard_normal((config.context_len, d)) * 0.5,
    )
    for _ in range(config.layers):
        state.blocks.append(
            {
                "wq": rng.standard_normal((d, d)) * scale,
                "wk": rng.standard_normal((d, d)) * scale,
                "wv": rng.standard_normal((d, d)) * scale,
                "wo": rng.standard_normal((d, d)) * scale,
                "w1": rng.standard_normal((d, 2 * d)) * scale,
                "b1": rng.standard_normal(2 * d) * 0.1,
                "w2": rng.standard_normal((2 * d, d)) * scale,
                "b2": rng.standard_normal(d) * 0.1,
            }
        )
    state.out_proj = rng.standard_normal((d, config.vocab_size)) * scale
    return state


def weight_checksum(state: ToyModelState) -> float:
    parts = [state.token_embed.sum(), state.pos_embed.sum(), state.out_proj.sum()]
    parts += [w.sum() for block in state.blocks for w in block.values()]
    return float(np.sum(parts))


def _layer_norm(x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


def _forward_from_embeddings(
    state: ToyModelState, x: np.ndarray, mask: MaskSpec | None
) -> ForwardResponse:
    cfg = state.config
    n, d = x.shape
    heads = cfg.heads
    hd = d // heads
    masked_layers = frozenset(mask.layers(cfg.layers)) if mask is not None else frozenset()
    masked_keys = sorted(mask.key_indices) if mask is not None else []
    if masked_keys and len(masked_keys) >= n and masked_layers:
        raise FullyMaskedError("fully masked context: no keys survive the mask")

    causal = np.tril(np.ones((n, n), dtype=bool))
    snapshot_rows = []
    for j, block in enumerate(state.blocks):
        h = _layer_norm(x)
        q = (h @ block["wq"]).reshape(n, heads, hd).transpose(1, 0, 2)
        k = (h @ block["wk"]).reshape(n, heads, hd).transpose(1, 0, 2)
        v = (h @ block["wv"]).reshape(n, heads, hd).transpose(1, 0, 2)
        scores = q @ k.transpose(0, 2, 1) / np.sqrt(hd)  # (heads, n, n)
        scores = np.where(causal[None, :, :], scores, -np.inf)
        if j in masked_layers and masked_keys:
            scores[:, :, masked_keys] = -np.inf
        # A masked early query can lose every visible key (its own column
        # included); such rows contribute nothing instead of dividing by 0.
        row_max = scores.max(axis=-1, keepdims=True)
        weights = np.exp(scores - np.where(np.isfinite(row_max), row_max, 0.0))
        sums = weights.sum(axis=-1, keepdims=True)
        weights = np.divide(weights, sums, out=np.zeros_like(weights), where=sums > 0)
        snapshot_rows.append(weights[:, -1, :].mean(axis=0))
        attn_out = (weights @ v).transpose(1, 0, 2).reshape(n, d)
        x = x + attn_out @ block["wo"]
        h = _layer_norm(x)
        x = x + np.maximum(h @ block["w1"] + block["b1"], 0.0) @ block["w2"] + block["b2"]

    logits = _layer_norm(x[-1]) @ state.out_proj
    return ForwardResponse(
        logits=logits.astype(np.float64),
        attention=AttentionSnapshot(np.stack(snapshot_rows)),
    )


def _embed(state: ToyModelState, prefix: tuple[int, ...]) -> np.ndarray:
    cfg = state.config
    if len(prefix) > cfg.context_len:
        raise ShapeMismatchError(f"prefix length {len(prefix)} exceeds context {cfg.context_len}")
    ids = np.asarray(prefix, dtype=np.int64)
    if (ids < 0).any() or (ids >= cfg.vocab_size).any():
        raise ShapeMismatchError("token id outside the vocabulary")
    return state.token_embed[ids] + state.pos_embed[: len(prefix)]


def toy_forward(state: ToyModelState, prefix: tuple[int, ...], mask: MaskSpec | None = None) -> ForwardResponse:
    return _forward_from_embeddings(state, _embed(state, prefix), mask)


def gaussian_corrupt_forward(
    state: ToyModelState,
    prefix: tuple[int, ...],
    modality: str,
    sigma: float,
    noise_seed: int,
) -> ForwardResponse:
    """Forward pass with seeded Gaussian noise added to one modality's embeddings.

    This is the noise-injection baseline for the KL diagnostic; note the
    perturbation hits embeddings, not raw inputs (the toy model has no
    raw media inputs).
    """
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    span = state.config.layout.span(modality)  # KeyError on unknown modality
    x = _embed(state, prefix)
    rng = np.random.Generator(np.random.PCG64(noise_seed))
    noise = rng.standard_normal((len(span), x.shape[1])) * sigma
    end = min(span.end, x.shape[0])
    x[span.start:end] += noise[: end - span.start]
    return _forward_from_embeddings(state, x, None)


class ToyModelProvider:
    """Exclusive-use provider wrapper around an immutable toy model."""

    def __init__(self, config: ToyModelConfig, name: str = "toy"):
        self.state = init_toy_model(config)
        self._descriptor = ProviderDescriptor(
            vocab_size=config.vocab_size,
            layer_count=config.layers,
            layout=config.layout,
            name=name,
        )

    @property
    def descriptor(self) -> ProviderDescriptor:
        return self._descriptor

    def forward(self, request: ForwardRequest) -> ForwardResponse:
        return toy_forward(self.state, request.prefix, request.mask)

    def corrupt_forward(
        self, prefix: tuple[int, ...], modality: str, sigma: float, noise_seed: int
    ) -> ForwardResponse:
        return gaussian_corrupt_forward(self.state, prefix, modality, sigma, noise_seed)
