"""Dominance-aware trimodal contrastive decoding with entropy-gated
adaptive inference."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    AttentionSnapshot,
    AvcdError,
    DecodeConfig,
    DecodeTrace,
    ModalityLayout,
    Span,
    StepRecord,
    argmax_tiebreak,
    entropy,
    kl_divergence,
    softmax,
)
from .cd import (  # noqa: F401
    CombineInputs,
    apply_plausibility,
    avcd_coefficients,
    combine_bimodal,
    combine_naive_trimodal,
    combine_trimodal,
    decode,
    decode_step,
    entropy_gate,
    sample_token,
)
from .dominance import build_attentive_masks, dominance_scores, mean_attention_per_token  # noqa: F401
from .provider import (  # noqa: F401
    ForwardRequest,
    ForwardResponse,
    MaskSpec,
    ProviderDescriptor,
    RemoteProvider,
    ScriptedProvider,
    ScriptedScenario,
    canonical_mask_label,
    forward,
)
from .toymodel import ToyModelConfig, ToyModelProvider, init_toy_model, toy_forward  # noqa: F401
