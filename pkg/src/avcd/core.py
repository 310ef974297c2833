"""Numeric primitives and shared domain records.

Logit and probability vectors are plain 1-D ``numpy.float64`` arrays.
Negative infinity is a distinguished sentinel: it is never produced by
arithmetic here, only injected by plausibility truncation, and softmax
maps it to probability zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

NEG_INF = float("-inf")


class AvcdError(Exception):
    """Base class for engine errors."""


class EmptySupportError(AvcdError):
    """Raised when every logit entry is the negative-infinity sentinel."""


class InfiniteDivergenceError(AvcdError):
    """Raised when KL(p||q) is infinite because support(p) is not inside support(q)."""


class ShapeMismatchError(AvcdError):
    """Raised when vector lengths disagree with the declared vocabulary/context."""


def as_logits(values: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeMismatchError(f"logit vector must be 1-D, got shape {arr.shape}")
    if np.isnan(arr).any() or np.isposinf(arr).any():
        raise ShapeMismatchError("logits must be finite or the -inf sentinel")
    return arr


def softmax(logits: Sequence[float] | np.ndarray) -> np.ndarray:
    """Numerically stable softmax; -inf sentinel entries get probability 0."""
    arr = as_logits(logits)
    finite = np.isfinite(arr)
    if not finite.any():
        raise EmptySupportError("empty support: all entries are -inf")
    m = arr[finite].max()
    shifted = np.where(finite, arr - m, NEG_INF)
    exp = np.where(finite, np.exp(shifted), 0.0)
    return exp / exp.sum()


def entropy(probs: Sequence[float] | np.ndarray) -> float:
    """Shannon entropy in nats; p=0 terms contribute 0."""
    p = np.asarray(probs, dtype=np.float64)
    nz = p > 0.0
    return float(-(p[nz] * np.log(p[nz])).sum())


def kl_divergence(p: Sequence[float] | np.ndarray, q: Sequence[float] | np.ndarray) -> float:
    """KL(p||q) in nats. Support violations raise rather than returning inf."""
    pa = np.asarray(p, dtype=np.float64)
    qa = np.asarray(q, dtype=np.float64)
    if pa.shape != qa.shape:
        raise ShapeMismatchError(f"shape mismatch: {pa.shape} vs {qa.shape}")
    nz = pa > 0.0
    if (qa[nz] <= 0.0).any():
        raise InfiniteDivergenceError("infinite divergence: support(p) not within support(q)")
    return float((pa[nz] * (np.log(pa[nz]) - np.log(qa[nz]))).sum())


def argmax_tiebreak(logits: Sequence[float] | np.ndarray) -> int:
    """Index of the maximum entry; ties broken by lowest index."""
    arr = as_logits(logits)
    if not np.isfinite(arr).any():
        raise EmptySupportError("empty support: all entries are -inf")
    return int(np.argmax(arr))  # np.argmax already returns the first maximum


@dataclass(frozen=True)
class Span:
    name: str
    start: int
    end: int  # exclusive

    def __post_init__(self) -> None:
        if self.start < 0 or self.end < self.start:
            raise ValueError(f"bad span [{self.start}, {self.end}) for {self.name!r}")

    def __len__(self) -> int:
        return self.end - self.start

    def indices(self) -> range:
        return range(self.start, self.end)


@dataclass(frozen=True)
class ModalityLayout:
    """Partition of the token prefix into named modality spans.

    Spans are disjoint and live inside [0, total_tokens); positions past
    total_tokens (generated tokens) belong to no modality.
    """

    spans: tuple[Span, ...]
    total_tokens: int

    def __post_init__(self) -> None:
        names = [s.name for s in self.spans]
        if len(set(names)) != len(names):
            raise ValueError("modality names must be unique")
        if not 2 <= len(self.spans) <= 3:
            raise ValueError("supported modality counts are 2 or 3")
        seen: set[int] = set()
        for s in self.spans:
            if s.end > self.total_tokens:
                raise ValueError(f"span {s.name!r} exceeds total_tokens={self.total_tokens}")
            idx = set(s.indices())
            if idx & seen:
                raise ValueError("modality spans overlap")
            seen |= idx

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.spans)

    def span(self, name: str) -> Span:
        for s in self.spans:
            if s.name == name:
                return s
        raise KeyError(f"unknown modality {name!r}")

    def modality_of(self, index: int) -> str | None:
        for s in self.spans:
            if s.start <= index < s.end:
                return s.name
        return None

    def to_json(self) -> list[list]:
        return [[s.name, s.start, s.end] for s in self.spans]

    @classmethod
    def from_json(cls, data: Sequence[Sequence], total_tokens: int | None = None) -> "ModalityLayout":
        spans = tuple(Span(str(n), int(a), int(b)) for n, a, b in data)
        if total_tokens is None:
            total_tokens = max((s.end for s in spans), default=0)
        return cls(spans=spans, total_tokens=total_tokens)


@dataclass(frozen=True)
class AttentionSnapshot:
    """Per-layer attention of the final query token over all key positions.

    rows has shape (J, K); heads are already averaged into a single row
    per layer.
    """

    rows: np.ndarray

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ShapeMismatchError(f"attention rows must be 2-D, got {rows.shape}")
        object.__setattr__(self, "rows", rows)

    @property
    def layers(self) -> int:
        return self.rows.shape[0]

    @property
    def keys(self) -> int:
        return self.rows.shape[1]

    def validate(self, tol: float = 1e-6) -> None:
        if (self.rows < -tol).any():
            raise ValueError("attention rows must be nonnegative")
        sums = self.rows.sum(axis=1)
        if not np.allclose(sums, 1.0, atol=tol):
            raise ValueError(f"attention rows must sum to 1, got {sums}")

    def to_json(self) -> list[list[float]]:
        return self.rows.tolist()


@dataclass(frozen=True)
class DecodeConfig:
    """All decode hyperparameters, seeded and serializable."""

    alpha_v: float = 0.5
    alpha_a: float = 0.5
    tau: float = 0.6
    beta: float = 0.1
    mask_ratio: float = 50.0  # top-P percent, in (0, 100]
    strategy: str = "greedy"
    seed: int = 0
    max_tokens: int = 16
    eos_token: int = 0

    def __post_init__(self) -> None:
        if self.alpha_v < 0 or self.alpha_a < 0:
            raise ValueError("alphas must be >= 0")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")
        if not 0.0 < self.mask_ratio <= 100.0:
            raise ValueError("mask_ratio must be in (0, 100]")
        if self.strategy not in ("greedy", "sample"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")
        if self.eos_token < 0:
            raise ValueError("eos_token must be a valid token id")

    def override(self, **kwargs) -> "DecodeConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})

    def to_json(self) -> dict:
        return {
            "alpha_v": self.alpha_v,
            "alpha_a": self.alpha_a,
            "tau": self.tau,
            "beta": self.beta,
            "mask_ratio": self.mask_ratio,
            "strategy": self.strategy,
            "seed": self.seed,
            "max_tokens": self.max_tokens,
            "eos_token": self.eos_token,
        }

    @classmethod
    def from_json(cls, data: dict) -> "DecodeConfig":
        return cls(
            alpha_v=float(data.get("alpha_v", 0.5)),
            alpha_a=float(data.get("alpha_a", 0.5)),
            tau=float(data.get("tau", 0.6)),
            beta=float(data.get("beta", 0.1)),
            mask_ratio=float(data.get("mask_ratio", 50.0)),
            strategy=str(data.get("strategy", "greedy")),
            seed=int(data.get("seed", 0)),
            max_tokens=int(data.get("max_tokens", 16)),
            eos_token=int(data.get("eos_token", 0)),
        )


@dataclass
class StepRecord:
    """Everything observed during one decode step."""

    step: int
    entropy: float
    gate_skipped: bool
    dominance: dict[str, float]
    dominant: str | None
    masked_variants: list[tuple[str, np.ndarray]]
    original: np.ndarray
    combined: np.ndarray
    chosen: int
    forward_passes: int
    fallback_base: bool = False

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "entropy": self.entropy,
            "gate_skipped": self.gate_skipped,
            "dominance": self.dominance,
            "dominant": self.dominant,
            "masked_variants": [[label, logits.tolist()] for label, logits in self.masked_variants],
            "original": self.original.tolist(),
            "combined": self.combined.tolist(),
            "chosen": self.chosen,
            "forward_passes": self.forward_passes,
            "fallback_base": self.fallback_base,
        }


@dataclass
class DecodeTrace:
    """Ordered step records plus the run configuration echo."""

    steps: list[StepRecord]
    config: DecodeConfig
    combiner: str
    tokens: list[int] = field(default_factory=list)
    status: str = "ok"
    error: str | None = None

    @property
    def total_forward_passes(self) -> int:
        return sum(s.forward_passes for s in self.steps)

    def to_json(self) -> dict:
        return {
            "config": self.config.to_json(),
            "combiner": self.combiner,
            "tokens": self.tokens,
            "status": self.status,
            "error": self.error,
            "steps": [s.to_json() for s in self.steps],
        }


def jsonable(value):
    """Recursively replace non-finite floats with their string spellings.

    JSON has no infinity literal; traces spell them "inf"/"-inf".
    """
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return value
    if isinstance(value, dict):
        return {k: jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    return value


def from_jsonable(value):
    """Inverse of :func:`jsonable` for float payloads."""
    if isinstance(value, str) and value in ("inf", "-inf", "nan"):
        return float(value)
    if isinstance(value, dict):
        return {k: from_jsonable(v) for k, v in value.items()}
    if isinstance(value, list):
        return [from_jsonable(v) for v in value]
    return value
