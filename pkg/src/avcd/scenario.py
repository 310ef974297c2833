"""Scenario files: schema, validation, provider construction, generators.

A scenario bundles a provider description (toy-model config, scripted
table, or remote adapter command line), a modality layout, a prompt, and
decode-config overrides. Files are JSON with an explicit schema_version.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .core import AttentionSnapshot, AvcdError, DecodeConfig, ModalityLayout, Span, from_jsonable
from .provider import (
    Provider,
    ProviderDescriptor,
    RemoteProvider,
    ScriptedProvider,
    ScriptedScenario,
    SubprocessTransport,
)
from .stub import StubProvider
from .toymodel import ToyModelConfig, ToyModelProvider

SCHEMA_VERSION = 1

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "provider", "layout", "prompt"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "provider": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["toy", "scripted", "remote", "stub"]},
                "config": {"type": "object"},
                "scenario": {"type": "object"},
                "command": {"type": "array", "items": {"type": "string"}},
            },
        },
        "layout": {
            "type": "array",
            "minItems": 2,
            "maxItems": 3,
            "items": {
                "type": "array",
                "prefixItems": [{"type": "string"}, {"type": "integer"}, {"type": "integer"}],
            },
        },
        "total_tokens": {"type": "integer", "minimum": 1},
        "prompt": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 0}},
        "config": {"type": "object"},
    },
}


class ScenarioValidationError(AvcdError):
    """The scenario file violates the schema or is internally inconsistent."""


@dataclass
class Scenario:
    provider_spec: dict
    layout: ModalityLayout
    prompt: tuple[int, ...]
    config: DecodeConfig

    @classmethod
    def from_json(cls, data: dict) -> "Scenario":
        try:
            jsonschema.validate(data, SCENARIO_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ScenarioValidationError(f"invalid scenario: {exc.message}") from exc
        layout = ModalityLayout.from_json(data["layout"], data.get("total_tokens"))
        config = DecodeConfig.from_json(from_jsonable(data.get("config", {})))
        return cls(
            provider_spec=data["provider"],
            layout=layout,
            prompt=tuple(int(t) for t in data["prompt"]),
            config=config,
        )

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioValidationError(f"cannot load scenario {path}: {exc}") from exc
        return cls.from_json(data)

    @property
    def kind(self) -> str:
        return self.provider_spec["kind"]

    def build_provider(self) -> Provider:
        kind = self.kind
        if kind == "toy":
            cfg = dict(self.provider_spec.get("config", {}))
            cfg.setdefault("layout", self.layout.to_json())
            cfg.setdefault("total_tokens", self.layout.total_tokens)
            provider = ToyModelProvider(ToyModelConfig.from_json(cfg))
        elif kind == "scripted":
            provider = ScriptedProvider(ScriptedScenario.from_json(self.provider_spec["scenario"]))
        elif kind == "stub":
            provider = StubProvider()
        elif kind == "remote":
            command = self.provider_spec.get("command")
            if not command:
                raise ScenarioValidationError("remote provider requires a command line")
            provider = RemoteProvider(SubprocessTransport(command))
        else:  # unreachable after schema validation
            raise ScenarioValidationError(f"unknown provider kind {kind!r}")
        self._check_layout(provider.descriptor)
        self._check_prompt(provider.descriptor)
        return provider

    def _check_layout(self, descriptor: ProviderDescriptor) -> None:
        if descriptor.layout.to_json() != self.layout.to_json():
            raise ScenarioValidationError(
                "scenario layout disagrees with the provider's declared layout"
            )

    def _check_prompt(self, descriptor: ProviderDescriptor) -> None:
        bad = [t for t in self.prompt if not 0 <= t < descriptor.vocab_size]
        if bad:
            raise ScenarioValidationError(f"prompt tokens {bad} outside vocabulary")
        if len(self.prompt) < self.layout.total_tokens:
            raise ScenarioValidationError(
                f"prompt shorter than the layout's {self.layout.total_tokens} modality tokens"
            )


def _trimodal_layout(m: int, n: int, l: int) -> ModalityLayout:
    return ModalityLayout(
        spans=(Span("video", 0, m), Span("audio", m, m + n), Span("language", m + n, m + n + l)),
        total_tokens=m + n + l,
    )


def _bimodal_layout(m: int, l: int) -> ModalityLayout:
    return ModalityLayout(
        spans=(Span("video", 0, m), Span("language", m, m + l)), total_tokens=m + l
    )


def _toy_scenario(layout: ModalityLayout, seed: int) -> dict:
    rng = np.random.Generator(np.random.PCG64(seed))
    vocab = 64
    prompt = [int(t) for t in rng.integers(1, vocab, size=layout.total_tokens)]
    return {
        "schema_version": SCHEMA_VERSION,
        "provider": {"kind": "toy", "config": {"vocab_size": vocab, "seed": seed}},
        "layout": layout.to_json(),
        "total_tokens": layout.total_tokens,
        "prompt": prompt,
        "config": DecodeConfig(seed=seed, max_tokens=8, eos_token=0).to_json(),
    }


def _uniform_rows(weights: list[list[float]]) -> list[list[float]]:
    return [[w / sum(row) for w in row] for row in weights]


def scripted_minimal_scenario() -> dict:
    """Two-step scripted scenario: one non-gated step, then one gated step.

    Masked variants at the second prefix equal the original logits so the
    emitted token is identical whether or not the gate fires, which keeps
    the table total for any tau.
    """
    layout = _trimodal_layout(1, 1, 2)
    rows_4 = [[0.1, 0.2, 0.3, 0.4], [0.2, 0.1, 0.3, 0.4]]
    rows_5 = [[0.1, 0.2, 0.3, 0.2, 0.2], [0.2, 0.1, 0.3, 0.2, 0.2]]
    sharp = [0.0, 3.0, 0.0, 10.0]
    entries = [
        {"prefix": [0, 1, 2, 3], "mask": "none", "logits": [0.1, 0.1, 0.1, 0.1], "attention": rows_4},
        {"prefix": [0, 1, 2, 3], "mask": "V", "logits": [0.0, 1.0, 0.0, 0.0], "attention": rows_4},
        {"prefix": [0, 1, 2, 3], "mask": "A", "logits": [2.0, 2.0, 2.0, 2.0], "attention": rows_4},
        {"prefix": [0, 1, 2, 3], "mask": "A+V", "logits": [1.0, 1.0, 1.0, 1.0], "attention": rows_4},
    ]
    for continuation in (0, 1):  # non-gated path emits 1, plain greedy emits 0
        prefix = [0, 1, 2, 3, continuation]
        for label in ("none", "V", "A", "A+V"):
            entries.append(
                {"prefix": prefix, "mask": label, "logits": list(sharp), "attention": rows_5}
            )
    scripted = {
        "vocab_size": 4,
        "layer_count": 2,
        "layout": layout.to_json(),
        "total_tokens": layout.total_tokens,
        "name": "scripted-minimal",
        "entries": entries,
    }
    return {
        "schema_version": SCHEMA_VERSION,
        "provider": {"kind": "scripted", "scenario": scripted},
        "layout": layout.to_json(),
        "total_tokens": layout.total_tokens,
        "prompt": [0, 1, 2, 3],
        "config": DecodeConfig(max_tokens=4, eos_token=3).to_json(),
    }


def scripted_mixed_scenario(trimodal: bool = True) -> dict:
    """Five-step scripted chain whose per-step entropies straddle the common
    gate thresholds (~0.12, ~0.38, ~0.84, ln 4, ~0.004 nats).

    Masked variants equal the original logits at every state, so the token
    chain is identical for any tau and any combiner; only the gating and
    the forward-pass count vary. That makes gate-set monotonicity and
    exact call accounting observable in isolation.
    """
    if trimodal:
        layout = _trimodal_layout(1, 1, 2)
        labels = ("none", "V", "A", "A+V")
    else:
        layout = _bimodal_layout(2, 2)
        labels = ("none", "V")
    # (logits, emitted token): argmax drives the chain; ends on EOS 3
    chain = [
        ([5.0, 0.0, 0.0, 0.0], 0),
        ([0.0, 3.5, 0.0, 0.0], 1),
        ([0.0, 0.0, 2.2, 0.0], 2),
        ([0.0, 0.0, 0.0, 0.0], 0),
        ([0.0, 0.0, 0.0, 9.0], 3),
    ]
    entries = []
    prefix = [0, 1, 2, 3]
    for logits, token in chain:
        n = len(prefix)
        if trimodal:
            row = [1.0 / n] * n  # language span holds two positions: dominant
        else:
            weights = [2.0 if i in (2, 3) else 1.0 for i in range(n)]
            row = [w / sum(weights) for w in weights]  # language dominant
        for label in labels:
            entries.append(
                {"prefix": list(prefix), "mask": label, "logits": list(logits),
                 "attention": [row, row]}
            )
        prefix = prefix + [token]
    scripted = {
        "vocab_size": 4,
        "layer_count": 2,
        "layout": layout.to_json(),
        "total_tokens": layout.total_tokens,
        "name": "scripted-mixed-trimodal" if trimodal else "scripted-mixed-bimodal",
        "entries": entries,
    }
    return {
        "schema_version": SCHEMA_VERSION,
        "provider": {"kind": "scripted", "scenario": scripted},
        "layout": layout.to_json(),
        "total_tokens": layout.total_tokens,
        "prompt": [0, 1, 2, 3],
        "config": DecodeConfig(max_tokens=8, eos_token=3).to_json(),
    }


def gen_scenario(kind: str, seed: int = 0) -> dict:
    if kind == "toy-trimodal":
        return _toy_scenario(_trimodal_layout(8, 4, 4), seed)
    if kind == "toy-bimodal":
        return _toy_scenario(_bimodal_layout(8, 8), seed)
    if kind == "scripted-minimal":
        return scripted_minimal_scenario()
    if kind == "scripted-mixed-trimodal":
        return scripted_mixed_scenario(trimodal=True)
    if kind == "scripted-mixed-bimodal":
        return scripted_mixed_scenario(trimodal=False)
    raise ScenarioValidationError(f"unknown scenario kind {kind!r}")
