"""Model-provider port: how the engine obtains next-token logits and
last-query attention under an optional attention-level masking spec.

Providers are stateless between requests and serve one decode session at
a time. Three implementations live in this package: a table-driven
scripted provider (exact-value tests), the toy transformer
(:mod:`avcd.toymodel`), and a remote client speaking newline-delimited
JSON to a spawned adapter process.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np

from .core import (
    AttentionSnapshot,
    AvcdError,
    ModalityLayout,
    ShapeMismatchError,
    as_logits,
)

LAYER_POLICY_ALL = "all"
LAYER_POLICY_ALL_BUT_LAST = "all_but_last"

_MODALITY_LETTER = {"video": "V", "audio": "A", "language": "L"}


class ProviderError(AvcdError):
    """A provider failed to answer a forward request."""


class UnscriptedStateError(ProviderError):
    """A scripted table was queried outside its declared reachable states."""


class ProtocolError(ProviderError):
    """The remote adapter violated the wire protocol."""


@dataclass(frozen=True)
class MaskSpec:
    """Key positions to suppress, plus the layer range where suppression applies.

    layer_policy is "all", "all_but_last", or an explicit tuple of layer
    indices.
    """

    key_indices: frozenset[int]
    layer_policy: str | tuple[int, ...] = LAYER_POLICY_ALL_BUT_LAST

    def __post_init__(self) -> None:
        object.__setattr__(self, "key_indices", frozenset(int(i) for i in self.key_indices))
        if isinstance(self.layer_policy, str):
            if self.layer_policy not in (LAYER_POLICY_ALL, LAYER_POLICY_ALL_BUT_LAST):
                raise ValueError(f"unknown layer policy {self.layer_policy!r}")
        else:
            object.__setattr__(self, "layer_policy", tuple(int(j) for j in self.layer_policy))

    def is_empty(self) -> bool:
        return not self.key_indices

    def layers(self, layer_count: int) -> tuple[int, ...]:
        """Concrete layer indices this mask applies to."""
        if self.layer_policy == LAYER_POLICY_ALL:
            return tuple(range(layer_count))
        if self.layer_policy == LAYER_POLICY_ALL_BUT_LAST:
            return tuple(range(max(layer_count - 1, 0)))
        bad = [j for j in self.layer_policy if j >= layer_count]
        if bad:
            raise ShapeMismatchError(f"layer indices {bad} out of range (J={layer_count})")
        return self.layer_policy

    def to_json(self) -> dict:
        policy = self.layer_policy if isinstance(self.layer_policy, str) else list(self.layer_policy)
        return {"key_indices": sorted(self.key_indices), "layer_policy": policy}

    @classmethod
    def from_json(cls, data: dict) -> "MaskSpec":
        policy = data.get("layer_policy", LAYER_POLICY_ALL_BUT_LAST)
        if isinstance(policy, list):
            policy = tuple(policy)
        return cls(key_indices=frozenset(data["key_indices"]), layer_policy=policy)


def canonical_mask_label(mask: MaskSpec | None, layout: ModalityLayout) -> str:
    """Stable label from the masked modality names, sorted; "none" if empty.

    Used as scripted-table key and trace label, e.g. "A", "V", "A+V".
    """
    if mask is None or mask.is_empty():
        return "none"
    letters = set()
    for idx in mask.key_indices:
        name = layout.modality_of(idx)
        if name is None:
            raise AvcdError(f"mask index {idx} is outside every modality span")
        letters.add(_MODALITY_LETTER.get(name, name[:1].upper()))
    return "+".join(sorted(letters))


@dataclass(frozen=True)
class ForwardRequest:
    prefix: tuple[int, ...]
    mask: MaskSpec | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "prefix", tuple(int(t) for t in self.prefix))
        if not self.prefix:
            raise AvcdError("prefix must be non-empty")
        mask = self.mask
        if mask is not None and mask.is_empty():
            object.__setattr__(self, "mask", None)  # empty mask == no mask


@dataclass(frozen=True)
class ForwardResponse:
    logits: np.ndarray
    attention: AttentionSnapshot


@dataclass(frozen=True)
class ProviderDescriptor:
    vocab_size: int
    layer_count: int
    layout: ModalityLayout
    name: str = "provider"

    def check_response(self, request: ForwardRequest, response: ForwardResponse) -> ForwardResponse:
        if response.logits.shape != (self.vocab_size,):
            raise ShapeMismatchError(
                f"logits length {response.logits.shape[0]} != vocab size {self.vocab_size}"
            )
        if response.attention.layers != self.layer_count:
            raise ShapeMismatchError(
                f"attention layers {response.attention.layers} != J={self.layer_count}"
            )
        if response.attention.keys != len(request.prefix):
            raise ShapeMismatchError(
                f"attention keys {response.attention.keys} != prefix length {len(request.prefix)}"
            )
        return response

    def check_request(self, request: ForwardRequest) -> None:
        if request.mask is not None:
            k = len(request.prefix)
            bad = [i for i in request.mask.key_indices if not 0 <= i < k]
            if bad:
                raise ShapeMismatchError(f"mask indices {sorted(bad)} outside prefix [0, {k})")
            request.mask.layers(self.layer_count)


class Provider(Protocol):
    @property
    def descriptor(self) -> ProviderDescriptor: ...

    def forward(self, request: ForwardRequest) -> ForwardResponse: ...


def forward(provider: Provider, request: ForwardRequest) -> ForwardResponse:
    """Run one forward evaluation through any provider, shape-checked."""
    provider.descriptor.check_request(request)
    return provider.descriptor.check_response(request, provider.forward(request))


@dataclass
class ScriptedScenario:
    """Table mapping (prefix, canonical mask label) to fixed responses."""

    descriptor: ProviderDescriptor
    table: dict[tuple[tuple[int, ...], str], tuple[np.ndarray, AttentionSnapshot]]
    default_attention: AttentionSnapshot | None = None

    def to_json(self) -> dict:
        return {
            "vocab_size": self.descriptor.vocab_size,
            "layer_count": self.descriptor.layer_count,
            "layout": self.descriptor.layout.to_json(),
            "total_tokens": self.descriptor.layout.total_tokens,
            "name": self.descriptor.name,
            "entries": [
                {
                    "prefix": list(prefix),
                    "mask": label,
                    "logits": logits.tolist(),
                    "attention": attention.to_json(),
                }
                for (prefix, label), (logits, attention) in sorted(self.table.items())
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ScriptedScenario":
        layout = ModalityLayout.from_json(data["layout"], data.get("total_tokens"))
        descriptor = ProviderDescriptor(
            vocab_size=int(data["vocab_size"]),
            layer_count=int(data["layer_count"]),
            layout=layout,
            name=str(data.get("name", "scripted")),
        )
        table = {}
        for entry in data["entries"]:
            key = (tuple(int(t) for t in entry["prefix"]), str(entry["mask"]))
            table[key] = (
                as_logits(entry["logits"]),
                AttentionSnapshot(np.asarray(entry["attention"], dtype=np.float64)),
            )
        return cls(descriptor=descriptor, table=table)


class ScriptedProvider:
    """Pure table lookup; total only over the scenario's declared states."""

    def __init__(self, scenario: ScriptedScenario):
        self.scenario = scenario

    @property
    def descriptor(self) -> ProviderDescriptor:
        return self.scenario.descriptor

    def forward(self, request: ForwardRequest) -> ForwardResponse:
        label = canonical_mask_label(request.mask, self.descriptor.layout)
        key = (request.prefix, label)
        hit = self.scenario.table.get(key)
        if hit is None:
            raise UnscriptedStateError(
                f"unscripted state: prefix {list(request.prefix)} with mask {label!r}"
            )
        logits, attention = hit
        return ForwardResponse(logits=logits.copy(), attention=attention)


class RecordingProvider:
    """Wraps a provider, counting calls and optionally recording a table."""

    def __init__(self, inner: Provider):
        self.inner = inner
        self.calls = 0
        self.recorded: dict[tuple[tuple[int, ...], str], tuple[np.ndarray, AttentionSnapshot]] = {}

    @property
    def descriptor(self) -> ProviderDescriptor:
        return self.inner.descriptor

    def forward(self, request: ForwardRequest) -> ForwardResponse:
        self.calls += 1
        response = self.inner.forward(request)
        label = canonical_mask_label(request.mask, self.descriptor.layout)
        self.recorded[(request.prefix, label)] = (response.logits.copy(), response.attention)
        return response

    def as_scenario(self, name: str = "recorded") -> ScriptedScenario:
        d = self.descriptor
        return ScriptedScenario(
            descriptor=ProviderDescriptor(d.vocab_size, d.layer_count, d.layout, name),
            table=dict(self.recorded),
        )


class Transport(Protocol):
    def send(self, message: dict) -> None: ...

    def recv(self) -> dict: ...

    def close(self) -> None: ...


class SubprocessTransport:
    """Newline-delimited JSON over stdin/stdout of a spawned adapter."""

    def __init__(self, command: Sequence[str]):
        try:
            self.proc = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ProviderError(f"failed to spawn adapter {command!r}: {exc}") from exc

    def send(self, message: dict) -> None:
        assert self.proc.stdin is not None
        try:
            self.proc.stdin.write(json.dumps(message) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProviderError(f"adapter transport failure: {exc}") from exc

    def recv(self) -> dict:
        assert self.proc.stdout is not None
        line = self.proc.stdout.readline()
        if not line:
            raise ProviderError("adapter closed its output stream")
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed response line: {line!r}") from exc
        if not isinstance(message, dict):
            raise ProtocolError(f"response is not an object: {line!r}")
        return message

    def close(self) -> None:
        try:
            if self.proc.stdin is not None:
                self.proc.stdin.close()
            self.proc.terminate()
            self.proc.wait(timeout=5)
        except Exception:
            self.proc.kill()


class RemoteProvider:
    """Provider client over the wire protocol (handshake, then forwards).

    Any protocol violation marks the connection dead; subsequent calls
    fail fast.
    """

    def __init__(self, transport: Transport):
        self.transport = transport
        self.dead = False
        self._next_id = 0
        self._descriptor = self._handshake()

    def _fail(self, exc: Exception) -> Exception:
        self.dead = True
        self.transport.close()
        return exc

    def _exchange(self, message: dict) -> dict:
        if self.dead:
            raise ProviderError("connection is dead")
        try:
            self.transport.send(message)
            reply = self.transport.recv()
        except (ProtocolError, ProviderError) as exc:
            raise self._fail(exc)
        if reply.get("id") != message["id"]:
            raise self._fail(
                ProtocolError(f"response id {reply.get('id')} != request id {message['id']}")
            )
        if reply.get("type") == "error":
            raise ProviderError(f"adapter error: {reply.get('message')}")
        return reply

    def _handshake(self) -> ProviderDescriptor:
        reply = self._exchange({"id": self._take_id(), "type": "hello"})
        if reply.get("type") != "descriptor":
            raise self._fail(ProtocolError(f"expected descriptor, got {reply.get('type')!r}"))
        try:
            layout = ModalityLayout.from_json(reply["layout"])
            return ProviderDescriptor(
                vocab_size=int(reply["vocab_size"]),
                layer_count=int(reply["layers"]),
                layout=layout,
                name=str(reply.get("name", "remote")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise self._fail(ProtocolError(f"bad descriptor payload: {exc}"))

    def _take_id(self) -> int:
        n = self._next_id
        self._next_id += 1
        return n

    @property
    def descriptor(self) -> ProviderDescriptor:
        return self._descriptor

    def forward(self, request: ForwardRequest) -> ForwardResponse:
        message: dict = {
            "id": self._take_id(),
            "type": "forward",
            "prefix": list(request.prefix),
        }
        if request.mask is not None:
            message["mask"] = request.mask.to_json()
        reply = self._exchange(message)
        if reply.get("type") != "result":
            raise self._fail(ProtocolError(f"expected result, got {reply.get('type')!r}"))
        try:
            logits = as_logits(reply["logits"])
            attention = AttentionSnapshot(np.asarray(reply["attention"], dtype=np.float64))
        except (KeyError, TypeError, ValueError) as exc:
            raise self._fail(ProtocolError(f"bad result payload: {exc}"))
        return ForwardResponse(logits=logits, attention=attention)

    def close(self) -> None:
        self.dead = True
        self.transport.close()
