"""Run harness shared by the service endpoints and the CLI client.

Each run builds a fresh provider from the scenario (providers are
exclusive to one decode session), executes, and returns machine-readable
reports plus the JSONL-ready trace records. Every statistic in a report
is recomputable from its trace.
"""

from __future__ import annotations

import time

import numpy as np

from .core import AvcdError, DecodeConfig, DecodeTrace, entropy, jsonable, kl_divergence, softmax
from .cd import decode
from .oracle import halving_ratio, kl_masking_vs_noise, taylor_error, taylor_scaling_study
from .scenario import Scenario
from .toymodel import ToyModelProvider


def trace_lines(trace: DecodeTrace) -> list[dict]:
    return [jsonable(step.to_json()) for step in trace.steps]


def summarize_trace(trace: DecodeTrace) -> dict:
    steps = trace.steps
    dominance: dict[str, float] = {}
    if steps:
        for name in steps[0].dominance:
            dominance[name] = float(np.mean([s.dominance[name] for s in steps]))
    return jsonable(
        {
            "tokens_emitted": len(trace.tokens),
            "tokens": trace.tokens,
            "gated_fraction": (
                sum(1 for s in steps if s.gate_skipped) / len(steps) if steps else 0.0
            ),
            "total_forward_passes": trace.total_forward_passes,
            "mean_entropy": float(np.mean([s.entropy for s in steps])) if steps else 0.0,
            "mean_dominance": dominance,
            "combiner": trace.combiner,
            "status": trace.status,
            "error": trace.error,
            "config": trace.config.to_json(),
        }
    )


def _apply_overrides(config: DecodeConfig, overrides: dict | None) -> DecodeConfig:
    if not overrides:
        return config
    return config.override(**overrides)


def run_decode(scenario: Scenario, overrides: dict | None = None, combiner: str = "avcd") -> dict:
    config = _apply_overrides(scenario.config, overrides)
    provider = scenario.build_provider()
    try:
        trace = decode(provider, scenario.prompt, scenario.layout, config, combiner=combiner)
    finally:
        close = getattr(provider, "close", None)
        if close:
            close()
    return {"report": summarize_trace(trace), "trace": trace_lines(trace), "status": trace.status}


def _divergence_vs_base(row_trace: DecodeTrace, base_trace: DecodeTrace) -> list[float]:
    out = []
    for a, b in zip(row_trace.steps, base_trace.steps):
        try:
            out.append(kl_divergence(softmax(a.combined), softmax(b.combined)))
        except AvcdError:
            out.append(float("inf"))
    return out


def run_ablate(scenario: Scenario, overrides: dict | None = None) -> dict:
    """Side-by-side decodes over the six-row ablation grid: base, one
    contrast row per dominance-derived mask (two single spans plus their
    union), the equal-weight trimodal rule, and the full rule."""
    config = _apply_overrides(scenario.config, overrides)
    trimodal = len(scenario.layout.spans) == 3
    if trimodal:
        rows = [
            ("base", "base", None),
            ("single-1", "avcd", 0),
            ("single-2", "avcd", 1),
            ("joint", "avcd", 2),
            ("naive", "naive", None),
            ("avcd", "avcd", None),
        ]
    else:
        rows = [("base", "base", None), ("single", "bimodal", None), ("avcd", "avcd", None)]
    results = []
    base_trace = None
    for name, combiner, single_mask_index in rows:
        provider = scenario.build_provider()
        try:
            trace = decode(
                provider, scenario.prompt, scenario.layout, config,
                combiner=combiner, single_mask_index=single_mask_index,
            )
        finally:
            close = getattr(provider, "close", None)
            if close:
                close()
        if base_trace is None:
            base_trace = trace
        results.append(
            {
                "row": name,
                "report": summarize_trace(trace),
                "divergence_vs_base": jsonable(_divergence_vs_base(trace, base_trace)),
            }
        )
    return {"rows": results, "trimodal": trimodal}


def run_sweep_tau(scenario: Scenario, taus: list[float], overrides: dict | None = None) -> dict:
    """Gate-threshold sweep; forward passes per token must be nonincreasing
    in tau, the desk-scale speed-tradeoff mechanism."""
    if len(taus) < 2:
        raise AvcdError("need at least two tau values")
    points = []
    for tau in sorted(taus):
        merged = dict(overrides or {})
        merged["tau"] = tau
        config = _apply_overrides(scenario.config, merged)
        provider = scenario.build_provider()
        start = time.perf_counter()
        try:
            trace = decode(provider, scenario.prompt, scenario.layout, config)
        finally:
            close = getattr(provider, "close", None)
            if close:
                close()
        elapsed = time.perf_counter() - start
        n = max(len(trace.tokens), 1)
        points.append(
            {
                "tau": tau,
                "gated_fraction": summarize_trace(trace)["gated_fraction"],
                "gated_steps": [s.step for s in trace.steps if s.gate_skipped],
                "passes_per_token": trace.total_forward_passes / n,
                "seconds_per_token": elapsed / n,
                "tokens": trace.tokens,
            }
        )
    passes = [p["passes_per_token"] for p in points]
    monotone = all(a >= b - 1e-12 for a, b in zip(passes, passes[1:]))
    if not monotone:
        raise AvcdError(f"forward passes not nonincreasing in tau: {passes}")
    return jsonable({"points": points, "passes_nonincreasing": monotone})


def run_diagnose_kl(
    scenario: Scenario,
    samples: int = 100,
    sigma: float = 1.0,
    mask_ratio: float | None = None,
) -> dict:
    """Masking-vs-noise KL diagnostic; needs the toy provider, since the
    noise baseline corrupts embeddings."""
    if scenario.kind != "toy":
        raise AvcdError("diagnose-kl requires a toy-model scenario (embedding access)")
    provider = scenario.build_provider()
    assert isinstance(provider, ToyModelProvider)
    cfg = provider.state.config
    rng = np.random.Generator(np.random.PCG64(scenario.config.seed))
    prompts = [
        tuple(int(t) for t in rng.integers(0, cfg.vocab_size, size=cfg.layout.total_tokens))
        for _ in range(samples)
    ]
    result = kl_masking_vs_noise(
        provider,
        prompts,
        mask_ratio=mask_ratio if mask_ratio is not None else scenario.config.mask_ratio,
        sigma=sigma,
        noise_seed=scenario.config.seed,
    )
    result["num_samples"] = samples
    result["warning"] = "below the 100-sample protocol" if samples < 100 else None
    return jsonable(result)


def run_verify_approx(
    num_samples: int = 400,
    seed: int = 0,
    delta_max: float = 0.1,
    report_only: bool = False,
) -> dict:
    """Quadratic-error scaling study with the fixed hand-check samples."""
    study = taylor_scaling_study(num_samples=num_samples, seed=seed, delta_max_ratio=delta_max)
    ok = 1.9 <= study["fitted_order"] <= 2.1
    hand = [taylor_error(1.0, 1.0), taylor_error(1.2, 0.8), taylor_error(1.1, 0.9)]
    return jsonable(
        {
            "study": study,
            "ok": ok,
            "report_only": report_only,
            "halving_ratio": halving_ratio(seed=seed),
            "hand_samples": [s.to_json() for s in hand],
        }
    )
