"""Command-line surface: a thin client of the FastAPI service.

By default every command runs against an in-process app instance; pass
--server to talk to a live deployment instead. Exit codes are stable:
0 success, 2 input error, 3 provider/runtime error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

EXIT_INPUT = 2
EXIT_RUNTIME = 3


class ServiceClient:
    """HTTP client over either the in-process app or a remote base URL."""

    def __init__(self, server: str | None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=300.0)
        else:
            from fastapi.testclient import TestClient

            from .service import app

            self._client = TestClient(app, raise_server_exceptions=False)

    def post(self, path: str, payload: dict) -> dict:
        response = self._client.post(path, json=payload)
        body = _body(response)
        if response.status_code >= 500:
            _fail(body.get("error", "runtime error"), EXIT_RUNTIME)
        if response.status_code >= 400:
            _fail(body.get("error") or json.dumps(body.get("detail")), EXIT_INPUT)
        return body


def _body(response) -> dict:
    try:
        return response.json()
    except Exception:
        return {"error": response.text}


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_scenario_file(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        _fail(f"cannot read scenario {path}: {exc}", EXIT_INPUT)
        raise AssertionError  # unreachable


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_trace(path: Path, lines: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for line in lines:
            fh.write(json.dumps(line) + "\n")


def _overrides(**kwargs) -> dict:
    return {k: v for k, v in kwargs.items() if v is not None}


class FloatOrInf(click.ParamType):
    name = "float|inf"

    def convert(self, value, param, ctx):
        try:
            return float(value)
        except (TypeError, ValueError):
            self.fail(f"{value!r} is not a float or 'inf'", param, ctx)


FLOAT_OR_INF = FloatOrInf()


@click.group()
@click.option("--server", default=None, help="Base URL of a running service; in-process if omitted.")
@click.pass_context
def main(ctx: click.Context, server: str | None) -> None:
    ctx.obj = ServiceClient(server)


@main.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=False))
@click.option("--out", "out_dir", default="runs", type=click.Path())
@click.option("--tau", type=FLOAT_OR_INF, default=None)
@click.option("--alpha-v", type=float, default=None)
@click.option("--alpha-a", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--mask-ratio", type=float, default=None)
@click.option("--combiner", type=click.Choice(["avcd", "naive", "bimodal", "base"]), default="avcd")
@click.option("--strategy", type=click.Choice(["greedy", "sample"]), default=None)
@click.option("--seed", type=int, default=None)
@click.pass_obj
def decode(client: ServiceClient, scenario_path, out_dir, tau, alpha_v, alpha_a, beta,
           mask_ratio, combiner, strategy, seed) -> None:
    """Run one decode; write trace.jsonl and report.json under --out."""
    scenario = _load_scenario_file(scenario_path)
    overrides = _overrides(
        tau=tau, alpha_v=alpha_v, alpha_a=alpha_a, beta=beta,
        mask_ratio=mask_ratio, strategy=strategy, seed=seed,
    )
    from .core import jsonable

    result = client.post(
        "/run/decode",
        {"scenario": scenario, "overrides": jsonable(overrides), "combiner": combiner},
    )
    out = Path(out_dir)
    _write_trace(out / "trace.jsonl", result["trace"])
    report = dict(result["report"])
    report["trace_path"] = str(out / "trace.jsonl")
    _write_json(out / "report.json", report)
    click.echo(json.dumps(report, indent=2, sort_keys=True))
    if result.get("status") != "ok":
        _fail(report.get("error") or "provider failure (partial trace written)", EXIT_RUNTIME)


@main.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@click.option("--out", "out_dir", default="runs", type=click.Path())
@click.option("--alpha-v", type=float, default=None)
@click.option("--alpha-a", type=float, default=None)
@click.option("--tau", type=FLOAT_OR_INF, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_obj
def ablate(client: ServiceClient, scenario_path, out_dir, alpha_v, alpha_a, tau, seed) -> None:
    """Run the combiner-ablation grid; write ablate.json under --out."""
    from .core import jsonable

    scenario = _load_scenario_file(scenario_path)
    overrides = _overrides(alpha_v=alpha_v, alpha_a=alpha_a, tau=tau, seed=seed)
    result = client.post("/run/ablate", {"scenario": scenario, "overrides": jsonable(overrides)})
    _write_json(Path(out_dir) / "ablate.json", result)
    click.echo(json.dumps([r["row"] for r in result["rows"]]))


@main.command("sweep-tau")
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@click.option("--out", "out_dir", default="runs", type=click.Path())
@click.option("--tau", "taus", type=FLOAT_OR_INF, multiple=True, required=True)
@click.option("--seed", type=int, default=None)
@click.pass_obj
def sweep_tau(client: ServiceClient, scenario_path, out_dir, taus, seed) -> None:
    """Sweep the entropy-gate threshold; write sweep.json under --out."""
    from .core import jsonable

    if len(taus) < 2:
        _fail("need at least two --tau values", EXIT_INPUT)
    scenario = _load_scenario_file(scenario_path)
    result = client.post(
        "/run/sweep-tau",
        {"scenario": scenario, "taus": jsonable(list(taus)), "overrides": _overrides(seed=seed)},
    )
    _write_json(Path(out_dir) / "sweep.json", result)
    click.echo(json.dumps(result["points"], indent=2))


@main.command("diagnose-kl")
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@click.option("--out", "out_dir", default="runs", type=click.Path())
@click.option("--samples", type=int, default=100)
@click.option("--sigma", type=float, default=1.0)
@click.option("--mask-ratio", type=float, default=None)
@click.pass_obj
def diagnose_kl(client: ServiceClient, scenario_path, out_dir, samples, sigma, mask_ratio) -> None:
    """Masking-vs-noise KL diagnostic; write kl.json under --out."""
    scenario = _load_scenario_file(scenario_path)
    result = client.post(
        "/run/diagnose-kl",
        {"scenario": scenario, "samples": samples, "sigma": sigma, "mask_ratio": mask_ratio},
    )
    if result.get("warning"):
        click.echo(f"warning: {result['warning']}", err=True)
    _write_json(Path(out_dir) / "kl.json", result)
    click.echo(
        json.dumps(
            {"mean_kl_mask": result["mean_kl_mask"], "mean_kl_noise": result["mean_kl_noise"]}
        )
    )


@main.command("verify-approx")
@click.option("--out", "out_dir", default="runs", type=click.Path())
@click.option("--samples", "num_samples", type=int, default=400)
@click.option("--seed", type=int, default=0)
@click.option("--delta-max", type=float, default=0.1)
@click.option("--report-only", is_flag=True, default=False)
@click.pass_obj
def verify_approx(client: ServiceClient, out_dir, num_samples, seed, delta_max, report_only) -> None:
    """Log-of-mean approximation study; nonzero exit unless order is ~2."""
    result = client.post(
        "/run/verify-approx",
        {
            "num_samples": num_samples,
            "seed": seed,
            "delta_max": delta_max,
            "report_only": report_only,
        },
    )
    _write_json(Path(out_dir) / "approx.json", result)
    click.echo(json.dumps(result["study"], indent=2))
    if not result["ok"] and not report_only:
        _fail(f"fitted order {result['study']['fitted_order']} outside [1.9, 2.1]", EXIT_RUNTIME)


@main.command("gen-scenario")
@click.option("--kind", required=True,
              type=click.Choice(["toy-trimodal", "toy-bimodal", "scripted-minimal",
                                 "scripted-mixed-trimodal", "scripted-mixed-bimodal"]))
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", default=None, type=click.Path())
@click.pass_obj
def gen_scenario_cmd(client: ServiceClient, kind, seed, out_path) -> None:
    """Emit a schema-valid scenario file (stdout unless --out)."""
    result = client.post("/scenario/generate", {"kind": kind, "seed": seed})
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    if out_path:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(text)
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host: str, port: int) -> None:
    """Run the service with uvicorn."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
