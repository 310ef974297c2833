import json

import pytest

from avcd.core import AvcdError
from avcd.runner import (
    run_ablate,
    run_decode,
    run_diagnose_kl,
    run_sweep_tau,
    run_verify_approx,
)
from avcd.scenario import Scenario, gen_scenario


def _scripted():
    return Scenario.from_json(gen_scenario("scripted-minimal"))


def _toy(seed=7):
    return Scenario.from_json(gen_scenario("toy-trimodal", seed=seed))


class TestRunDecode:
    def test_scripted_report(self):
        result = run_decode(_scripted())
        report = result["report"]
        assert result["status"] == "ok"
        assert report["tokens"] == [1, 3]
        assert report["total_forward_passes"] == 5
        assert report["gated_fraction"] == 0.5
        assert len(result["trace"]) == 2

    def test_report_recomputable_from_trace(self):
        result = run_decode(_toy())
        passes = sum(line["forward_passes"] for line in result["trace"])
        assert passes == result["report"]["total_forward_passes"]
        assert [line["chosen"] for line in result["trace"]] == result["report"]["tokens"]

    def test_overrides_applied(self):
        result = run_decode(_scripted(), overrides={"tau": float("inf")})
        assert result["report"]["gated_fraction"] == 1.0
        assert result["report"]["config"]["tau"] == "inf"

    def test_json_serializable(self):
        json.dumps(run_decode(_scripted(), overrides={"tau": float("inf")}))

    def test_combiner_recorded(self):
        assert run_decode(_toy(), combiner="naive")["report"]["combiner"] == "naive"


class TestRunAblate:
    def test_trimodal_six_rows(self):
        result = run_ablate(_toy(seed=3))
        names = [row["row"] for row in result["rows"]]
        assert names == ["base", "single-1", "single-2", "joint", "naive", "avcd"]
        assert result["trimodal"]

    def test_bimodal_three_rows(self):
        result = run_ablate(Scenario.from_json(gen_scenario("toy-bimodal", seed=3)))
        assert [row["row"] for row in result["rows"]] == ["base", "single", "avcd"]

    def test_base_divergence_is_zero(self):
        result = run_ablate(_scripted())
        assert all(d == 0.0 for d in result["rows"][0]["divergence_vs_base"])

    def test_scripted_pass_counts(self):
        result = run_ablate(_scripted())
        by_row = {row["row"]: row["report"]["total_forward_passes"] for row in result["rows"]}
        # base pays 1 pass/step; single-mask rows pay 2 on the non-gated
        # step; trimodal rows pay 4; every row's second step is gated
        assert by_row["base"] == 2
        assert by_row["single-1"] == by_row["single-2"] == by_row["joint"] == 3
        assert by_row["naive"] == by_row["avcd"] == 5


class TestRunSweepTau:
    def test_passes_nonincreasing(self):
        result = run_sweep_tau(_toy(), taus=[0.0, 0.6, float("inf")])
        passes = [p["passes_per_token"] for p in result["points"]]
        assert passes == sorted(passes, reverse=True)
        assert result["passes_nonincreasing"]

    def test_points_sorted_by_tau(self):
        result = run_sweep_tau(_scripted(), taus=[float("inf"), 0.0])
        assert result["points"][0]["tau"] == 0.0

    def test_requires_two_taus(self):
        with pytest.raises(AvcdError):
            run_sweep_tau(_scripted(), taus=[0.5])


class TestRunDiagnoseKl:
    def test_requires_toy(self):
        with pytest.raises(AvcdError, match="toy"):
            run_diagnose_kl(_scripted())

    def test_small_sample_warning_and_fields(self):
        result = run_diagnose_kl(_toy(), samples=5)
        assert result["warning"]
        assert result["num_samples"] == 5
        assert result["mean_kl_mask"] > 0
        assert result["mean_kl_noise"] > 0


class TestRunVerifyApprox:
    def test_defaults_pass(self):
        result = run_verify_approx(num_samples=150, seed=1)
        assert result["ok"]
        assert 3.6 <= result["halving_ratio"] <= 4.4
        hand = {round(s["a"], 3): s["error"] for s in result["hand_samples"]}
        assert hand[1.0] == pytest.approx(0.0, abs=1e-15)
        assert hand[1.2] == pytest.approx(0.020411, abs=5e-4)
