import csv
import json

import numpy as np
import pytest

from gamehedge.cli.config import ConfigError, parse_config
from gamehedge.cli.expr import ExpressionError, parse_payoff_expression
from gamehedge.cli.main import main

BASE = """
model: {down: [0.9, 0.85], up: [1.2, 1.3], rho: 1.02, n: 3}
spot: [1.0, 1.1]
payoff: {kind: call_on_max, params: {K: 1.0}}
"""


def write_job(tmp_path, text, name="job.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(tmp_path, text, command="price", extra=()):
    out = tmp_path / "out"
    code = main([command, "--config", write_job(tmp_path, text), "--out", str(out), *extra])
    return code, out


class TestConfig:
    def test_minimal(self):
        cfg = parse_config(BASE)
        assert cfg.variant == "european"
        assert cfg.market.J == 2 and cfg.market.n == 3
        np.testing.assert_allclose(cfg.spot, [1.0, 1.1])
        assert cfg.document["payoff"]["kind"] == "call_on_max"

    def test_mapping_input(self):
        cfg = parse_config({"model": {"down": [0.9], "up": [1.2], "rho": 1.0, "n": 2},
                            "payoff": {"expression": "max(S1 - 1, 0)"}})
        np.testing.assert_allclose(cfg.spot, [1.0])

    def test_rho_outside_interval(self):
        with pytest.raises(ConfigError, match="requires d_j < rho"):
            parse_config(BASE.replace("rho: 1.02", "rho: 0.8"))

    def test_collects_every_error(self):
        text = BASE.replace("spot: [1.0, 1.1]", "spot: [1.0]") + "fast_path: sometimes\nextra: 1\n"
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert len(info.value.errors) == 3

    def test_unknown_variant(self):
        with pytest.raises(ConfigError, match="unknown variant"):
            parse_config(BASE + "variant: exotic\n")

    def test_gate_warning_at_parse_time(self):
        cfg = parse_config(BASE + "variant: costed\ncost: {kind: proportional, beta: 5.0}\n")
        assert any("admissible bound" in w for w in cfg.warnings)

    def test_fixed_cost_keep_range(self):
        with pytest.raises(ConfigError, match="cost.keep"):
            parse_config(BASE + "variant: costed\ncost: {kind: fixed, keep: 1.5}\n")

    def test_payoff_dimension(self):
        with pytest.raises(ConfigError, match="takes 2 prices"):
            parse_config(BASE.replace("call_on_max, params: {K: 1.0}", "spread, params: {K: 0.0}")
                         .replace("[0.9, 0.85]", "[0.9, 0.85, 0.8]").replace("[1.2, 1.3]", "[1.2, 1.3, 1.4]")
                         .replace("[1.0, 1.1]", "[1.0, 1.1, 1.2]"))


class TestExpressions:
    def test_best_of(self):
        p = parse_payoff_expression("max(S1, S2, 1.0)", 2)
        assert p.kind == "best_of" and p.submodular is True

    def test_call_on_max(self):
        p = parse_payoff_expression("max(max(S1, S2) - 1.1, 0)", 2)
        assert p.kind == "call_on_max"
        assert p([1.3, 1.0]) == pytest.approx(0.2)

    def test_spread(self):
        p = parse_payoff_expression("max(S2 - S1 - 0.1, 0)", 2)
        assert p.kind == "spread"
        assert p([1.0, 1.3]) == pytest.approx(0.2)

    def test_multi_strike(self):
        p = parse_payoff_expression("max(S1 - 1, S2 - 2, 0)", 2)
        assert p.kind == "multi_strike"
        assert p([1.5, 2.2]) == pytest.approx(0.5)

    def test_custom_has_unknown_flags(self):
        p = parse_payoff_expression("S1*S2", 2)
        assert p.kind == "custom"
        assert p.submodular is None and p.convex is None
        assert p([2.0, 3.0]) == pytest.approx(6.0)

    def test_syntax_error_column(self):
        with pytest.raises(ExpressionError) as info:
            parse_payoff_expression("max(S1, ", 2)
        assert info.value.position is not None

    def test_unknown_identifier_column(self):
        with pytest.raises(ExpressionError, match="column 9") as info:
            parse_payoff_expression("max(S1, X, 0)", 2)
        assert info.value.position == 9

    def test_asset_out_of_range(self):
        with pytest.raises(ExpressionError, match="exceeds"):
            parse_payoff_expression("max(S3 - 1, 0)", 2)

    def test_division_refused(self):
        with pytest.raises(ExpressionError, match="not allowed"):
            parse_payoff_expression("S1 / S2", 2)


class TestCommands:
    def test_price_summary(self, tmp_path, capsys):
        code, out = run(tmp_path, BASE)
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["config"]["model"]["n"] == 3
        assert summary["price"] > 0
        assert set(summary["gate"]) == {"kappa1", "kappa2", "delta_n", "beta_max"}
        assert json.loads(capsys.readouterr().out)["price"] == summary["price"]

    def test_interval(self, tmp_path):
        code, out = run(tmp_path, BASE + "variant: interval\n")
        assert code == 0
        s = json.loads((out / "summary.json").read_text())
        assert s["intrinsic_risk"] == pytest.approx(s["upper"] - s["lower"])
        assert s["upper"] >= s["lower"]

    def test_custom_expression_warns(self, tmp_path, capsys):
        text = BASE.replace("{kind: call_on_max, params: {K: 1.0}}", '{expression: "S1*S2"}')
        code, out = run(tmp_path, text, extra=["--fast-path", "auto"])
        assert code == 0
        assert "fast path disabled" in capsys.readouterr().err
        summary = json.loads((out / "summary.json").read_text())
        assert any("fast path disabled" in w for w in summary["warnings"])
        assert "finite-jump" in summary["details"]["price"]["metadata"]["warning"]

    def test_surface_is_reproducible(self, tmp_path):
        text = BASE + "surface: {lower: [0.9, 0.9], upper: [1.1, 1.1], points: 3}\n"
        code, out = run(tmp_path, text, "surface")
        assert code == 0
        first = (out / "surface.csv").read_bytes()
        code, out = run(tmp_path, text, "surface", ["--threads", "3"])
        assert code == 0
        assert (out / "surface.csv").read_bytes() == first
        rows = list(csv.reader(first.decode().splitlines()))
        assert rows[0][:2] == ["z1", "z2"] and len(rows) == 10

    def test_surface_json(self, tmp_path):
        text = BASE + "surface: {lower: [0.9, 0.9], upper: [1.1, 1.1], points: 2}\n"
        code, out = run(tmp_path, text, "surface", ["--format", "json"])
        assert code == 0
        assert len(json.loads((out / "surface.json").read_text())) == 4

    def test_strategy_table(self, tmp_path):
        code, out = run(tmp_path, BASE, "strategy")
        assert code == 0
        rows = list(csv.DictReader((out / "strategy.csv").read_text().splitlines()))
        assert len(rows) == 1 + 4 + 9
        root = rows[0]
        summary = json.loads((out / "summary.json").read_text())
        assert float(root["value"]) == pytest.approx(summary["price"])
        assert {"gamma1", "gamma2", "support"} <= set(root)

    def test_converge_table(self, tmp_path):
        text = """
continuum: {sigma: [0.2, 0.3], r: 0.05, T: 1.0}
convergence: {n: [4, 8, 16]}
spot: [1.0, 1.0]
payoff: {kind: call_on_max, params: {K: 1.0}}
variant: convergence
"""
        code, out = run(tmp_path, text, "converge")
        assert code == 0
        rows = list(csv.reader((out / "convergence.csv").read_text().splitlines()))
        assert rows[0] == ["tau", "n", "discrete", "continuum", "error"]
        assert [r[1] for r in rows[1:]] == ["4", "8", "16"]

    def test_validate(self, tmp_path, capsys):
        code = main(["validate", "--config", write_job(tmp_path, BASE)])
        assert code == 0
        assert json.loads(capsys.readouterr().out)["valid"] is True


class TestExitCodes:
    def test_invalid_input(self, tmp_path, capsys):
        code, _ = run(tmp_path, BASE.replace("rho: 1.02", "rho: 2.0"))
        assert code == 2
        assert "requires u_j > rho" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["price", "--config", str(tmp_path / "absent.yaml")]) == 2

    def test_numerical_failure(self, tmp_path):
        text = """
model: {down: [0.9], up: [1.3], rho: 1.0, n: 1, jump_maps: [["1.1*S1"], ["1.2*S1"]]}
spot: [1.0]
payoff: {expression: "max(S1 - 1, 0)"}
variant: nonlinear_jumps
"""
        code, _ = run(tmp_path, text)
        assert code == 3

    def test_gate_refusal(self, tmp_path, capsys):
        code, _ = run(tmp_path, BASE + "variant: costed\ncost: {kind: proportional, beta: 5.0}\n")
        assert code == 4
        assert "maximal admissible beta" in capsys.readouterr().err

    def test_budget_refusal(self, tmp_path):
        text = """
model: {down: [0.9], up: [1.2], rho: 1.0, n: 12}
spot: [1.0]
payoff: {kind: lookback}
variant: path_dependent
budget: {path_tree: 10}
"""
        code, _ = run(tmp_path, text)
        assert code == 4
