import json
import math
import statistics

import pytest

from ifl.core import DelayModel, maturity_prob
from ifl.harness import ConfigError, parse_config, run_simulation
from ifl.harness.config import set_path
from ifl.harness.output import emit_results, read_csv, render
from ifl.harness.simulation import measure_realized_rates
from ifl.harness.sweep import SweepTable, floor_for, medians_by_point, parse_grid, run_sweep
from scenarios import PACKING, explicit, scenario

SHORT = scenario(horizon=2_000, report_every=500, seeds=3)


def counts(result):
    return result.matured_count + result.suppressed_count + result.censored_count + result.expired_count


class TestConfig:
    def test_parses_packing(self):
        cfg = parse_config(PACKING)
        assert cfg.policies.size == 8 and cfg.environment.num_cells == 4
        assert cfg.seeds == tuple(range(20))
        assert cfg.checkpoints() == [5000, 10000, 15000, 20000]

    @pytest.mark.parametrize(
        "mutation",
        [
            {"bogus": 1},
            {"schema_version": 2},
            {"learner": {"kind": "exp-weights", "temperature": 1}},
            {"learner": {"kind": "oracle-ish"}},
            {"impairments": {"gamma": 0.2, "noise": 0.1}},
            {"impairments": {"eps_sum": 1.0}},
            {"environment": {"type": "packing", "num_cells": 4, "index": 99}},
            {"environment": {"type": "mystery"}},
            {"horizon": 0},
            {"seeds": []},
        ],
    )
    def test_rejects(self, mutation):
        with pytest.raises(ConfigError):
            parse_config(scenario(SHORT, **mutation))

    def test_eps_sum_splits_evenly(self):
        cfg = parse_config(scenario(SHORT, impairments={"eps_sum": 0.3}))
        channel = cfg.environment.issuer(0).channel
        assert channel.eps10 == pytest.approx(0.15) and channel.eps01 == pytest.approx(0.15)

    def test_set_path(self):
        raw = set_path(SHORT, "impairments.delay.lag", 7)
        assert raw["impairments"]["delay"]["lag"] == 7 and "impairments" not in SHORT
        with pytest.raises(ConfigError):
            set_path(SHORT, "horizon.inner", 3)

    def test_hetero_and_fast_slow_types(self):
        hetero = scenario(
            SHORT,
            environment={
                "type": "hetero",
                "cells_per_issuer": 2,
                "issuers": [{"volume_share": 0.6, "gamma": 0.2}, {"volume_share": 0.4, "eps10": 0.1}],
            },
            policy_class={"max_size": 6, "seed": 1},
        )
        cfg = parse_config(hetero)
        assert cfg.environment.num_cells == 4 and len(cfg.environment.network) == 2
        fast_slow = scenario(
            SHORT,
            environment={
                "type": "fast_slow", "num_cells": 4, "slow_cells": [2, 3], "m_fast": 0.9, "m_slow": 0.1,
                "window": 10, "hard_mass": 1.0, "num_policies": 3, "gap": 0.02,
            },
            policy_class={"max_size": 3},
        )
        cfg = parse_config(fast_slow)
        assert cfg.environment.fraud_prob[:2] == (0.3, 0.3)


class TestSimulation:
    def test_static_oracle_has_zero_regret(self):
        cfg = parse_config(scenario(SHORT, learner={"kind": "static-oracle"}, impairments={"gamma": 0.4}))
        result = run_simulation(cfg, 0)
        assert result.regret_trajectory == [0.0] * len(result.checkpoints)

    def test_total_censorship_carries_no_information(self):
        imp = {"gamma": 1.0}
        exp = run_simulation(parse_config(scenario(SHORT, impairments=imp)), 1)
        uni = run_simulation(parse_config(scenario(SHORT, impairments=imp, learner={"kind": "uniform-random"})), 1)
        assert exp.matured_count == 0
        assert exp.final_weights == pytest.approx([1 / 8] * 8, abs=0)
        assert exp.regret_trajectory == uni.regret_trajectory

    def test_two_cell_packing_learns(self):
        raw = scenario(
            environment={"type": "packing", "num_cells": 2, "num_policies": 4, "gap": 0.05},
            policy_class={"max_size": 4},
            learner={"kind": "exp-weights"},
        )
        cfg = parse_config(raw)
        mass = []
        for seed in cfg.seeds:
            result = run_simulation(cfg, seed)
            mass.append(result.final_weights[result.comparator])
        assert statistics.median(mass) > 0.9

    def test_conservation_under_every_gate(self):
        raw = scenario(SHORT, impairments={"gamma": 0.3, "eps_sum": 0.2, "delay": {"kind": "geometric", "rate": 0.01}})
        for seed in range(3):
            result = run_simulation(parse_config(raw), seed)
            assert counts(result) == result.horizon
            assert result.expired_count > 0 and result.censored_count > 0 and result.suppressed_count > 0

    def test_delay_zero_feedback_is_immediate(self):
        cfg = parse_config(explicit([0.0], [["approve"], ["decline"]], horizon=50, report_every=50))
        result = run_simulation(cfg, 0)
        assert result.expired_count == 0 and result.delivered_delay == 0

    def test_constant_delay_bookkeeping(self):
        raw = explicit([0.0], [["approve"]], horizon=100, report_every=100, impairments={"delay": {"kind": "constant", "lag": 10}})
        result = run_simulation(parse_config(raw), 0)
        # rounds 91..100 mature after the horizon
        assert result.matured_count == 90 and result.expired_count == 10
        assert result.delivered_delay == 900
        assert result.realized_rates["m_hat"] == pytest.approx(0.9)

    def test_determinism(self):
        cfg = parse_config(scenario(SHORT, impairments={"gamma": 0.2, "delay": {"kind": "geometric", "rate": 0.2}}))
        a, b = run_simulation(cfg, 5), run_simulation(cfg, 5)
        assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
        c = run_simulation(cfg, 6)
        assert a.regret_trajectory != c.regret_trajectory

    def test_comparator_is_class_minimum(self):
        from ifl.environments import analytic_policy_loss

        cfg = parse_config(SHORT)
        result = run_simulation(cfg, 0)
        losses = [analytic_policy_loss(cfg.environment, p) for p in cfg.policies]
        assert result.comparator_loss == min(losses) and result.comparator == 3


class TestRealizedRates:
    def test_unimpaired_full_observation(self):
        cfg = parse_config(explicit([0.2, 0.3], [["approve", "challenge"]], horizon=1000, report_every=1000))
        rates = run_simulation(cfg, 0).realized_rates
        assert rates["q_hat"] == 1.0 and rates["delta_hat"] == 0.0 and rates["gamma_hat"] == 0.0

    def test_censorship_rate(self):
        raw = explicit([0.2], [["approve"]], horizon=100_000, report_every=100_000, impairments={"gamma": 0.3})
        rates = run_simulation(parse_config(raw), 0).realized_rates
        assert rates["gamma_hat"] == pytest.approx(0.3, abs=0.005)

    def test_all_decline(self):
        raw = explicit([0.2, 0.9], [["decline", "decline"]], horizon=1000, report_every=1000)
        result = run_simulation(parse_config(raw), 0)
        assert result.realized_rates["delta_hat"] == 1.0 and result.matured_count == 0

    def test_rates_converge_to_declared_values(self):
        T = 40_000
        model = {"kind": "geometric", "rate": 0.4}
        raw = explicit([0.3], [["challenge"]], horizon=T, report_every=T, impairments={"gamma": 0.25, "delay": model})
        rates = run_simulation(parse_config(raw), 2).realized_rates
        tol = 4 / math.sqrt(T)
        assert rates["gamma_hat"] == pytest.approx(0.25, abs=tol)
        # a geometric lag is almost never long enough to cross the horizon
        assert rates["m_hat"] == pytest.approx(maturity_prob(DelayModel.geometric(0.4), T), abs=tol)

    def test_measure_matches_counts(self):
        result = run_simulation(parse_config(scenario(SHORT, impairments={"gamma": 0.5})), 0)
        rates = measure_realized_rates(result)
        assert rates["gamma_hat"] == result.censored_count / result.horizon
        assert rates["q_hat"] == result.matured_count / result.horizon

    def test_exploration_reduces_suppression(self):
        tables = [["decline", "approve"], ["approve", "approve"], ["decline", "decline"]]
        fractions = []
        for xi in (0.0, 0.05, 0.2):
            raw = explicit([0.05, 0.6], tables, horizon=5000, report_every=5000, seeds=5,
                           learner={"kind": "exp-weights", "exploration_rate": xi})
            cfg = parse_config(raw)
            fractions.append(statistics.mean(run_simulation(cfg, s).realized_rates["delta_hat"] for s in cfg.seeds))
        assert fractions[0] >= fractions[1] >= fractions[2]


class TestSweep:
    def test_empty_grid(self):
        table = run_sweep(parse_config(SHORT), [])
        assert len(table) == 3 and table.grid_columns == []

    def test_rows_and_columns(self):
        grid = [("impairments.gamma", [0.0, 0.5]), ("analysis.delta_bar", [0.1])]
        table = run_sweep(parse_config(SHORT), grid)
        assert table.columns == [
            "analysis.delta_bar", "impairments.gamma", "seed",
            "gamma_hat", "delta_hat", "m_hat", "D_hat", "q_hat", "final_regret", "floor_value",
        ]
        assert [(r["impairments.gamma"], r["seed"]) for r in table.rows] == [(0.0, 0), (0.0, 1), (0.0, 2), (0.5, 0), (0.5, 1), (0.5, 2)]
        assert table.rows[0]["floor_value"] < table.rows[3]["floor_value"]

    def test_bad_path_fails_before_running(self):
        with pytest.raises(ConfigError):
            run_sweep(parse_config(SHORT), [("impairments.nonsense", [1])])
        with pytest.raises(ConfigError):
            run_sweep(parse_config(SHORT), [("impairments.gamma", [0.1, 2.0])])

    def test_run_cap(self):
        with pytest.raises(ConfigError):
            run_sweep(parse_config(scenario(SHORT, max_runs=5)), [("impairments.gamma", [0.0, 0.5])])

    def test_parallelism_does_not_change_output(self, monkeypatch):
        grid = [("impairments.eps_sum", [0.0, 0.4])]
        monkeypatch.setenv("IFL_THREADS", "1")
        serial = render(run_sweep(parse_config(SHORT), grid))
        monkeypatch.setenv("IFL_THREADS", "2")
        parallel = render(run_sweep(parse_config(SHORT), grid))
        assert serial == parallel

    def test_floor_for(self):
        cfg = parse_config(scenario(SHORT, impairments={"gamma": 0.5, "delay": {"kind": "constant", "lag": 4}}))
        expect = math.sqrt((3 * 2000 + 2000 * 4) * math.log(8) / 0.5)
        assert floor_for(cfg) == pytest.approx(expect, rel=1e-12)

    def test_medians(self):
        table = SweepTable(["x"], [{"x": 1, "final_regret": v} for v in (3.0, 1.0, 2.0)])
        assert medians_by_point(table) == [((1,), 2.0)]

    def test_parse_grid(self):
        doc = {"schema_version": 1, "grid": [{"path": "impairments.gamma", "values": [0, 0.5]}]}
        assert parse_grid(doc) == [("impairments.gamma", [0, 0.5])]
        with pytest.raises(ConfigError):
            parse_grid({"schema_version": 1, "grid": [{"path": "x"}]})
        with pytest.raises(ConfigError):
            parse_grid({"grid": []})


class TestOutput:
    def test_empty_table_is_header_only(self):
        text = render(SweepTable(["g"]))
        assert text == "g,seed,gamma_hat,delta_hat,m_hat,D_hat,q_hat,final_regret,floor_value\n"

    def test_run_rows_match_checkpoints(self):
        result = run_simulation(parse_config(SHORT), 0)
        rows = read_csv(render(result))
        assert len(rows) == len(result.checkpoints)
        assert [r["cumulative_regret"] for r in rows] == result.regret_trajectory
        lines = render(result, "json").splitlines()
        assert [json.loads(line)["round"] for line in lines] == result.checkpoints

    def test_sweep_round_trip(self):
        table = run_sweep(parse_config(SHORT), [("impairments.gamma", [0.1, 0.7])])
        parsed = read_csv(render(table))
        assert parsed == [{c: row.get(c) for c in table.columns} for row in table.rows]
        records = [json.loads(line) for line in render(table, "json").splitlines()]
        assert records == [{c: row.get(c) for c in table.columns} for row in table.rows]

    def test_writes_file(self, tmp_path):
        table = SweepTable(["g"], [])
        out = tmp_path / "t.csv"
        emit_results(table, "csv", out)
        assert out.read_text().startswith("g,seed")
        with pytest.raises(OSError):
            emit_results(table, "csv", tmp_path / "missing" / "t.csv")

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            render(SweepTable([]), "xml")
