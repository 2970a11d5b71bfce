"""Command-line entry point: ``ifl <subcommand> ...``.

Exit codes: 0 success, 2 configuration error (including usage errors),
1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from . import analysis
from .core import DomainError
from .harness.config import ConfigError, load_config, load_json
from .harness.output import emit_results
from .harness.simulation import run_simulation
from .harness.sweep import parse_grid, run_sweep

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _table(rows: list[tuple[str, object]]) -> str:
    width = max(len(k) for k, _ in rows)
    lines = []
    for key, value in rows:
        text = format(value, ".10g") if isinstance(value, float) else str(value)
        lines.append(f"{key:<{width}}  {text}")
    return "\n".join(lines) + "\n"


def _emit_record(record: dict, as_json: bool) -> None:
    if as_json:
        sys.stdout.write(json.dumps(record) + "\n")
    else:
        sys.stdout.write(_table(list(record.items())))


def _floor_params(path: str) -> tuple[analysis.FloorParams, dict]:
    doc = load_json(path)
    if not isinstance(doc, dict):
        raise ConfigError("params file must hold an object")
    if doc.get("schema_version", 1) != 1:
        raise ConfigError("params schema_version must be 1")
    return analysis.FloorParams.from_dict(doc), doc


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    seed = config.seeds[0] if args.seed is None else args.seed
    result = run_simulation(config, seed)
    emit_results(result, args.format, args.out)
    summary = {"seed": seed, "final_regret": result.final_regret, **result.realized_rates}
    sys.stderr.write(_table(list(summary.items())))
    return EXIT_OK


def cmd_bound(args) -> int:
    p, _ = _floor_params(args.params)
    m_bar = 1.0 if p.m_bar is None else p.m_bar
    record = {
        "floor": analysis.regret_floor(p),
        "floor_with_maturity": analysis.regret_floor_with_maturity(p) if p.m_bar is not None else None,
        "q_bar": analysis.average_q(p.gamma_bar, p.delta_bar, m_bar, p.eps10, p.eps01),
        "information_factor": (1 - p.gamma_bar) * (1 - p.delta_bar) * (1 - p.eps_sum) ** 2,
    }
    _emit_record(record, args.json)
    return EXIT_OK


def cmd_statics(args) -> int:
    p, _ = _floor_params(args.params)
    ranked = analysis.rank_sensitivities(analysis.marginal_sensitivities(p))
    if args.json:
        for rank, s in enumerate(ranked, 1):
            record = {"rank": rank, "parameter": s.name, "partial": s.closed_form,
                      "finite_difference": s.finite_difference}
            sys.stdout.write(json.dumps(record) + "\n")
    else:
        sys.stdout.write(f"floor shape {analysis.regret_floor(p):.6g}\n")
        sys.stdout.write(f"{'rank':<6}{'parameter':<12}{'partial':>14}{'finite diff':>14}\n")
        for rank, s in enumerate(ranked, 1):
            sys.stdout.write(f"{rank:<6}{s.name:<12}{s.closed_form:>14.6g}{s.finite_difference:>14.6g}\n")
    return EXIT_OK


def cmd_hetero(args) -> int:
    doc = load_json(args.network)
    allowed = {"schema_version", "K", "T", "D", "N", "log_N", "c_prime", "issuers"}
    if not isinstance(doc, dict) or set(doc) - allowed:
        raise ConfigError(f"unknown field(s) in network file: {sorted(set(doc) - allowed)}")
    if doc.get("schema_version", 1) != 1:
        raise ConfigError("network schema_version must be 1")
    log_n = doc["log_N"] if "log_N" in doc else math.log(doc["N"])
    issuers, maturities = [], []
    for raw in doc["issuers"]:
        extra = set(raw) - {"alpha", "gamma", "delta", "eps_sum", "m"}
        if extra:
            raise ConfigError(f"unknown issuer field(s): {sorted(extra)}")
        issuers.append(analysis.IssuerSummary(raw["alpha"], raw.get("gamma", 0.0),
                                              raw.get("delta", 0.0), raw.get("eps_sum", 0.0)))
        maturities.append(raw.get("m", 1.0))
    etas = [analysis.impairment_index(i.gamma, i.delta, i.eps_sum) for i in issuers]
    qs = [analysis.conditional_q(m, i.gamma, i.delta, i.eps_sum) for m, i in zip(maturities, issuers)]
    mean_inv, inv_mean, gap = analysis.jensen_gap(qs, [i.alpha for i in issuers])
    record = {
        "eta": etas,
        "weighted_index": analysis.weighted_index(issuers),
        "hetero_floor": analysis.hetero_floor(issuers, doc.get("K", 3), doc["T"], doc.get("D", 0.0),
                                              log_n, doc.get("c_prime", 1.0)),
        "variance_penalty": analysis.variance_penalty(issuers),
        "mean_inverse_q": mean_inv,
        "inverse_mean_q": inv_mean,
        "jensen_gap": gap,
    }
    if args.json:
        sys.stdout.write(json.dumps(record) + "\n")
    else:
        rows = [(f"eta[{k}]", e) for k, e in enumerate(etas)]
        rows += [(k, v) for k, v in record.items() if k != "eta"]
        sys.stdout.write(_table(rows))
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    grid = parse_grid(load_json(args.grid))
    table = run_sweep(config, grid)
    emit_results(table, args.format, args.out)
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    from .selfcheck import run_checks

    failures = run_checks(verbose=not args.quiet)
    return EXIT_OK if not failures else EXIT_RUNTIME


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ifl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run one seeded scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="-")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bound", help="regret floor, maturity variant and coarse observable fraction")
    p.add_argument("--params", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("sweep", help="run a parameter grid")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("statics", help="ranked marginal sensitivities of the floor")
    p.add_argument("--params", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_statics)

    p = sub.add_parser("hetero", help="issuer indices, heterogeneous floor and penalties")
    p.add_argument("--network", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_hetero)

    p = sub.add_parser("selfcheck", help="run the fast invariant suite")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, DomainError, KeyError, TypeError) as exc:
        sys.stderr.write(f"ifl: configuration error: {exc}\n")
        return EXIT_CONFIG
    except OSError as exc:
        sys.stderr.write(f"ifl: I/O error: {exc}\n")
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(f"ifl: error: {exc}\n")
        return EXIT_RUNTIME


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
