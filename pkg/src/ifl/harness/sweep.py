"""Grid sweeps over scenario parameters, with a floor value per grid point."""

from __future__ import annotations

import itertools
import json
import math
import os
from statistics import median
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

from ..analysis import FloorParams, regret_floor
from .config import ConfigError, ScenarioConfig, mean_delay, parse_config, set_path
from .simulation import run_simulation

RATE_COLUMNS = ("gamma_hat", "delta_hat", "m_hat", "D_hat", "q_hat")
THREADS_ENV = "IFL_THREADS"


@dataclass
class SweepTable:
    grid_columns: list[str]
    rows: list[dict] = field(default_factory=list)

    @property
    def columns(self) -> list[str]:
        return [*self.grid_columns, "seed", *RATE_COLUMNS, "final_regret", "floor_value"]

    def __len__(self) -> int:
        return len(self.rows)


def floor_for(config: ScenarioConfig) -> float | None:
    """Regret floor from the scenario's declared impairment parameters.

    D is the expected cumulative finite delay ``T * E[delay]``; gamma and the
    corruption rates are cell-weighted network averages; delta comes from
    ``analysis.delta_bar``. Returns None for a single-policy class.
    """
    env = config.environment
    n = config.policies.size
    if n < 2:
        return None
    w = env.cell_weights
    gamma = math.fsum(wc * env.issuer(c).gamma for c, wc in enumerate(w))
    eps10 = math.fsum(wc * env.issuer(c).channel.eps10 for c, wc in enumerate(w))
    eps01 = math.fsum(wc * env.issuer(c).channel.eps01 for c, wc in enumerate(w))
    params = FloorParams(
        T=config.horizon,
        log_N=math.log(n),
        D=config.horizon * mean_delay(env),
        gamma_bar=gamma,
        delta_bar=config.delta_bar,
        eps10=eps10,
        eps01=eps01,
        c=config.c,
    )
    return regret_floor(params)


def grid_points(grid: Sequence[tuple[str, Sequence[Any]]]) -> list[tuple[Any, ...]]:
    return list(itertools.product(*[values for _, values in grid]))


def _resolve(base_raw: dict, grid, point) -> ScenarioConfig:
    raw = base_raw
    for (path, _), value in zip(grid, point):
        raw = set_path(raw, path, value)
    return parse_config(raw)


def _run_task(args) -> tuple[int, int, dict]:
    point_idx, seed_idx, raw, seed, floor = args
    result = run_simulation(parse_config(raw), seed)
    row = {name: result.realized_rates[name] for name in RATE_COLUMNS}
    row["final_regret"] = result.final_regret
    row["floor_value"] = floor
    return point_idx, seed_idx, row


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def run_sweep(base: ScenarioConfig | dict, grid: Sequence[tuple[str, Sequence[Any]]]) -> SweepTable:
    """Run every (grid point, seed) pair of ``base``.

    Every path is resolved and every grid point validated before the first
    run. Seeds are shared across grid points, so points differ only in the
    swept parameters and not in their random draws. Rows are ordered by grid
    point (in ``itertools.product`` order of the value lists) then by seed,
    whatever the degree of parallelism.
    """
    base_raw = base.raw if isinstance(base, ScenarioConfig) else base
    base_cfg = base if isinstance(base, ScenarioConfig) else parse_config(base)
    grid = [(str(path), list(values)) for path, values in grid]
    for path, values in grid:
        if not values:
            raise ConfigError(f"grid axis {path!r} has no values")
    points = grid_points(grid)
    configs = [_resolve(base_raw, grid, point) for point in points]

    n_runs = len(points) * len(base_cfg.seeds)
    if n_runs > base_cfg.max_runs:
        raise ConfigError(f"sweep needs {n_runs} runs, over the cap of {base_cfg.max_runs}")

    floors = [floor_for(cfg) for cfg in configs]
    tasks = [
        (pi, si, cfg.raw, seed, floors[pi])
        for pi, cfg in enumerate(configs)
        for si, seed in enumerate(cfg.seeds)
    ]
    workers = min(worker_count(), len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        done = [_run_task(task) for task in tasks]
    done.sort(key=lambda item: (item[0], item[1]))

    names = [path for path, _ in grid]
    order = sorted(range(len(names)), key=lambda k: names[k])
    table = SweepTable(grid_columns=[names[k] for k in order])
    for pi, si, stats in done:
        row = {names[k]: points[pi][k] for k in order}
        row["seed"] = configs[pi].seeds[si]
        row.update(stats)
        table.rows.append(row)
    return table


def medians_by_point(table: SweepTable, value: str = "final_regret") -> list[tuple[tuple, float]]:
    """Median of ``value`` across seeds for each grid point, in row order."""

    groups: dict[str, tuple[tuple, list[float]]] = {}
    for row in table.rows:
        point = tuple(row[c] for c in table.grid_columns)
        # grid values may be objects (a delay law), so group on their JSON text
        key = json.dumps(point, sort_keys=True)
        groups.setdefault(key, (point, []))[1].append(row[value])
    return [(point, float(median(vals))) for point, vals in groups.values()]


def parse_grid(doc: dict) -> list[tuple[str, list]]:
    """Grid file: ``{"schema_version": 1, "grid": [{"path": ..., "values": [...]}, ...]}``."""
    if not isinstance(doc, dict):
        raise ConfigError("grid file must hold an object")
    unknown = set(doc) - {"schema_version", "grid"}
    if unknown:
        raise ConfigError(f"unknown field(s) in grid file: {sorted(unknown)}")
    if doc.get("schema_version") != 1:
        raise ConfigError("grid schema_version must be 1")
    axes = []
    for axis in doc.get("grid", []):
        if not isinstance(axis, dict) or set(axis) != {"path", "values"}:
            raise ConfigError("each grid axis needs exactly 'path' and 'values'")
        if not isinstance(axis["values"], list):
            raise ConfigError(f"values for {axis['path']!r} must be a list")
        axes.append((str(axis["path"]), axis["values"]))
    return axes
