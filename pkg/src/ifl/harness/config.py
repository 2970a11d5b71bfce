"""Scenario configuration: a single JSON document with ``schema_version: 1``.

Unknown keys are rejected everywhere so that a typo cannot silently fall
back to a default. See ``docs/schema.md`` for the full layout.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from ..core import CorruptionChannel, DelayModel, DomainError, LossSpec
from ..environments import (
    ConstructionError,
    EnvironmentSpec,
    FastSlowPartition,
    build_fast_slow_family,
    build_hetero_network,
    build_packing_family,
    env_from_dict,
    issuer_from_dict,
)
from ..learners import BEHAVIORS
from ..policies import PolicyClass, enumerate_policy_class, policy_class_from_labels

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


TOP_KEYS = {
    "schema_version",
    "horizon",
    "report_every",
    "seeds",
    "master_seed",
    "environment",
    "policy_class",
    "learner",
    "impairments",
    "analysis",
    "max_runs",
}
ENV_KEYS = {
    "packing": {"type", "num_cells", "base_fraud_prob", "cell_weights", "losses", "num_policies", "gap", "index"},
    "explicit": {"type", "spec"},
    "hetero": {"type", "issuers", "cells_per_issuer", "fraud_prob", "losses"},
    "fast_slow": {
        "type", "num_cells", "base_fraud_prob", "cell_weights", "losses", "slow_cells",
        "m_fast", "m_slow", "window", "hard_mass", "num_policies", "gap", "index",
    },
}
CLASS_KEYS = {"max_size", "seed", "tables"}
LEARNER_KEYS = {"kind", "learning_rate", "exploration_rate"}
IMPAIRMENT_KEYS = {"gamma", "eps10", "eps01", "eps_sum", "delay"}
DELAY_KEYS = {"kind", "lag", "rate", "table"}
ANALYSIS_KEYS = {"delta_bar", "c"}


def _reject_unknown(d: Any, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown field(s) in {where}: {sorted(unknown)}")


@dataclass(frozen=True)
class ScenarioConfig:
    horizon: int
    environment: EnvironmentSpec
    policies: PolicyClass
    learner_kind: str = "exp-weights"
    learning_rate: float | None = None
    exploration_rate: float = 0.0
    seeds: tuple[int, ...] = (0,)
    master_seed: int = 0
    report_every: int = 1000
    delta_bar: float = 0.0
    c: float = 1.0
    max_runs: int = 10_000
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.report_every < 1:
            raise ConfigError("report_every must be at least 1")
        if self.policies.num_cells != self.environment.num_cells:
            raise ConfigError("policy class and environment disagree on the number of cells")
        if self.learner_kind not in BEHAVIORS:
            raise ConfigError(f"unknown learner kind {self.learner_kind!r}")
        if not 0.0 <= self.exploration_rate <= 1.0:
            raise ConfigError("exploration_rate must lie in [0, 1]")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")

    def checkpoints(self) -> list[int]:
        pts = list(range(self.report_every, self.horizon + 1, self.report_every))
        if not pts or pts[-1] != self.horizon:
            pts.append(self.horizon)
        return pts


def _losses(d: dict | None, n: int) -> LossSpec:
    if d is None:
        return LossSpec.constant(n)
    _reject_unknown(d, {"fn", "ch", "fp"}, "losses")

    def col(key, default):
        v = d.get(key, default)
        return [float(v)] * n if isinstance(v, (int, float)) else v

    return LossSpec(col("fn", 1.0), col("ch", 0.2), col("fp", 0.4))


def _policy_class(d: dict | None, num_cells: int, num_policies: int | None) -> PolicyClass:
    d = d or {}
    _reject_unknown(d, CLASS_KEYS, "policy_class")
    if "tables" in d:
        return policy_class_from_labels(d["tables"])
    max_size = int(d.get("max_size", num_policies or 3**min(num_cells, 6)))
    return enumerate_policy_class(num_cells, max_size, seed=int(d.get("seed", 0)))


def _delay(d: dict) -> DelayModel:
    _reject_unknown(d, DELAY_KEYS, "delay")
    return DelayModel.from_dict(d)


def _base_template(env: dict, n: int) -> EnvironmentSpec:
    base_p = env.get("base_fraud_prob", 0.3)
    fraud = [float(base_p)] * n if isinstance(base_p, (int, float)) else base_p
    return EnvironmentSpec.homogeneous(fraud, env.get("cell_weights"), _losses(env.get("losses"), n))


def _environment(raw: dict) -> tuple[EnvironmentSpec, PolicyClass]:
    env = raw.get("environment")
    if not isinstance(env, dict) or "type" not in env:
        raise ConfigError("environment.type is required")
    kind = env["type"]
    if kind not in ENV_KEYS:
        raise ConfigError(f"unknown environment type {kind!r}")
    _reject_unknown(env, ENV_KEYS[kind], f"environment ({kind})")

    if kind == "explicit":
        spec = env_from_dict(env["spec"])
        return spec, _policy_class(raw.get("policy_class"), spec.num_cells, None)
    if kind == "hetero":
        profiles = [issuer_from_dict(p) for p in env.get("issuers", [])]
        spec = build_hetero_network(
            profiles,
            int(env.get("cells_per_issuer", 1)),
            env.get("fraud_prob", 0.3),
            None,
        )
        if "losses" in env:
            spec = replace(spec, losses=_losses(env["losses"], spec.num_cells))
        return spec, _policy_class(raw.get("policy_class"), spec.num_cells, None)

    n = int(env.get("num_cells", 4))
    num_policies = int(env.get("num_policies", 8))
    policies = _policy_class(raw.get("policy_class"), n, num_policies)
    base = _base_template(env, n)
    gap = float(env.get("gap", 0.05))
    if kind == "packing":
        family = build_packing_family(num_policies, gap, base, policies)
    else:
        slow = set(int(c) for c in env.get("slow_cells", []))
        partition = FastSlowPartition(
            set(range(n)) - slow, slow, float(env.get("m_fast", 1.0)), float(env.get("m_slow", 1.0))
        )
        family = build_fast_slow_family(
            partition,
            float(env.get("hard_mass", 1.0)),
            base,
            num_policies,
            gap,
            policies,
            int(env.get("window", 100)),
        )
    index = int(env.get("index", 0))
    if not 0 <= index < family.size:
        raise ConfigError(f"environment index {index} outside the family of {family.size}")
    return family.environments[index], family.policies


def _apply_impairments(spec: EnvironmentSpec, imp: dict | None) -> EnvironmentSpec:
    if not imp:
        return spec
    _reject_unknown(imp, IMPAIRMENT_KEYS, "impairments")
    channel = None
    if "eps_sum" in imp:
        if "eps10" in imp or "eps01" in imp:
            raise ConfigError("give either impairments.eps_sum or eps10/eps01")
        half = float(imp["eps_sum"]) / 2.0
        channel = CorruptionChannel(half, half)
    elif "eps10" in imp or "eps01" in imp:
        channel = CorruptionChannel(float(imp.get("eps10", 0.0)), float(imp.get("eps01", 0.0)))
    delay = _delay(imp["delay"]) if "delay" in imp else None
    gamma = float(imp["gamma"]) if "gamma" in imp else None
    return spec.with_impairments(gamma=gamma, channel=channel, delay=delay)


def parse_config(raw: dict) -> ScenarioConfig:
    """Build a validated :class:`ScenarioConfig` from a decoded JSON document."""
    _reject_unknown(raw, TOP_KEYS, "scenario")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    if "horizon" not in raw:
        raise ConfigError("horizon is required")
    learner = raw.get("learner", {})
    _reject_unknown(learner, LEARNER_KEYS, "learner")
    analysis = raw.get("analysis", {})
    _reject_unknown(analysis, ANALYSIS_KEYS, "analysis")
    try:
        spec, policies = _environment(raw)
        spec = _apply_impairments(spec, raw.get("impairments"))
        seeds = raw.get("seeds", [0])
        if isinstance(seeds, int):
            seeds = list(range(seeds))
        lr = learner.get("learning_rate")
        return ScenarioConfig(
            horizon=int(raw["horizon"]),
            environment=spec,
            policies=policies,
            learner_kind=learner.get("kind", "exp-weights"),
            learning_rate=None if lr is None else float(lr),
            exploration_rate=float(learner.get("exploration_rate", 0.0)),
            seeds=tuple(int(s) for s in seeds),
            master_seed=int(raw.get("master_seed", 0)),
            report_every=int(raw.get("report_every", 1000)),
            delta_bar=float(analysis.get("delta_bar", 0.0)),
            c=float(analysis.get("c", 1.0)),
            max_runs=int(raw.get("max_runs", 10_000)),
            raw=copy.deepcopy(raw),
        )
    except ConfigError:
        raise
    except (ConstructionError, DomainError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_json(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def load_config(path: str | Path) -> ScenarioConfig:
    return parse_config(load_json(path))


def set_path(raw: dict, path: str, value: Any) -> dict:
    """Copy of ``raw`` with the dotted ``path`` set to ``value``."""
    out = copy.deepcopy(raw)
    node = out
    parts = path.split(".")
    for part in parts[:-1]:
        nxt = node.get(part)
        if nxt is None:
            nxt = node[part] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"path {path!r} walks through a non-object at {part!r}")
        node = nxt
    node[parts[-1]] = value
    return out


def mean_delay(spec: EnvironmentSpec) -> float:
    return math.fsum(w * spec.issuer(c).delay.mean() for c, w in enumerate(spec.cell_weights))

