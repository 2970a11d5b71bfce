"""Fast invariant checks run by ``ifl selfcheck``."""

from __future__ import annotations

import math
import sys
from typing import Callable

import numpy as np

from . import analysis
from .core import (
    ActionKind,
    CorruptionChannel,
    DelayModel,
    LossSpec,
    debias_label,
    expected_loss,
    maturity_prob,
    observation_gate,
    signal_strength,
)
from .environments import EnvironmentSpec, analytic_policy_loss, build_packing_family
from .harness.config import parse_config
from .harness.simulation import run_simulation
from .policies import enumerate_policy_class


def _close(a: float, b: float, tol: float = 1e-9) -> bool:
    return math.isclose(a, b, rel_tol=tol, abs_tol=tol)


def check_losses() -> bool:
    losses = LossSpec.constant(1)
    return (
        _close(expected_loss(0, ActionKind.APPROVE, 1.0, losses), 1.0)
        and _close(expected_loss(0, ActionKind.CHALLENGE, 0.37, losses), 0.2)
        and _close(expected_loss(0, ActionKind.DECLINE, 0.25, losses), 0.3)
    )


def check_channel() -> bool:
    ch = CorruptionChannel(0.2, 0.1)
    # the debiased label is unbiased for both latent values
    means = []
    for latent in (0, 1):
        p_one = 1 - ch.eps10 if latent else ch.eps01
        means.append(p_one * debias_label(ch, 1) + (1 - p_one) * debias_label(ch, 0))
    return _close(signal_strength(ch), 0.7) and _close(means[0], 0.0) and _close(means[1], 1.0)


def check_delay_and_gate() -> bool:
    ok = maturity_prob(DelayModel.geometric(0.5), 1) == 0.75
    ok &= maturity_prob(DelayModel.constant(5), 4) == 0.0 and maturity_prob(DelayModel.constant(5), 5) == 1.0
    for action in ActionKind:
        for censored in (0, 1):
            for delay in range(4):
                for remaining in range(4):
                    gate = observation_gate(action, censored, delay, remaining)
                    expect = action != ActionKind.DECLINE and not censored and delay <= remaining
                    ok &= bool(gate) == expect
    return bool(ok)


def check_floors() -> bool:
    p = analysis.FloorParams(T=10_000, log_N=math.log(16))
    base = analysis.regret_floor(p)
    return (
        _close(base, math.sqrt(30_000 * math.log(16)))
        and _close(analysis.impairment_index(0.5, 0.5, 0.5), 16.0)
        and _close(analysis.average_q(0.2, 0.1, 0.8, 0.2, 0.1), 0.4032)
        and _close(analysis.conditional_q(0.8, 0.2, 0.1, 0.3), 0.28224)
        and analysis.jensen_gap([0.5, 0.5], [0.5, 0.5])[2] == 0.0
    )


def check_packing() -> bool:
    template = EnvironmentSpec.homogeneous([0.3] * 4, [0.25] * 4)
    policies = enumerate_policy_class(4, 8, seed=2)
    family = build_packing_family(8, 0.05, template, policies)
    for j, env in enumerate(family.environments):
        losses = np.array([analytic_policy_loss(env, pol) for pol in policies])
        others = np.delete(losses, j)
        if int(np.argmin(losses)) != j or others.min() < losses[j] + 0.05 - 1e-12:
            return False
    return True


def check_simulation() -> bool:
    raw = {
        "schema_version": 1,
        "horizon": 500,
        "seeds": 1,
        "environment": {"type": "packing", "num_cells": 4, "num_policies": 8, "gap": 0.05},
        "policy_class": {"max_size": 8, "seed": 2},
        "impairments": {"gamma": 0.3, "eps_sum": 0.2, "delay": {"kind": "geometric", "rate": 0.1}},
    }
    result = run_simulation(parse_config(raw), 0)
    total = result.matured_count + result.suppressed_count + result.censored_count + result.expired_count
    oracle = run_simulation(parse_config({**raw, "learner": {"kind": "static-oracle"}}), 0)
    return total == 500 and all(r == 0.0 for r in oracle.regret_trajectory)


CHECKS: list[tuple[str, Callable[[], bool]]] = [
    ("expected losses", check_losses),
    ("channel inverse", check_channel),
    ("delay maturity and observation gate", check_delay_and_gate),
    ("closed-form floors", check_floors),
    ("packing soundness", check_packing),
    ("simulation conservation and comparator", check_simulation),
]


def run_checks(verbose: bool = True) -> list[str]:
    """Run every check; returns the names of the failing ones."""
    failures = []
    for name, check in CHECKS:
        try:
            ok = check()
        except Exception as exc:  # noqa: BLE001
            ok = False
            name = f"{name} ({exc})"
        if not ok:
            failures.append(name)
        if verbose:
            sys.stdout.write(f"{'ok  ' if ok else 'FAIL'} {name}\n")
    return failures
