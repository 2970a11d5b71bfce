"""The round loop: draw, act, gate, enqueue, deliver."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import ActionKind, ObservationEvent, delay_from_uniform, flip_with_uniform, stream
from ..environments import cell_loss_table, draw_cells
from ..learners import (
    LearnerState,
    ingest_observation,
    make_baseline,
    oracle_best_policy,
    select_action_from_uniforms,
)
from .config import ScenarioConfig

STREAM_TAGS = ("context", "label", "select", "censor", "delay", "corrupt")


@dataclass
class RunResult:
    seed: int
    horizon: int
    checkpoints: list[int]
    regret_trajectory: list[float]
    final_weights: list[float]
    matured_count: int
    suppressed_count: int
    censored_count: int
    expired_count: int
    delivered_delay: int
    comparator: int
    comparator_loss: float
    realized_rates: dict = field(default_factory=dict)

    @property
    def final_regret(self) -> float:
        return self.regret_trajectory[-1]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "horizon": self.horizon,
            "checkpoints": list(self.checkpoints),
            "regret_trajectory": list(self.regret_trajectory),
            "final_weights": list(self.final_weights),
            "matured_count": self.matured_count,
            "suppressed_count": self.suppressed_count,
            "censored_count": self.censored_count,
            "expired_count": self.expired_count,
            "delivered_delay": self.delivered_delay,
            "comparator": self.comparator,
            "comparator_loss": self.comparator_loss,
            "realized_rates": dict(self.realized_rates),
        }


def measure_realized_rates(result: RunResult) -> dict:
    T = result.horizon
    arrived = result.matured_count + result.expired_count
    return {
        "gamma_hat": result.censored_count / T,
        "delta_hat": result.suppressed_count / T,
        "m_hat": result.matured_count / arrived if arrived else None,
        "D_hat": result.delivered_delay,
        "q_hat": result.matured_count / T,
    }


def _uniforms(master_seed: int, seed: int, horizon: int) -> dict[str, np.ndarray]:
    # one stream per purpose, each independent of the learner's choices, so
    # runs that differ only in an impairment level share every draw
    return {tag: stream(master_seed, seed, tag).random(horizon) for tag in STREAM_TAGS}


def new_learner(config: ScenarioConfig) -> LearnerState:
    return make_baseline(
        config.learner_kind,
        config.policies,
        learning_rate=config.learning_rate,
        horizon=config.horizon,
        exploration_rate=config.exploration_rate,
        env=config.environment,
    )


def run_simulation(config: ScenarioConfig, seed: int, learner: LearnerState | None = None) -> RunResult:
    """One seeded run of ``config``.

    Regret at round t is the learner's expected loss under its action law at
    the drawn cell minus the best-in-class table's expected loss at that cell.
    An event with delay d issued at round t matures at t + d and is delivered
    before the learner acts in that round (a delay-0 label, produced after
    the action, reaches the learner before round t + 1). Events maturing
    after the horizon are counted as expired and never delivered.
    """
    env, policies, T = config.environment, config.policies, config.horizon
    state = learner if learner is not None else new_learner(config)

    best, best_loss = oracle_best_policy(env, policies)
    loss_table = cell_loss_table(env)
    best_actions = policies.action_matrix()[best]
    comparator_cell_loss = loss_table[np.arange(env.num_cells), best_actions]
    # comparator validity: the chosen table attains the class minimum
    assert abs(float(np.dot(env.cell_weights, comparator_cell_loss)) - best_loss) < 1e-12

    u = _uniforms(config.master_seed, seed, T)
    cells = draw_cells(env, u["context"])
    fraud = np.asarray(env.fraud_prob)
    latents = (u["label"] < fraud[cells]).astype(np.int64)
    gammas = [env.issuer(c).gamma for c in range(env.num_cells)]
    channels = [env.issuer(c).channel for c in range(env.num_cells)]
    delays = [env.issuer(c).delay for c in range(env.num_cells)]
    losses = env.losses

    checkpoints = config.checkpoints()
    trajectory: list[float] = []
    next_cp = 0
    regret = 0.0
    matured = suppressed = censored = expired = 0
    delivered_delay = 0
    decline = int(ActionKind.DECLINE)

    def deliver(events, now):
        nonlocal delivered_delay
        for ev in events:
            if ev.maturity_round > now:
                raise AssertionError("observation delivered before it matured")
            ingest_observation(state, ev, channels[ev.context_cell], policies, losses)
            delivered_delay += ev.maturity_round - ev.issued_round

    u_sel, u_cen, u_del, u_cor = u["select"], u["censor"], u["delay"], u["corrupt"]
    for t in range(1, T + 1):
        i = t - 1
        # delay-0 labels from the previous round, then everything maturing now
        due = state.due(t - 1) + state.due(t)
        if due:
            due.sort(key=lambda ev: ev.issued_round)
            deliver(due, t)
        cell = int(cells[i])
        action, propensity, reveal = select_action_from_uniforms(state, policies, cell, u_sel[i])
        dist = state.action_distribution(policies, cell)
        regret += float(dist @ loss_table[cell]) - comparator_cell_loss[cell]
        state.rounds_seen += 1

        if int(action) == decline:
            suppressed += 1
        elif u_cen[i] < gammas[cell]:
            censored += 1
        else:
            lag = delay_from_uniform(delays[cell], u_del[i])
            if lag > T - t:
                expired += 1
            else:
                matured += 1
                state.enqueue(
                    ObservationEvent(
                        issued_round=t,
                        maturity_round=t + lag,
                        context_cell=cell,
                        action_taken=action,
                        corrupted_label=flip_with_uniform(channels[cell], int(latents[i]), u_cor[i]),
                        propensity=propensity,
                        reveal_prob=reveal,
                    )
                )
        if t == checkpoints[next_cp]:
            trajectory.append(regret)
            next_cp += 1

    # delay-0 labels from the final round mature after the last decision
    deliver(state.due(T), T)
    assert state.pending_count() == 0
    assert matured + suppressed + censored + expired == T

    result = RunResult(
        seed=seed,
        horizon=T,
        checkpoints=checkpoints,
        regret_trajectory=trajectory,
        final_weights=[float(w) for w in state.normalized_weights()],
        matured_count=matured,
        suppressed_count=suppressed,
        censored_count=censored,
        expired_count=expired,
        delivered_delay=delivered_delay,
        comparator=best,
        comparator_loss=best_loss,
    )
    result.realized_rates = measure_realized_rates(result)
    return result

