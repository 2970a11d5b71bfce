"""Online learners over a finite policy class that only see impaired feedback.

The main learner is exponential weights over policy tables. Each matured
label is debiased through the known corruption channel, turned into a loss
estimate for every policy at the event's cell (the loss of every action is
affine in the label), and importance-weighted by the probability that the
outcome was not suppressed by a decline.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .core import (
    NUM_ACTIONS,
    ActionKind,
    CorruptionChannel,
    DomainError,
    LossSpec,
    ObservationEvent,
    debias_label,
)
from .environments import EnvironmentSpec, analytic_policy_loss
from .policies import PolicyClass

EXPONENT_CLIP = 10.0

BEHAVIORS = ("exp-weights", "greedy", "uniform-random", "static-oracle")

_DECLINE = int(ActionKind.DECLINE)
_APPROVE = int(ActionKind.APPROVE)


class ConfigurationError(ValueError):
    pass


class EstimatorError(ValueError):
    pass


def default_learning_rate(num_policies: int, horizon: int, num_actions: int = NUM_ACTIONS) -> float:
    return math.sqrt(math.log(max(num_policies, 2)) / (num_actions * max(horizon, 1)))


@dataclass
class LearnerState:
    log_weights: np.ndarray
    learning_rate: float
    exploration_rate: float = 0.0
    behavior: str = "exp-weights"
    pending: dict = field(default_factory=lambda: defaultdict(list))
    rounds_seen: int = 0
    fixed_policy: int | None = None
    # importance-weighted debiased label totals per cell
    label_sums: dict = field(default_factory=lambda: defaultdict(float))
    label_weights: dict = field(default_factory=lambda: defaultdict(float))

    def __post_init__(self):
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.behavior not in BEHAVIORS:
            raise ConfigurationError(f"unknown learner kind {self.behavior!r}")
        if not 0.0 <= self.exploration_rate <= 1.0:
            raise DomainError("exploration_rate must lie in [0, 1]")
        if self.learning_rate <= 0:
            raise DomainError("learning_rate must be positive")
        if not np.all(np.isfinite(self.log_weights)):
            raise DomainError("log-weights must be finite")
        self._probs = None
        self._masks_key = None
        self._masks = None
        self._dist_cache = {}

    # -- weights -----------------------------------------------------------

    def policy_probs(self) -> np.ndarray:
        """Distribution over policies used for the next draw."""
        if self._probs is None:
            n = len(self.log_weights)
            if self.behavior == "uniform-random":
                probs = np.full(n, 1.0 / n)
            elif self.behavior == "greedy":
                probs = np.zeros(n)
                probs[int(np.argmax(self.log_weights))] = 1.0
            elif self.behavior == "static-oracle":
                probs = np.zeros(n)
                probs[self.fixed_policy] = 1.0
            else:
                z = np.exp(self.log_weights - self.log_weights.max())
                probs = z / z.sum()
            self._probs = probs
            self._dist_cache = {}
        return self._probs

    def normalized_weights(self) -> np.ndarray:
        z = np.exp(self.log_weights - self.log_weights.max())
        return z / z.sum()

    def _action_masks(self, policies: PolicyClass) -> np.ndarray:
        # (num_cells, N, 3) one-hot of each policy's action per cell
        if self._masks_key is not policies:
            acts = policies.action_matrix()
            masks = np.zeros((policies.num_cells, policies.size, NUM_ACTIONS))
            for k in range(policies.size):
                masks[np.arange(policies.num_cells), k, acts[k]] = 1.0
            self._masks, self._masks_key = masks, policies
            self._acts = acts
        return self._masks

    def action_distribution(self, policies: PolicyClass, cell: int) -> np.ndarray:
        """Marginal law of the realized action at ``cell``, exploration included."""
        cached = self._dist_cache.get(cell) if self._probs is not None else None
        if cached is not None and self._masks_key is policies:
            return cached
        dist = self.policy_probs() @ self._action_masks(policies)[cell]
        xi = self.exploration_rate
        if xi > 0.0 and self.behavior != "static-oracle":
            moved = xi * dist[_DECLINE]
            dist[_DECLINE] -= moved
            dist[_APPROVE] += moved
        self._dist_cache[cell] = dist
        return dist

    # -- event queue -------------------------------------------------------

    def enqueue(self, event: ObservationEvent) -> None:
        self.pending[event.maturity_round].append(event)

    def due(self, maturity_round: int) -> list[ObservationEvent]:
        return self.pending.pop(maturity_round, [])

    def pending_count(self) -> int:
        return sum(len(v) for v in self.pending.values())

    def fraud_estimate(self, cell: int) -> float:
        """Importance-weighted mean of debiased labels seen at ``cell``."""
        w = self.label_weights.get(cell, 0.0)
        return self.label_sums.get(cell, 0.0) / w if w > 0 else float("nan")


def select_action_from_uniforms(
    state: LearnerState, policies: PolicyClass, cell: int, u: float
) -> tuple[ActionKind, float, float]:
    """Draw the realized action with a single uniform ``u``.

    Drawing a policy from the weights, taking its action and then turning a
    decline into an approve with probability ``exploration_rate`` gives the
    marginal law of :meth:`LearnerState.action_distribution`; the action is
    sampled from that law directly by inverse CDF.

    Returns (action, propensity of that action, probability of not declining).
    """
    p_approve, p_challenge, p_decline = state.action_distribution(policies, cell).tolist()
    if u < p_approve:
        action, prop = ActionKind.APPROVE, p_approve
    elif u < p_approve + p_challenge or p_decline <= 0.0:
        action, prop = ActionKind.CHALLENGE, p_challenge
    else:
        action, prop = ActionKind.DECLINE, p_decline
    if prop <= 0.0:
        # u landed on a rounding sliver; fall back to the most likely action
        dist = (p_approve, p_challenge, p_decline)
        action = ActionKind(max(range(3), key=lambda a: dist[a]))
        prop = dist[action]
    return action, prop, 1.0 - p_decline


def select_action(
    state: LearnerState, policies: PolicyClass, cell: int, rng: np.random.Generator
) -> tuple[ActionKind, float]:
    action, propensity, _ = select_action_from_uniforms(state, policies, cell, rng.random())
    return action, propensity


def policy_loss_estimates(
    event: ObservationEvent, channel: CorruptionChannel, policies: PolicyClass, losses: LossSpec
) -> np.ndarray:
    """Importance-weighted, debiased loss estimate of every policy at the event's cell."""
    if event.propensity <= 0 or event.reveal_prob <= 0:
        raise EstimatorError("cannot importance-weight an event with zero propensity")
    y_hat = debias_label(channel, event.corrupted_label)
    per_action = np.asarray(losses.action_losses(event.context_cell, y_hat))
    acts = policies.action_matrix()[:, event.context_cell]
    return per_action[acts] / event.reveal_prob


def ingest_observation(
    state: LearnerState,
    event: ObservationEvent,
    channel: CorruptionChannel,
    policies: PolicyClass,
    losses: LossSpec,
) -> LearnerState:
    """Multiplicative-weights update from one matured label (in place; returns state)."""
    if event.propensity <= 0 or event.reveal_prob <= 0:
        raise EstimatorError("cannot importance-weight an event with zero propensity")
    state._action_masks(policies)
    y_hat = debias_label(channel, event.corrupted_label)
    cell = event.context_cell
    inv = 1.0 / event.reveal_prob
    state.label_sums[cell] += y_hat * inv
    state.label_weights[cell] += inv
    if state.behavior in ("uniform-random", "static-oracle"):
        return state
    eta = state.learning_rate
    # clip the per-action exponent; every policy inherits its action's value
    step = np.array(
        [min(EXPONENT_CLIP, max(-EXPONENT_CLIP, -eta * x * inv)) for x in losses.action_losses(cell, y_hat)]
    )
    lw = state.log_weights + step[state._acts[:, cell]]
    state.log_weights = lw - lw.max()
    state._probs = None
    return state


def oracle_best_policy(env: EnvironmentSpec, policies: PolicyClass) -> tuple[int, float]:
    """Best-in-class policy by analytic loss; ties go to the lowest index."""
    losses = [analytic_policy_loss(env, p) for p in policies]
    best = min(range(len(losses)), key=lambda k: (losses[k], k))
    return best, losses[best]


def make_baseline(
    kind: str,
    policies: PolicyClass,
    learning_rate: float | None = None,
    horizon: int | None = None,
    exploration_rate: float = 0.0,
    env: EnvironmentSpec | None = None,
) -> LearnerState:
    """Fresh learner of the given kind with uniform initial weights.

    ``static-oracle`` reads the ground truth of ``env`` and always plays the
    best-in-class table; it calibrates the regret axis and is not a learner.
    """
    if kind not in BEHAVIORS:
        raise ConfigurationError(f"unknown learner kind {kind!r}; expected one of {BEHAVIORS}")
    if learning_rate is None:
        learning_rate = default_learning_rate(policies.size, horizon or 1)
    fixed = None
    if kind == "static-oracle":
        if env is None:
            raise ConfigurationError("static-oracle needs the ground-truth environment")
        fixed, _ = oracle_best_policy(env, policies)
        exploration_rate = 0.0
    return LearnerState(
        log_weights=np.zeros(policies.size),
        learning_rate=learning_rate,
        exploration_rate=exploration_rate,
        behavior=kind,
        fixed_policy=fixed,
    )
