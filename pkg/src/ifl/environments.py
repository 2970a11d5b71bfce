"""Ground-truth worlds: hard packing families, issuer networks, fast/slow splits."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .core import (
    ActionKind,
    CorruptionChannel,
    DelayModel,
    DomainError,
    IssuerProfile,
    LossSpec,
    expected_loss,
    maturity_prob,
)
from .policies import PolicyClass, PolicyTable, enumerate_policy_class


class ConstructionError(ValueError):
    """A requested environment cannot be built from the given inputs."""


@dataclass(frozen=True)
class EnvironmentSpec:
    num_cells: int
    fraud_prob: tuple[float, ...]
    cell_weights: tuple[float, ...]
    issuer_of_cell: tuple[int, ...]
    losses: LossSpec
    network: tuple[IssuerProfile, ...]

    def __post_init__(self):
        for name in ("fraud_prob", "cell_weights", "issuer_of_cell", "network"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "fraud_prob", tuple(float(p) for p in self.fraud_prob))
        object.__setattr__(self, "cell_weights", tuple(float(w) for w in self.cell_weights))
        object.__setattr__(self, "issuer_of_cell", tuple(int(i) for i in self.issuer_of_cell))
        n = self.num_cells
        if n < 1:
            raise DomainError("an environment needs at least one cell")
        if not len(self.fraud_prob) == len(self.cell_weights) == len(self.issuer_of_cell) == n:
            raise DomainError("per-cell fields must all have num_cells entries")
        if self.losses.num_cells != n:
            raise DomainError("loss spec does not match num_cells")
        if any(not 0.0 <= p <= 1.0 for p in self.fraud_prob):
            raise DomainError("fraud probabilities must lie in [0, 1]")
        if any(w < 0 for w in self.cell_weights) or abs(sum(self.cell_weights) - 1.0) > 1e-9:
            raise DomainError("cell weights must be a probability vector")
        if not self.network:
            raise DomainError("network needs at least one issuer")
        if any(not 0 <= i < len(self.network) for i in self.issuer_of_cell):
            raise DomainError("issuer_of_cell references an issuer outside the network")

    @classmethod
    def homogeneous(
        cls,
        fraud_prob: Sequence[float],
        cell_weights: Sequence[float] | None = None,
        losses: LossSpec | None = None,
        gamma: float = 0.0,
        channel: CorruptionChannel | None = None,
        delay: DelayModel | None = None,
    ) -> "EnvironmentSpec":
        """Every cell served by one issuer with global impairment parameters."""
        n = len(fraud_prob)
        weights = tuple(cell_weights) if cell_weights is not None else (1.0 / n,) * n
        issuer = IssuerProfile(
            issuer_id=0,
            gamma=gamma,
            channel=channel or CorruptionChannel(),
            delay=delay or DelayModel.constant(0),
            volume_share=1.0,
        )
        return cls(n, tuple(fraud_prob), weights, (0,) * n, losses or LossSpec.constant(n), (issuer,))

    def issuer(self, cell: int) -> IssuerProfile:
        return self.network[self.issuer_of_cell[cell]]

    def with_fraud_prob(self, fraud_prob: Sequence[float]) -> "EnvironmentSpec":
        return replace(self, fraud_prob=tuple(fraud_prob))

    def with_impairments(
        self,
        gamma: float | None = None,
        channel: CorruptionChannel | None = None,
        delay: DelayModel | None = None,
    ) -> "EnvironmentSpec":
        """Override an impairment on every issuer."""
        network = []
        for prof in self.network:
            network.append(
                replace(
                    prof,
                    gamma=prof.gamma if gamma is None else gamma,
                    channel=prof.channel if channel is None else channel,
                    delay=prof.delay if delay is None else delay,
                )
            )
        return replace(self, network=tuple(network))

    def cell_issuer_weights(self) -> np.ndarray:
        shares = np.zeros(len(self.network))
        for w, i in zip(self.cell_weights, self.issuer_of_cell):
            shares[i] += w
        return shares


@dataclass(frozen=True)
class PackingFamily:
    environments: tuple[EnvironmentSpec, ...]
    favored_policy: tuple[int, ...]
    gap: float
    policies: PolicyClass = field(repr=False, default=None)

    @property
    def size(self) -> int:
        return len(self.environments)


@dataclass(frozen=True)
class FastSlowPartition:
    fast_cells: frozenset[int]
    slow_cells: frozenset[int]
    m_fast: float
    m_slow: float

    def __post_init__(self):
        object.__setattr__(self, "fast_cells", frozenset(self.fast_cells))
        object.__setattr__(self, "slow_cells", frozenset(self.slow_cells))
        if self.fast_cells & self.slow_cells:
            raise DomainError("fast and slow cells overlap")
        if not (0.0 <= self.m_slow <= 1.0 and 0.0 <= self.m_fast <= 1.0):
            raise DomainError("maturity probabilities must lie in [0, 1]")
        # equal maturities are allowed as the degenerate no-split case
        if self.m_fast < self.m_slow:
            raise DomainError("m_fast must not be below m_slow")


# --- analytic losses ------------------------------------------------------


def analytic_policy_loss(env: EnvironmentSpec, policy: PolicyTable) -> float:
    """Per-round expected loss of a deterministic table, exact (no sampling)."""
    if len(policy) != env.num_cells:
        raise DomainError(
            f"policy covers {len(policy)} cells but the environment has {env.num_cells}"
        )
    return float(
        sum(
            w * expected_loss(c, policy(c), env.fraud_prob[c], env.losses)
            for c, w in enumerate(env.cell_weights)
        )
    )


def cell_loss_table(env: EnvironmentSpec) -> np.ndarray:
    """Expected loss of each action in each cell, shape (num_cells, 3)."""
    out = np.empty((env.num_cells, len(ActionKind)))
    for c in range(env.num_cells):
        for a in ActionKind:
            out[c, a] = expected_loss(c, a, env.fraud_prob[c], env.losses)
    return out


def draw_transaction(env: EnvironmentSpec, rng: np.random.Generator) -> tuple[int, int, int]:
    cell = int(rng.choice(env.num_cells, p=env.cell_weights))
    latent = int(rng.random() < env.fraud_prob[cell])
    return cell, env.issuer_of_cell[cell], latent


def draw_cells(env: EnvironmentSpec, uniforms: np.ndarray) -> np.ndarray:
    """Vectorized inverse-CDF cell draws from an array of uniforms."""
    cdf = np.cumsum(env.cell_weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, uniforms, side="right").astype(np.int64)


# --- packing family -------------------------------------------------------

# expected loss of action a at fraud prob p is intercept[a] + slope[a] * p
def _loss_coefficients(losses: LossSpec, cell: int) -> tuple[np.ndarray, np.ndarray]:
    intercept = np.array([0.0, losses.ch_loss[cell], losses.fp_loss[cell]])
    slope = np.array([losses.fn_loss[cell], 0.0, -losses.fp_loss[cell]])
    return intercept, slope


def _favoring_fraud_prob(
    base: EnvironmentSpec,
    policies: PolicyClass,
    favored: int,
    gap: float,
    cost: np.ndarray,
    movable: np.ndarray,
) -> np.ndarray:
    """Minimal weighted-L1 move of the base fraud probabilities that makes
    ``favored`` beat every other class member by at least ``gap``."""
    n = base.num_cells
    base_p = np.asarray(base.fraud_prob)
    w = np.asarray(base.cell_weights)
    acts = policies.action_matrix()
    coeffs = [_loss_coefficients(base.losses, c) for c in range(n)]
    target = gap + 1e-9

    # variables: p (n), d (n) with d >= |p - base|
    A_ub, b_ub = [], []
    for k in range(policies.size):
        if k == favored:
            continue
        row = np.zeros(2 * n)
        const = 0.0
        for c in range(n):
            a_j, a_k = acts[favored, c], acts[k, c]
            if a_j == a_k:
                continue
            icpt, slope = coeffs[c]
            const += w[c] * (icpt[a_k] - icpt[a_j])
            row[c] = w[c] * (slope[a_k] - slope[a_j])
        # const + row.p >= target  ->  -row.p <= const - target
        A_ub.append(-row)
        b_ub.append(const - target)
    for c in range(n):
        row = np.zeros(2 * n)
        row[c], row[n + c] = 1.0, -1.0
        A_ub.append(row)
        b_ub.append(base_p[c])
        row = np.zeros(2 * n)
        row[c], row[n + c] = -1.0, -1.0
        A_ub.append(row)
        b_ub.append(-base_p[c])

    bounds = [(0.0, 1.0) if movable[c] else (base_p[c], base_p[c]) for c in range(n)]
    bounds += [(0.0, None)] * n
    objective = np.concatenate([np.zeros(n), cost])
    if not A_ub:
        return base_p.copy()
    res = linprog(objective, A_ub=np.array(A_ub), b_ub=np.array(b_ub), bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise ConstructionError(
            f"gap {gap} is infeasible for policy {favored} under this template ({res.message})"
        )
    return np.clip(res.x[:n], 0.0, 1.0)


def _packing_family(
    num_policies: int,
    gap: float,
    base: EnvironmentSpec,
    policies: PolicyClass | None,
    cost: np.ndarray,
    movable: np.ndarray,
) -> PackingFamily:
    if gap <= 0:
        raise ConstructionError("gap must be positive")
    if num_policies < 1:
        raise ConstructionError("num_policies must be at least 1")
    if policies is None:
        policies = enumerate_policy_class(base.num_cells, num_policies)
    if num_policies > policies.size:
        raise ConstructionError(
            f"asked for {num_policies} environments but the class has {policies.size} policies"
        )
    if policies.num_cells != base.num_cells:
        raise ConstructionError("policy class and template disagree on cell count")
    policies = PolicyClass(policies.policies[:num_policies])

    envs = []
    for j in range(num_policies):
        p = _favoring_fraud_prob(base, policies, j, gap, cost, movable)
        env = base.with_fraud_prob(p)
        own = analytic_policy_loss(env, policies[j])
        for k in range(num_policies):
            if k != j and analytic_policy_loss(env, policies[k]) < own + gap - 1e-12:
                raise ConstructionError(f"environment {j} failed its gap verification")
        envs.append(env)
    return PackingFamily(tuple(envs), tuple(range(num_policies)), float(gap), policies)


def build_packing_family(
    num_policies: int,
    gap: float,
    base: EnvironmentSpec,
    policies: PolicyClass | None = None,
) -> PackingFamily:
    """N environments, the j-th making policy j the unique best by ``gap``.

    Each environment moves the template's fraud probabilities as little as
    possible (cell-weighted L1) subject to the gap constraints, which are
    linear in the fraud probabilities. Without an explicit class the first
    ``num_policies`` tables of :func:`enumerate_policy_class` are used.
    """
    w = np.asarray(base.cell_weights)
    return _packing_family(
        num_policies, gap, base, policies, cost=w + 1e-6, movable=np.ones(base.num_cells, bool)
    )


# --- issuer networks ------------------------------------------------------


def build_hetero_network(
    profiles: Sequence[IssuerProfile],
    cells_per_issuer: int,
    fraud_prob: float | Sequence[float] = 0.3,
    losses: LossSpec | None = None,
) -> EnvironmentSpec:
    """Issuer i owns a block of ``cells_per_issuer`` cells carrying its volume share.

    ``fraud_prob`` is either one value for every cell or one per cell.
    """
    if not profiles:
        raise ConstructionError("need at least one issuer profile")
    if cells_per_issuer < 1:
        raise ConstructionError("cells_per_issuer must be at least 1")
    total = sum(p.volume_share for p in profiles)
    if abs(total - 1.0) > 1e-9:
        raise ConstructionError(f"volume shares sum to {total}, not 1")
    n = len(profiles) * cells_per_issuer
    if np.isscalar(fraud_prob):
        fraud = (float(fraud_prob),) * n
    else:
        fraud = tuple(fraud_prob)
        if len(fraud) != n:
            raise ConstructionError(f"expected {n} fraud probabilities, got {len(fraud)}")
    network = tuple(replace(p, issuer_id=i) for i, p in enumerate(profiles))
    weights, owners = [], []
    for i, prof in enumerate(network):
        weights += [prof.volume_share / cells_per_issuer] * cells_per_issuer
        owners += [i] * cells_per_issuer
    weights = np.asarray(weights)
    weights = weights / weights.sum()
    return EnvironmentSpec(n, fraud, tuple(weights), tuple(owners), losses or LossSpec.constant(n), network)


# --- fast / slow maturity split ---------------------------------------------


def delay_with_maturity(m: float, window: int) -> DelayModel:
    """Two-point delay law whose maturity at ``window`` is exactly ``m``."""
    if m >= 1.0:
        return DelayModel.constant(0)
    if m <= 0.0:
        return DelayModel.constant(window + 1)
    return DelayModel.empirical([(0, m), (window + 1, 1.0 - m)])


def _split_network(
    partition: FastSlowPartition, base: EnvironmentSpec, window: int
) -> EnvironmentSpec:
    n = base.num_cells
    if partition.fast_cells | partition.slow_cells != set(range(n)):
        raise ConstructionError(
            f"partition covers {sorted(partition.fast_cells | partition.slow_cells)} "
            f"but the base has cells 0..{n - 1}"
        )
    fast_delay = delay_with_maturity(partition.m_fast, window)
    slow_delay = delay_with_maturity(partition.m_slow, window)
    # issuer i splits into 2i (fast) and 2i+1 (slow)
    network = []
    for prof in base.network:
        network.append(replace(prof, issuer_id=len(network), delay=fast_delay))
        network.append(replace(prof, issuer_id=len(network), delay=slow_delay))
    owners = tuple(
        2 * base.issuer_of_cell[c] + (1 if c in partition.slow_cells else 0) for c in range(n)
    )
    shares = np.zeros(len(network))
    for c in range(n):
        shares[owners[c]] += base.cell_weights[c]
    network = [replace(p, volume_share=float(s)) for p, s in zip(network, shares)]
    return replace(base, issuer_of_cell=owners, network=tuple(network))


def _hard_mass_costs(partition: FastSlowPartition, hard_mass: float, base: EnvironmentSpec):
    n = base.num_cells
    slow = np.array([c in partition.slow_cells for c in range(n)])
    if hard_mass >= 1.0:
        movable = slow
    elif hard_mass <= 0.0:
        movable = ~slow
    else:
        movable = np.ones(n, bool)
    # interior hard_mass: moving a slow cell costs (1 - h), a fast cell h
    cost = np.where(slow, 1.0 - hard_mass, hard_mass) + 1e-6
    return cost * np.asarray(base.cell_weights) + 1e-9, movable


def build_fast_slow(
    partition: FastSlowPartition,
    hard_mass: float,
    base: EnvironmentSpec,
    window: int = 100,
) -> EnvironmentSpec:
    """Re-route fast and slow cells through delay laws with the partition's
    maturities at ``window``.

    The fraud probabilities are those of ``base``; use
    :func:`build_fast_slow_family` to place the discriminating packing
    perturbation according to ``hard_mass``.
    """
    if not 0.0 <= hard_mass <= 1.0:
        raise ConstructionError("hard_mass must lie in [0, 1]")
    return _split_network(partition, base, window)


def build_fast_slow_family(
    partition: FastSlowPartition,
    hard_mass: float,
    base: EnvironmentSpec,
    num_policies: int,
    gap: float,
    policies: PolicyClass | None = None,
    window: int = 100,
) -> PackingFamily:
    """Packing family over a fast/slow split.

    ``hard_mass`` = 1 confines every fraud-probability perturbation to slow
    cells, 0 confines it to fast cells; in between both move, with moves on
    slow cells priced at ``1 - hard_mass`` and on fast cells at ``hard_mass``.
    """
    split = build_fast_slow(partition, hard_mass, base, window)
    cost, movable = _hard_mass_costs(partition, hard_mass, base)
    return _packing_family(num_policies, gap, split, policies, cost, movable)


def cell_maturities(env: EnvironmentSpec, window: int) -> tuple[float, ...]:
    return tuple(maturity_prob(env.issuer(c).delay, window) for c in range(env.num_cells))


# --- serialization ----------------------------------------------------------


def issuer_to_dict(p: IssuerProfile) -> dict:
    return {
        "issuer_id": p.issuer_id,
        "gamma": p.gamma,
        "eps10": p.channel.eps10,
        "eps01": p.channel.eps01,
        "delay": p.delay.to_dict(),
        "volume_share": p.volume_share,
    }


def issuer_from_dict(d: dict) -> IssuerProfile:
    allowed = {"issuer_id", "gamma", "eps10", "eps01", "delay", "volume_share"}
    unknown = set(d) - allowed
    if unknown:
        raise DomainError(f"unknown issuer fields: {sorted(unknown)}")
    return IssuerProfile(
        issuer_id=int(d.get("issuer_id", 0)),
        gamma=float(d.get("gamma", 0.0)),
        channel=CorruptionChannel(float(d.get("eps10", 0.0)), float(d.get("eps01", 0.0))),
        delay=DelayModel.from_dict(d.get("delay", {"kind": "constant", "lag": 0})),
        volume_share=float(d.get("volume_share", 1.0)),
    )


def env_to_dict(env: EnvironmentSpec) -> dict:
    return {
        "num_cells": env.num_cells,
        "fraud_prob": list(env.fraud_prob),
        "cell_weights": list(env.cell_weights),
        "issuer_of_cell": list(env.issuer_of_cell),
        "losses": {
            "fn": list(env.losses.fn_loss),
            "ch": list(env.losses.ch_loss),
            "fp": list(env.losses.fp_loss),
        },
        "network": [issuer_to_dict(p) for p in env.network],
    }


def env_from_dict(d: dict) -> EnvironmentSpec:
    allowed = {"num_cells", "fraud_prob", "cell_weights", "issuer_of_cell", "losses", "network"}
    unknown = set(d) - allowed
    if unknown:
        raise DomainError(f"unknown environment fields: {sorted(unknown)}")
    n = int(d["num_cells"])
    losses = d.get("losses")
    if losses is None:
        loss_spec = LossSpec.constant(n)
    else:
        loss_spec = LossSpec(losses["fn"], losses["ch"], losses["fp"])
    network = d.get("network") or [{"issuer_id": 0}]
    return EnvironmentSpec(
        num_cells=n,
        fraud_prob=d["fraud_prob"],
        cell_weights=d.get("cell_weights") or [1.0 / n] * n,
        issuer_of_cell=d.get("issuer_of_cell") or [0] * n,
        losses=loss_spec,
        network=tuple(issuer_from_dict(p) for p in network),
    )
