"""Domain types and the four feedback-impairment channels.

Everything here is a pure function of its arguments plus an explicit
``numpy.random.Generator``; nothing mutates shared state.
"""

from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class DegenerateChannelError(DomainError):
    """A corruption channel with zero signal strength cannot be inverted."""


class ActionKind(enum.IntEnum):
    APPROVE = 0
    CHALLENGE = 1
    DECLINE = 2

    @classmethod
    def parse(cls, value: "ActionKind | str | int") -> "ActionKind":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise DomainError(f"unknown action {value!r}") from None
        return cls(int(value))

    @property
    def label(self) -> str:
        return self.name.lower()


NUM_ACTIONS = len(ActionKind)

DEFAULT_FN_LOSS = 1.0
DEFAULT_CH_LOSS = 0.2
DEFAULT_FP_LOSS = 0.4


def _unit_tuple(values: Sequence[float], name: str) -> tuple[float, ...]:
    out = tuple(float(v) for v in values)
    for v in out:
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"{name} entries must lie in [0, 1], got {v}")
    return out


@dataclass(frozen=True)
class LossSpec:
    """Per-cell fraud (FN), challenge (CH) and false-decline (FP) losses."""

    fn_loss: tuple[float, ...]
    ch_loss: tuple[float, ...]
    fp_loss: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "fn_loss", _unit_tuple(self.fn_loss, "fn_loss"))
        object.__setattr__(self, "ch_loss", _unit_tuple(self.ch_loss, "ch_loss"))
        object.__setattr__(self, "fp_loss", _unit_tuple(self.fp_loss, "fp_loss"))
        if not len(self.fn_loss) == len(self.ch_loss) == len(self.fp_loss):
            raise DomainError("loss components must cover the same cells")

    @classmethod
    def constant(
        cls,
        num_cells: int,
        fn: float = DEFAULT_FN_LOSS,
        ch: float = DEFAULT_CH_LOSS,
        fp: float = DEFAULT_FP_LOSS,
    ) -> "LossSpec":
        return cls((fn,) * num_cells, (ch,) * num_cells, (fp,) * num_cells)

    @property
    def num_cells(self) -> int:
        return len(self.fn_loss)

    def action_losses(self, cell: int, label: float) -> tuple[float, float, float]:
        """Loss of each action at ``cell`` given a (possibly fractional) fraud label.

        The loss is affine in the label, so feeding an unbiased label estimate
        yields unbiased loss estimates for every action at once.
        """
        return (
            label * self.fn_loss[cell],
            self.ch_loss[cell],
            (1.0 - label) * self.fp_loss[cell],
        )


@dataclass(frozen=True)
class CorruptionChannel:
    """Binary label-noise channel.

    ``eps10`` is P(observed clean | fraud) and ``eps01`` is
    P(observed fraud | clean).
    """

    eps10: float = 0.0
    eps01: float = 0.0

    def __post_init__(self):
        if self.eps10 < 0 or self.eps01 < 0:
            raise DomainError("corruption rates must be nonnegative")
        if self.eps10 + self.eps01 >= 1:
            raise DegenerateChannelError(
                f"eps10 + eps01 must be < 1, got {self.eps10 + self.eps01}"
            )

    @property
    def eps_sum(self) -> float:
        return self.eps10 + self.eps01


class DelayKind(str, enum.Enum):
    CONSTANT = "constant"
    GEOMETRIC = "geometric"
    EMPIRICAL = "empirical"


@dataclass(frozen=True)
class DelayModel:
    """Finite label delay. Permanent non-arrival is the censorship gate's job.

    Build with :meth:`constant`, :meth:`geometric` or :meth:`empirical`.
    """

    kind: DelayKind
    lag: int = 0
    rate: float = 1.0
    table: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", DelayKind(self.kind))
        if self.kind is DelayKind.CONSTANT:
            if int(self.lag) != self.lag or self.lag < 0:
                raise DomainError(f"constant lag must be a nonnegative integer, got {self.lag}")
            object.__setattr__(self, "lag", int(self.lag))
        elif self.kind is DelayKind.GEOMETRIC:
            if not 0.0 < self.rate <= 1.0:
                raise DomainError(f"geometric success rate must lie in (0, 1], got {self.rate}")
        else:
            if not self.table:
                raise DomainError("empirical delay table is empty")
            rows = []
            for lag, prob in self.table:
                if int(lag) != lag or lag < 0:
                    raise DomainError(f"table lags must be nonnegative integers, got {lag}")
                if not 0.0 <= prob <= 1.0:
                    raise DomainError(f"table probabilities must lie in [0, 1], got {prob}")
                rows.append((int(lag), float(prob)))
            if abs(sum(p for _, p in rows) - 1.0) > 1e-9:
                raise DomainError("empirical delay table must sum to 1")
            rows.sort()
            object.__setattr__(self, "table", tuple(rows))

    @classmethod
    def constant(cls, lag: int) -> "DelayModel":
        return cls(DelayKind.CONSTANT, lag=lag)

    @classmethod
    def geometric(cls, rate: float) -> "DelayModel":
        return cls(DelayKind.GEOMETRIC, rate=rate)

    @classmethod
    def empirical(cls, table) -> "DelayModel":
        return cls(DelayKind.EMPIRICAL, table=tuple((lag, p) for lag, p in table))

    def mean(self) -> float:
        if self.kind is DelayKind.CONSTANT:
            return float(self.lag)
        if self.kind is DelayKind.GEOMETRIC:
            return (1.0 - self.rate) / self.rate
        return sum(lag * p for lag, p in self.table)

    def to_dict(self) -> dict:
        if self.kind is DelayKind.CONSTANT:
            return {"kind": "constant", "lag": self.lag}
        if self.kind is DelayKind.GEOMETRIC:
            return {"kind": "geometric", "rate": self.rate}
        return {"kind": "empirical", "table": [[lag, p] for lag, p in self.table]}

    @classmethod
    def from_dict(cls, data: dict) -> "DelayModel":
        kind = DelayKind(data["kind"])
        if kind is DelayKind.CONSTANT:
            return cls.constant(data["lag"])
        if kind is DelayKind.GEOMETRIC:
            return cls.geometric(data["rate"])
        return cls.empirical(data["table"])


@dataclass(frozen=True)
class IssuerProfile:
    issuer_id: int
    gamma: float = 0.0
    channel: CorruptionChannel = field(default_factory=CorruptionChannel)
    delay: DelayModel = field(default_factory=lambda: DelayModel.constant(0))
    volume_share: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise DomainError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 <= self.volume_share <= 1.0:
            raise DomainError(f"volume_share must lie in [0, 1], got {self.volume_share}")


@dataclass(frozen=True)
class ObservationEvent:
    """A label travelling from its transaction to the learner.

    ``propensity`` is the probability of the realized action; ``reveal_prob``
    is the probability, at issue time, that the round's outcome would not be
    suppressed by a decline (what the loss estimator importance-weights by).
    """

    issued_round: int
    maturity_round: int
    context_cell: int
    action_taken: ActionKind
    corrupted_label: int
    propensity: float
    reveal_prob: float = 1.0

    def __post_init__(self):
        if self.maturity_round < self.issued_round:
            raise DomainError("an event cannot mature before it is issued")

    @property
    def delay(self) -> int:
        return self.maturity_round - self.issued_round


# --- random streams -------------------------------------------------------


def stream(seed: int, *tags: "str | int") -> np.random.Generator:
    """Independent generator keyed by ``seed`` and a tuple of purpose tags.

    String tags are hashed with CRC32 so the key is stable across processes.
    """
    key = [zlib.crc32(t.encode()) if isinstance(t, str) else int(t) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


# --- channel operations ---------------------------------------------------


def expected_loss(cell: int, action: ActionKind, fraud_prob: float, losses: LossSpec) -> float:
    if not 0 <= cell < losses.num_cells:
        raise DomainError(f"cell {cell} outside 0..{losses.num_cells - 1}")
    if not 0.0 <= fraud_prob <= 1.0:
        raise DomainError(f"fraud_prob must lie in [0, 1], got {fraud_prob}")
    action = ActionKind(action)
    if action is ActionKind.APPROVE:
        return fraud_prob * losses.fn_loss[cell]
    if action is ActionKind.CHALLENGE:
        return losses.ch_loss[cell]
    return (1.0 - fraud_prob) * losses.fp_loss[cell]


def corrupt_label(channel: CorruptionChannel, latent: int, rng: np.random.Generator) -> int:
    return flip_with_uniform(channel, latent, rng.random())


def flip_with_uniform(channel: CorruptionChannel, latent: int, u: float) -> int:
    """Deterministic channel given a uniform draw ``u``.

    Shared uniforms across channels couple them monotonically, which the
    harness uses for common-random-number comparisons.
    """
    if latent:
        return 0 if u < channel.eps10 else 1
    return 1 if u < channel.eps01 else 0


def signal_strength(channel: CorruptionChannel) -> float:
    return 1.0 - channel.eps10 - channel.eps01


def debias_label(channel: CorruptionChannel, observed: int) -> float:
    s = signal_strength(channel)
    if s <= 0:
        raise DegenerateChannelError("channel has zero signal strength")
    return (observed - channel.eps01) / s


def sample_delay(model: DelayModel, rng: np.random.Generator) -> int:
    return delay_from_uniform(model, rng.random())


def delay_from_uniform(model: DelayModel, u: float) -> int:
    """Inverse-CDF delay draw from a single uniform in [0, 1)."""
    if model.kind is DelayKind.CONSTANT:
        return model.lag
    if model.kind is DelayKind.GEOMETRIC:
        if model.rate >= 1.0:
            return 0
        # failures before first success: smallest k with 1-(1-rho)^(k+1) > u
        return int(np.floor(np.log1p(-u) / np.log1p(-model.rate)))
    acc = 0.0
    for lag, prob in model.table:
        acc += prob
        if u < acc:
            return lag
    return model.table[-1][0]


def maturity_prob(model: DelayModel, window: int) -> float:
    """P(delay <= window)."""
    if window < 0:
        raise DomainError(f"window must be nonnegative, got {window}")
    if model.kind is DelayKind.CONSTANT:
        return 1.0 if model.lag <= window else 0.0
    if model.kind is DelayKind.GEOMETRIC:
        return 1.0 - (1.0 - model.rate) ** (window + 1)
    return min(1.0, sum(p for lag, p in model.table if lag <= window))


def censor(gamma: float, rng: np.random.Generator) -> int:
    if not 0.0 <= gamma <= 1.0:
        raise DomainError(f"gamma must lie in [0, 1], got {gamma}")
    return int(rng.random() < gamma)


def observation_gate(action: ActionKind, censored: int, delay: int, rounds_remaining: int) -> int:
    if delay < 0 or rounds_remaining < 0:
        raise DomainError("delay and rounds_remaining must be nonnegative")
    return int(ActionKind(action) is not ActionKind.DECLINE and not censored and delay <= rounds_remaining)
