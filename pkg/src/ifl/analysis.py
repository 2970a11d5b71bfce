"""Closed-form regret floors, observability fractions and impairment indices.

The universal constants ``c`` and ``c_prime`` are not known, so every floor
returned here is a *shape*: comparisons and ratios are meaningful, levels
are not. ``log_N`` is a natural logarithm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import CorruptionChannel, DomainError, signal_strength


class DegenerateParameterError(DomainError):
    """A denominator factor of a floor is zero or negative."""


class BoundaryError(DomainError):
    """Parameters too close to the domain boundary to differentiate."""


@dataclass(frozen=True)
class FloorParams:
    T: int
    log_N: float
    K: int = 3
    D: float = 0.0
    gamma_bar: float = 0.0
    delta_bar: float = 0.0
    eps10: float = 0.0
    eps01: float = 0.0
    m_bar: float | None = None
    c: float = 1.0

    def __post_init__(self):
        if self.T < 1 or self.K < 1:
            raise DomainError("T and K must be positive")
        if self.D < 0:
            raise DomainError("cumulative delay D must be nonnegative")
        if self.log_N <= 0:
            raise DomainError("log_N must be positive")
        if self.c <= 0:
            raise DomainError("c must be positive")
        if self.eps10 < 0 or self.eps01 < 0:
            raise DomainError("corruption rates must be nonnegative")
        for name in ("gamma_bar", "delta_bar"):
            v = getattr(self, name)
            if v < 0:
                raise DomainError(f"{name} must be nonnegative")
            if v >= 1:
                raise DegenerateParameterError(f"{name} = {v} leaves no information")
        if self.eps_sum >= 1:
            raise DegenerateParameterError("eps10 + eps01 must be < 1")
        if self.m_bar is not None and not 0 < self.m_bar <= 1:
            raise DegenerateParameterError("m_bar must lie in (0, 1]")

    @property
    def eps_sum(self) -> float:
        return self.eps10 + self.eps01

    @classmethod
    def from_dict(cls, d: dict) -> "FloorParams":
        allowed = {f for f in cls.__dataclass_fields__} | {"N", "eps_sum", "schema_version"}
        unknown = set(d) - allowed
        if unknown:
            raise DomainError(f"unknown floor parameters: {sorted(unknown)}")
        d = {k: v for k, v in d.items() if k != "schema_version"}
        if "N" in d:
            if "log_N" in d:
                raise DomainError("give either N or log_N, not both")
            d["log_N"] = math.log(d.pop("N"))
        if "eps_sum" in d:
            if "eps10" in d or "eps01" in d:
                raise DomainError("give either eps_sum or eps10/eps01")
            d["eps10"], d["eps01"] = d.pop("eps_sum"), 0.0
        return cls(**d)


@dataclass(frozen=True)
class IssuerSummary:
    alpha: float
    gamma: float = 0.0
    delta: float = 0.0
    eps_sum: float = 0.0

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise DomainError("alpha must lie in [0, 1]")
        if self.eps_sum >= 1:
            raise DegenerateParameterError("eps_sum must be < 1")


@dataclass(frozen=True)
class SlowRegion:
    cells: int
    T_slow: int
    D_slow: float
    m_slow: float
    gamma: float = 0.0
    delta: float = 0.0
    eps_sum: float = 0.0
    K: int = 3


def _information_factor(gamma: float, delta: float, eps_sum: float) -> float:
    factor = (1.0 - gamma) * (1.0 - delta) * (1.0 - eps_sum) ** 2
    if factor <= 0:
        raise DegenerateParameterError(
            f"information factor is {factor} for gamma={gamma}, delta={delta}, eps={eps_sum}"
        )
    return factor


def regret_floor(p: FloorParams) -> float:
    info = _information_factor(p.gamma_bar, p.delta_bar, p.eps_sum)
    return p.c * math.sqrt((p.K * p.T + p.D) * p.log_N / info)


def regret_floor_with_maturity(p: FloorParams) -> float:
    """Floor with the average maturity probability split out of the delay term."""
    if p.m_bar is None:
        raise DomainError("m_bar is required for the maturity-explicit floor")
    info = _information_factor(p.gamma_bar, p.delta_bar, p.eps_sum) * p.m_bar
    return p.c * math.sqrt((p.K * p.T + p.D) * p.log_N / info)


def average_q(gamma_bar: float, delta_bar: float, m_bar: float, eps10: float, eps01: float) -> float:
    """Coarse observable fraction; the corruption term enters to the first power."""
    return (1.0 - gamma_bar) * (1.0 - delta_bar) * m_bar * (1.0 - eps10 - eps01)


def conditional_q(m: float, gamma: float, delta: float, eps_sum: float) -> float:
    """Per-context observation probability; the corruption term is squared."""
    if eps_sum >= 1:
        raise DegenerateParameterError("eps_sum must be < 1")
    return m * (1.0 - gamma) * (1.0 - delta) * (1.0 - eps_sum) ** 2


def jensen_gap(q_values: Sequence[float], weights: Sequence[float]) -> tuple[float, float, float]:
    """(E[1/q], 1/E[q], E[1/q] - 1/E[q]) under ``weights``."""
    q = np.asarray(q_values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if q.shape != w.shape or q.ndim != 1 or q.size == 0:
        raise DomainError("q_values and weights must be equal-length, nonempty vectors")
    if abs(w.sum() - 1.0) > 1e-9 or np.any(w < 0):
        raise DomainError("weights must be a probability vector")
    if np.any(q <= 0):
        raise DomainError("every q must be strictly positive")
    if np.any(q > 1):
        raise DomainError("q values are probabilities")
    mean_inverse = float(np.dot(w, 1.0 / q))
    inverse_mean = float(1.0 / np.dot(w, q))
    if np.all(q == q[0]):
        return mean_inverse, mean_inverse, 0.0
    return mean_inverse, inverse_mean, mean_inverse - inverse_mean


def impairment_index(gamma: float, delta: float, eps_sum: float) -> float:
    return 1.0 / _information_factor(gamma, delta, eps_sum)


def _check_shares(issuers: Sequence[IssuerSummary]) -> None:
    if not issuers:
        raise DomainError("need at least one issuer")
    total = sum(i.alpha for i in issuers)
    if abs(total - 1.0) > 1e-9:
        raise DomainError(f"issuer shares sum to {total}, not 1")


def weighted_index(issuers: Sequence[IssuerSummary]) -> float:
    _check_shares(issuers)
    return math.fsum(i.alpha * impairment_index(i.gamma, i.delta, i.eps_sum) for i in issuers)


def hetero_floor(
    issuers: Sequence[IssuerSummary],
    K: int,
    T: int,
    D: float,
    log_N: float,
    c_prime: float = 1.0,
) -> float:
    return c_prime * math.sqrt((K * T + D) * log_N * weighted_index(issuers))


def variance_penalty(issuers: Sequence[IssuerSummary]) -> float:
    """Share-weighted mean index minus the index at share-weighted mean parameters."""
    mean_index = weighted_index(issuers)
    g = math.fsum(i.alpha * i.gamma for i in issuers)
    d = math.fsum(i.alpha * i.delta for i in issuers)
    e = math.fsum(i.alpha * i.eps_sum for i in issuers)
    return mean_index - impairment_index(g, d, e)


@dataclass(frozen=True)
class Sensitivity:
    name: str
    closed_form: float
    finite_difference: float

    @property
    def agrees(self) -> bool:
        scale = max(abs(self.closed_form), 1e-300)
        return abs(self.closed_form - self.finite_difference) / scale <= 1e-4


FD_STEP = 1e-6

_AXES = ("log_N", "gamma_bar", "delta_bar", "eps_sum")


def _floor_at(p: FloorParams, **values: float) -> float:
    # raw formula so finite differences may step just below a rate of 0
    v = {"log_N": p.log_N, "gamma_bar": p.gamma_bar, "delta_bar": p.delta_bar, "eps_sum": p.eps_sum}
    v.update(values)
    info = _information_factor(v["gamma_bar"], v["delta_bar"], v["eps_sum"])
    return p.c * math.sqrt((p.K * p.T + p.D) * v["log_N"] / info)


def marginal_sensitivities(p: FloorParams) -> list[Sensitivity]:
    """Partials of :func:`regret_floor` in log_N, gamma_bar, delta_bar and eps_sum.

    Each closed-form partial is paired with a central finite difference;
    a disagreement beyond 1e-4 relative raises ``ArithmeticError``.
    """
    h = FD_STEP
    if p.log_N <= h:
        raise BoundaryError("log_N too close to 0")
    for name in _AXES[1:]:
        if getattr(p, name) + h >= 1:
            raise BoundaryError(f"{name} too close to 1")
    floor = regret_floor(p)
    closed = {
        "log_N": floor / (2.0 * p.log_N),
        "gamma_bar": floor / (2.0 * (1.0 - p.gamma_bar)),
        "delta_bar": floor / (2.0 * (1.0 - p.delta_bar)),
        "eps_sum": floor / (1.0 - p.eps_sum),
    }
    out = []
    for name in _AXES:
        x = getattr(p, name)
        fd = (_floor_at(p, **{name: x + h}) - _floor_at(p, **{name: x - h})) / (2 * h)
        sens = Sensitivity(name, closed[name], fd)
        if not sens.agrees:
            raise ArithmeticError(f"closed-form partial for {name} disagrees with finite difference")
        out.append(sens)
    return out


def rank_sensitivities(sens: Sequence[Sensitivity]) -> list[Sensitivity]:
    return sorted(sens, key=lambda s: (-abs(s.closed_form), s.name))


def slow_region_floor(region: SlowRegion, log_N: float, c: float = 1.0) -> float:
    if region.m_slow <= 0:
        raise DegenerateParameterError("m_slow must be positive")
    info = region.m_slow * _information_factor(region.gamma, region.delta, region.eps_sum)
    num = region.cells * (region.K * region.T_slow + region.D_slow) * log_N
    return c * math.sqrt(num / info)


def tv_attenuation(p: float, q: float, channel: CorruptionChannel) -> tuple[float, float]:
    """Total variation between Bernoulli(p) and Bernoulli(q), before and after the channel.

    The post-channel value is computed by enumerating both observed outcomes;
    it equals ``signal_strength(channel) * |p - q|``.
    """
    if not (0 <= p <= 1 and 0 <= q <= 1):
        raise DomainError("p and q must lie in [0, 1]")
    clean = abs(p - q)

    def observed_law(x: float) -> tuple[float, float]:
        one = x * (1 - channel.eps10) + (1 - x) * channel.eps01
        return 1.0 - one, one

    lp, lq = observed_law(p), observed_law(q)
    corrupted = 0.5 * (abs(lp[0] - lq[0]) + abs(lp[1] - lq[1]))
    return clean, corrupted


def chi2_bernoulli(a: float, b: float) -> float:
    """Pearson chi-square divergence of Bernoulli(a) from Bernoulli(b)."""
    if not 0 < b < 1:
        raise DomainError("reference probability must lie strictly inside (0, 1)")
    return (a - b) ** 2 / (b * (1.0 - b))


def chi2_contraction(p: float, q: float, channel: CorruptionChannel) -> float:
    """Ratio of post-channel to pre-channel chi-square divergence.

    Locally this is s**2 * q(1-q) / (mu(1-mu)) with mu the post-channel mean
    at q, so it sits near s**2 when the channel is close to symmetric.
    """
    before = chi2_bernoulli(p, q)
    if before == 0:
        raise DomainError("p and q coincide; the ratio is undefined")
    s = signal_strength(channel)
    after = chi2_bernoulli(channel.eps01 + s * p, channel.eps01 + s * q)
    return after / before
