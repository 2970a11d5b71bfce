"""Deterministic policy tables over context cells and finite policy classes."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import NUM_ACTIONS, ActionKind, DomainError


@dataclass(frozen=True)
class PolicyTable:
    action_of_cell: tuple[ActionKind, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "action_of_cell", tuple(ActionKind.parse(a) for a in self.action_of_cell)
        )

    @classmethod
    def uniform(cls, action: ActionKind, num_cells: int) -> "PolicyTable":
        return cls((ActionKind(action),) * num_cells)

    def __len__(self) -> int:
        return len(self.action_of_cell)

    def __call__(self, cell: int) -> ActionKind:
        return self.action_of_cell[cell]

    def labels(self) -> list[str]:
        return [a.label for a in self.action_of_cell]


@dataclass(frozen=True)
class PolicyClass:
    policies: tuple[PolicyTable, ...]

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        if not self.policies:
            raise DomainError("a policy class needs at least one policy")
        if len(set(self.policies)) != len(self.policies):
            raise DomainError("policies in a class must be pairwise distinct")
        widths = {len(p) for p in self.policies}
        if len(widths) != 1:
            raise DomainError("all policies must cover the same cells")

    @property
    def size(self) -> int:
        return len(self.policies)

    @property
    def num_cells(self) -> int:
        return len(self.policies[0])

    def __len__(self) -> int:
        return self.size

    def __getitem__(self, index: int) -> PolicyTable:
        return self.policies[index]

    def __iter__(self):
        return iter(self.policies)

    def action_matrix(self) -> np.ndarray:
        """Integer array of shape (size, num_cells) holding action codes."""
        return np.array([[int(a) for a in p.action_of_cell] for p in self.policies], dtype=np.int64)


def _table_from_index(index: int, num_cells: int) -> PolicyTable:
    # base-3 digits, cell 0 most significant
    digits = []
    for _ in range(num_cells):
        index, d = divmod(index, NUM_ACTIONS)
        digits.append(ActionKind(d))
    return PolicyTable(tuple(reversed(digits)))


def enumerate_policy_class(num_cells: int, max_size: int, seed: int = 0) -> PolicyClass:
    """A deterministic subset of all 3**num_cells tables.

    The three uniform tables come first (approve, challenge, decline). If the
    full set fits in ``max_size`` the rest follow in base-3 order; otherwise
    the remaining slots are filled by a seeded draw without replacement.
    """
    if max_size < 1:
        raise DomainError("max_size must be at least 1")
    if num_cells < 1:
        raise DomainError("num_cells must be at least 1")
    uniform = [PolicyTable.uniform(a, num_cells) for a in ActionKind]
    if max_size <= len(uniform):
        return PolicyClass(tuple(uniform[:max_size]))

    total = NUM_ACTIONS**num_cells
    chosen = list(uniform)
    seen = set(chosen)
    if total <= max_size:
        for idx in range(total):
            table = _table_from_index(idx, num_cells)
            if table not in seen:
                chosen.append(table)
        return PolicyClass(tuple(chosen))

    rng = np.random.default_rng(seed)
    while len(chosen) < max_size:
        table = PolicyTable(tuple(ActionKind(int(a)) for a in rng.integers(0, NUM_ACTIONS, num_cells)))
        if table not in seen:
            seen.add(table)
            chosen.append(table)
    return PolicyClass(tuple(chosen))


def policy_class_from_labels(rows: Iterable[Sequence[str]]) -> PolicyClass:
    return PolicyClass(tuple(PolicyTable(tuple(row)) for row in rows))


def all_tables(num_cells: int) -> Iterable[PolicyTable]:
    for combo in itertools.product(ActionKind, repeat=num_cells):
        yield PolicyTable(combo)
