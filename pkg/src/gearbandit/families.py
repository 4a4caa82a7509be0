"""Structured families of stationary policies and their connectedness checks.

A family must contain the all-top-gear and all-passive policies and must let
every member reach its neighbours through single-state gear shifts staying
inside the family. Built-in kinds: ``full`` (every policy), ``multi_threshold``
(gear assignment nondecreasing in the state label), explicit policy lists,
and arbitrary membership predicates. Predicates cannot be enumerated, so
their connectedness is only spot-checked by sampled downshift walks.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import ConnectednessError, MismatchedStatesError
from .model import MultiGearModel, StationaryPolicy, check_policy, shift

#: Families with at most this many members are enumerated exhaustively.
ENUMERATION_LIMIT = 4096


class PolicyFamily:
    """Membership structure over stationary deterministic policies.

    Use the factory classmethods; the constructor is internal.
    """

    def __init__(self, model: MultiGearModel, kind: str,
                 predicate: Callable[[StationaryPolicy], bool],
                 members: frozenset[StationaryPolicy] | None = None,
                 name: str | None = None):
        self.model = model
        self.kind = kind
        self._predicate = predicate
        self._members = members
        self.name = name or kind

    # -- factories ---------------------------------------------------------

    @classmethod
    def full(cls, model: MultiGearModel) -> "PolicyFamily":
        """Every stationary deterministic policy."""
        return cls(model, "full", lambda s: True)

    @classmethod
    def multi_threshold(cls, model: MultiGearModel) -> "PolicyFamily":
        """Policies whose gear assignment is nondecreasing in the state label."""

        def nondecreasing(policy: StationaryPolicy) -> bool:
            g = policy.gears
            return all(g[i] <= g[i + 1] for i in range(len(g) - 1))

        return cls(model, "multi_threshold", nondecreasing)

    @classmethod
    def from_policies(cls, model: MultiGearModel,
                      policies: Iterable[StationaryPolicy]) -> "PolicyFamily":
        members = frozenset(policies)
        for s in members:
            check_policy(model, s)
        return cls(model, "explicit-list", members.__contains__, members=members)

    @classmethod
    def from_predicate(cls, model: MultiGearModel,
                       predicate: Callable[[StationaryPolicy], bool],
                       name: str = "custom-predicate") -> "PolicyFamily":
        return cls(model, "custom-predicate", predicate, name=name)

    # -- structure ---------------------------------------------------------

    @property
    def least(self) -> StationaryPolicy:
        return StationaryPolicy.uniform(self.model, 0)

    @property
    def greatest(self) -> StationaryPolicy:
        return StationaryPolicy.uniform(self.model, self.model.top_gear)

    def contains(self, policy: StationaryPolicy) -> bool:
        check_policy(self.model, policy)
        return bool(self._predicate(policy))

    def downshift_candidates(self, policy: StationaryPolicy) -> list[tuple[int, int]]:
        """All (state, gear) whose one-gear downshift stays in the family.

        Listed by ascending state label then gear; empty only at the least
        element for a family satisfying the connectedness conditions.
        """
        if not self.contains(policy):
            raise ConnectednessError("policy is not a member of the family", policy)
        out = []
        for s, a in zip(policy.states, policy.gears):
            if a >= 1 and self._predicate(shift(policy, s, a, a - 1)):
                out.append((s, a))
        return out

    def upshift_candidates(self, policy: StationaryPolicy) -> list[tuple[int, int]]:
        """All (state, gear) whose one-gear upshift stays in the family."""
        if not self.contains(policy):
            raise ConnectednessError("policy is not a member of the family", policy)
        top = self.model.top_gear
        out = []
        for s, a in zip(policy.states, policy.gears):
            if a < top and self._predicate(shift(policy, s, a, a + 1)):
                out.append((s, a))
        return out

    def enumerate(self, limit: int = ENUMERATION_LIMIT) -> list[StationaryPolicy] | None:
        """All members when countable within ``limit``, else None."""
        states = self.model.controllable_states
        n, g = len(states), self.model.n_gears
        if self._members is not None:
            return sorted(self._members, key=lambda s: s.gears)
        if self.kind == "full":
            if g ** n > limit:
                return None
            return [StationaryPolicy(states, gears)
                    for gears in itertools.product(range(g), repeat=n)]
        if self.kind == "multi_threshold":
            combos = itertools.combinations_with_replacement(range(g), n)
            members = [StationaryPolicy(states, gears) for gears in combos]
            return members if len(members) <= limit else None
        return None

    def sample_member(self, rng: np.random.Generator) -> StationaryPolicy:
        """One member drawn at random; exact sampling for built-in kinds.

        Predicate families fall back to a random downshift walk from the
        greatest element, which is biased but stays inside the family.
        """
        states = self.model.controllable_states
        g = self.model.n_gears
        if self.kind == "full":
            return StationaryPolicy(states, tuple(rng.integers(0, g, len(states))))
        if self.kind == "multi_threshold":
            gears = tuple(sorted(rng.integers(0, g, len(states))))
            return StationaryPolicy(states, gears)
        if self._members is not None:
            members = sorted(self._members, key=lambda s: s.gears)
            return members[rng.integers(0, len(members))]
        policy = self.greatest
        total = self.model.top_gear * len(states)
        for _ in range(int(rng.integers(0, total + 1))):
            cands = self.downshift_candidates(policy)
            if not cands:
                break
            s, a = cands[rng.integers(0, len(cands))]
            policy = shift(policy, s, a, a - 1)
        return policy


@dataclass(frozen=True)
class ConnectednessReport:
    """Result of checking the family's connectedness conditions."""

    ok: bool
    violation: StationaryPolicy | None
    detail: str
    checked: int
    exhaustive: bool


def check_connectedness(family: PolicyFamily, model: MultiGearModel,
                        samples: int = 10_000, seed: int = 0) -> ConnectednessReport:
    """Verify the family contains both extreme policies and admits single-state
    shifts toward them from every member.

    Enumerable families are checked exhaustively; predicate families are
    spot-checked on ``samples`` random members, so a passing report is only
    probabilistic evidence there.
    """
    if family.model.controllable_states != model.controllable_states:
        raise MismatchedStatesError("family was built for a different state set")
    if not family.contains(family.greatest):
        return ConnectednessReport(False, family.greatest,
                                   "all-top-gear policy is not a member", 0, True)
    if not family.contains(family.least):
        return ConnectednessReport(False, family.least,
                                   "all-passive policy is not a member", 0, True)

    members = family.enumerate()
    exhaustive = members is not None
    if members is None:
        rng = np.random.default_rng(seed)
        members = [family.sample_member(rng) for _ in range(samples)]
    checked = 0
    for policy in members:
        checked += 1
        if policy != family.least and not family.downshift_candidates(policy):
            return ConnectednessReport(
                False, policy, "no single-state downshift stays in the family",
                checked, exhaustive)
    for policy in members:
        checked += 1
        if policy != family.greatest and not family.upshift_candidates(policy):
            return ConnectednessReport(
                False, policy, "no single-state upshift stays in the family",
                checked, exhaustive)
    detail = "exhaustive" if exhaustive else f"sampled {checked} members"
    return ConnectednessReport(True, None, detail, checked, exhaustive)


def family_from_spec(model: MultiGearModel, spec: str,
                     load_policies=None) -> PolicyFamily:
    """Build a family from its textual selector: ``full``, ``multi_threshold``,
    or ``list:<path>`` (requires a loader callback for the path)."""
    if spec == "full":
        return PolicyFamily.full(model)
    if spec in ("multi_threshold", "multi-threshold"):
        return PolicyFamily.multi_threshold(model)
    if spec.startswith("list:"):
        if load_policies is None:
            raise ValueError("no loader provided for list: family spec")
        return PolicyFamily.from_policies(model, load_policies(spec[5:]))
    raise ValueError(f"unknown family spec {spec!r}")
