"""Core domain types for a single multi-gear bandit.

A model has states labelled ``1..N`` and gears ``0..A`` (gear 0 is passive).
State labels are 1-based throughout the public API; internal numpy arrays are
0-based. Gears must consume strictly more of the resource as they increase,
state by state, except at declared uncontrollable states where all gears must
coincide (same costs, consumptions and transition rows).

All types are immutable after construction and every operation here is pure,
so values can be shared freely between threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import InvalidShiftError, MismatchedStatesError

#: Minimal gap required between consecutive gear consumptions q[i][a] < q[i][a+1].
GEAR_GAP_EPS = 1e-12

#: Tolerance for row-stochasticity and for the uncontrollable-state equality checks.
ROW_EPS = 1e-12


@dataclass(frozen=True)
class Violation:
    """One violated model invariant, with coordinates where applicable."""

    code: str
    message: str
    state: int | None = None
    gear: int | None = None

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MultiGearModel:
    """A finite-state project controlled through ordered gears.

    Parameters
    ----------
    n_states : int
        Number of states N; labels are 1..N.
    n_gears : int
        Number of gears A+1; gear indices are 0..A.
    discount : float
        Per-period discount factor, in (0, 1).
    holding_cost : array, shape (N, A+1)
        Cost incurred per period in state i under gear a. Any finite real,
        negative entries model rewards.
    resource_use : array, shape (N, A+1)
        Resource consumed per period; nonnegative and strictly increasing in
        the gear at every controllable state.
    transitions : array, shape (A+1, N, N)
        One row-stochastic matrix per gear.
    uncontrollable : iterable of int, optional
        State labels at which every gear must behave exactly like gear 0.
    """

    n_states: int
    n_gears: int
    discount: float
    holding_cost: np.ndarray
    resource_use: np.ndarray
    transitions: np.ndarray
    uncontrollable: frozenset[int] = frozenset()
    controllable_states: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        n, g = int(self.n_states), int(self.n_gears)
        if n < 1 or g < 1:
            raise ValueError("n_states and n_gears must be positive")
        h = _frozen_array(self.holding_cost)
        q = _frozen_array(self.resource_use)
        p = _frozen_array(self.transitions)
        if h.shape != (n, g):
            raise ValueError(f"holding_cost shape {h.shape}, expected {(n, g)}")
        if q.shape != (n, g):
            raise ValueError(f"resource_use shape {q.shape}, expected {(n, g)}")
        if p.shape != (g, n, n):
            raise ValueError(f"transitions shape {p.shape}, expected {(g, n, n)}")
        unc = frozenset(int(s) for s in self.uncontrollable)
        bad = [s for s in unc if not 1 <= s <= n]
        if bad:
            raise ValueError(f"uncontrollable labels out of range 1..{n}: {sorted(bad)}")
        object.__setattr__(self, "n_states", n)
        object.__setattr__(self, "n_gears", g)
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "holding_cost", h)
        object.__setattr__(self, "resource_use", q)
        object.__setattr__(self, "transitions", p)
        object.__setattr__(self, "uncontrollable", unc)
        object.__setattr__(
            self,
            "controllable_states",
            tuple(s for s in range(1, n + 1) if s not in unc),
        )

    @property
    def top_gear(self) -> int:
        return self.n_gears - 1

    def is_controllable(self, state: int) -> bool:
        return state not in self.uncontrollable

    def with_holding_cost(self, holding_cost) -> "MultiGearModel":
        """Copy of the model with a different cost matrix (same dynamics)."""
        return MultiGearModel(
            n_states=self.n_states,
            n_gears=self.n_gears,
            discount=self.discount,
            holding_cost=holding_cost,
            resource_use=self.resource_use,
            transitions=self.transitions,
            uncontrollable=self.uncontrollable,
        )

    def with_discount(self, discount: float) -> "MultiGearModel":
        """Copy of the model with a different discount factor."""
        return MultiGearModel(
            n_states=self.n_states,
            n_gears=self.n_gears,
            discount=discount,
            holding_cost=self.holding_cost,
            resource_use=self.resource_use,
            transitions=self.transitions,
            uncontrollable=self.uncontrollable,
        )


@dataclass(frozen=True)
class StateGearPair:
    """A (state, active gear) coordinate; the unit an index value attaches to."""

    state: int
    gear: int

    def __post_init__(self):
        if self.gear < 1:
            raise ValueError(f"active gear must be >= 1, got {self.gear}")


@dataclass(frozen=True)
class StationaryPolicy:
    """A stationary deterministic policy over the controllable states.

    Stored as the aligned tuples ``states`` (ascending labels) and ``gears``.
    Equivalent to the partition of the controllable states by selected gear.
    """

    states: tuple[int, ...]
    gears: tuple[int, ...]

    def __post_init__(self):
        states = tuple(int(s) for s in self.states)
        gears = tuple(int(a) for a in self.gears)
        if len(states) != len(gears):
            raise ValueError("states and gears must have equal length")
        if any(states[i] >= states[i + 1] for i in range(len(states) - 1)):
            raise ValueError("states must be strictly ascending")
        if any(a < 0 for a in gears):
            raise ValueError("gears must be nonnegative")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "gears", gears)

    @classmethod
    def uniform(cls, model: MultiGearModel, gear: int) -> "StationaryPolicy":
        """Policy selecting the same gear at every controllable state."""
        states = model.controllable_states
        return cls(states, (gear,) * len(states))

    @classmethod
    def from_assignment(cls, assignment: Mapping[int, int]) -> "StationaryPolicy":
        states = tuple(sorted(assignment))
        return cls(states, tuple(assignment[s] for s in states))

    def gear_of(self, state: int) -> int:
        try:
            return self.gears[self.states.index(state)]
        except ValueError:
            raise MismatchedStatesError(f"state {state} is not governed by this policy")

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.states, self.gears))

    def partition(self, n_gears: int) -> tuple[frozenset[int], ...]:
        """The sets of states per gear, indexed 0..A."""
        sets: list[set[int]] = [set() for _ in range(n_gears)]
        for s, a in zip(self.states, self.gears):
            sets[a].add(s)
        return tuple(frozenset(x) for x in sets)

    def __str__(self) -> str:
        inner = ", ".join(f"{s}:{a}" for s, a in zip(self.states, self.gears))
        return "{" + inner + "}"


class PolicyOrder(enum.Enum):
    """Outcome of comparing two policies under the componentwise gear order."""

    EQUAL = "equal"
    LESS_EQUAL = "less-equal"
    GREATER_EQUAL = "greater-equal"
    INCOMPARABLE = "incomparable"


def validate(model: MultiGearModel) -> list[Violation]:
    """Check every model invariant; returns an empty list iff the model is valid.

    Violations are data, not faults: the model object itself is structurally
    well formed (the constructor guarantees shapes), and this reports the
    semantic problems with coordinates.
    """
    out: list[Violation] = []
    n, g = model.n_states, model.n_gears
    if not 0.0 < model.discount < 1.0:
        out.append(Violation("discount-range",
                             f"discount {model.discount!r} not in (0, 1)"))
    p = model.transitions
    if not np.all(np.isfinite(p)):
        out.append(Violation("prob-not-finite", "transitions have non-finite entries"))
        p = np.nan_to_num(p)
    for a in range(g):
        if np.any(p[a] < -ROW_EPS) or np.any(p[a] > 1 + ROW_EPS):
            i = int(np.argwhere((p[a] < -ROW_EPS) | (p[a] > 1 + ROW_EPS))[0][0])
            out.append(Violation("prob-range",
                                 f"gear {a} has transition entries outside [0, 1]",
                                 state=i + 1, gear=a))
        sums = p[a].sum(axis=1)
        for i in np.nonzero(np.abs(sums - 1.0) > ROW_EPS)[0]:
            out.append(Violation(
                "row-sum",
                f"gear {a} row for state {i + 1} sums to {sums[i]!r}",
                state=int(i) + 1, gear=a))
    q = model.resource_use
    for s in range(1, n + 1):
        i = s - 1
        if q[i, 0] < 0:
            out.append(Violation("resource-negative",
                                 f"state {s} gear 0 consumes {q[i, 0]!r} < 0",
                                 state=s, gear=0))
        if model.is_controllable(s):
            for a in range(g - 1):
                if not q[i, a + 1] - q[i, a] > GEAR_GAP_EPS:
                    out.append(Violation(
                        "gear-order",
                        f"state {s}: q[{a + 1}]={q[i, a + 1]!r} does not exceed "
                        f"q[{a}]={q[i, a]!r} by more than {GEAR_GAP_EPS}",
                        state=s, gear=a + 1))
    h = model.holding_cost
    for s in sorted(model.uncontrollable):
        i = s - 1
        for a in range(1, g):
            if not np.allclose(p[a][i], p[0][i], rtol=0.0, atol=ROW_EPS):
                out.append(Violation(
                    "uncontrollable-transitions",
                    f"uncontrollable state {s}: gear {a} row differs from gear 0",
                    state=s, gear=a))
            if abs(q[i, a] - q[i, 0]) > ROW_EPS:
                out.append(Violation(
                    "uncontrollable-resource",
                    f"uncontrollable state {s}: q differs across gears",
                    state=s, gear=a))
            if abs(h[i, a] - h[i, 0]) > ROW_EPS:
                out.append(Violation(
                    "uncontrollable-cost",
                    f"uncontrollable state {s}: h differs across gears",
                    state=s, gear=a))
    if not np.all(np.isfinite(h)):
        out.append(Violation("cost-not-finite", "holding_cost has non-finite entries"))
    if not np.all(np.isfinite(q)):
        out.append(Violation("resource-not-finite", "resource_use has non-finite entries"))
    return out


def check_policy(model: MultiGearModel, policy: StationaryPolicy) -> None:
    """Raise unless the policy covers exactly the model's controllable states."""
    if policy.states != model.controllable_states:
        raise MismatchedStatesError(
            f"policy states {policy.states} do not match controllable "
            f"states {model.controllable_states}")
    top = model.top_gear
    for s, a in zip(policy.states, policy.gears):
        if a > top:
            raise MismatchedStatesError(f"policy selects gear {a} > {top} at state {s}")


def shift(policy: StationaryPolicy, state: int, gear: int, to_gear: int) -> StationaryPolicy:
    """Move one state to another gear, leaving the rest of the policy unchanged."""
    if gear == to_gear:
        raise InvalidShiftError(state, gear, to_gear, "gears are equal")
    try:
        idx = policy.states.index(state)
    except ValueError:
        raise InvalidShiftError(state, gear, to_gear, "state not governed by policy")
    if policy.gears[idx] != gear:
        raise InvalidShiftError(
            state, gear, to_gear,
            f"policy assigns gear {policy.gears[idx]} at state {state}")
    gears = list(policy.gears)
    gears[idx] = to_gear
    return StationaryPolicy(policy.states, tuple(gears))


def policy_order(first: StationaryPolicy, second: StationaryPolicy) -> PolicyOrder:
    """Compare two policies componentwise by selected gear."""
    if first.states != second.states:
        raise MismatchedStatesError("policies are defined over different state sets")
    if first.gears == second.gears:
        return PolicyOrder.EQUAL
    le = all(a <= b for a, b in zip(first.gears, second.gears))
    if le:
        return PolicyOrder.LESS_EQUAL
    ge = all(a >= b for a, b in zip(first.gears, second.gears))
    if ge:
        return PolicyOrder.GREATER_EQUAL
    return PolicyOrder.INCOMPARABLE


def gear_vector(model: MultiGearModel, policy: StationaryPolicy) -> np.ndarray:
    """Per-state selected gear as a 0-based int array; uncontrollable states get 0."""
    check_policy(model, policy)
    gears = np.zeros(model.n_states, dtype=int)
    for s, a in zip(policy.states, policy.gears):
        gears[s - 1] = a
    return gears
