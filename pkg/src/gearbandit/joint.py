"""Several projects sharing one peak resource budget per period.

Provides the exact product-space dynamic program (small instances only), the
price-decoupled lower bound obtained by dualizing the aggregate resource
constraint, the downshift index heuristic that assigns gears greedily by
index value, simpler baselines, and exact or Monte Carlo policy evaluation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dsindex import IndexTable
from .errors import EnumerationCapError, GearBanditError
from .metrics import evaluate_policy
from .model import MultiGearModel, Violation
from .oracle import greedy_policy, price_search_span, solve_lambda_price

DEFAULT_ENUMERATION_CAP = 1_000_000

JointState = tuple[int, ...]
JointAction = tuple[int, ...]
JointPolicy = Callable[[JointState], JointAction]


@dataclass(frozen=True)
class JointInstance:
    """L projects with a shared discount factor and a peak budget per period."""

    projects: tuple[MultiGearModel, ...]
    budget: float

    def __post_init__(self):
        projects = tuple(self.projects)
        if not projects:
            raise ValueError("an instance needs at least one project")
        object.__setattr__(self, "projects", projects)
        object.__setattr__(self, "budget", float(self.budget))

    @property
    def discount(self) -> float:
        return self.projects[0].discount

    def fits(self, total: float) -> bool:
        return total <= self.budget + 1e-12 * max(1.0, abs(self.budget))


@dataclass(frozen=True)
class DualSolution:
    """Optimal multiplier and decoupled lower bound on the joint optimum."""

    lambda_star: float
    bound: float
    per_project_values: tuple[float, ...]
    iterations: int


@dataclass(frozen=True)
class JointDpResult:
    """Exact optimum of the joint problem over the product state space."""

    states: tuple[JointState, ...]
    values: np.ndarray
    actions: tuple[JointAction, ...]

    def __post_init__(self):
        self.values.setflags(write=False)
        object.__setattr__(self, "_index",
                           {s: i for i, s in enumerate(self.states)})

    def value_of(self, state: JointState) -> float:
        return float(self.values[self._index[tuple(state)]])

    def action_of(self, state: JointState) -> JointAction:
        return self.actions[self._index[tuple(state)]]


@dataclass(frozen=True)
class PolicyValue:
    """Evaluated cost of a joint policy; ``stderr`` is None in exact mode."""

    value: float
    stderr: float | None
    mode: str
    replications: int = 0
    horizon: int = 0


def validate_instance(instance: JointInstance) -> list[Violation]:
    """Instance-level invariants: one shared discount, a nonnegative budget,
    and the all-passive action feasible in every joint state."""
    out: list[Violation] = []
    betas = {m.discount for m in instance.projects}
    if len(betas) > 1:
        out.append(Violation("discount-mismatch",
                             f"projects use different discounts {sorted(betas)}"))
    if instance.budget < 0:
        out.append(Violation("budget-negative", f"budget {instance.budget!r} < 0"))
    worst_passive = sum(float(m.resource_use[:, 0].max()) for m in instance.projects)
    if not instance.fits(worst_passive):
        out.append(Violation(
            "passive-infeasible",
            f"all-passive action can consume {worst_passive!r} > budget"))
    return out


def joint_states(instance: JointInstance) -> list[JointState]:
    """All joint states, first project's label varying slowest."""
    return list(itertools.product(
        *(range(1, m.n_states + 1) for m in instance.projects)))


def enumeration_size(instance: JointInstance) -> int:
    size = 1
    for m in instance.projects:
        size *= m.n_states * m.n_gears
    return size


def _check_cap(instance: JointInstance, cap: int, what: str) -> None:
    size = enumeration_size(instance)
    if size > cap:
        n_states = math.prod(m.n_states for m in instance.projects)
        n_actions = math.prod(m.n_gears for m in instance.projects)
        raise EnumerationCapError(
            size, cap, f"{what}: {n_states} joint states x {n_actions} action tuples")


def joint_consumption(instance: JointInstance, state: JointState,
                      action: JointAction) -> float:
    return sum(float(m.resource_use[s - 1, a])
               for m, s, a in zip(instance.projects, state, action))


def joint_cost(instance: JointInstance, state: JointState,
               action: JointAction) -> float:
    return sum(float(m.holding_cost[s - 1, a])
               for m, s, a in zip(instance.projects, state, action))


def feasible_actions(instance: JointInstance, state: JointState) -> list[JointAction]:
    """Action tuples within budget at the given joint state, lexicographic."""
    out = []
    for action in itertools.product(*(range(m.n_gears) for m in instance.projects)):
        if instance.fits(joint_consumption(instance, state, action)):
            out.append(action)
    if not out:
        raise GearBanditError(
            f"no feasible joint action in state {state}; passive feasibility violated")
    return out


def _joint_row(instance: JointInstance, state: JointState,
               action: JointAction) -> np.ndarray:
    row = np.array([1.0])
    for m, s, a in zip(instance.projects, state, action):
        row = np.kron(row, m.transitions[a][s - 1])
    return row


def solve_joint_dp(instance: JointInstance, *,
                   cap: int = DEFAULT_ENUMERATION_CAP) -> JointDpResult:
    """Exact optimum by policy iteration on the product chain.

    Transition rows multiply across projects; the action search per state
    covers only the budget-feasible tuples. Refuses instances whose joint
    state-action count exceeds the cap.
    """
    _check_cap(instance, cap, "exact joint optimum")
    states = joint_states(instance)
    m_states = len(states)
    beta = instance.discount
    feas = [feasible_actions(instance, s) for s in states]
    passive = (0,) * len(instance.projects)
    actions: list[JointAction] = [passive if passive in fs else fs[0] for fs in feas]

    def evaluate(acts: Sequence[JointAction]) -> np.ndarray:
        p = np.vstack([_joint_row(instance, s, a) for s, a in zip(states, acts)])
        c = np.array([joint_cost(instance, s, a) for s, a in zip(states, acts)])
        return np.linalg.solve(np.eye(m_states) - beta * p, c)

    values = evaluate(actions)
    for _ in range(1000):
        improved = list(actions)
        for i, s in enumerate(states):
            best_a, best_v = None, math.inf
            for a in feas[i]:
                v = joint_cost(instance, s, a) + beta * (_joint_row(instance, s, a) @ values)
                if v < best_v:
                    best_a, best_v = a, v
            improved[i] = best_a
        if improved == actions:
            break
        actions = improved
        values = evaluate(actions)
    return JointDpResult(states=tuple(states), values=values.copy(),
                         actions=tuple(actions))


def lagrangian_bound(instance: JointInstance, initial_state: JointState, *,
                     max_doublings: int = 60,
                     bisect_iters: int = 64) -> DualSolution:
    """Decoupled lower bound on the joint optimum via the resource price.

    For any nonnegative price, the sum of single-project optimal costs minus
    the priced budget mass lower-bounds the joint optimum; the bound is
    concave in the price, so the best price is found by bisecting the sign
    of its slope (total resource usage of the per-project optimal policies
    minus the budget mass). Per-project values come from exact policy
    iteration, so the bound is valid whether or not projects are indexable.
    """
    beta = instance.discount
    budget_mass = instance.budget / (1.0 - beta)
    evaluations = 0

    def dual(lam: float) -> tuple[float, float, tuple[float, ...]]:
        nonlocal evaluations
        evaluations += 1
        vals = []
        slope = -budget_mass
        for m, s in zip(instance.projects, initial_state):
            sol = solve_lambda_price(m, lam)
            vals.append(float(sol.values[s - 1]))
            pol = greedy_policy(m, sol)
            slope += float(evaluate_policy(m, pol).resource[s - 1])
        return sum(vals) - lam * budget_mass, slope, tuple(vals)

    best_val, best_lam = -math.inf, 0.0
    best_per = ()

    def consider(lam: float) -> float:
        nonlocal best_val, best_lam, best_per
        val, slope, per = dual(lam)
        if val > best_val:
            best_val, best_lam, best_per = val, lam, per
        return slope

    slope0 = consider(0.0)
    if slope0 > 0:
        lo = 0.0
        hi = max(price_search_span(m) for m in instance.projects)
        doublings = 0
        while consider(hi) > 0 and doublings < max_doublings:
            lo = hi
            hi *= 2.0
            doublings += 1
        for _ in range(bisect_iters):
            mid = 0.5 * (lo + hi)
            if consider(mid) > 0:
                lo = mid
            else:
                hi = mid
    return DualSolution(lambda_star=best_lam, bound=best_val,
                        per_project_values=best_per, iterations=evaluations)


def downshift_policy_action(instance: JointInstance,
                            tables: Sequence[IndexTable],
                            state: JointState) -> JointAction:
    """Gear assignment of the downshift index heuristic at one joint state.

    Every project starts at its top gear (uncontrollable states start
    passive, where all gears coincide anyway). While the assignment exceeds
    the budget, or some active project's index at its current pair is
    non-positive, the project with the smallest index is shifted one gear
    down; ties break toward the lowest project number. Terminates after at
    most the total number of active gears.
    """
    gears = [m.top_gear if m.is_controllable(s) else 0
             for m, s in zip(instance.projects, state)]

    def active() -> list[int]:
        return [l for l, a in enumerate(gears) if a >= 1]

    while True:
        total = joint_consumption(instance, state, tuple(gears))
        act = active()
        min_dai = min((tables[l].lookup(state[l], gears[l]) for l in act),
                      default=math.inf)
        if instance.fits(total) and min_dai > 0:
            break
        if not act:
            raise GearBanditError(
                f"all-passive assignment still exceeds the budget in state {state}")
        pick = min(act, key=lambda l: (tables[l].lookup(state[l], gears[l]), l))
        gears[pick] -= 1
    return tuple(gears)


def downshift_policy(instance: JointInstance,
                     tables: Sequence[IndexTable]) -> JointPolicy:
    """Stationary joint policy wrapping the downshift heuristic, memoized."""
    cache: dict[JointState, JointAction] = {}

    def policy(state: JointState) -> JointAction:
        state = tuple(state)
        if state not in cache:
            cache[state] = downshift_policy_action(instance, tables, state)
        return cache[state]

    return policy


def all_passive_policy(instance: JointInstance) -> JointPolicy:
    passive = (0,) * len(instance.projects)
    return lambda state: passive


def myopic_policy(instance: JointInstance) -> JointPolicy:
    """Feasible action minimizing the immediate holding cost, per state."""
    cache: dict[JointState, JointAction] = {}

    def policy(state: JointState) -> JointAction:
        state = tuple(state)
        if state not in cache:
            cache[state] = min(feasible_actions(instance, state),
                               key=lambda a: (joint_cost(instance, state, a), a))
        return cache[state]

    return policy


def random_feasible_policy(instance: JointInstance, seed: int = 0) -> JointPolicy:
    """Stationary policy drawing one feasible action per state, seeded."""
    cache: dict[JointState, JointAction] = {}
    states = joint_states(instance)
    index = {s: i for i, s in enumerate(states)}

    def policy(state: JointState) -> JointAction:
        state = tuple(state)
        if state not in cache:
            rng = np.random.default_rng(np.random.SeedSequence([seed, index[state]]))
            options = feasible_actions(instance, state)
            cache[state] = options[rng.integers(0, len(options))]
        return cache[state]

    return policy


def default_mc_horizon(instance: JointInstance, bias: float = 1e-6) -> int:
    """Horizon making the discounted truncation bias at most ``bias``."""
    beta = instance.discount
    worst = sum(float(np.max(np.abs(m.holding_cost))) for m in instance.projects)
    if worst == 0.0:
        return 1
    t = math.log(bias * (1.0 - beta) / worst) / math.log(beta)
    return max(1, int(math.ceil(t)))


def evaluate_joint_policy(instance: JointInstance, policy: JointPolicy,
                          initial_state: JointState, *, mode: str = "exact",
                          replications: int = 1000, horizon: int | None = None,
                          seed: int = 0,
                          cap: int = DEFAULT_ENUMERATION_CAP) -> PolicyValue:
    """Expected discounted cost of a joint policy from one initial state.

    Exact mode solves the evaluation system on the product chain (subject to
    the enumeration cap). Monte Carlo mode simulates ``replications``
    truncated trajectories with one independent substream per (replication,
    project), so results are reproducible and replications can run in any
    order.
    """
    initial_state = tuple(initial_state)
    if mode == "exact":
        _check_cap(instance, cap, "exact policy evaluation")
        states = joint_states(instance)
        acts = [tuple(policy(s)) for s in states]
        for s, a in zip(states, acts):
            if not instance.fits(joint_consumption(instance, s, a)):
                raise GearBanditError(f"policy action {a} infeasible in state {s}")
        p = np.vstack([_joint_row(instance, s, a) for s, a in zip(states, acts)])
        c = np.array([joint_cost(instance, s, a) for s, a in zip(states, acts)])
        values = np.linalg.solve(np.eye(len(states)) - instance.discount * p, c)
        idx = states.index(initial_state)
        return PolicyValue(value=float(values[idx]), stderr=None, mode="exact")

    if mode != "mc":
        raise ValueError(f"mode must be 'exact' or 'mc', got {mode!r}")
    if replications < 1:
        raise ValueError("replications must be at least 1")
    if horizon is None:
        horizon = default_mc_horizon(instance)
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    beta = instance.discount
    cumulative = [[np.cumsum(m.transitions[a], axis=1) for a in range(m.n_gears)]
                  for m in instance.projects]
    totals = np.empty(replications)
    n_projects = len(instance.projects)
    for rep in range(replications):
        draws = [np.random.default_rng(
            np.random.SeedSequence([seed, rep, l])).random(horizon)
            for l in range(n_projects)]
        state = list(initial_state)
        disc = 1.0
        total = 0.0
        for t in range(horizon):
            action = policy(tuple(state))
            total += disc * joint_cost(instance, tuple(state), action)
            for l in range(n_projects):
                row = cumulative[l][action[l]][state[l] - 1]
                state[l] = int(np.searchsorted(row, draws[l][t], side="right")) + 1
                state[l] = min(state[l], instance.projects[l].n_states)
            disc *= beta
        totals[rep] = total
    stderr = float(totals.std(ddof=1) / math.sqrt(replications)) if replications > 1 else 0.0
    return PolicyValue(value=float(totals.mean()), stderr=stderr, mode="mc",
                       replications=replications, horizon=horizon)
