"""Discounted performance metrics for stationary deterministic policies.

Evaluates total cost and total resource usage by dense linear solves,
discounted state-gear occupancies, first-period marginal metrics for gear
swaps, their marginal-productivity ratio, and the cost transformation that
zeroes the top gear's costs. Everything is a pure function of immutable
inputs; matrices stay small enough (a few thousand states) that dense LU is
the right tool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MpUndefinedError
from .model import MultiGearModel, StationaryPolicy, gear_vector

#: Marginal resource values at or below this are treated as non-positive,
#: making the MP ratio undefined (the positivity-violation signal).
MP_POSITIVITY_EPS = 1e-12


@dataclass(frozen=True)
class MetricBundle:
    """Total discounted cost and resource usage of one policy, per initial state."""

    policy: StationaryPolicy
    cost: np.ndarray
    resource: np.ndarray

    def __post_init__(self):
        self.cost.setflags(write=False)
        self.resource.setflags(write=False)


@dataclass(frozen=True)
class OccupancyVector:
    """Expected discounted visit counts x[j][a] to each state-gear pair.

    ``weights`` has shape (N, A+1) and is nonzero only at the pairs the
    policy actually selects. Summed over everything it equals 1/(1-beta)
    whenever ``initial`` is a probability vector.
    """

    policy: StationaryPolicy
    initial: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.initial.setflags(write=False)
        self.weights.setflags(write=False)

    def total_mass(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True)
class ModifiedCosts:
    """Holding costs transformed so the top gear costs exactly zero.

    ``condition_estimate`` is the 1-norm condition number of I - beta*P_top;
    the transform degrades as the discount approaches 1.
    """

    values: np.ndarray
    condition_estimate: float

    def __post_init__(self):
        self.values.setflags(write=False)


def induced_dynamics(model: MultiGearModel, policy: StationaryPolicy):
    """Per-state (transition matrix, cost vector, resource vector) under a policy."""
    gears = gear_vector(model, policy)
    idx = np.arange(model.n_states)
    p = model.transitions[gears, idx, :]
    h = model.holding_cost[idx, gears]
    q = model.resource_use[idx, gears]
    return p, h, q


def evaluate_policy(model: MultiGearModel, policy: StationaryPolicy) -> MetricBundle:
    """Solve the policy evaluation equations for cost and resource totals.

    The system matrix I - beta*P has spectral radius bounded away from zero
    for discount < 1, so the solution exists and is unique.
    """
    p, h, q = induced_dynamics(model, policy)
    a = np.eye(model.n_states) - model.discount * p
    sol = np.linalg.solve(a, np.column_stack([h, q]))
    return MetricBundle(policy=policy, cost=sol[:, 0].copy(), resource=sol[:, 1].copy())


def evaluate_resource(model: MultiGearModel, policy: StationaryPolicy) -> np.ndarray:
    """Resource totals only; cheaper when the cost side is not needed."""
    p, _, q = induced_dynamics(model, policy)
    a = np.eye(model.n_states) - model.discount * p
    return np.linalg.solve(a, q)


def uniform_initial(model: MultiGearModel) -> np.ndarray:
    """Uniform initial distribution, the default full-support choice."""
    return np.full(model.n_states, 1.0 / model.n_states)


def occupancies(model: MultiGearModel, policy: StationaryPolicy,
                initial: np.ndarray | None = None) -> OccupancyVector:
    """Discounted state-gear occupancy measure of the policy.

    Solves the flow balance system: each state's occupancy minus the
    discounted inflow equals its initial mass.
    """
    if initial is None:
        initial = uniform_initial(model)
    initial = np.asarray(initial, dtype=float)
    if initial.shape != (model.n_states,):
        raise ValueError(f"initial distribution must have shape ({model.n_states},)")
    if np.any(initial < 0) or abs(initial.sum() - 1.0) > 1e-9:
        raise ValueError("initial must be a probability vector")
    p, _, _ = induced_dynamics(model, policy)
    a = np.eye(model.n_states) - model.discount * p
    x = np.linalg.solve(a.T, initial)
    gears = gear_vector(model, policy)
    weights = np.zeros((model.n_states, model.n_gears))
    weights[np.arange(model.n_states), gears] = x
    return OccupancyVector(policy=policy, initial=initial.copy(), weights=weights)


def marginal_cost_all(model: MultiGearModel, bundle: MetricBundle,
                      gear_a: int, gear_b: int) -> np.ndarray:
    """Vector of first-period cost decrements for swapping gear_a -> gear_b.

    Component j is cost(start with gear_a, then follow the policy) minus
    cost(start with gear_b, then follow the policy).
    """
    beta = model.discount
    diff = model.transitions[gear_a] - model.transitions[gear_b]
    return (model.holding_cost[:, gear_a] - model.holding_cost[:, gear_b]
            + beta * diff @ bundle.cost)


def marginal_resource_all(model: MultiGearModel, bundle: MetricBundle,
                          gear_a: int, gear_b: int) -> np.ndarray:
    """Vector of first-period resource increments for swapping gear_a -> gear_b."""
    beta = model.discount
    diff = model.transitions[gear_b] - model.transitions[gear_a]
    return (model.resource_use[:, gear_b] - model.resource_use[:, gear_a]
            + beta * diff @ bundle.resource)


def marginal_cost(model: MultiGearModel, bundle: MetricBundle,
                  state: int, gear_a: int, gear_b: int) -> float:
    """Cost decrement at one state for shifting the initial gear_a to gear_b."""
    if gear_a == gear_b:
        raise ValueError("gears must differ")
    i = state - 1
    beta = model.discount
    row = model.transitions[gear_a][i] - model.transitions[gear_b][i]
    return float(model.holding_cost[i, gear_a] - model.holding_cost[i, gear_b]
                 + beta * row @ bundle.cost)


def marginal_resource(model: MultiGearModel, bundle: MetricBundle,
                      state: int, gear_a: int, gear_b: int) -> float:
    """Resource increment at one state for shifting the initial gear_a to gear_b."""
    if gear_a == gear_b:
        raise ValueError("gears must differ")
    i = state - 1
    beta = model.discount
    row = model.transitions[gear_b][i] - model.transitions[gear_a][i]
    return float(model.resource_use[i, gear_b] - model.resource_use[i, gear_a]
                 + beta * row @ bundle.resource)


def mp_metric(model: MultiGearModel, bundle: MetricBundle,
              state: int, gear_a: int, gear_b: int,
              eps_g: float = MP_POSITIVITY_EPS) -> float:
    """Marginal productivity: marginal cost over marginal resource.

    Raises MpUndefinedError when the denominator is not safely positive;
    callers treat that as a positivity-condition violation.
    """
    g = marginal_resource(model, bundle, state, gear_a, gear_b)
    if not g > eps_g:
        raise MpUndefinedError(g, state=state, gear=gear_a, other_gear=gear_b)
    return marginal_cost(model, bundle, state, gear_a, gear_b) / g


def modified_costs(model: MultiGearModel) -> ModifiedCosts:
    """Cost transform that makes the top gear free without changing the problem.

    Subtracting (I - beta*P^a)(I - beta*P^top)^{-1} h^top from every gear's
    costs shifts each policy's total cost by the same state-dependent amount,
    so marginal metrics and MP ratios are unchanged and the top-gear column
    becomes identically zero.
    """
    beta = model.discount
    top = model.top_gear
    a_top = np.eye(model.n_states) - beta * model.transitions[top]
    z = np.linalg.solve(a_top, model.holding_cost[:, top])
    values = np.empty_like(model.holding_cost)
    for a in range(model.n_gears):
        values[:, a] = (model.holding_cost[:, a] - z
                        + beta * model.transitions[a] @ z)
    values[:, top] = 0.0
    return ModifiedCosts(values=values, condition_estimate=float(np.linalg.cond(a_top, 1)))


def metric_at(vector: np.ndarray, initial: np.ndarray) -> float:
    """Aggregate a per-state metric vector under an initial distribution."""
    return float(np.asarray(initial) @ vector)


def total_cost(model: MultiGearModel, bundle: MetricBundle, lam: float,
               initial: np.ndarray | None = None) -> float:
    """Cost plus lam-priced resource usage, aggregated over the initial law."""
    if initial is None:
        initial = uniform_initial(model)
    return metric_at(bundle.cost + lam * bundle.resource, initial)
