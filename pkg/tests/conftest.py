import numpy as np
import pytest

import gearbandit as gb


def make_m1() -> gb.MultiGearModel:
    """Two states, one active gear: the worked fixture used across the suite.

    Known exact values (hand-solved from the evaluation equations):
      all-active policy:  cost (0, 0),   resource (2, 2)
      split policy {1:0, 2:1}: cost (2, 2/3), resource (0, 4/3)
      index: state 1 -> 1.0, state 2 -> 2.5
    """
    return gb.MultiGearModel(
        n_states=2, n_gears=2, discount=0.5,
        holding_cost=[[1.0, 0.0], [2.0, 0.0]],
        resource_use=[[0.0, 1.0], [0.0, 1.0]],
        transitions=[[[1.0, 0.0], [0.0, 1.0]],
                     [[0.5, 0.5], [0.5, 0.5]]],
    )


def make_descent_model() -> gb.MultiGearModel:
    """Single state, two active gears, cost profile forcing an index descent."""
    return gb.MultiGearModel(
        n_states=1, n_gears=3, discount=0.7,
        holding_cost=[[1.0, 4.0, 0.0]],
        resource_use=[[0.0, 1.0, 2.0]],
        transitions=[[[1.0]], [[1.0]], [[1.0]]],
    )


def make_positivity_violator() -> gb.MultiGearModel:
    """Valid gear ordering, but gear 0 at state 2 routes into a heavy-usage
    state while gear 1 does not, driving a marginal resource metric negative."""
    return gb.MultiGearModel(
        n_states=2, n_gears=2, discount=0.95,
        holding_cost=[[1.0, 0.0], [1.0, 0.0]],
        resource_use=[[0.0, 100.0], [0.0, 1.0]],
        transitions=[[[1.0, 0.0], [1.0, 0.0]],
                     [[1.0, 0.0], [0.0, 1.0]]],
    )


def truncated_series_metrics(model, policy, horizon=2000):
    """Independent oracle: metrics by direct summation of the discounted series."""
    p, h, q = gb.metrics.induced_dynamics(model, policy)
    cost = np.zeros(model.n_states)
    resource = np.zeros(model.n_states)
    reach = np.eye(model.n_states)
    disc = 1.0
    for _ in range(horizon):
        cost += disc * reach @ h
        resource += disc * reach @ q
        reach = reach @ p
        disc *= model.discount
    return cost, resource


@pytest.fixture
def m1():
    return make_m1()


@pytest.fixture
def descent_model():
    return make_descent_model()


@pytest.fixture
def positivity_violator():
    return make_positivity_violator()
