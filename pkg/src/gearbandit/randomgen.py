"""Seeded random model generation for experiments and tests.

Gear consumption levels are shared across states up to a bounded jitter, so
the strict gear ordering holds by construction; transition rows are Dirichlet
draws, optionally blended with the uniform distribution to force
irreducibility (hence unichain behavior under every policy).
"""

from __future__ import annotations

import numpy as np

from .joint import JointInstance
from .model import MultiGearModel, StationaryPolicy


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_model(seed, n_states: int, n_gears: int, *,
                 discount: float = 0.9,
                 gear_gap: tuple[float, float] = (0.5, 1.5),
                 state_jitter: float = 0.3,
                 cost_range: tuple[float, float] = (0.0, 1.0),
                 mixing: float = 0.1,
                 gear_structure: float = 1.0,
                 gear_coupling: float = 0.5,
                 n_uncontrollable: int = 0) -> MultiGearModel:
    """One random model.

    ``gear_gap`` bounds the consumption increment between consecutive gears;
    ``state_jitter`` (must be < 1/2) scales per-state noise relative to the
    smallest gap so the ordering stays strict; ``mixing`` blends every
    transition row with uniform, making all chains irreducible when > 0.

    ``gear_structure`` interpolates the cost matrix between i.i.d. draws (0)
    and a diminishing-returns profile (1) in which each extra gear buys a
    smaller cost reduction per unit of resource. Without that structure a
    middle gear is usually never optimal at any resource price, which makes
    the model non-indexable by construction, so structured costs are the
    default. ``gear_coupling`` pulls the per-gear transition matrices toward
    a shared chain, damping the transition contribution to the marginal
    metrics.
    """
    if not 0.0 <= state_jitter < 0.5:
        raise ValueError("state_jitter must lie in [0, 0.5)")
    rng = _as_rng(seed)
    n, g = n_states, n_gears

    gaps = rng.uniform(gear_gap[0], gear_gap[1], size=max(g - 1, 1))
    base = np.concatenate([[rng.uniform(0.0, 0.5)], gaps[:g - 1]]).cumsum()[:g]
    amp = state_jitter * gaps.min()
    q = base[None, :] + amp * rng.uniform(0.0, 1.0, size=(n, g))

    lo, hi = cost_range
    span = max(hi - lo, 1e-12)
    h_iid = rng.uniform(lo, hi, size=(n, g))
    # ratios sorted decreasing in the gear: the pair (a-1, a) trades cost for
    # resource at a rate that shrinks as the gear rises
    ratios = np.sort(rng.uniform(0.1, 2.0, size=(n, max(g - 1, 1))), axis=1)[:, ::-1]
    h_structured = np.empty((n, g))
    h_structured[:, g - 1] = rng.uniform(lo, lo + 0.1 * span, size=n)
    for a in range(g - 1, 0, -1):
        h_structured[:, a - 1] = (h_structured[:, a]
                                  + ratios[:, a - 1] * (q[:, a] - q[:, a - 1]))
    h = (1.0 - gear_structure) * h_iid + gear_structure * h_structured

    p = rng.dirichlet(np.ones(n), size=(g, n))
    if gear_coupling > 0.0:
        shared = rng.dirichlet(np.ones(n), size=n)
        p = (1.0 - gear_coupling) * p + gear_coupling * shared[None, :, :]
    if mixing > 0.0:
        p = (1.0 - mixing) * p + mixing / n

    uncontrollable = ()
    if n_uncontrollable > 0:
        uncontrollable = tuple(
            int(s) + 1 for s in rng.choice(n, size=n_uncontrollable, replace=False))
        for s in uncontrollable:
            i = s - 1
            p[:, i, :] = p[0, i, :]
            q[i, :] = q[i, 0]
            h[i, :] = h[i, 0]

    return MultiGearModel(
        n_states=n, n_gears=g, discount=discount,
        holding_cost=h, resource_use=q, transitions=p,
        uncontrollable=uncontrollable,
    )


def random_policy(seed, model: MultiGearModel) -> StationaryPolicy:
    """Uniformly random gear assignment over the controllable states."""
    rng = _as_rng(seed)
    states = model.controllable_states
    gears = tuple(int(a) for a in rng.integers(0, model.n_gears, len(states)))
    return StationaryPolicy(states, gears)


def random_instance(seed, n_projects: int, n_states: int, n_gears: int, *,
                    discount: float = 0.9, budget_fraction: float = 0.5,
                    **model_kwargs) -> JointInstance:
    """A joint instance of i.i.d. random projects with a partially binding budget.

    ``budget_fraction`` interpolates between the minimum feasible budget
    (everyone passive) and the budget where every project can hold its top
    gear anywhere.
    """
    rng = _as_rng(seed)
    projects = tuple(
        random_model(rng, n_states, n_gears, discount=discount, **model_kwargs)
        for _ in range(n_projects))
    floor = sum(float(m.resource_use[:, 0].max()) for m in projects)
    ceil = sum(float(m.resource_use[:, -1].max()) for m in projects)
    budget = floor + budget_fraction * (ceil - floor)
    return JointInstance(projects=projects, budget=budget)
