"""Long-run average criterion: bias evaluation, chain-structure checks, and
the average-criterion variant of the downshift index algorithm.

Under a unichain policy the average cost and average resource rate are
state-independent; solving the evaluation equations with the bias pinned to
zero at an anchor state gives the bias vectors the marginal metrics need.
The index algorithm itself is unchanged, it just runs on the average
marginal metrics, whose values are the discount-to-one limits of the
discounted ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsindex import (MONOTONE_EPS, IndexTable, PclCertificate,
                      _controllable_rows, _downshift_engine)
from .errors import MultichainPolicyError
from .families import PolicyFamily
from .metrics import MP_POSITIVITY_EPS, induced_dynamics
from .model import MultiGearModel, StationaryPolicy


@dataclass(frozen=True)
class AverageMetricBundle:
    """Average cost/resource rates of one unichain policy plus bias vectors.

    Biases are fixed to zero at ``anchor_state`` (they are only determined up
    to an additive constant, which cancels out of every marginal metric).
    """

    policy: StationaryPolicy
    avg_cost: float
    avg_resource: float
    cost_bias: np.ndarray
    resource_bias: np.ndarray
    anchor_state: int

    def __post_init__(self):
        self.cost_bias.setflags(write=False)
        self.resource_bias.setflags(write=False)


@dataclass(frozen=True)
class ChainStructureReport:
    """Ergodicity diagnostics for a model and policy family."""

    weakly_accessible: bool
    accessible_states: tuple[int, ...]
    transient_states: tuple[int, ...]
    unichain_ok: bool
    first_violation: StationaryPolicy | None
    violation_classes: int
    policies_checked: int
    exhaustive: bool


def _strongly_connected_components(adj: list[list[int]]) -> list[list[int]]:
    """Kosaraju's algorithm, iterative; returns components as index lists."""
    n = len(adj)
    order: list[int] = []
    seen = [False] * n
    for start in range(n):
        if seen[start]:
            continue
        stack = [(start, 0)]
        seen[start] = True
        while stack:
            node, ptr = stack[-1]
            if ptr < len(adj[node]):
                stack[-1] = (node, ptr + 1)
                nxt = adj[node][ptr]
                if not seen[nxt]:
                    seen[nxt] = True
                    stack.append((nxt, 0))
            else:
                order.append(node)
                stack.pop()
    radj: list[list[int]] = [[] for _ in range(n)]
    for i, outs in enumerate(adj):
        for j in outs:
            radj[j].append(i)
    comp = [-1] * n
    comps: list[list[int]] = []
    for start in reversed(order):
        if comp[start] != -1:
            continue
        cid = len(comps)
        comps.append([])
        stack = [start]
        comp[start] = cid
        while stack:
            node = stack.pop()
            comps[cid].append(node)
            for nxt in radj[node]:
                if comp[nxt] == -1:
                    comp[nxt] = cid
                    stack.append(nxt)
    return comps


def _adjacency(p: np.ndarray) -> list[list[int]]:
    return [list(np.nonzero(p[i] > 0.0)[0]) for i in range(p.shape[0])]


def recurrent_classes(p: np.ndarray) -> list[list[int]]:
    """Recurrent classes of a stochastic matrix: closed strongly connected
    components, as sorted 0-based index lists."""
    adj = _adjacency(p)
    comps = _strongly_connected_components(adj)
    comp_of = {}
    for cid, members in enumerate(comps):
        for i in members:
            comp_of[i] = cid
    closed = []
    for cid, members in enumerate(comps):
        if all(comp_of[j] == cid for i in members for j in adj[i]):
            closed.append(sorted(members))
    return sorted(closed)


def evaluate_policy_average(model: MultiGearModel, policy: StationaryPolicy,
                            anchor: int | None = None) -> AverageMetricBundle:
    """Solve the average-cost evaluation equations for a unichain policy.

    Raises MultichainPolicyError when the induced chain has more than one
    recurrent class. By default the bias is pinned at the lowest-labelled
    recurrent state; any state works for a unichain policy, and the marginal
    metrics downstream are anchor-independent.
    """
    p, h, q = induced_dynamics(model, policy)
    classes = recurrent_classes(p)
    if len(classes) != 1:
        raise MultichainPolicyError(policy, classes)
    anchor = classes[0][0] if anchor is None else anchor - 1
    n = model.n_states
    # unknowns: [gain, bias at states != anchor]; bias(anchor) = 0
    cols = [i for i in range(n) if i != anchor]
    a = np.zeros((n, n))
    a[:, 0] = 1.0
    for pos, j in enumerate(cols, start=1):
        a[:, pos] = (np.arange(n) == j).astype(float) - p[:, j]
    sol = np.linalg.solve(a, np.column_stack([h, q]))
    cost_bias = np.zeros(n)
    resource_bias = np.zeros(n)
    cost_bias[cols] = sol[1:, 0]
    resource_bias[cols] = sol[1:, 1]
    return AverageMetricBundle(
        policy=policy,
        avg_cost=float(sol[0, 0]),
        avg_resource=float(sol[0, 1]),
        cost_bias=cost_bias,
        resource_bias=resource_bias,
        anchor_state=anchor + 1,
    )


def check_unichain_and_accessibility(model: MultiGearModel,
                                     family: PolicyFamily, *,
                                     n_samples: int = 200,
                                     seed: int = 0) -> ChainStructureReport:
    """Chain-structure diagnostics: weak accessibility of the model and the
    unichain property of family policies.

    Weak accessibility is checked on the union digraph over all gears (one
    closed communicating class that every state can reach). Policies are
    enumerated when the family allows it, otherwise sampled; the first
    multichain policy found is reported. Violations are report data.
    """
    union = (model.transitions > 0.0).any(axis=0).astype(float)
    closed = recurrent_classes(union)
    weakly = len(closed) == 1
    accessible = tuple(i + 1 for i in closed[0]) if weakly else tuple(
        i + 1 for cls in closed for i in cls)
    transient = tuple(s for s in range(1, model.n_states + 1)
                      if s not in set(accessible))

    members = family.enumerate()
    exhaustive = members is not None
    if members is None:
        rng = np.random.default_rng(seed)
        members = [family.greatest, family.least] + [
            family.sample_member(rng) for _ in range(n_samples)]
    violation = None
    violation_classes = 0
    checked = 0
    for pol in members:
        checked += 1
        p, _, _ = induced_dynamics(model, pol)
        classes = recurrent_classes(p)
        if len(classes) != 1:
            violation = pol
            violation_classes = len(classes)
            break
    return ChainStructureReport(
        weakly_accessible=weakly,
        accessible_states=accessible,
        transient_states=transient,
        unichain_ok=violation is None,
        first_violation=violation,
        violation_classes=violation_classes,
        policies_checked=checked,
        exhaustive=exhaustive and violation is None,
    )


def _average_backend(model: MultiGearModel):
    rows = _controllable_rows(model)
    top = model.top_gear
    h, q, p = model.holding_cost, model.resource_use, model.transitions

    def adjacent(cost_bias: np.ndarray, resource_bias: np.ndarray):
        f = np.empty((len(rows), top))
        g = np.empty((len(rows), top))
        for a in range(1, top + 1):
            f[:, a - 1] = (h[:, a - 1] - h[:, a]
                           + (p[a - 1] - p[a]) @ cost_bias)[rows]
            g[:, a - 1] = (q[:, a] - q[:, a - 1]
                           + (p[a] - p[a - 1]) @ resource_bias)[rows]
        return f, g

    def full_marginals(policy: StationaryPolicy):
        bundle = evaluate_policy_average(model, policy)
        return adjacent(bundle.cost_bias, bundle.resource_bias)

    def resource_marginals(policy: StationaryPolicy):
        bundle = evaluate_policy_average(model, policy)
        _, g = adjacent(bundle.cost_bias, bundle.resource_bias)
        return g

    return full_marginals, resource_marginals


def run_ds_average(model: MultiGearModel, family: PolicyFamily | None = None, *,
                   eps_g: float = MP_POSITIVITY_EPS,
                   eps_m: float = MONOTONE_EPS,
                   pcl1_scope: str = "all") -> tuple[IndexTable, PclCertificate]:
    """Downshift index algorithm under the average criterion.

    Identical stepping, tie-breaking, recursion and certification as the
    discounted run, computed on average marginal metrics. Any multichain
    policy encountered along the chain raises MultichainPolicyError naming
    the policy; run the chain-structure report first to screen for that.
    """
    if family is None:
        family = PolicyFamily.full(model)
    full_marginals, resource_marginals = _average_backend(model)
    return _downshift_engine(model, family, full_marginals, resource_marginals,
                             eps_g, eps_m, pcl1_scope, "average")
