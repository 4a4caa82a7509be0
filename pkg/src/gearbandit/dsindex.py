"""Downshift adaptive-greedy computation of the marginal productivity index.

Starting from the policy that runs every controllable state at the top gear,
the algorithm repeatedly downshifts one state by one gear, always picking a
move of minimal marginal-productivity ratio among those that keep the policy
inside the postulated family. After exactly A*N_controllable steps every
state has descended to the passive gear; the pivot values are the index.

Only the first step evaluates MP ratios directly from a policy evaluation.
Later steps update every pair's ratio through the exact one-shift recursion,
which needs just the adjacent marginal resource metrics at the current and
previous chain policies (one resource solve per step).

Certification tracks the two conditions that make the output an index:
positivity of all adjacent marginal resource metrics along the chain, and a
nondecreasing pivot sequence. Violations never abort the run; they are
recorded as witnesses and the table is returned flagged non-certified.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConnectednessError, MpUndefinedError
from .families import ENUMERATION_LIMIT, PolicyFamily
from .metrics import (MP_POSITIVITY_EPS, evaluate_policy, evaluate_resource,
                      marginal_cost, marginal_resource)
from .model import MultiGearModel, StationaryPolicy, shift

#: Slack allowed in the nondecreasing-index check; exact ties are not descents.
MONOTONE_EPS = 1e-9


@dataclass(frozen=True)
class IndexStep:
    """One pivot of the run: at step k, ``state`` dropped from ``gear`` to
    ``gear - 1`` and ``value`` is its index. NaN marks a value that was
    undefined because positivity failed at the pivot."""

    k: int
    state: int
    gear: int
    value: float


@dataclass(frozen=True)
class IndexTable:
    """Ordered pivots plus the descending policy chain they were taken along.

    ``policy_chain`` has one more entry than ``steps``; entry k is the policy
    the k-th pivot was evaluated at, and the last entry is all-passive.
    """

    steps: tuple[IndexStep, ...]
    policy_chain: tuple[StationaryPolicy, ...]
    criterion: str = "discounted"
    _by_pair: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_by_pair",
            {(s.state, s.gear): s.value for s in self.steps})

    def lookup(self, state: int, gear: int) -> float:
        """Index value of one (state, active gear) pair."""
        return self._by_pair[(state, gear)]

    def pairs(self) -> set[tuple[int, int]]:
        return set(self._by_pair)

    def values_by_pair(self) -> dict[tuple[int, int], float]:
        return dict(self._by_pair)


@dataclass(frozen=True)
class Pcl1Witness:
    """First adjacent marginal resource metric found non-positive.

    ``chain_index`` is the 1-based position in the policy chain, or -1 when
    the violating policy came from a family sweep outside the chain.
    """

    chain_index: int
    policy: StationaryPolicy
    state: int
    gear: int
    value: float


@dataclass(frozen=True)
class Pcl2Witness:
    """First descent in the pivot sequence: step k has ``value`` followed by
    the smaller ``next_value``."""

    step: int
    value: float
    next_value: float


@dataclass(frozen=True)
class PclCertificate:
    pcl1_ok: bool
    pcl2_ok: bool
    pcl1_witness: Pcl1Witness | None
    pcl2_witness: Pcl2Witness | None
    eps_g: float
    eps_m: float
    scope: str
    coverage: str

    @property
    def certified(self) -> bool:
        return self.pcl1_ok and self.pcl2_ok


def recursive_update(m_prev: float, g_prev: float, g_curr: float,
                     m_star_prev: float,
                     eps_g: float = MP_POSITIVITY_EPS) -> float:
    """One-shift update of an MP ratio across consecutive chain policies.

    Given a pair's ratio and marginal resource at the previous policy, and
    its marginal resource at the current one, returns the ratio at the
    current policy: the gap to the last pivot value scales by the resource
    ratio. Raises MpUndefinedError when the current marginal resource is not
    safely positive.
    """
    if not g_curr > eps_g:
        raise MpUndefinedError(g_curr)
    return m_star_prev + (g_prev / g_curr) * (m_prev - m_star_prev)


def _controllable_rows(model: MultiGearModel) -> np.ndarray:
    return np.array([s - 1 for s in model.controllable_states], dtype=int)


def _adjacent_cost(model: MultiGearModel, cost: np.ndarray,
                   rows: np.ndarray) -> np.ndarray:
    """Matrix of marginal cost metrics for every adjacent downshift pair.

    Column a-1 holds the (a-1, a) swap value at each controllable state.
    """
    beta, h, p = model.discount, model.holding_cost, model.transitions
    out = np.empty((len(rows), model.top_gear))
    for a in range(1, model.top_gear + 1):
        full = h[:, a - 1] - h[:, a] + beta * (p[a - 1] - p[a]) @ cost
        out[:, a - 1] = full[rows]
    return out


def _adjacent_resource(model: MultiGearModel, resource: np.ndarray,
                       rows: np.ndarray) -> np.ndarray:
    """Matrix of marginal resource metrics for every adjacent pair."""
    beta, q, p = model.discount, model.resource_use, model.transitions
    out = np.empty((len(rows), model.top_gear))
    for a in range(1, model.top_gear + 1):
        full = q[:, a] - q[:, a - 1] + beta * (p[a] - p[a - 1]) @ resource
        out[:, a - 1] = full[rows]
    return out


def _discounted_backend(model: MultiGearModel):
    rows = _controllable_rows(model)

    def full_marginals(policy: StationaryPolicy):
        bundle = evaluate_policy(model, policy)
        return (_adjacent_cost(model, bundle.cost, rows),
                _adjacent_resource(model, bundle.resource, rows))

    def resource_marginals(policy: StationaryPolicy):
        return _adjacent_resource(model, evaluate_resource(model, policy), rows)

    return full_marginals, resource_marginals


def _downshift_engine(model: MultiGearModel, family: PolicyFamily,
                      full_marginals: Callable, resource_marginals: Callable,
                      eps_g: float, eps_m: float, pcl1_scope: str,
                      criterion: str) -> tuple[IndexTable, PclCertificate]:
    if pcl1_scope not in ("all", "candidates"):
        raise ValueError(f"pcl1_scope must be 'all' or 'candidates', got {pcl1_scope!r}")
    states = model.controllable_states
    n, top = len(states), model.top_gear
    total_steps = n * top
    row = {s: i for i, s in enumerate(states)}

    policy = family.greatest
    if not family.contains(policy):
        raise ConnectednessError("family lacks the all-top-gear policy", policy)
    chain = [policy]
    steps: list[IndexStep] = []
    pcl1_witness: Pcl1Witness | None = None

    def scan_all(g_mat: np.ndarray, chain_index: int, at: StationaryPolicy):
        nonlocal pcl1_witness
        if pcl1_witness is not None:
            return
        bad = np.argwhere(~(g_mat > eps_g))
        if bad.size:
            i, c = bad[0]
            pcl1_witness = Pcl1Witness(chain_index, at, states[i], int(c) + 1,
                                       float(g_mat[i, c]))

    def scan_candidates(g_mat, chain_index, at, candidates):
        nonlocal pcl1_witness
        if pcl1_witness is not None:
            return
        for s, a in candidates:
            val = g_mat[row[s], a - 1]
            if not val > eps_g:
                pcl1_witness = Pcl1Witness(chain_index, at, s, a, float(val))
                return

    if total_steps == 0:
        cert = PclCertificate(True, True, None, None, eps_g, eps_m,
                              pcl1_scope, "empty index (no controllable state)")
        return IndexTable((), tuple(chain), criterion), cert

    f_mat, g_mat = full_marginals(policy)
    m_mat = np.divide(f_mat, g_mat, out=np.full_like(f_mat, np.nan),
                      where=g_mat > eps_g)
    if pcl1_scope == "all":
        scan_all(g_mat, 1, policy)
    need_resync = False

    for k in range(1, total_steps + 1):
        candidates = family.downshift_candidates(policy)
        if not candidates:
            raise ConnectednessError(
                f"no legal downshift at step {k}; family violates connectedness",
                policy)
        if pcl1_scope == "candidates":
            scan_candidates(g_mat, k, policy, candidates)
        if need_resync or any(
                np.isnan(m_mat[row[s], a - 1]) and g_mat[row[s], a - 1] > eps_g
                for s, a in candidates):
            # Recover honest ratios after a positivity failure broke the
            # recursion; only reachable on non-certifiable runs.
            f_mat, g_mat = full_marginals(policy)
            m_mat = np.divide(f_mat, g_mat, out=np.full_like(f_mat, np.nan),
                              where=g_mat > eps_g)
            need_resync = False

        eligible = [(s, a) for s, a in candidates
                    if np.isfinite(m_mat[row[s], a - 1])]
        if eligible:
            state, gear = min(
                eligible, key=lambda sa: (m_mat[row[sa[0]], sa[1] - 1], sa[0], sa[1]))
        else:
            state, gear = min(candidates)
        m_star = float(m_mat[row[state], gear - 1])
        steps.append(IndexStep(k, state, gear, m_star))
        policy = shift(policy, state, gear, gear - 1)
        chain.append(policy)

        last = k == total_steps
        if not last or pcl1_scope == "all":
            g_next = resource_marginals(policy)
            if pcl1_scope == "all":
                scan_all(g_next, k + 1, policy)
            if not last:
                if np.isfinite(m_star):
                    ratio = np.divide(g_mat, g_next,
                                      out=np.full_like(g_mat, np.nan),
                                      where=g_next > eps_g)
                    m_mat = m_star + ratio * (m_mat - m_star)
                else:
                    need_resync = True
                g_mat = g_next

    pcl2_witness = None
    for a, b in zip(steps, steps[1:]):
        if b.value < a.value - eps_m:
            pcl2_witness = Pcl2Witness(a.k, a.value, b.value)
            break

    scope_note = ("all state-gear pairs" if pcl1_scope == "all"
                  else "candidate pairs only")
    cert = PclCertificate(
        pcl1_ok=pcl1_witness is None,
        pcl2_ok=pcl2_witness is None,
        pcl1_witness=pcl1_witness,
        pcl2_witness=pcl2_witness,
        eps_g=eps_g,
        eps_m=eps_m,
        scope=pcl1_scope,
        coverage=f"generated chain of {total_steps + 1} policies, {scope_note}",
    )
    return IndexTable(tuple(steps), tuple(chain), criterion), cert


def run_ds(model: MultiGearModel, family: PolicyFamily | None = None, *,
           eps_g: float = MP_POSITIVITY_EPS, eps_m: float = MONOTONE_EPS,
           pcl1_scope: str = "all") -> tuple[IndexTable, PclCertificate]:
    """Run the downshift adaptive-greedy index algorithm.

    Executes exactly A*N_controllable steps; ties in the argmin break by
    smallest ratio, then lowest state label, then lowest gear. With
    ``pcl1_scope='all'`` (default) positivity is checked for every state-gear
    pair at every chain policy; ``'candidates'`` restricts the check to the
    pairs actually eligible at each step, which is what the recursion itself
    consumes.

    Returns the index table and the certificate; a non-certified table is
    still returned in full so diagnostics are complete.
    """
    if family is None:
        family = PolicyFamily.full(model)
    full_marginals, resource_marginals = _discounted_backend(model)
    return _downshift_engine(model, family, full_marginals, resource_marginals,
                             eps_g, eps_m, pcl1_scope, "discounted")


def verify_index_table_direct(model: MultiGearModel, table: IndexTable, *,
                              eps_g: float = MP_POSITIVITY_EPS) -> float:
    """Recompute every pivot value directly and report the worst discrepancy.

    Every chain policy is re-evaluated from scratch (no recursion), each
    pivot's ratio is formed at the policy it was taken from and again at the
    policy right after the shift (the two must agree), and the maximum
    absolute difference against the recursive values is returned. Pairs whose
    marginal resource is within ``eps_g`` of zero are skipped; they only
    occur on non-certified tables.
    """
    if table.criterion != "discounted":
        raise ValueError("direct verification applies to discounted tables")
    bundles = [evaluate_policy(model, s) for s in table.policy_chain]
    worst = 0.0
    for step in table.steps:
        if not np.isfinite(step.value):
            continue
        for bundle in (bundles[step.k - 1], bundles[step.k]):
            g = marginal_resource(model, bundle, step.state, step.gear - 1, step.gear)
            if abs(g) <= eps_g:
                continue
            m = marginal_cost(model, bundle, step.state, step.gear - 1, step.gear) / g
            worst = max(worst, abs(m - step.value))
    return worst


def check_pcl(model: MultiGearModel, family: PolicyFamily, table: IndexTable, *,
              eps_g: float = MP_POSITIVITY_EPS, eps_m: float = MONOTONE_EPS,
              n_samples: int = 1000, seed: int = 0,
              enumeration_limit: int = ENUMERATION_LIMIT) -> PclCertificate:
    """Re-certify a table with wider positivity coverage than the run itself.

    Positivity is checked for all state-gear pairs at every chain policy,
    then across the whole family when it enumerates within
    ``enumeration_limit``, else on ``n_samples`` sampled members. The
    monotonicity condition is re-read off the table. The returned coverage
    string records exactly what was examined.
    """
    rows = _controllable_rows(model)
    states = model.controllable_states
    witness: Pcl1Witness | None = None

    def scan(policy: StationaryPolicy, chain_index: int) -> bool:
        nonlocal witness
        g = _adjacent_resource(model, evaluate_resource(model, policy), rows)
        bad = np.argwhere(~(g > eps_g))
        if bad.size:
            i, c = bad[0]
            witness = Pcl1Witness(chain_index, policy, states[i], int(c) + 1,
                                  float(g[i, c]))
            return True
        return False

    for idx, policy in enumerate(table.policy_chain):
        if scan(policy, idx + 1):
            break

    chain_note = f"chain({len(table.policy_chain)} policies)"
    if witness is None:
        members = family.enumerate(enumeration_limit)
        if members is not None:
            for policy in members:
                if scan(policy, -1):
                    break
            coverage = f"{chain_note} + exhaustive family({len(members)} members)"
        else:
            rng = np.random.default_rng(seed)
            for _ in range(n_samples):
                if scan(family.sample_member(rng), -1):
                    break
            coverage = f"{chain_note} + {n_samples} sampled family members"
    else:
        coverage = chain_note

    pcl2_witness = None
    for a, b in zip(table.steps, table.steps[1:]):
        if b.value < a.value - eps_m:
            pcl2_witness = Pcl2Witness(a.k, a.value, b.value)
            break

    return PclCertificate(
        pcl1_ok=witness is None,
        pcl2_ok=pcl2_witness is None,
        pcl1_witness=witness,
        pcl2_witness=pcl2_witness,
        eps_g=eps_g,
        eps_m=eps_m,
        scope="all",
        coverage=coverage,
    )
