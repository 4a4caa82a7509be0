"""Independent ground truth for the priced problem and indexability checks.

Solves the per-price optimal control problem by policy iteration (exact
policy evaluation each round, finite convergence), brackets critical prices
by sign bisection on the initial-gear value difference, and verifies the
threshold structure of optimal gears against a computed index table on a
grid of prices. Nothing here depends on the index recursion, which is the
point: agreement between this module and the index algorithm is evidence,
not construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsindex import IndexTable
from .errors import UnbracketableError
from .model import MultiGearModel, StationaryPolicy

#: Gears whose value lies within this of the per-state minimum count as optimal.
OPTIMALITY_EPS = 1e-8

_MAX_PI_ITER = 1000


@dataclass(frozen=True)
class LambdaSolution:
    """Optimal costs of the priced problem at one resource price.

    ``values`` is the optimal cost vector; ``q_values[i, a]`` the cost of
    starting state i+1 with gear a and acting optimally afterwards;
    ``optimal_gears[i]`` the set of gears within tolerance of the minimum.
    """

    lam: float
    values: np.ndarray
    q_values: np.ndarray
    optimal_gears: tuple[frozenset[int], ...]

    def __post_init__(self):
        self.values.setflags(write=False)
        self.q_values.setflags(write=False)


@dataclass(frozen=True)
class DaiBracket:
    """Bisection bracket for one critical price; flagged when the sign
    pattern seen along the way was not a single crossing."""

    state: int
    gear: int
    lo: float
    hi: float
    non_monotone: bool

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class DaiEstimate:
    state: int
    gear: int
    lo: float
    hi: float
    mpi: float
    gap: float
    non_monotone: bool


@dataclass(frozen=True)
class Counterexample:
    lam: float
    state: int
    description: str


@dataclass(frozen=True)
class IndexabilityVerdict:
    indexable_on_grid: bool
    dai_estimates: tuple[DaiEstimate, ...]
    counterexample: Counterexample | None
    max_dai_vs_mpi_gap: float
    probes_checked: int


def _priced_cost(model: MultiGearModel, lam: float) -> np.ndarray:
    return model.holding_cost + lam * model.resource_use


def _q_matrix(model: MultiGearModel, cost: np.ndarray, values: np.ndarray) -> np.ndarray:
    beta = model.discount
    q = np.empty_like(cost)
    for a in range(model.n_gears):
        q[:, a] = cost[:, a] + beta * model.transitions[a] @ values
    return q


def solve_lambda_price(model: MultiGearModel, lam: float, *,
                       method: str = "policy-iteration",
                       eps_opt: float = OPTIMALITY_EPS,
                       tol: float = 1e-10) -> LambdaSolution:
    """Solve the priced problem exactly for one resource price.

    Policy iteration with exact evaluation is the default and converges in a
    finite number of improvements; ``method='value-iteration'`` iterates to
    ``tol`` and then polishes with one exact evaluation of the greedy policy.
    """
    n = model.n_states
    beta = model.discount
    cost = _priced_cost(model, lam)
    idx = np.arange(n)

    def evaluate(gears: np.ndarray) -> np.ndarray:
        p = model.transitions[gears, idx, :]
        c = cost[idx, gears]
        return np.linalg.solve(np.eye(n) - beta * p, c)

    if method == "policy-iteration":
        gears = np.zeros(n, dtype=int)
        values = evaluate(gears)
        for _ in range(_MAX_PI_ITER):
            q = _q_matrix(model, cost, values)
            new_gears = np.argmin(q, axis=1)
            if np.array_equal(new_gears, gears):
                break
            gears = new_gears
            values = evaluate(gears)
    elif method == "value-iteration":
        values = np.zeros(n)
        # sup-norm contraction with factor beta; stop when the remaining
        # error cannot move the greedy policy materially
        stop = max(tol, 1e-15) * (1.0 - beta) / (2.0 * beta) if beta > 0 else tol
        for _ in range(1_000_000):
            q = _q_matrix(model, cost, values)
            new_values = q.min(axis=1)
            if np.max(np.abs(new_values - values)) <= stop:
                values = new_values
                break
            values = new_values
        gears = np.argmin(_q_matrix(model, cost, values), axis=1)
        values = evaluate(gears)
    else:
        raise ValueError(f"unknown method {method!r}")

    q = _q_matrix(model, cost, values)
    mins = q.min(axis=1)
    sets = tuple(frozenset(int(a) for a in np.nonzero(q[i] <= mins[i] + eps_opt)[0])
                 for i in range(n))
    return LambdaSolution(lam=float(lam), values=values.copy(), q_values=q,
                          optimal_gears=sets)


def greedy_policy(model: MultiGearModel, solution: LambdaSolution) -> StationaryPolicy:
    """A deterministic optimal policy: the lowest optimal gear per state."""
    gears = tuple(min(solution.optimal_gears[s - 1])
                  for s in model.controllable_states)
    return StationaryPolicy(model.controllable_states, gears)


def initial_gear_value(solution: LambdaSolution, state: int, gear: int) -> float:
    """Optimal cost when forcing one initial gear in one state."""
    return float(solution.q_values[state - 1, gear])


def price_search_span(model: MultiGearModel) -> float:
    """Initial half-width for price searches: cost scale over resource scale."""
    gaps = []
    for s in model.controllable_states:
        i = s - 1
        gaps.extend(model.resource_use[i, a + 1] - model.resource_use[i, a]
                    for a in range(model.n_gears - 1))
    min_gap = min(gaps) if gaps else 1.0
    top = float(np.max(np.abs(model.holding_cost))) + 1.0
    return top / ((1.0 - model.discount) * max(min_gap, 1e-300))


def bracket_dai(model: MultiGearModel, state: int, gear: int, *,
                width: float = 1e-8, max_doublings: int = 60,
                eps_opt: float = OPTIMALITY_EPS) -> DaiBracket:
    """Bracket the critical price at which gears ``gear-1`` and ``gear`` tie.

    Bisects the sign of the initial-gear value difference, which is negative
    below the critical price and positive above it for indexable models. The
    search span starts at a cost-over-resource scale bound and doubles until
    a sign change appears; failure to bracket reports the model degenerate
    rather than guessing. All sign evaluations are kept, and more than one
    alternation flags the bracket as non-monotone.
    """
    if gear < 1 or gear > model.top_gear:
        raise ValueError(f"gear must be in 1..{model.top_gear}")
    if not model.is_controllable(state):
        raise ValueError(f"state {state} is uncontrollable; no critical price")

    evals: list[tuple[float, float]] = []

    def phi(lam: float) -> float:
        sol = solve_lambda_price(model, lam, eps_opt=eps_opt)
        val = (initial_gear_value(sol, state, gear)
               - initial_gear_value(sol, state, gear - 1))
        evals.append((float(lam), val))
        return val

    span = price_search_span(model)
    lo, hi = -span, span
    phi_lo, phi_hi = phi(lo), phi(hi)
    d_lo = d_hi = 0
    while phi_lo > 0 and d_lo < max_doublings:
        lo *= 2.0
        phi_lo = phi(lo)
        d_lo += 1
    while phi_hi <= 0 and d_hi < max_doublings:
        hi *= 2.0
        phi_hi = phi(hi)
        d_hi += 1

    def find_crossing():
        # the expected orientation is negative below the critical price and
        # positive above; a descending crossing still locates a root of the
        # tie equation but signals broken threshold structure
        seen = sorted(evals)
        crossing = None
        for (l1, v1), (l2, v2) in zip(seen, seen[1:]):
            ascending = v1 <= 0 < v2
            descending = v1 > 0 >= v2
            if ascending or descending:
                crossing = (l1, l2, ascending)
                if ascending:
                    break
        return crossing

    crossing = find_crossing()
    if crossing is None:
        # both tails share one sign; any root must hide strictly inside
        for lam in np.linspace(-span, span, 33):
            phi(lam)
        crossing = find_crossing()
    if crossing is None:
        seen = sorted(evals)
        raise UnbracketableError(
            f"no sign change for state {state}, gear {gear} in "
            f"[{seen[0][0]!r}, {seen[-1][0]!r}]")

    lo, hi, ascending = crossing
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if (phi(mid) > 0) == ascending:
            hi = mid
        else:
            lo = mid

    signs = [1 if v > 0 else -1 for _, v in sorted(evals) if v != 0]
    alternations = sum(1 for a, b in zip(signs, signs[1:]) if a != b)
    return DaiBracket(state=state, gear=gear, lo=lo, hi=hi,
                      non_monotone=alternations > 1 or not ascending)


def verify_indexability(model: MultiGearModel, table: IndexTable, *,
                        eps_opt: float = OPTIMALITY_EPS,
                        delta: float | None = None,
                        n_random: int = 16, seed: int = 0,
                        bracket_width: float = 1e-8,
                        jobs: int = 1) -> IndexabilityVerdict:
    """Check the index table against the Bellman oracle.

    Probes the priced problem just below and above every distinct index
    value, at midpoints between consecutive values, and at random prices,
    and tests at each probe that the optimal-gear sets have exactly the
    threshold structure the index values predict: the passive gear is
    optimal iff the price is at least the state's gear-1 index, the top gear
    iff the price is at most the gear-A index, and an intermediate gear iff
    the price lies between its two adjacent indices. Critical prices are
    also bracketed independently per pair and compared to the index values.

    Failures become verdict data, never exceptions; the first one found is
    returned as the counterexample.
    """
    top = model.top_gear
    states = model.controllable_states
    pairs = [(s, a) for s in states for a in range(1, top + 1)]
    if not pairs:
        return IndexabilityVerdict(indexable_on_grid=True, dai_estimates=(),
                                   counterexample=None, max_dai_vs_mpi_gap=0.0,
                                   probes_checked=0)
    mpis = {}
    counterexample: Counterexample | None = None
    for s, a in pairs:
        v = table.lookup(s, a)
        if not np.isfinite(v):
            return IndexabilityVerdict(
                indexable_on_grid=False, dai_estimates=(),
                counterexample=Counterexample(float("nan"), s,
                                              f"index value for gear {a} is undefined"),
                max_dai_vs_mpi_gap=float("nan"), probes_checked=0)
        mpis[(s, a)] = v

    values = sorted(set(mpis.values()))
    scale = max(1.0, max(abs(v) for v in values))
    if delta is None:
        delta = 1e-4 * scale
    margin = delta / 10.0

    probes = []
    for v in values:
        probes.extend((v - delta, v + delta))
    probes.extend(0.5 * (a + b) for a, b in zip(values, values[1:]))
    rng = np.random.default_rng(seed)
    probes.extend(rng.uniform(values[0] - scale, values[-1] + scale, n_random))
    probes = sorted(float(x) for x in probes)

    def note(lam: float, state: int, text: str):
        nonlocal counterexample
        if counterexample is None:
            counterexample = Counterexample(float(lam), state, text)

    tol_order = 1e-9 * scale
    for s in states:
        seq = [mpis[(s, a)] for a in range(1, top + 1)]
        for a in range(1, top):
            if seq[a] > seq[a - 1] + tol_order:
                note(float("nan"), s,
                     f"candidate critical prices increase from gear {a} to {a + 1}")

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            solutions = list(pool.map(
                lambda lam: solve_lambda_price(model, lam, eps_opt=eps_opt), probes))
    else:
        solutions = [solve_lambda_price(model, lam, eps_opt=eps_opt)
                     for lam in probes]

    for lam, sol in zip(probes, solutions):
        for s in states:
            lam_of = {a: mpis[(s, a)] for a in range(1, top + 1)}
            opt = sol.optimal_gears[s - 1]
            for a in range(top + 1):
                if a == 0:
                    thresholds = [lam_of[1]]
                    expected = lam >= lam_of[1]
                elif a == top:
                    thresholds = [lam_of[top]]
                    expected = lam <= lam_of[top]
                else:
                    thresholds = [lam_of[a], lam_of[a + 1]]
                    expected = lam_of[a + 1] <= lam <= lam_of[a]
                if any(abs(lam - t) <= margin for t in thresholds):
                    continue
                observed = a in opt
                if expected != observed:
                    note(lam, s,
                         f"gear {a} {'should' if expected else 'should not'} be "
                         f"optimal at price {lam!r} but the oracle says otherwise")
            for a in range(1, top + 1):
                if abs(lam - lam_of[a]) <= margin:
                    continue
                has_high = any(g >= a for g in opt)
                if has_high != (lam_of[a] >= lam):
                    note(lam, s,
                         f"an optimal gear >= {a} exists iff the price is below "
                         f"the gear-{a} index; violated at {lam!r}")
                has_low = any(g < a for g in opt)
                if has_low != (lam_of[a] <= lam):
                    note(lam, s,
                         f"an optimal gear < {a} exists iff the price is above "
                         f"the gear-{a} index; violated at {lam!r}")

    estimates = []
    max_gap = 0.0
    for s, a in pairs:
        try:
            br = bracket_dai(model, s, a, width=bracket_width, eps_opt=eps_opt)
        except UnbracketableError as exc:
            note(float("nan"), s, f"gear {a}: {exc}")
            estimates.append(DaiEstimate(s, a, float("nan"), float("nan"),
                                         mpis[(s, a)], float("nan"), False))
            continue
        gap = abs(br.midpoint - mpis[(s, a)])
        max_gap = max(max_gap, gap)
        estimates.append(DaiEstimate(s, a, br.lo, br.hi, mpis[(s, a)], gap,
                                     br.non_monotone))
        if br.non_monotone:
            note(br.midpoint, s, f"gear {a}: non-monotone sign pattern while bracketing")

    by_pair = {(e.state, e.gear): e for e in estimates}
    nest_tol = max(10.0 * bracket_width, 1e-7 * scale)
    for s in states:
        for a in range(1, top):
            hi_a, hi_next = by_pair[(s, a)].hi, by_pair[(s, a + 1)].hi
            if np.isfinite(hi_a) and np.isfinite(hi_next) and hi_next > hi_a + nest_tol:
                note(float("nan"), s,
                     f"bracketed critical prices not nested between gears {a} and {a + 1}")

    return IndexabilityVerdict(
        indexable_on_grid=counterexample is None,
        dai_estimates=tuple(estimates),
        counterexample=counterexample,
        max_dai_vs_mpi_gap=max_gap,
        probes_checked=len(probes),
    )
