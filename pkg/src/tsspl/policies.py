"""Query-selection and belief-update policies.

Every policy is a small stateful object with the same two-call protocol::

    q = policy.next_query(rng)      # where to ask next
    policy.observe(q, answer)       # fold the answer into the belief

``next_query`` never mutates the belief, and ``observe`` only sees the
query and the answer.  The grid-backed policies (TS-SPL and the "-M"
variants) share a :class:`~tsspl.posterior.SolutionGrid`; the known-noise
originals keep a plain probability vector over the same door grid.

The free functions implement the individual query and update rules so they
can be tested in isolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .posterior import (
    POSITION_ATOL,
    Direction,
    QueryKind,
    QueryPoint,
    SolutionGrid,
    door_grid,
    sample_index,
)

POLICY_IDS = ("ts-spl", "ts-spl-inf", "pbs", "pbs-m", "sgbs", "sgbs-m", "bz", "bz-m", "sa")

# Edge-sample count used for the direction-estimation phase in the
# published experiments.  It is kept as a named constant because it does not
# follow from the Hoeffding closed form at the quoted delta and confidence.
PAPER_DIRECTION_SAMPLES = 62

SA_DEFAULT_SCALE = 0.3
SA_MARGIN = 0.001

_MEDIAN_TOL = 1e-12


# ----------------------------------------------------------------------
# Thompson sampling guard selection
# ----------------------------------------------------------------------

def ts_spl_next(grid: SolutionGrid, rng: np.random.Generator) -> QueryPoint:
    """Thompson step: sample a door, then one of its two guards.

    The door is drawn from the door marginal.  For an interior door the guard
    on its left is chosen with probability proportional to the marginal mass
    of the two doors it separates, likewise for the guard on its right.  Edge
    doors have a single guard.  Uses one uniform for the door and one more
    for interior doors.
    """
    marginal = grid._door_marginal
    d = sample_index(marginal, rng)
    b = adjacent_guard(marginal, d, rng)
    return QueryPoint(float(grid.boundaries[b]), QueryKind.BOUNDARY, float(grid.doors[d]))


def adjacent_guard(marginal: np.ndarray, d: int, rng: np.random.Generator) -> int:
    """Index of the guard to question next to door ``d``."""
    last = marginal.size - 1
    if d == 0:
        return 0
    if d == last:
        return last - 1
    left = marginal[d - 1] + marginal[d]
    right = marginal[d] + marginal[d + 1]
    total = left + right
    if total <= 0:
        return d - 1 if rng.random() < 0.5 else d
    return d - 1 if rng.random() * total < left else d


# ----------------------------------------------------------------------
# Probabilistic bisection
# ----------------------------------------------------------------------

def median_index(probs: np.ndarray) -> int:
    """Smallest index whose cumulative mass reaches one half."""
    cdf = np.cumsum(probs)
    k = int(np.searchsorted(cdf, 0.5 * cdf[-1] - _MEDIAN_TOL, side="left"))
    return min(k, cdf.size - 1)


def pbs_next(door_probs: np.ndarray, doors: np.ndarray) -> QueryPoint:
    """Query the posterior median door itself."""
    m = median_index(door_probs)
    return QueryPoint(float(doors[m]), QueryKind.DOOR)


def pbs_update_known(door_probs: np.ndarray, doors: np.ndarray, query: float,
                     answer: Direction, p: float) -> np.ndarray:
    """Bayes update for a known probability ``p`` of a correct answer.

    Doors on the side the answer points to are scaled by ``p`` and the
    others by ``1 - p``; a door sitting exactly at the query is scaled by
    1/2, matching the grid update.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    probs = np.array(door_probs, dtype=float)
    lo = int(np.searchsorted(doors, query - POSITION_ATOL, side="left"))
    hi = int(np.searchsorted(doors, query + POSITION_ATOL, side="right"))
    left_of, right_of = (p, 1.0 - p) if answer is Direction.LEFT else (1.0 - p, p)
    probs[:lo] *= left_of
    probs[hi:] *= right_of
    probs[lo:hi] *= 0.5
    return _normalized(probs)


# ----------------------------------------------------------------------
# Soft generalized binary search over threshold hypotheses
# ----------------------------------------------------------------------

@dataclass
class SgbsState:
    """Weights over threshold hypotheses ``h_i(x) = +1 iff x >= thresholds[i]``."""

    hypothesis_probs: np.ndarray
    thresholds: np.ndarray
    assumed_beta: float = 0.0

    def __post_init__(self):
        self.hypothesis_probs = _normalized(np.asarray(self.hypothesis_probs, dtype=float))
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        if not 0.0 <= self.assumed_beta < 0.5:
            raise ValueError("assumed_beta must lie in [0, 0.5)")


def threshold_labels(thresholds: np.ndarray, x: float) -> np.ndarray:
    return np.where(x >= thresholds - POSITION_ATOL, 1.0, -1.0)


def sgbs_objective(probs: np.ndarray, thresholds: np.ndarray, x: float) -> float:
    """``sum_h p(h) h(x)``; the query rule minimizes its absolute value."""
    return float(np.dot(probs, threshold_labels(thresholds, x)))


def sgbs_next(state: SgbsState, candidates: Sequence[float]) -> QueryPoint:
    """Candidate minimizing ``|sum_h p(h) h(x)|``.

    Ties go to the candidate nearest the median threshold, then to the
    smallest position.
    """
    return sgbs_query(state.hypothesis_probs, state.thresholds, candidates)


def sgbs_query(probs: np.ndarray, thresholds: np.ndarray,
               candidates: Sequence[float]) -> QueryPoint:
    cand = np.asarray(candidates, dtype=float)
    probs = np.asarray(probs, dtype=float)
    # For thresholds the objective is |below - above| with below + above = 1,
    # so minimizing it means maximizing min(below, above).  Summing each tail
    # from its own end keeps tiny tail masses exact once the belief is peaked.
    below_all = np.concatenate(([0.0], np.cumsum(probs)))
    above_all = np.concatenate((np.cumsum(probs[::-1])[::-1], [0.0]))
    k = np.searchsorted(thresholds, cand + POSITION_ATOL, side="right")
    balance = np.minimum(below_all[k], above_all[k])
    tied = np.flatnonzero(balance >= balance.max() * (1.0 - 1e-12))
    best = int(tied[0])
    if tied.size > 1:
        # nearest to the median threshold first, then the smallest position
        med = thresholds[median_index(probs)]
        best = int(tied[np.argmin(np.abs(cand[tied] - med))])
    return QueryPoint(float(cand[best]), QueryKind.BOUNDARY)


def sgbs_update_known(state: SgbsState, query: float, y: int,
                      beta: Optional[float] = None) -> SgbsState:
    """Multiplicative update ``p(h) * beta**((1-z)/2) * (1-beta)**((1+z)/2)``.

    ``z = h(query) * y`` and ``y = +1`` means the answer "threshold is left
    of the query".
    """
    if y not in (-1, 1):
        raise ValueError("y must be -1 or +1")
    beta = state.assumed_beta if beta is None else beta
    z = threshold_labels(state.thresholds, query) * y
    factor = beta ** ((1.0 - z) / 2.0) * (1.0 - beta) ** ((1.0 + z) / 2.0)
    probs = _normalized(state.hypothesis_probs * factor)
    return SgbsState(probs, state.thresholds, state.assumed_beta)


def direction_to_label(answer: Direction) -> int:
    return 1 if answer is Direction.LEFT else -1


# ----------------------------------------------------------------------
# Burnashev-Zigangirov
# ----------------------------------------------------------------------

@dataclass
class BzState:
    """Bin probabilities ``a_i`` over bins with the given edges (length m + 1)."""

    bin_probs: np.ndarray
    edges: Optional[np.ndarray] = None
    assumed_alpha: float = 0.0

    def __post_init__(self):
        self.bin_probs = _normalized(np.asarray(self.bin_probs, dtype=float))
        m = self.bin_probs.size
        if self.edges is None:
            self.edges = np.linspace(0.0, 1.0, m + 1)
        self.edges = np.asarray(self.edges, dtype=float)
        if self.edges.size != m + 1:
            raise ValueError("need one more edge than bins")
        if not 0.0 <= self.assumed_alpha < 0.5:
            raise ValueError("assumed_alpha must lie in [0, 0.5)")


def bz_candidates(bin_probs: np.ndarray, edges: np.ndarray) -> tuple:
    """Interior boundaries closest to the (interpolated) median.

    Returned as interior-boundary indices ``j`` (boundary ``j`` separates bins
    ``j`` and ``j + 1``).  A single index is returned when the median falls
    exactly on a boundary or when there is only one interior boundary.
    """
    m = bin_probs.size
    if m < 2:
        raise ValueError("need at least two bins")
    cdf = np.cumsum(bin_probs)
    half = 0.5 * cdf[-1]
    i = min(int(np.searchsorted(cdf, half - _MEDIAN_TOL, side="left")), m - 1)
    if i < m - 1 and abs(cdf[i] - half) <= _MEDIAN_TOL:
        return (i,)
    if m == 2:
        return (0,)
    if i == 0:
        return (0, 1)
    if i == m - 1:
        return (m - 3, m - 2)
    return (i - 1, i)


def bz_next(state: BzState, rng: np.random.Generator) -> QueryPoint:
    """One of the two boundaries closest to the median, uniformly at random.

    Consumes one uniform only when there are two candidates.
    """
    j = bz_pick(bz_candidates(state.bin_probs, state.edges), rng)
    return QueryPoint(float(state.edges[j + 1]), QueryKind.BOUNDARY)


def bz_pick(candidates: tuple, rng: np.random.Generator) -> int:
    if len(candidates) == 1:
        return candidates[0]
    return candidates[0] if rng.random() < 0.5 else candidates[1]


def bz_update_known(state: BzState, k: int, y: int,
                    alpha: Optional[float] = None) -> BzState:
    """Case-form update with the normalizer built in.

    ``k`` counts the bins left of the queried boundary; ``y = 1`` means the
    response says the target lies left of the boundary.
    """
    a = state.bin_probs
    if not 1 <= k <= a.size - 1:
        raise ValueError(f"boundary index must be in 1..{a.size - 1}")
    if y not in (0, 1):
        raise ValueError("y must be 0 or 1")
    alpha = state.assumed_alpha if alpha is None else alpha
    beta = 1.0 - alpha
    tau = 2.0 * a[:k].sum() - 1.0
    gap = beta - alpha
    out = a.copy()
    if y == 0:
        den = 1.0 - tau * gap
        out[:k] *= 2.0 * alpha / den
        out[k:] *= 2.0 * beta / den
    else:
        den = 1.0 + tau * gap
        out[:k] *= 2.0 * beta / den
        out[k:] *= 2.0 * alpha / den
    return BzState(out, state.edges, state.assumed_alpha)


# ----------------------------------------------------------------------
# Robbins-Monro stochastic approximation
# ----------------------------------------------------------------------

@dataclass
class SaState:
    x: float = 0.5
    scale: float = SA_DEFAULT_SCALE
    n: int = 1
    sign_convention: int = 1
    margin: float = SA_MARGIN


def sa_step(state: SaState, y_value: float) -> SaState:
    """``x <- clip(x - (scale / n) * convention * y, margin, 1 - margin)``."""
    step = state.scale / state.n
    x = state.x - step * state.sign_convention * y_value
    x = min(max(x, state.margin), 1.0 - state.margin)
    return SaState(x, state.scale, state.n + 1, state.sign_convention, state.margin)


# ----------------------------------------------------------------------
# Direction estimation for root finding
# ----------------------------------------------------------------------

def hoeffding_samples(delta: float, confidence: float) -> int:
    """Smallest n with ``2 exp(-2 n delta^2) <= 1 - confidence``.

    ``confidence <= 0`` asks for no guarantee at all and returns 1.
    """
    if not 0.0 < delta <= 0.5:
        raise ValueError("delta must lie in (0, 0.5]")
    if not confidence < 1.0:
        raise ValueError("confidence must be below 1")
    if confidence <= 0.0:
        return 1
    n = -math.log((1.0 - confidence) / 2.0) / (2.0 * delta * delta)
    return max(1, math.ceil(n - 1e-12))


def estimate_direction(sample_sign: Callable[[float, np.random.Generator], int],
                       x_edge: Union[float, Sequence[float]], n: int,
                       rng: np.random.Generator) -> int:
    """Majority vote for the sign convention of ``g``.

    ``sample_sign(x, rng)`` returns the observed sign at ``x``.  Samples
    cycle through ``x_edge`` (one point or several).  An edge below 1/2 is
    assumed to lie left of the root and one above 1/2 right of it, so a
    positive sign votes "increasing" (+1) at the right edge and
    "decreasing" (-1) at the left edge.  Ties resolve to +1.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    edges = [float(x_edge)] if np.isscalar(x_edge) else [float(e) for e in x_edge]
    votes = 0
    for i in range(n):
        x = edges[i % len(edges)]
        s = sample_sign(x, rng)
        votes += s if x > 0.5 else -s
    return 1 if votes >= 0 else -1


# ----------------------------------------------------------------------
# Stateful policies
# ----------------------------------------------------------------------

class Policy:
    """Base class: subclasses implement ``next_query`` and ``observe``."""

    name = "policy"
    # informative-only schemes need the sign convention learned up front
    needs_direction = True
    # SA consumes the signed magnitude instead of a direction
    consumes_value = False

    def next_query(self, rng: np.random.Generator) -> QueryPoint:
        raise NotImplementedError

    def observe(self, query: QueryPoint, answer: Direction) -> None:
        raise NotImplementedError

    def door_belief(self):
        """``(door positions, probabilities)`` or ``None`` when there is no belief."""
        return None


class GridPolicy(Policy):
    """Policy whose belief is a joint (door, truthfulness) grid."""

    def __init__(self, grid: SolutionGrid):
        self.grid = grid

    def observe(self, query: QueryPoint, answer: Direction) -> None:
        self.grid.update(query, answer)

    def door_belief(self):
        return self.grid.doors, self.grid._door_marginal


class TsSpl(GridPolicy):
    name = "ts-spl"
    needs_direction = False

    def next_query(self, rng):
        return ts_spl_next(self.grid, rng)


class PbsM(GridPolicy):
    name = "pbs-m"

    def next_query(self, rng):
        return pbs_next(self.grid._door_marginal, self.grid.doors)


class SgbsM(GridPolicy):
    name = "sgbs-m"

    def next_query(self, rng):
        grid = self.grid
        return sgbs_query(grid._door_marginal, grid.doors, grid.boundaries)


class BzM(GridPolicy):
    name = "bz-m"

    def next_query(self, rng):
        grid = self.grid
        j = bz_pick(bz_candidates(grid._door_marginal, grid.cell_edges), rng)
        return QueryPoint(float(grid.boundaries[j]), QueryKind.BOUNDARY)


class PbsKnown(Policy):
    name = "pbs"

    def __init__(self, doors: np.ndarray, p: float, prior=None):
        self.doors = np.asarray(doors, dtype=float)
        self.p = p
        self.probs = _normalized(np.ones(self.doors.size) if prior is None
                                 else np.asarray(prior, dtype=float))

    def next_query(self, rng):
        return pbs_next(self.probs, self.doors)

    def observe(self, query, answer):
        self.probs = pbs_update_known(self.probs, self.doors, query.position, answer, self.p)

    def door_belief(self):
        return self.doors, self.probs


class SgbsKnown(Policy):
    name = "sgbs"

    def __init__(self, doors: np.ndarray, beta: float, prior=None):
        doors = np.asarray(doors, dtype=float)
        probs = np.ones(doors.size) if prior is None else prior
        self.state = SgbsState(probs, doors, beta)
        self.boundaries = 0.5 * (doors[:-1] + doors[1:])

    def next_query(self, rng):
        return sgbs_next(self.state, self.boundaries)

    def observe(self, query, answer):
        self.state = sgbs_update_known(self.state, query.position, direction_to_label(answer))

    def door_belief(self):
        return self.state.thresholds, self.state.hypothesis_probs


class BzKnown(Policy):
    name = "bz"

    def __init__(self, doors: np.ndarray, alpha: float, prior=None):
        self.doors = np.asarray(doors, dtype=float)
        edges = np.concatenate(([0.0], 0.5 * (self.doors[:-1] + self.doors[1:]), [1.0]))
        probs = np.ones(self.doors.size) if prior is None else prior
        self.state = BzState(probs, edges, alpha)

    def next_query(self, rng):
        return bz_next(self.state, rng)

    def observe(self, query, answer):
        k = int(np.searchsorted(self.state.edges, query.position, side="left"))
        self.state = bz_update_known(self.state, k, 1 if answer is Direction.LEFT else 0)

    def door_belief(self):
        return self.doors, self.state.bin_probs


class StochasticApproximation(Policy):
    """Robbins-Monro iterate driven by the signed oracle value."""

    name = "sa"
    consumes_value = True

    def __init__(self, x0: float = 0.5, scale: float = SA_DEFAULT_SCALE,
                 sign_convention: int = 1, margin: float = SA_MARGIN):
        self.state = SaState(x0, scale, 1, sign_convention, margin)

    @property
    def sign_convention(self) -> int:
        return self.state.sign_convention

    @sign_convention.setter
    def sign_convention(self, value: int) -> None:
        self.state.sign_convention = value

    def next_query(self, rng):
        return QueryPoint(self.state.x, QueryKind.BOUNDARY)

    def observe_value(self, y: float) -> None:
        self.state = sa_step(self.state, y)

    def observe(self, query, answer):
        # directional feedback: "left" means the iterate is too large
        self.observe_value(1.0 if answer is Direction.LEFT else -1.0)


# ----------------------------------------------------------------------
# Registry
# ----------------------------------------------------------------------

@dataclass
class PolicyOptions:
    """Knobs shared by :func:`make_policy`; ``None`` picks the policy default."""

    num_doors: int = 201
    num_truth_levels: Optional[int] = None
    truth_range: Optional[tuple] = None
    truth_include_low: Optional[bool] = None
    door_prior: Optional[Callable[[np.ndarray], np.ndarray]] = None
    truth_prior: Optional[Callable[[np.ndarray], np.ndarray]] = None
    assumed_truth: Optional[float] = None
    sa_scale: float = SA_DEFAULT_SCALE


def default_truth_grid(policy_id: str):
    """``(levels, (low, high), include_low)`` used when none is given."""
    if policy_id == "ts-spl":
        return 101, (0.0, 1.0), True
    return 51, (0.5, 1.0), False


def make_policy(policy_id: str, options: Optional[PolicyOptions] = None) -> Policy:
    """Build a fresh policy instance from its string identifier."""
    opts = options or PolicyOptions()
    if policy_id not in POLICY_IDS:
        raise KeyError(f"unknown policy {policy_id!r}; expected one of {', '.join(POLICY_IDS)}")
    if policy_id == "sa":
        return StochasticApproximation(scale=opts.sa_scale)

    doors = door_grid(opts.num_doors)
    door_prior = opts.door_prior(doors) if opts.door_prior is not None else None

    if policy_id in ("pbs", "sgbs", "bz"):
        p = opts.assumed_truth
        if p is None:
            raise ValueError(f"{policy_id} needs an assumed truth probability")
        if policy_id == "pbs":
            return PbsKnown(doors, p, door_prior)
        if policy_id == "sgbs":
            return SgbsKnown(doors, 1.0 - p, door_prior)
        return BzKnown(doors, 1.0 - p, door_prior)

    n_levels, truth_range, include_low = default_truth_grid(policy_id)
    if opts.num_truth_levels is not None:
        n_levels = opts.num_truth_levels
    if opts.truth_range is not None:
        truth_range = opts.truth_range
    if opts.truth_include_low is not None:
        include_low = opts.truth_include_low
    grid = SolutionGrid.uniform(opts.num_doors, n_levels, truth_range, include_low)
    truth_prior = opts.truth_prior(grid.truth_levels) if opts.truth_prior is not None else None
    if door_prior is not None or truth_prior is not None:
        grid = grid.with_prior(door_prior, truth_prior)
    cls = {"ts-spl": TsSpl, "ts-spl-inf": TsSpl, "pbs-m": PbsM, "sgbs-m": SgbsM, "bz-m": BzM}[policy_id]
    policy = cls(grid)
    policy.name = policy_id
    if policy_id == "ts-spl-inf":
        policy.needs_direction = True
    return policy


def _normalized(v: np.ndarray) -> np.ndarray:
    total = v.sum()
    if not total > 0:
        raise FloatingPointError("belief collapsed to zero mass")
    return v / total
