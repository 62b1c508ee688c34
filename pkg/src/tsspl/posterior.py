"""Joint grid posterior over (door location, truthfulness) pairs.

A :class:`SolutionGrid` holds the weight matrix ``P(d, t | answers)`` over a
door grid ``D`` (candidate optimal points on the unit interval) and a
truthfulness grid ``T``.  Every answer multiplies each cell by the
single-answer likelihood and the matrix is renormalized, so the stored
weights are always an exact, normalized posterior.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Optional, TextIO, Tuple

import numpy as np

# Slack used when testing door positions against interval endpoints and
# when deciding whether a query collides with a door.
POSITION_ATOL = 1e-12


class Direction(enum.Enum):
    """Answer alphabet of a guard / oracle."""

    LEFT = "left"
    RIGHT = "right"

    def flipped(self) -> "Direction":
        return Direction.RIGHT if self is Direction.LEFT else Direction.LEFT


class QueryKind(enum.Enum):
    BOUNDARY = "boundary"
    DOOR = "door"


@dataclass(frozen=True)
class QueryPoint:
    """A location on [0, 1] to ask for a direction.

    ``target`` is the point the policy is betting on at this step (the
    Thompson-sampled door for TS-SPL); regret is charged there.  It defaults
    to ``position`` for policies that bet on the point they query.
    """

    position: float
    kind: QueryKind = QueryKind.BOUNDARY
    target: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.position <= 1.0:
            raise ValueError(f"query position must lie in [0, 1], got {self.position}")
        if self.target is None:
            object.__setattr__(self, "target", float(self.position))


def door_grid(num_doors: int) -> np.ndarray:
    """Evenly spaced door positions ``k / (num_doors - 1)`` on [0, 1]."""
    if num_doors < 2:
        raise ValueError("need at least two doors")
    return np.linspace(0.0, 1.0, num_doors)


def truth_grid(num_levels: int, low: float = 0.0, high: float = 1.0,
               include_low: bool = True) -> np.ndarray:
    """Evenly spaced truthfulness levels on ``[low, high]`` or ``(low, high]``.

    With ``include_low=False`` the levels are ``low + (high - low) * k / n``
    for ``k = 1..n``, which is how the informative ``(0.5, 1]`` prior is built.
    """
    if num_levels < 1:
        raise ValueError("need at least one truthfulness level")
    if not 0.0 <= low <= high <= 1.0:
        raise ValueError(f"truth range [{low}, {high}] must lie inside [0, 1]")
    if num_levels == 1:
        # a single level sits at the top of the range: T = {high}
        return np.array([high])
    if high <= low:
        raise ValueError("truth range is degenerate but more than one level was requested")
    if include_low:
        return np.linspace(low, high, num_levels)
    return low + (high - low) * np.arange(1, num_levels + 1) / num_levels


class SolutionGrid:
    """Normalized joint posterior over ``doors x truth_levels``.

    Parameters
    ----------
    doors : array_like
        Strictly increasing door positions.
    truth_levels : array_like
        Strictly increasing truthfulness levels in [0, 1].
    weights : array_like
        Non-negative ``len(doors) x len(truth_levels)`` matrix; normalized on
        construction.

    Notes
    -----
    The grid is owned by a single policy and updated in place; use
    :meth:`copy` to branch.
    """

    def __init__(self, doors, truth_levels, weights):
        self.doors = np.asarray(doors, dtype=float)
        self.truth_levels = np.asarray(truth_levels, dtype=float)
        w = np.array(weights, dtype=float)
        if self.doors.ndim != 1 or self.truth_levels.ndim != 1:
            raise ValueError("doors and truth levels must be 1-d")
        if w.shape != (self.doors.size, self.truth_levels.size):
            raise ValueError(f"weights shape {w.shape} does not match grid "
                             f"{(self.doors.size, self.truth_levels.size)}")
        if np.any(np.diff(self.doors) <= 0) or np.any(np.diff(self.truth_levels) <= 0):
            raise ValueError("doors and truth levels must be strictly increasing")
        if np.any(self.truth_levels < 0) or np.any(self.truth_levels > 1):
            raise ValueError("truth levels must lie in [0, 1]")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        total = w.sum()
        if total <= 0:
            raise ValueError("weights must have positive total mass")
        w /= total
        self.weights = w
        self._lies = 1.0 - self.truth_levels
        self._door_marginal = w.sum(axis=1)

    # construction -----------------------------------------------------

    @classmethod
    def uniform(cls, num_doors: int, num_truth_levels: int,
                truth_range: Tuple[float, float] = (0.0, 1.0),
                include_low: bool = True) -> "SolutionGrid":
        doors = door_grid(num_doors)
        levels = truth_grid(num_truth_levels, *truth_range, include_low=include_low)
        return cls(doors, levels, np.ones((doors.size, levels.size)))

    def with_prior(self, door_prior=None, truth_prior=None) -> "SolutionGrid":
        """Return a fresh grid with weights ``door_prior[i] * truth_prior[j]``.

        ``None`` means flat.  Door and truthfulness are independent a priori.
        """
        dp = _check_prior(door_prior, self.doors.size, "door")
        tp = _check_prior(truth_prior, self.truth_levels.size, "truth")
        return SolutionGrid(self.doors, self.truth_levels, np.outer(dp, tp))

    def copy(self) -> "SolutionGrid":
        return SolutionGrid(self.doors, self.truth_levels, self.weights)

    # geometry ---------------------------------------------------------

    @property
    def num_doors(self) -> int:
        return self.doors.size

    @property
    def boundaries(self) -> np.ndarray:
        """Guard positions, one between each pair of adjacent doors."""
        return 0.5 * (self.doors[:-1] + self.doors[1:])

    @property
    def cell_edges(self) -> np.ndarray:
        """Edges of the cell around each door: 0, the guards, then 1."""
        return np.concatenate(([0.0], self.boundaries, [1.0]))

    # Bayes update -----------------------------------------------------

    def likelihood(self, query: QueryPoint, answer: Direction) -> np.ndarray:
        """Matrix of ``P(answer | d, t)`` for every cell."""
        lo, hi = self._split(query.position)
        left_of, right_of = self._side_factors(answer)
        lik = np.empty_like(self.weights)
        lik[:lo] = left_of
        lik[lo:hi] = 0.5
        lik[hi:] = right_of
        return lik

    def update(self, query: QueryPoint, answer: Direction) -> "SolutionGrid":
        """Multiply in one answer and renormalize, in place.

        Doors left of the query see ``P(left) = t``; doors right of it see
        ``P(left) = 1 - t``; a door exactly at the query sees 1/2.
        """
        lo, hi = self._split(query.position)
        left_of, right_of = self._side_factors(answer)
        w = self.weights
        w[:lo] *= left_of
        w[hi:] *= right_of
        if hi > lo:
            w[lo:hi] *= 0.5
        row = w.sum(axis=1)
        total = row.sum()
        if not total > 0:
            raise FloatingPointError("posterior collapsed: the answers have zero "
                                     "likelihood under every grid cell")
        inv = 1.0 / total
        w *= inv
        row *= inv
        self._door_marginal = row
        return self

    def _split(self, x: float) -> Tuple[int, int]:
        lo = int(np.searchsorted(self.doors, x - POSITION_ATOL, side="left"))
        hi = int(np.searchsorted(self.doors, x + POSITION_ATOL, side="right"))
        return lo, hi

    def _side_factors(self, answer: Direction):
        # (factor for doors left of the query, factor for doors right of it)
        if answer is Direction.LEFT:
            return self.truth_levels, self._lies
        return self._lies, self.truth_levels

    # summaries --------------------------------------------------------

    def door_marginal(self) -> np.ndarray:
        return self._door_marginal.copy()

    def truth_marginal(self) -> np.ndarray:
        return self.weights.sum(axis=0)

    def mass_in_interval(self, low: float, high: float) -> float:
        """Door-marginal mass of doors inside the closed interval [low, high]."""
        if high < low:
            return 0.0
        mask = (self.doors >= low - POSITION_ATOL) & (self.doors <= high + POSITION_ATOL)
        return float(self._door_marginal[mask].sum())

    def sample_joint(self, rng: np.random.Generator) -> Tuple[int, int]:
        """Draw a ``(door_index, truth_index)`` pair with probability equal to its weight."""
        flat = np.cumsum(self.weights, axis=None)
        k = int(np.searchsorted(flat, rng.random() * flat[-1], side="right"))
        k = min(k, flat.size - 1)
        return divmod(k, self.truth_levels.size)

    def sample_door(self, rng: np.random.Generator) -> int:
        return sample_index(self._door_marginal, rng)

    # export -----------------------------------------------------------

    def write_csv(self, fh: TextIO, header: bool = True) -> None:
        """Write ``door,truth,weight`` rows (row-major over the grid)."""
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow(["door", "truth", "weight"])
        for i, d in enumerate(self.doors):
            for j, t in enumerate(self.truth_levels):
                writer.writerow([f"{d:.10g}", f"{t:.10g}", f"{self.weights[i, j]:.17g}"])

    def __repr__(self):
        return (f"SolutionGrid(|D|={self.doors.size}, |T|={self.truth_levels.size}, "
                f"truth=[{self.truth_levels[0]:.3g}, {self.truth_levels[-1]:.3g}])")


def sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw of an index from non-negative (not necessarily normalized) weights.

    Consumes exactly one uniform from ``rng``.
    """
    cdf = np.cumsum(probs)
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(k, cdf.size - 1)


def _check_prior(prior, size: int, name: str) -> np.ndarray:
    if prior is None:
        return np.ones(size)
    p = np.asarray(prior, dtype=float)
    if p.shape != (size,):
        raise ValueError(f"{name} prior must have length {size}, got shape {p.shape}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError(f"{name} prior must be finite and non-negative")
    if p.sum() <= 0:
        raise ValueError(f"{name} prior has zero total mass")
    return p


# functional aliases ---------------------------------------------------

def new_uniform(num_doors: int, num_truth_levels: int,
                truth_range: Tuple[float, float] = (0.0, 1.0),
                include_low: bool = True) -> SolutionGrid:
    return SolutionGrid.uniform(num_doors, num_truth_levels, truth_range, include_low)


def with_prior(grid: SolutionGrid, door_prior=None, truth_prior=None) -> SolutionGrid:
    return grid.with_prior(door_prior, truth_prior)


def update(grid: SolutionGrid, query: QueryPoint, answer: Direction) -> SolutionGrid:
    """Pure variant of :meth:`SolutionGrid.update`; ``grid`` is left untouched."""
    return grid.copy().update(query, answer)

