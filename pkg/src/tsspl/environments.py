"""Simulated oracles: the stochastic point location line and sign-noise root finding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .posterior import POSITION_ATOL, Direction

FUNCTION_IDS = ("A", "B", "C")


@dataclass(frozen=True)
class SplEnvironment:
    """Teacher that points towards ``lambda_star``, truthfully with probability ``pi_star``."""

    lambda_star: float
    pi_star: float

    def __post_init__(self):
        if not 0.0 < self.lambda_star < 1.0:
            raise ValueError("lambda_star must lie in (0, 1)")
        if not 0.0 <= self.pi_star <= 1.0:
            raise ValueError("pi_star must lie in [0, 1]")

    @property
    def target(self) -> float:
        return self.lambda_star

    def direction(self, x: float, rng: np.random.Generator) -> Direction:
        return spl_query(self, x, rng)

    def value(self, x: float, rng: np.random.Generator) -> float:
        # +1 when the teacher says "left", i.e. the query overshoots
        return 1.0 if spl_query(self, x, rng) is Direction.LEFT else -1.0


def spl_query(env: SplEnvironment, x: float, rng: np.random.Generator) -> Direction:
    """One directional answer at ``x``.

    A query that coincides with ``lambda_star`` has no true direction; the
    teacher then answers by a fair coin, which is exactly the 1/2 likelihood
    the posterior assigns to a door sitting on the query.  Uses one uniform,
    plus one more on a collision.
    """
    if abs(x - env.lambda_star) <= POSITION_ATOL:
        truth = Direction.LEFT if rng.random() < 0.5 else Direction.RIGHT
    else:
        truth = Direction.LEFT if env.lambda_star < x else Direction.RIGHT
    return truth if rng.random() < env.pi_star else truth.flipped()


@dataclass(frozen=True)
class RootOracle:
    """Sign-flip noisy evaluations of ``g`` with a single root in (0, 1).

    Each call returns ``g(x)`` with probability ``pi`` and ``-g(x)``
    otherwise.
    """

    g: Callable[[float], float]
    x_star: float
    pi: float
    shape_class: str = "custom"

    @property
    def target(self) -> float:
        return self.x_star

    def value(self, x: float, rng: np.random.Generator) -> float:
        return srf_sample(self, x, rng)[0]

    def sign(self, x: float, rng: np.random.Generator) -> int:
        return srf_sample(self, x, rng)[1]


def srf_sample(oracle: RootOracle, x: float, rng: np.random.Generator) -> Tuple[float, int]:
    """``(Y(x), sign(Y(x)))`` for one noisy evaluation; one uniform per call."""
    gx = float(oracle.g(x))
    y = gx if rng.random() < oracle.pi else -gx
    return y, (1 if y > 0 else -1)


def srf_to_direction(s: int, sign_convention: int) -> Direction:
    """Map an observed sign to a direction: left iff ``s * convention == +1``.

    With convention +1 (``g`` increasing) a positive value means the root is
    to the left of the query.
    """
    if sign_convention not in (-1, 1):
        raise ValueError("sign convention must be -1 or +1")
    return Direction.LEFT if s * sign_convention == 1 else Direction.RIGHT


@dataclass(frozen=True)
class DirectionalOracle:
    """Root oracle seen through a fixed sign-to-direction convention."""

    oracle: RootOracle
    sign_convention: int = 1

    @property
    def target(self) -> float:
        return self.oracle.x_star

    def direction(self, x: float, rng: np.random.Generator) -> Direction:
        return srf_to_direction(self.oracle.sign(x, rng), self.sign_convention)

    def value(self, x: float, rng: np.random.Generator) -> float:
        return self.oracle.value(x, rng)


# Benchmark functions.  Only their shape class and root are fixed by the
# published setup; these closed forms are one choice with those properties.

ROOT_A = 0.07104
ROOT_B = 0.9270
ROOT_C = 0.8675


def function_a(x):
    """Monotone increasing."""
    return np.tanh(4.0 * (x - ROOT_A))


def function_b(x):
    """Cubic-type "quadric": rises, peaks near 0.52, falls through the root."""
    return -0.8 * (x - ROOT_B) * (x + 0.3) ** 2


def function_c(x):
    """Sinusoid: rises to a crest near 0.15, then falls through the root."""
    return np.sin(2.2 * (ROOT_C - x))


_BENCHMARKS = {
    "A": (function_a, ROOT_A, "monotone-A"),
    "B": (function_b, ROOT_B, "quadric-B"),
    "C": (function_c, ROOT_C, "sinusoid-C"),
}


def benchmark_function(function_id: str, pi: float) -> RootOracle:
    """Root oracle for benchmark ``A``, ``B`` or ``C`` at truth probability ``pi``."""
    try:
        g, root, shape = _BENCHMARKS[function_id.upper()]
    except (KeyError, AttributeError):
        raise ValueError(f"unknown benchmark function {function_id!r}; "
                         f"expected one of {', '.join(FUNCTION_IDS)}") from None
    if not 0.0 <= pi <= 1.0:
        raise ValueError("pi must lie in [0, 1]")
    return RootOracle(g, root, pi, shape)
