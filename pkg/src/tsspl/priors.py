"""Prior shapes over door positions or truthfulness levels.

A prior is written as a short string:

``flat``
    all grid points equally likely;
``gaussian:MU:SIGMA``
    weights proportional to the normal density at each grid point;
``inverse-gaussian:MU:SIGMA``
    the same bell mirrored about 1/2, i.e. centred at ``1 - MU``.  This is
    the "incorrect" prior of the sensitivity study when ``MU`` is the true
    value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

PRIOR_KINDS = ("flat", "gaussian", "inverse-gaussian")


@dataclass(frozen=True)
class Prior:
    kind: str = "flat"
    mu: float = 0.5
    sigma: float = 0.3

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.kind == "flat":
            return np.ones_like(points)
        centre = self.mu if self.kind == "gaussian" else 1.0 - self.mu
        return np.exp(-0.5 * ((points - centre) / self.sigma) ** 2)

    def __str__(self):
        if self.kind == "flat":
            return "flat"
        return f"{self.kind}:{self.mu:g}:{self.sigma:g}"


def parse_prior(spec: Optional[str]) -> Optional[Prior]:
    """Parse a prior string; ``None``, ``""`` and ``"flat"`` all give ``None`` (flat)."""
    if spec is None:
        return None
    spec = spec.strip().lower()
    if spec in ("", "flat", "f"):
        return None
    parts = spec.split(":")
    kind = parts[0]
    if kind not in PRIOR_KINDS or len(parts) != 3:
        raise ValueError(f"bad prior {spec!r}; use flat, gaussian:MU:SIGMA or inverse-gaussian:MU:SIGMA")
    mu, sigma = float(parts[1]), float(parts[2])
    if sigma <= 0:
        raise ValueError("prior sigma must be positive")
    return Prior(kind, mu, sigma)
