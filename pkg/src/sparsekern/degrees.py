"""Degree distributions for hidden-unit in-degrees.

A degree spec fixes the input dimension l and a law D(d) on {0, ..., l} from
which each feature's in-degree is drawn independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .errors import ValidationError
from .rng import DEGREES, substream

_PMF_TOL = 1e-12


@dataclass(frozen=True)
class DegreeSpec:
    """Base class; use RegularDegrees, BinomialDegrees or CustomDegrees."""

    l: int

    def __post_init__(self):
        if self.l < 1:
            raise ValidationError(f"input dimension must be positive, got {self.l}")

    def pmf(self) -> np.ndarray:
        """Probability mass over degrees 0..l (length l+1)."""
        raise NotImplementedError

    def sample(self, m: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def mean(self) -> float:
        return float(np.arange(self.l + 1) @ self.pmf())

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class RegularDegrees(DegreeSpec):
    """Every feature connects to exactly d inputs."""

    d: int = 1

    def __post_init__(self):
        super().__post_init__()
        if not 1 <= self.d <= self.l:
            raise ValidationError(f"regular degree must satisfy 1 <= d <= l, got d={self.d}, l={self.l}")

    def pmf(self):
        out = np.zeros(self.l + 1)
        out[self.d] = 1.0
        return out

    def sample(self, m, rng):
        return np.full(m, self.d, dtype=np.int64)

    def to_dict(self):
        return {"kind": "regular", "l": self.l, "d": self.d}


@dataclass(frozen=True)
class BinomialDegrees(DegreeSpec):
    """Each of the l inputs is wired independently with probability p."""

    p: float = 0.5

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 <= self.p <= 1.0:
            raise ValidationError(f"binomial probability must lie in [0, 1], got {self.p}")

    def pmf(self):
        return binom.pmf(np.arange(self.l + 1), self.l, self.p)

    def sample(self, m, rng):
        return rng.binomial(self.l, self.p, size=m).astype(np.int64)

    def to_dict(self):
        return {"kind": "binomial", "l": self.l, "p": self.p}


@dataclass(frozen=True)
class CustomDegrees(DegreeSpec):
    """Explicit PMF over degrees 0..l."""

    weights: tuple = ()

    def __post_init__(self):
        super().__post_init__()
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.l + 1,):
            raise ValidationError(f"custom PMF must have l+1={self.l + 1} entries, got {w.shape}")
        if np.any(w < 0):
            raise ValidationError("custom PMF entries must be nonnegative")
        if abs(w.sum() - 1.0) > _PMF_TOL:
            raise ValidationError(f"custom PMF must sum to 1 within {_PMF_TOL}, got {w.sum()!r}")

    def pmf(self):
        return np.asarray(self.weights, dtype=float)

    def sample(self, m, rng):
        return rng.choice(self.l + 1, size=m, p=self.pmf()).astype(np.int64)

    def to_dict(self):
        return {"kind": "custom", "l": self.l, "weights": list(map(float, self.weights))}


def degree_spec_from_dict(doc: dict) -> DegreeSpec:
    kind = doc.get("kind")
    if kind == "regular":
        return RegularDegrees(l=doc["l"], d=doc["d"])
    if kind == "binomial":
        return BinomialDegrees(l=doc["l"], p=doc["p"])
    if kind == "custom":
        return CustomDegrees(l=doc["l"], weights=tuple(doc["weights"]))
    raise ValidationError(f"unknown degree spec kind {kind!r}")


def sample_degrees(spec: DegreeSpec, m: int, seed: int) -> np.ndarray:
    """Draw m i.i.d. in-degrees from the spec's distribution.

    One dedicated substream per (seed, DEGREES); a single vectorized draw keeps
    the result independent of any worker scheduling.
    """
    if m < 0:
        raise ValidationError(f"feature count must be nonnegative, got {m}")
    return spec.sample(m, substream(seed, DEGREES))
