"""Probability simplex vectors.

Home of the mixing weights rho: nonnegative entries summing to one. Every
operation in the package that emits simplex weights routes through
:meth:`SimplexVector.from_unnormalized`, which renormalizes exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

_SUM_TOL = 1e-10


@dataclass(frozen=True)
class SimplexVector:
    """Nonnegative weights over sources, summing to 1 within 1e-10."""

    weights: np.ndarray = field()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise InputError("simplex weights must be a nonempty 1-D vector")
        if not np.all(np.isfinite(w)):
            raise InputError("simplex weights must be finite")
        if np.any(w < 0.0):
            raise InputError(f"simplex weights must be nonnegative, got {w}")
        if abs(float(w.sum()) - 1.0) > _SUM_TOL:
            raise InputError(f"simplex weights must sum to 1, got sum {w.sum()!r}")
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_unnormalized(cls, values) -> "SimplexVector":
        """Normalize a nonnegative vector to sum exactly to its own total."""
        v = np.asarray(values, dtype=np.float64)
        total = float(v.sum())
        if not np.isfinite(total) or total <= 0.0:
            raise InputError(f"cannot normalize weights with total {total}")
        return cls(v / total)

    @classmethod
    def uniform(cls, k: int) -> "SimplexVector":
        return cls(np.full(k, 1.0 / k))

    def __len__(self) -> int:
        return self.weights.size

    def __getitem__(self, i):
        return self.weights[i]
