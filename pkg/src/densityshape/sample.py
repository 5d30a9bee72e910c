"""The universal input type: a sorted sample of finite reals."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSampleError


@dataclass(frozen=True)
class Sample:
    """Sorted, finite, one-dimensional observations (n >= 1).

    Construct through :meth:`from_values`, which copies, sorts and validates.
    The backing array is marked read-only so instances can be shared freely.
    """

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = self.values
        if v.ndim != 1 or v.size < 1:
            raise ValueError("sample must be a nonempty 1-d array")
        if not np.all(np.isfinite(v)):
            raise ValueError("sample values must all be finite")
        if np.any(np.diff(v) < 0):
            raise ValueError("sample values must be sorted ascending")

    @classmethod
    def from_values(cls, values):
        v = np.sort(np.asarray(values, dtype=float))
        v.setflags(write=False)
        return cls(v)

    @property
    def n(self):
        return int(self.values.size)

    @property
    def min(self):
        return float(self.values[0])

    @property
    def max(self):
        return float(self.values[-1])

    @property
    def range(self):
        return self.max - self.min

    def require_spread(self, what="operation"):
        """Raise if all values coincide (zero-spread sample)."""
        if self.range == 0.0:
            raise DegenerateSampleError(f"zero-spread sample: {what} undefined")

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"Sample(n={self.n}, min={self.min:.6g}, max={self.max:.6g})"
