"""Continuous piecewise-linear approximations of tanh on [-4, 4].

The 3-piece form uses breakpoints (-4, -1, 1, 4); the 5-piece form adds
breakpoints at +-2.  Both are stored in breakpoint/value form, which is
continuous by construction, and clamp to the endpoint values outside the
breakpoint range (tanh saturates there anyway).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PwlFunction", "tanh_pwl", "pwl_max_error", "TANH_PWL_PIECES"]

TANH_PWL_PIECES = (3, 5)

# Breakpoint/value tables for the two supported tanh approximations.  The
# 5-piece slope/intercept segments are discontinuous at +-2 (inner segment
# gives 0.96, outer 0.966) and reach +-1.002 at +-4; we canonicalize to the
# continuous form using the inner-segment value at +-2.
_TANH_TABLES = {
    3: (
        (-4.0, -1.0, 1.0, 4.0),
        (-1.0, -0.76, 0.76, 1.0),
    ),
    5: (
        (-4.0, -2.0, -1.0, 1.0, 2.0, 4.0),
        (-1.002, -0.96, -0.76, 0.76, 0.96, 1.002),
    ),
}


@dataclass(frozen=True)
class PwlFunction:
    """A continuous piecewise-linear function given by breakpoints and values.

    Evaluation interpolates linearly between consecutive breakpoints and
    clamps to the first/last value outside the breakpoint range.
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if b.ndim != 1 or b.shape != v.shape or b.size < 2:
            raise ValueError("breakpoints and values must be equal-length 1-D with >= 2 entries")
        if not np.all(np.diff(b) > 0):
            raise ValueError("breakpoints must be strictly increasing")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(v))):
            raise ValueError("breakpoints and values must be finite")

    @property
    def n_segments(self) -> int:
        return len(self.breakpoints) - 1

    def __call__(self, x):
        """Evaluate at a scalar or array; clamps outside [b_0, b_J]."""
        y = np.interp(x, self.breakpoints, self.values)
        return float(y) if np.isscalar(x) else y

    def slopes(self) -> np.ndarray:
        b = np.asarray(self.breakpoints)
        v = np.asarray(self.values)
        return np.diff(v) / np.diff(b)

    def derivative(self, x):
        """Slope of the containing segment; 0 outside the breakpoint range.

        At an interior breakpoint the right segment's slope is used.
        """
        b = np.asarray(self.breakpoints)
        s = self.slopes()
        x_arr = np.asarray(x, dtype=float)
        seg = np.clip(np.searchsorted(b, x_arr, side="right") - 1, 0, self.n_segments - 1)
        out = np.where((x_arr < b[0]) | (x_arr > b[-1]), 0.0, s[seg])
        return float(out) if np.isscalar(x) else out

    def to_csv_text(self) -> str:
        lines = ["breakpoint,value"]
        lines += [f"{bk!r},{vk!r}" for bk, vk in zip(self.breakpoints, self.values)]
        return "\n".join(lines) + "\n"


def tanh_pwl(pieces: int) -> PwlFunction:
    """The 3- or 5-piece linear approximation of tanh on [-4, 4]."""
    if pieces not in _TANH_TABLES:
        raise ValueError(f"unsupported piece count {pieces}; expected one of {TANH_PWL_PIECES}")
    b, v = _TANH_TABLES[pieces]
    return PwlFunction(b, v)


def pwl_max_error(f: PwlFunction, reference=np.tanh, lo: float = -4.0, hi: float = 4.0,
                  samples: int = 100_000) -> float:
    """Max absolute deviation |f(x) - reference(x)| on a uniform grid."""
    if samples < 1000:
        raise ValueError("samples must be >= 1000")
    x = np.linspace(lo, hi, samples)
    return float(np.max(np.abs(f(x) - reference(x))))
