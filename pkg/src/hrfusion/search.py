"""Coarse-grid plus golden-section search used by every 1-D angle update."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

INV_PHI = (math.sqrt(5) - 1) / 2
INV_PHI2 = (3 - math.sqrt(5)) / 2


@dataclass(frozen=True)
class GridSpec:
    """Search interval and resolution, all in radians."""

    lo: float = -np.deg2rad(89.5)
    hi: float = np.deg2rad(89.5)
    coarse_step: float = np.deg2rad(0.5)
    refine_tol: float = 1e-5

    def __post_init__(self):
        if not -np.pi / 2 < self.lo < self.hi < np.pi / 2:
            raise ValueError(f"need -pi/2 < lo < hi < pi/2, got lo={self.lo}, hi={self.hi}")
        if not self.coarse_step > self.refine_tol > 0:
            raise ValueError("need coarse_step > refine_tol > 0")

    @classmethod
    def from_degrees(cls, lo=-89.5, hi=89.5, step=0.5, refine_tol=1e-5):
        return cls(np.deg2rad(lo), np.deg2rad(hi), np.deg2rad(step), refine_tol)

    @cached_property
    def points(self) -> np.ndarray:
        count = int(math.floor((self.hi - self.lo) / self.coarse_step + 1e-9)) + 1
        return self.lo + self.coarse_step * np.arange(count)


def golden_section_max(f: Callable[[float], float], a: float, b: float, tol: float) -> float:
    """Maximizer of a unimodal ``f`` on ``[a, b]``, to within ``tol``."""
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        return 0.5 * (a + b)
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
    c = a + INV_PHI2 * h
    d = a + INV_PHI * h
    fc, fd = f(c), f(d)
    for _ in range(n - 1):
        h *= INV_PHI
        if fc > fd:
            b, d, fd = d, c, fc
            c = a + INV_PHI2 * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * h
            fd = f(d)
    return 0.5 * (a + d) if fc > fd else 0.5 * (c + b)


def local_maxima(values: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """Indices of interior 3-point local maxima (plateaus reported once, at their left edge).

    Points flagged invalid, or valued ``-inf``, never count as maxima.
    """
    v = np.asarray(values, dtype=float).copy()
    if valid is not None:
        v[~valid] = -np.inf
    if v.size < 3:
        return np.zeros(0, dtype=int)
    mid = v[1:-1]
    is_peak = (mid > v[:-2]) & (mid >= v[2:]) & np.isfinite(mid)
    return np.nonzero(is_peak)[0] + 1


def refine_peak(f: Callable[[float], float], grid: GridSpec, center: float) -> float:
    a = max(grid.lo, center - grid.coarse_step)
    b = min(grid.hi, center + grid.coarse_step)
    return golden_section_max(f, a, b, grid.refine_tol)


@dataclass(frozen=True)
class Peak:
    angle: float
    value: float


def find_peaks(
    batch: Callable[[np.ndarray], np.ndarray],
    grid: GridSpec,
    count: int,
    values: np.ndarray | None = None,
    valid: np.ndarray | None = None,
) -> list[Peak]:
    """Refine the ``count`` highest local maxima of a spectrum.

    ``batch`` evaluates the spectrum on an array of angles. Candidates are the
    3-point local maxima on the coarse grid; each is refined by golden-section
    search inside one grid step on either side, then all are ranked by refined
    height (ties to the smaller angle). Fewer than ``count`` peaks are returned
    when fewer exist.
    """
    thetas = grid.points
    if values is None:
        values = batch(thetas)
    idx = local_maxima(values, valid)
    if idx.size == 0:
        return []

    def scalar(t):
        return float(batch(np.array([t]))[0])

    order = sorted(idx, key=lambda i: (-values[i], thetas[i]))[: max(count + 2, 2 * count)]
    peaks = []
    for i in order:
        theta = refine_peak(scalar, grid, thetas[i])
        value = scalar(theta)
        if value < values[i]:
            theta, value = thetas[i], float(values[i])
        peaks.append(Peak(float(theta), float(value)))
    peaks.sort(key=lambda p: (-p.value, p.angle))
    return peaks[:count]


def argmax_1d(
    batch: Callable[[np.ndarray], np.ndarray],
    grid: GridSpec,
    values: np.ndarray | None = None,
    valid: np.ndarray | None = None,
) -> Peak | None:
    """Global maximizer: best refined local maximum, or the best grid point if none exist.

    Returns ``None`` when no grid point has a finite value.
    """
    thetas = grid.points
    if values is None:
        values = batch(thetas)
    peaks = find_peaks(batch, grid, 1, values=values, valid=valid)
    masked = values if valid is None else np.where(valid, values, -np.inf)
    best = int(np.argmax(masked))
    if not np.isfinite(masked[best]):
        return None
    if peaks and peaks[0].value >= masked[best]:
        return peaks[0]
    return Peak(float(thetas[best]), float(masked[best]))
