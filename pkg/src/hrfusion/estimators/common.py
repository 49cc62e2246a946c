from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..array_core import ArrayGeometry, orth_projector, steering_matrix

DENOMINATOR_GUARD = 1e-9


@dataclass(eq=False)
class EstimateResult:
    """Output of one estimator run. Angles in radians.

    ``target_history[p]`` and ``user_history[p]`` hold the estimates after
    iteration ``p + 1``; ``objective_trace`` is aligned with them when the
    estimator defines an objective.
    """

    target_angles: np.ndarray
    user_angles: np.ndarray
    iterations: int = 0
    objective_trace: list = field(default_factory=list)
    converged: bool = True
    target_history: list = field(default_factory=list)
    user_history: list = field(default_factory=list)
    flags: tuple = ()

    @property
    def target_angles_deg(self) -> np.ndarray:
        return np.rad2deg(self.target_angles)

    @property
    def user_angles_deg(self) -> np.ndarray:
        return np.rad2deg(self.user_angles)


class ProjectedRatio:
    """Sum over bands of ``a^H P R P a / a^H P a`` with per-band orthogonal projectors ``P``.

    Each ratio is the gain in ``trace(P_A R)`` from appending ``a(theta)`` as
    a new column to a band manifold whose orthogonal projector is ``P``.
    Angles where any band's denominator falls below ``1e-9 * N`` evaluate to
    ``-inf`` and are thereby excluded from every search.
    """

    def __init__(self, geometry: ArrayGeometry, covariances, manifolds):
        self.geometry = geometry
        self.proj = np.stack([orth_projector(np.asarray(m), max_cond=None) for m in manifolds])
        r = np.stack([np.asarray(c) for c in covariances])
        self.quad = self.proj @ r @ self.proj
        self.floor = DENOMINATOR_GUARD * geometry.num_antennas

    def terms(self, thetas) -> tuple[np.ndarray, np.ndarray]:
        """Per-band (numerator, denominator), each of shape (bands, len(thetas))."""
        a = steering_matrix(self.geometry, thetas)
        num = np.einsum("ng,knm,mg->kg", a.conj(), self.quad, a).real
        den = np.einsum("ng,knm,mg->kg", a.conj(), self.proj, a).real
        return num, den

    def per_band(self, thetas) -> np.ndarray:
        num, den = self.terms(thetas)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(den >= self.floor, num / den, -np.inf)

    def __call__(self, thetas) -> np.ndarray:
        return self.per_band(thetas).sum(axis=0)


def sorted_angles(values) -> np.ndarray:
    return np.sort(np.asarray(values, dtype=float))
