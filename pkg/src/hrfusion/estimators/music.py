"""Classical MUSIC spectrum and the covariance-averaging ("naive") MUSIC baseline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..array_core import ArrayGeometry, evd_split, steering_matrix
from ..errors import DegenerateCovariance, TooFewAntennas
from ..search import GridSpec, Peak, find_peaks
from .common import EstimateResult, sorted_angles


@dataclass(eq=False)
class SampledSpectrum:
    """A pseudo-spectrum sampled on a grid, with its refined peaks."""

    thetas: np.ndarray
    values: np.ndarray
    peaks: list

    @property
    def peak_angles(self) -> np.ndarray:
        return np.array([p.angle for p in self.peaks])

    def db(self, reference: float | None = None) -> np.ndarray:
        ref = np.max(self.values) if reference is None else reference
        return 10 * np.log10(self.values / ref)


def music_cost(noise_basis: np.ndarray, geometry: ArrayGeometry):
    """``theta -> ||a(theta)^H U_N||^2`` for a batch of angles."""
    gram = noise_basis @ noise_basis.conj().T

    def cost(thetas):
        a = steering_matrix(geometry, thetas)
        return np.einsum("ng,nm,mg->g", a.conj(), gram, a).real

    return cost


def music_spectrum(
    noise_basis: np.ndarray,
    geometry: ArrayGeometry,
    grid: GridSpec,
    num_peaks: int = 0,
) -> SampledSpectrum:
    """MUSIC pseudo-spectrum ``1 / ||a^H U_N||^2`` on the grid and its ``num_peaks`` highest refined peaks."""
    cost = music_cost(noise_basis, geometry)
    tiny = np.finfo(float).tiny

    def f(thetas):
        return 1.0 / np.maximum(cost(thetas), tiny)

    values = f(grid.points)
    peaks = find_peaks(f, grid, num_peaks, values=values) if num_peaks else []
    return SampledSpectrum(grid.points, values, peaks)


def average_covariance(covariances, include_dl: bool = True) -> np.ndarray:
    """Plain average of the band covariances; band 0 dropped when ``include_dl`` is false."""
    covs = list(covariances)
    if not include_dl and len(covs) > 1:
        covs = covs[1:]
    return sum(covs) / len(covs)


def naive_music(
    covariances,
    signal_dim: int,
    num_targets: int,
    geometry: ArrayGeometry,
    grid: GridSpec = GridSpec(),
    include_dl: bool = True,
) -> EstimateResult:
    """MUSIC on the averaged covariance, reporting the ``num_targets`` highest peaks as targets.

    No attempt is made to tell user directions from target directions, so a
    strong user peak can displace a target.

    Raises:
        TooFewAntennas: if ``signal_dim >= N``.
        DegenerateCovariance: if every covariance is zero.
    """
    n = geometry.num_antennas
    if signal_dim >= n:
        raise TooFewAntennas(f"signal dimension {signal_dim} needs more than {n} antennas")
    r = average_covariance(covariances, include_dl)
    if not np.any(np.abs(r) > 0):
        raise DegenerateCovariance("all covariances are zero")
    pair = evd_split(r, signal_dim)
    spectrum = music_spectrum(pair.noise_basis, geometry, grid, num_peaks=num_targets)
    return _targets_from_peaks(spectrum.peaks, num_targets)


def _targets_from_peaks(peaks: list[Peak], count: int) -> EstimateResult:
    angles = [p.angle for p in peaks]
    flags = ()
    if len(angles) < count:
        flags = ("insufficient_peaks",)
        angles += [angles[0] if angles else 0.0] * (count - len(angles))
    return EstimateResult(
        target_angles=sorted_angles(angles),
        user_angles=np.zeros(0),
        iterations=1,
        converged=not flags,
        flags=flags,
    )
