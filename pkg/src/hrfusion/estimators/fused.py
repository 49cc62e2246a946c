"""Alternating project-then-fuse subspace estimation.

Phase 1 nulls the target directions in each uplink covariance and reads the
user angle off a one-dimensional fit; phase 2 nulls each user, extracts the
remaining target subspace per band and fuses all of them with the downlink
noise subspace into a single spectrum.

Subspaces are taken from the row space of the projected covariances
(``P R`` with ``P`` on the left), i.e. the dominant left singular vectors of
``R P``. For a noiseless band ``R_k P0perp = r a_u (P0perp a_u)^H``, so this
subspace is exactly ``span(a(theta_u))`` and the user spectrum ``g_k`` vanishes
at the user angle; likewise ``R_k Q_k`` spans ``A(targets_k)`` once the user
is nulled. The column space would be tilted by the projector and bias both
spectra.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..array_core import (
    ArrayGeometry,
    evd_split,
    orth_projector,
    steering_matrix,
    steering_vector,
    top_left_singular,
)
from ..errors import DegenerateProjection
from ..search import GridSpec, argmax_1d, find_peaks
from .common import EstimateResult, sorted_angles
from .fml import _validate, all_visible
from .music import SampledSpectrum

_TINY = np.finfo(float).tiny


def quadratic_spectrum(gram: np.ndarray, geometry: ArrayGeometry):
    """``theta -> 1 / (a^H G a)`` for a Hermitian PSD ``G``."""

    def f(thetas):
        a = steering_matrix(geometry, thetas)
        cost = np.einsum("ng,nm,mg->g", a.conj(), gram, a).real
        return 1.0 / np.maximum(cost, _TINY)

    return f


def dl_null_projector(r0: np.ndarray, num_dl_targets: int) -> tuple[np.ndarray, np.ndarray]:
    """Downlink noise subspace ``U_N0`` and the projector ``U_N0 U_N0^H`` that nulls the DL targets."""
    noise = evd_split(r0, num_dl_targets).noise_basis
    return noise, noise @ noise.conj().T


@dataclass(eq=False)
class UserSpectrum(SampledSpectrum):
    user_angle: float = 0.0
    vector: np.ndarray | None = None


def g_spectrum(
    r_k: np.ndarray,
    p0_perp: np.ndarray,
    geometry: ArrayGeometry,
    grid: GridSpec = GridSpec(),
) -> UserSpectrum:
    """User spectrum ``g_k^-1`` of one uplink band and its refined maximizer.

    ``g_k(theta) = ||(v (v^H P v)^-1 v^H P - I) a(theta)||^2`` with ``P`` the
    target-nulling projector and ``v`` the dominant direction of ``P R_k``.

    Raises:
        DegenerateProjection: if ``|v^H P v| < 1e-10`` (``v`` lies in the nulled span).
    """
    projected = p0_perp @ r_k
    v = top_left_singular(projected.conj().T, 1)[:, 0]
    scale = np.vdot(v, p0_perp @ v).real
    if abs(scale) < 1e-10:
        raise DegenerateProjection(f"v^H P0perp v = {scale:.3g}; the user direction is nulled")
    n = geometry.num_antennas
    residual = np.outer(v, v.conj() @ p0_perp) / scale - np.eye(n)
    f = quadratic_spectrum(residual.conj().T @ residual, geometry)
    values = f(grid.points)
    peak = argmax_1d(f, grid, values=values)
    return UserSpectrum(grid.points, values, [peak], user_angle=peak.angle, vector=v)


def user_nulling_projector(geometry: ArrayGeometry, theta_u: float) -> np.ndarray:
    """``I - a a^H / ||a||^2`` at the estimated user angle."""
    a = steering_vector(geometry, theta_u)
    return np.eye(geometry.num_antennas) - np.outer(a, a.conj()) / np.vdot(a, a).real


def target_subspace(r_k: np.ndarray, q_perp: np.ndarray, dim: int) -> np.ndarray:
    """Dominant ``dim``-dimensional subspace of ``S_k = Q_k R_k`` (row space)."""
    return top_left_singular((q_perp @ r_k).conj().T, dim)


@dataclass(eq=False)
class FusedSpectrum(SampledSpectrum):
    insufficient_peaks: bool = False


def fused_gram(noise_dl: np.ndarray, subspaces, projectors) -> np.ndarray:
    """Hermitian ``G`` with ``h(theta) = a^H G a``.

    ``G = U_N0 U_N0^H + sum_k M_k^H M_k`` where ``M_k = V_k (Q_k V_k)^+ Q_k - I``.
    """
    n = noise_dl.shape[0]
    gram = noise_dl @ noise_dl.conj().T
    for v, q in zip(subspaces, projectors):
        m = v @ np.linalg.pinv(q @ v, rcond=1e-12) @ q - np.eye(n)
        gram = gram + m.conj().T @ m
    return gram


def h_spectrum(
    noise_dl: np.ndarray,
    subspaces,
    projectors,
    geometry: ArrayGeometry,
    grid: GridSpec = GridSpec(),
    num_targets: int = 1,
) -> FusedSpectrum:
    """Fused target spectrum ``h^-1`` and its ``num_targets`` highest refined peaks.

    With no uplink bands this is the MUSIC spectrum of the downlink band.
    ``insufficient_peaks`` is set when fewer local maxima exist than targets.
    """
    f = quadratic_spectrum(fused_gram(noise_dl, subspaces, projectors), geometry)
    values = f(grid.points)
    peaks = find_peaks(f, grid, num_targets, values=values)
    return FusedSpectrum(grid.points, values, peaks, insufficient_peaks=len(peaks) < num_targets)


@dataclass(eq=False)
class FusedIteration:
    """Spectra computed during one pass, kept for inspection and dumps."""

    user_spectra: list
    target_spectrum: FusedSpectrum


def fused_subspace_estimate(
    covariances,
    num_targets: int,
    geometry: ArrayGeometry,
    grid: GridSpec = GridSpec(),
    visibility=None,
    eps: float = 1e-6,
    max_iters: int = 30,
    keep_spectra: bool = False,
) -> EstimateResult:
    """Alternate per-band user estimation and fused target estimation until the angles settle.

    The target-nulling projector starts from the downlink noise subspace and is
    rebuilt from the latest target estimates after every pass. With
    ``keep_spectra`` the per-iteration spectra are attached as
    ``result.spectra``.
    """
    covariances = [np.asarray(r) for r in covariances]
    num_bands = len(covariances)
    if visibility is None:
        visibility = all_visible(num_bands, num_targets)
    _validate(covariances, num_targets, visibility, geometry)

    noise_dl, p0_perp = dl_null_projector(covariances[0], len(visibility[0]))
    uplink = [k for k in range(1, num_bands)]
    targets = np.full(num_targets, np.nan)
    users = np.full(num_bands - 1, np.nan)
    result = EstimateResult(targets, users, converged=False)
    spectra = []
    flags = set()

    for p in range(max_iters):
        old_targets, old_users = targets.copy(), users.copy()
        user_spectra, subspaces, projectors = [], [], []
        for k in uplink:
            g = g_spectrum(covariances[k], p0_perp, geometry, grid)
            users[k - 1] = g.user_angle
            user_spectra.append(g)
            if not visibility[k]:
                continue
            q_perp = user_nulling_projector(geometry, g.user_angle)
            subspaces.append(target_subspace(covariances[k], q_perp, len(visibility[k])))
            projectors.append(q_perp)

        h = h_spectrum(noise_dl, subspaces, projectors, geometry, grid, num_targets)
        angles = [pk.angle for pk in h.peaks]
        if h.insufficient_peaks:
            flags.add("insufficient_peaks")
            angles += [angles[0] if angles else 0.0] * (num_targets - len(angles))
        targets = sorted_angles(angles)
        p0_perp = orth_projector(steering_matrix(geometry, targets), max_cond=None)
        if keep_spectra:
            spectra.append(FusedIteration(user_spectra, h))

        result.target_history.append(targets.copy())
        result.user_history.append(users.copy())
        result.iterations = p + 1
        change = np.linalg.norm(targets - old_targets)
        if len(users):
            change += np.linalg.norm(users - old_users)
        if change < eps:
            result.converged = True
            break

    result.target_angles = targets
    result.user_angles = users.copy()
    if not result.converged:
        flags.add("non_convergence")
    result.flags = tuple(sorted(flags))
    if keep_spectra:
        result.spectra = spectra
    return result
