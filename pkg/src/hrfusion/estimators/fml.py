"""Fused maximum-likelihood estimation by alternating 1-D projections.

The fused criterion is ``sum_k trace(P_{A_k} R_k)`` with ``A_0 = A(targets
seen by the downlink)`` and ``A_k = [a(user_k), A(targets seen in band k)]``.
Appending one column ``a(theta)`` to a manifold with orthogonal projector ``P``
raises ``trace(P_A R)`` by ``a^H P R P a / a^H P a``, so every coordinate update
below is a 1-D search of that ratio (summed over bands for targets).
"""
from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np

from ..array_core import ArrayGeometry, projector, steering_matrix
from ..errors import (
    AllPointsDegenerate,
    ConfigError,
    FlatSpectrumWarning,
    TargetInvisibleEverywhere,
)
from ..search import GridSpec, argmax_1d
from .common import EstimateResult, ProjectedRatio, sorted_angles


def _columns(geometry: ArrayGeometry, angles) -> np.ndarray:
    angles = [a for a in angles]
    if not angles:
        return np.zeros((geometry.num_antennas, 0), dtype=complex)
    return steering_matrix(geometry, angles)


def trace_objective(geometry: ArrayGeometry, r: np.ndarray, angles) -> float:
    return float(np.trace(projector(_columns(geometry, angles), max_cond=None) @ r).real)


def all_visible(num_bands: int, num_targets: int) -> tuple:
    return tuple(tuple(range(num_targets)) for _ in range(num_bands))


def alternating_projection(
    r: np.ndarray,
    num_sources: int,
    geometry: ArrayGeometry,
    grid: GridSpec = GridSpec(),
    fixed: Sequence[float] = (),
    tol: float | None = None,
    max_sweeps: int = 20,
) -> tuple[np.ndarray, list]:
    """Maximize ``trace(P_[A(fixed), A(theta)] R)`` over ``num_sources`` free angles.

    Sources are added one at a time, each placed at the maximizer of the
    projected ratio against the columns already present; then each free angle
    is re-optimized with all others held until no angle moves by more than
    ``tol`` (default: the grid refinement tolerance) or ``max_sweeps`` sweeps.
    A move is only accepted when it increases the objective, so the returned
    objective history is nondecreasing.

    Returns:
        The free angles in ascending order and the objective after the greedy
        pass and after every sweep.
    """
    tol = grid.refine_tol if tol is None else tol
    fixed = list(fixed)
    free: list[float] = []
    for _ in range(num_sources):
        ratio = ProjectedRatio(geometry, [r], [_columns(geometry, fixed + free)])
        peak = argmax_1d(ratio, grid)
        if peak is None:
            raise AllPointsDegenerate("no admissible angle left for a new source")
        free.append(peak.angle)
    history = [trace_objective(geometry, r, fixed + free)]
    if num_sources == 0:
        return np.zeros(0), history
    for _ in range(max_sweeps):
        previous = list(free)
        for i in range(len(free)):
            others = fixed + free[:i] + free[i + 1:]
            ratio = ProjectedRatio(geometry, [r], [_columns(geometry, others)])
            peak = argmax_1d(ratio, grid)
            if peak is not None and peak.value > ratio([free[i]])[0]:
                free[i] = peak.angle
        history.append(trace_objective(geometry, r, fixed + free))
        if np.max(np.abs(np.subtract(free, previous))) < tol:
            break
    return sorted_angles(free), history


def fml_initialize(
    covariances,
    visibility,
    geometry: ArrayGeometry,
    grid: GridSpec = GridSpec(),
    num_targets: int | None = None,
) -> np.ndarray:
    """Per-band target estimates maximizing ``trace(P_{A(targets_k)} R_k)``.

    The downlink band holds targets only and is solved first by alternating
    projection. Targets the downlink also sees are pinned at their downlink
    estimates in every uplink band. A target missed by the downlink is placed
    by a search fused over the uplink bands that see it, with the pinned
    columns held: each band also carries its own user, and only the shared
    target adds up across bands. A per-band search would lock onto the user
    about half the time and start the iteration in a swapped optimum.

    Returns:
        Array of shape (bands, q) with ``nan`` where a target is not visible.
    """
    num_bands = len(covariances)
    q = 1 + max(max(phi, default=-1) for phi in visibility)
    q = q if num_targets is None else num_targets
    table = np.full((num_bands, q), np.nan)
    phi0 = list(visibility[0])
    est0, _ = alternating_projection(covariances[0], len(phi0), geometry, grid)
    table[0, phi0] = est0
    for k in range(1, num_bands):
        pinned = [m for m in visibility[k] if m in phi0]
        table[k, pinned] = table[0, pinned]
    loose = [m for m in range(q) if m not in phi0 and any(m in phi for phi in visibility[1:])]
    for m in loose:
        bands = [k for k in range(1, num_bands) if m in visibility[k]]
        held = [[table[k, i] for i in visibility[k] if not np.isnan(table[k, i])] for k in bands]
        ratio = ProjectedRatio(geometry, [covariances[k] for k in bands],
                               [_columns(geometry, h) for h in held])
        peak = argmax_1d(ratio, grid)
        if peak is None:
            raise AllPointsDegenerate(f"no admissible initial angle for target {m}")
        table[bands, m] = peak.angle
    return table


def _as_table(targets, num_bands: int) -> np.ndarray:
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        return np.tile(targets, (num_bands, 1))
    return targets


def _user_ratio(r_k, band_targets, geometry) -> ProjectedRatio:
    return ProjectedRatio(geometry, [r_k], [_columns(geometry, band_targets)])


def fml_phase1_user_update(
    r_k: np.ndarray,
    band_targets: Sequence[float],
    geometry: ArrayGeometry,
    grid: GridSpec = GridSpec(),
    current: float | None = None,
) -> float:
    """User angle of one uplink band with that band's target estimates held fixed.

    When ``current`` is given it is kept unless the search finds a strictly
    better ratio.

    Raises:
        AllPointsDegenerate: every grid point fell under the denominator guard.
    """
    ratio = _user_ratio(r_k, band_targets, geometry)
    values = ratio(grid.points)
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        raise AllPointsDegenerate("every grid point is inside the span of the target manifold")
    if finite.max() - finite.min() <= 1e-12 * max(abs(finite.max()), np.finfo(float).tiny):
        warnings.warn("user spectrum is flat; the band carries no directional energy",
                      FlatSpectrumWarning, stacklevel=2)
    peak = argmax_1d(ratio, grid, values=values)
    if current is not None and ratio([current])[0] >= peak.value:
        return float(current)
    return peak.angle


def _target_ratio(covariances, table, users, m, visibility, geometry):
    bands = [k for k in range(len(covariances)) if m in visibility[k]]
    if not bands:
        raise TargetInvisibleEverywhere(f"target {m} is not visible in any band")
    manifolds = []
    for k in bands:
        others = [table[k, i] for i in visibility[k] if i != m]
        if k > 0:
            others = [users[k - 1]] + others
        manifolds.append(_columns(geometry, others))
    return bands, ProjectedRatio(geometry, [covariances[k] for k in bands], manifolds)


def fml_phase2_target_update(
    covariances,
    targets,
    users,
    m: int,
    visibility,
    geometry: ArrayGeometry,
    grid: GridSpec = GridSpec(),
) -> float:
    """Maximizer over ``theta`` of the fused ratio for target ``m``, all other angles held.

    ``targets`` is either a length-q vector shared by all bands or a
    (bands, q) table of per-band estimates.

    Raises:
        TargetInvisibleEverywhere: ``m`` is in no visibility set.
        AllPointsDegenerate: every grid point fell under the denominator guard.
    """
    table = _as_table(targets, len(covariances))
    _, ratio = _target_ratio(covariances, table, users, m, visibility, geometry)
    peak = argmax_1d(ratio, grid)
    if peak is None:
        raise AllPointsDegenerate(f"no admissible angle for target {m}")
    return peak.angle


def fused_objective(covariances, targets, users, visibility, geometry) -> float:
    table = _as_table(targets, len(covariances))
    total = 0.0
    for k, r in enumerate(covariances):
        angles = [table[k, i] for i in visibility[k]]
        if k > 0:
            angles = [users[k - 1]] + angles
        total += trace_objective(geometry, r, angles)
    return total


def _validate(covariances, num_targets, visibility, geometry):
    n = geometry.num_antennas
    if len(visibility) != len(covariances):
        raise ConfigError(f"{len(covariances)} covariances but {len(visibility)} visibility sets")
    if len(visibility[0]) > n - 1:
        raise ConfigError(f"downlink band has {len(visibility[0])} targets for N={n}")
    for phi in visibility[1:]:
        if len(phi) + 1 > n:
            raise ConfigError(f"uplink band carries {len(phi) + 1} paths for N={n}")
    if any(i >= num_targets for phi in visibility for i in phi):
        raise ConfigError("visibility refers to a target index >= num_targets")


def fml_estimate(
    covariances,
    num_targets: int,
    geometry: ArrayGeometry,
    grid: GridSpec = GridSpec(),
    visibility=None,
    eps: float = 1e-6,
    max_iters: int = 30,
    user_prior: Sequence[float] | None = None,
) -> EstimateResult:
    """Alternate user updates (phase 1) and target updates (phase 2) until the angles settle.

    With ``user_prior`` the user angles are taken as given and phase 1 is
    skipped. Iteration stops when the summed Euclidean change of the target
    and user vectors drops below ``eps``; after ``max_iters`` iterations the
    current estimate is returned with ``converged=False``.
    """
    covariances = [np.asarray(r) for r in covariances]
    num_bands = len(covariances)
    num_users = num_bands - 1
    if visibility is None:
        visibility = all_visible(num_bands, num_targets)
    _validate(covariances, num_targets, visibility, geometry)

    table = fml_initialize(covariances, visibility, geometry, grid, num_targets)
    if np.isnan(table).all(axis=0).any():
        missing = int(np.nonzero(np.isnan(table).all(axis=0))[0][0])
        raise TargetInvisibleEverywhere(f"target {missing} is not visible in any band")
    # A target missed by the downlink takes its first uplink estimate as the global value.
    targets = np.array([table[np.nonzero(~np.isnan(table[:, m]))[0][0], m] for m in range(num_targets)])

    if user_prior is not None:
        users = np.asarray(user_prior, dtype=float)
        if users.shape != (num_users,):
            raise ConfigError(f"user prior must have {num_users} entries")
    else:
        users = np.full(num_users, np.nan)

    result = EstimateResult(targets.copy(), users.copy(), converged=False)
    for p in range(max_iters):
        old_targets, old_users = targets.copy(), users.copy()

        if user_prior is None:
            # Each band's update reads only that band's previous-iteration state.
            users = np.array([
                fml_phase1_user_update(
                    covariances[k],
                    [table[k, i] for i in visibility[k]],
                    geometry,
                    grid,
                    current=None if np.isnan(old_users[k - 1]) else old_users[k - 1],
                )
                for k in range(1, num_bands)
            ])

        for m in range(num_targets):
            bands, ratio = _target_ratio(covariances, table, users, m, visibility, geometry)
            peak = argmax_1d(ratio, grid)
            if peak is None:
                raise AllPointsDegenerate(f"no admissible angle for target {m}")
            current = table[bands, m]
            consistent = np.all(current == current[0])
            if consistent:
                current_value = ratio.per_band(current[:1])[:, 0].sum()
                if current_value >= peak.value:
                    continue
            targets[m] = peak.angle
            table[bands, m] = peak.angle

        result.objective_trace.append(fused_objective(covariances, table, users, visibility, geometry))
        result.target_history.append(sorted_angles(targets))
        result.user_history.append(users.copy())
        result.iterations = p + 1
        change = np.linalg.norm(targets - old_targets)
        if num_users:
            change += np.linalg.norm(users - old_users)
        if change < eps:
            result.converged = True
            break

    result.target_angles = sorted_angles(targets)
    result.user_angles = users.copy()
    if not result.converged:
        result.flags = ("non_convergence",)
    return result
