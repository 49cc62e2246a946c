"""Uniform linear array model and the complex linear algebra shared by all estimators.

Phase convention: element ``n`` (0-based) of the steering vector is
``exp(+1j * 2*pi * spacing * n * sin(theta))``. Every estimator and the CRB use
this convention through :func:`steering_matrix`, so the choice of sign has no
effect on any spectrum or estimate.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import (
    DegenerateGapWarning,
    DuplicateAngle,
    IllConditioned,
    NotHermitian,
    RankOverflow,
)

HALF_PI = np.pi / 2
PINV_RCOND = 1e-12
DEFAULT_MAX_GRAM_COND = 1e12


def check_angle(theta: float) -> float:
    theta = float(theta)
    if not abs(theta) < HALF_PI:
        raise ValueError(f"angle {theta!r} rad is outside the open interval (-pi/2, pi/2)")
    return theta


@dataclass(frozen=True)
class ArrayGeometry:
    """ULA with ``num_antennas`` elements spaced ``spacing`` wavelengths apart."""

    num_antennas: int
    spacing: float = 0.5

    def __post_init__(self):
        if int(self.num_antennas) != self.num_antennas or self.num_antennas < 2:
            raise ValueError(f"num_antennas must be an integer >= 2, got {self.num_antennas!r}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing!r}")
        object.__setattr__(self, "num_antennas", int(self.num_antennas))

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.num_antennas, dtype=float)


def steering_matrix(geometry: ArrayGeometry, thetas) -> np.ndarray:
    """Steering vectors for a batch of angles, one column per angle (N x G)."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    phase = 2 * np.pi * geometry.spacing * np.outer(geometry.positions, np.sin(thetas))
    return np.exp(1j * phase)


def steering_vector(geometry: ArrayGeometry, theta: float) -> np.ndarray:
    return steering_matrix(geometry, check_angle(theta))[:, 0]


def steering_derivative_matrix(geometry: ArrayGeometry, thetas) -> np.ndarray:
    """Columnwise d a(theta) / d theta for a batch of angles."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    scale = 2j * np.pi * geometry.spacing * np.outer(geometry.positions, np.cos(thetas))
    return scale * steering_matrix(geometry, thetas)


@dataclass(frozen=True, eq=False)
class Manifold:
    """Steering matrix ``A(angles)`` together with the angles that built it."""

    matrix: np.ndarray
    angles: tuple

    @property
    def num_antennas(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def manifold(geometry: ArrayGeometry, angles: Sequence[float]) -> Manifold:
    angles = tuple(check_angle(t) for t in angles)
    if len(angles) > geometry.num_antennas:
        raise RankOverflow(
            f"{len(angles)} columns requested but the array has {geometry.num_antennas} antennas"
        )
    ordered = np.sort(np.asarray(angles))
    if np.any(np.diff(ordered) < 1e-12):
        raise DuplicateAngle(f"angles {angles} contain a duplicate")
    if not angles:
        return Manifold(np.zeros((geometry.num_antennas, 0), dtype=complex), ())
    matrix = steering_matrix(geometry, angles)
    matrix.setflags(write=False)
    return Manifold(matrix, angles)


MatrixLike = Union[Manifold, np.ndarray]


def _as_matrix(m: MatrixLike) -> np.ndarray:
    return m.matrix if isinstance(m, Manifold) else np.asarray(m)


def projector(m: MatrixLike, max_cond: float | None = DEFAULT_MAX_GRAM_COND) -> np.ndarray:
    """Orthogonal projector onto the column span of ``m``.

    Computed from the SVD of the matrix; singular values below ``1e-12 * s_max``
    are dropped, which is the Moore-Penrose convention ``A A^+``. An empty
    matrix projects onto nothing. ``max_cond`` bounds the condition number of
    the Gram matrix ``A^H A``; pass ``None`` to accept rank-deficient input.
    """
    a = _as_matrix(m)
    n, d = a.shape
    if d == 0:
        return np.zeros((n, n), dtype=complex)
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if s[0] == 0:
        if max_cond is not None:
            raise IllConditioned("manifold matrix is identically zero")
        return np.zeros((n, n), dtype=complex)
    if max_cond is not None:
        gram_cond = (s[0] / s[-1]) ** 2 if s[-1] > 0 else np.inf
        if gram_cond > max_cond:
            raise IllConditioned(f"Gram matrix condition number {gram_cond:.3g} exceeds {max_cond:.3g}")
    rank = int(np.count_nonzero(s > PINV_RCOND * s[0]))
    u = u[:, :rank]
    return u @ u.conj().T


def orth_projector(m: MatrixLike, max_cond: float | None = DEFAULT_MAX_GRAM_COND) -> np.ndarray:
    """``I - projector(m)``; the identity for an empty manifold."""
    a = _as_matrix(m)
    return np.eye(a.shape[0], dtype=complex) - projector(a, max_cond=max_cond)


def hermitian_part(r: np.ndarray) -> np.ndarray:
    return 0.5 * (r + r.conj().T)


@dataclass(frozen=True, eq=False)
class SubspacePair:
    signal_basis: np.ndarray
    noise_basis: np.ndarray
    signal_eigenvalues: np.ndarray
    noise_eigenvalues: np.ndarray

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.concatenate([self.signal_eigenvalues, self.noise_eigenvalues])


def evd_split(r: np.ndarray, signal_dim: int) -> SubspacePair:
    """Split a Hermitian matrix into its dominant ``signal_dim`` eigenspace and the rest.

    Raises:
        NotHermitian: if ``||R - R^H||_F > 1e-8 ||R||_F``.
    """
    r = np.asarray(r)
    n = r.shape[0]
    if r.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {r.shape}")
    if not 0 <= signal_dim < n:
        raise ValueError(f"signal_dim must be in [0, {n}), got {signal_dim}")
    scale = np.linalg.norm(r)
    if np.linalg.norm(r - r.conj().T) > 1e-8 * scale:
        raise NotHermitian("matrix is not Hermitian within 1e-8 relative tolerance")
    w, v = np.linalg.eigh(hermitian_part(r))
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    return SubspacePair(
        signal_basis=v[:, :signal_dim],
        noise_basis=v[:, signal_dim:],
        signal_eigenvalues=w[:signal_dim],
        noise_eigenvalues=w[signal_dim:],
    )


def count_signals(eigenvalues, ratio: float = 10.0) -> int:
    """Diagnostic source count: position of the last eigenvalue jump ``lambda_i / lambda_{i+1} > ratio``.

    Returns 0 when no consecutive ratio exceeds the threshold. Never used to
    override configured subspace dimensions.
    """
    w = np.sort(np.asarray(eigenvalues, dtype=float))[::-1]
    w = np.maximum(w, np.finfo(float).tiny)
    jumps = w[:-1] / w[1:]
    above = np.nonzero(jumps > ratio)[0]
    return int(above[-1] + 1) if above.size else 0


def top_left_singular(m: np.ndarray, r: int) -> np.ndarray:
    """Orthonormal basis of the ``r`` dominant left singular directions of ``m``.

    Emits :class:`DegenerateGapWarning` when ``s_r / s_{r+1} < 1 + 1e-8``,
    i.e. the requested subspace is not uniquely defined.
    """
    m = np.asarray(m)
    n = m.shape[0]
    if not 1 <= r <= n:
        raise ValueError(f"r must be in [1, {n}], got {r}")
    u, s, _ = np.linalg.svd(m)
    if r < len(s) and s[r - 1] <= (1 + 1e-8) * s[r]:
        warnings.warn(
            f"singular values {s[r - 1]:.6g} and {s[r]:.6g} are not separated; "
            f"the rank-{r} subspace is not unique",
            DegenerateGapWarning,
            stacklevel=2,
        )
    return u[:, :r]
