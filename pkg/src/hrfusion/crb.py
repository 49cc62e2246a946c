"""Deterministic-signal Cramer-Rao bound on the target angles, fused over all bands.

For band ``k`` with manifold ``A_k``, derivative ``D_k`` and realized sources
``X_k``, the target Fisher contribution is

    S_k Re{ H_k * conj(X_k X_k^H) } S_k^T,   H_k = D_k^H (I - P_k) D_k,

where ``*`` is the elementwise product, ``P_k`` projects onto ``span(A_k)``
and ``S_k`` (q x d_k) picks the columns of ``A_k`` that are targets. The bound
is ``sigma^2 / 2`` times the inverse of the summed Fisher matrix. The sum over
snapshots of ``diag(x)^* H diag(x)`` is folded into the elementwise product.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .array_core import ArrayGeometry, check_angle, projector, steering_derivative_matrix, steering_matrix
from .errors import ConfigError, Unidentifiable
from .scene import BandData, SceneConfig


def manifold_derivative(geometry: ArrayGeometry, theta: float) -> np.ndarray:
    """``d a / d theta``: entry ``n`` is ``j 2 pi spacing n cos(theta) a_n(theta)``."""
    return steering_derivative_matrix(geometry, check_angle(theta))[:, 0]


@dataclass(frozen=True, eq=False)
class CrbInputs:
    manifolds: tuple
    derivatives: tuple
    sources: tuple
    selections: tuple
    noise_power: float

    @property
    def num_targets(self) -> int:
        return self.selections[0].shape[0]

    @property
    def num_bands(self) -> int:
        return len(self.manifolds)

    def restrict(self, bands) -> "CrbInputs":
        bands = list(bands)
        pick = lambda seq: tuple(seq[k] for k in bands)  # noqa: E731
        return CrbInputs(pick(self.manifolds), pick(self.derivatives), pick(self.sources),
                         pick(self.selections), self.noise_power)

    def with_noise_power(self, noise_power: float) -> "CrbInputs":
        return CrbInputs(self.manifolds, self.derivatives, self.sources, self.selections, noise_power)


@dataclass(frozen=True, eq=False)
class CrbResult:
    matrix: np.ndarray

    @property
    def per_target_variance(self) -> np.ndarray:
        return np.diag(self.matrix).copy()


def selection_matrix(scene: SceneConfig, band_index: int) -> np.ndarray:
    """Map from the columns of ``A_k`` to global target indices; the user column maps nowhere."""
    phi = scene.visibility[band_index]
    offset = 0 if band_index == 0 else 1
    s = np.zeros((scene.num_targets, offset + len(phi)))
    for j, m in enumerate(phi):
        s[m, offset + j] = 1.0
    return s


def crb_inputs(scene: SceneConfig, bands: list[BandData], geometry: ArrayGeometry) -> CrbInputs:
    """Collect the true manifolds, their derivatives and the realized sources of one trial."""
    manifolds, derivatives, sources, selections = [], [], [], []
    for data in bands:
        k = data.config.band_index
        angles = scene.band_angles(k)
        if data.sources.shape[0] != len(angles):
            raise ConfigError(f"band {k}: {data.sources.shape[0]} source rows for {len(angles)} paths")
        manifolds.append(steering_matrix(geometry, angles))
        derivatives.append(steering_derivative_matrix(geometry, angles))
        sources.append(data.sources)
        selections.append(selection_matrix(scene, k))
    return CrbInputs(tuple(manifolds), tuple(derivatives), tuple(sources), tuple(selections),
                     scene.noise_power)


def band_fisher(inputs: CrbInputs, k: int) -> np.ndarray:
    """Target Fisher contribution of band ``k``, without the ``2 / sigma^2`` factor."""
    a, d, x, s = inputs.manifolds[k], inputs.derivatives[k], inputs.sources[k], inputs.selections[k]
    h = d.conj().T @ (np.eye(a.shape[0]) - projector(a)) @ d
    f = (h * (x @ x.conj().T).conj()).real
    return s @ f @ s.T


def fisher_matrix(inputs: CrbInputs) -> np.ndarray:
    return sum(band_fisher(inputs, k) for k in range(inputs.num_bands))


def crb_targets(inputs: CrbInputs) -> CrbResult:
    """Hybrid CRB over every band in ``inputs``.

    Raises:
        Unidentifiable: if the smallest Fisher eigenvalue is below ``1e-12`` times the largest.
    """
    fisher = fisher_matrix(inputs)
    fisher = 0.5 * (fisher + fisher.T)
    eig = np.linalg.eigvalsh(fisher)
    if eig[-1] <= 0 or eig[0] < 1e-12 * eig[-1]:
        raise Unidentifiable(f"Fisher matrix eigenvalues span [{eig[0]:.3g}, {eig[-1]:.3g}]")
    factor = linalg.cho_factor(fisher)
    inv = linalg.cho_solve(factor, np.eye(fisher.shape[0]))
    inv = 0.5 * (inv + inv.T)
    return CrbResult(0.5 * inputs.noise_power * inv)


def crb_special(mode: str, inputs: CrbInputs) -> CrbResult:
    """CRB from the downlink band alone (``"monostatic"``) or the first uplink band alone (``"bistatic"``)."""
    if mode == "monostatic":
        return crb_targets(inputs.restrict([0]))
    if mode == "bistatic":
        if inputs.num_bands < 2:
            raise ConfigError("bistatic CRB needs at least one uplink band")
        return crb_targets(inputs.restrict([1]))
    raise ValueError(f"mode must be 'monostatic' or 'bistatic', got {mode!r}")
