"""Per-band snapshot synthesis for the downlink echo band and the K uplink user bands.

Band 0 carries the monostatic echo of the visible targets. Band ``k >= 1``
carries the direct path of user ``k`` (row 0 of the source matrix) followed by
its bistatic reflections off the targets visible in that band. Every path is an
independent unit-modulus QPSK stream scaled to the configured per-path SNR, so
the source covariance is diagonal in expectation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .array_core import ArrayGeometry, check_angle, hermitian_part, manifold
from .errors import ConfigError, InvalidDivisor, RankOverflow


DEFAULT_TARGETS_DEG = (0.0, 30.0, 60.0)
# Downlink (symbols, subcarriers) per scenario: the same time-frequency product as one user band.
DL_RESOURCES = {1: (16, 32), 2: (32, 32)}


@dataclass(frozen=True)
class OfdmNumerology:
    """Carrier and symbol timing constants. Recorded with each experiment; the
    spatial snapshot model does not consume them."""

    carrier_hz: float = 24e9
    subcarrier_spacing_hz: float = 240e3
    symbol_s: float = 1 / 240e3
    cyclic_prefix_s: float = 1 / 240e3 / 4

    @property
    def total_symbol_s(self) -> float:
        return self.symbol_s + self.cyclic_prefix_s


@dataclass(frozen=True)
class SceneConfig:
    """True geometry of one scene. Angles in radians.

    ``target_angles`` must be strictly ascending; target index ``m`` always
    means the ``m``-th smallest target angle. ``visibility[k]`` lists the
    0-based target indices seen in band ``k`` (band 0 is the downlink echo);
    ``None`` makes every target visible in every band.
    """

    target_angles: tuple
    user_angles: tuple = ()
    visibility: Optional[tuple] = None
    noise_power: float = 1.0
    snr_db: float = 0.0

    def __post_init__(self):
        targets = tuple(check_angle(t) for t in self.target_angles)
        users = tuple(check_angle(t) for t in self.user_angles)
        if not targets:
            raise ConfigError("at least one target is required")
        if any(b <= a for a, b in zip(targets, targets[1:])):
            raise ConfigError(f"target angles must be strictly ascending, got {targets}")
        if self.noise_power < 0:
            raise ConfigError("noise_power must be >= 0")
        q, k = len(targets), len(users)
        if self.visibility is None:
            vis = tuple(tuple(range(q)) for _ in range(k + 1))
        else:
            vis = tuple(tuple(sorted(int(i) for i in phi)) for phi in self.visibility)
        if len(vis) != k + 1:
            raise ConfigError(f"visibility needs {k + 1} index sets (bands 0..K), got {len(vis)}")
        for phi in vis:
            if len(set(phi)) != len(phi) or any(not 0 <= i < q for i in phi):
                raise ConfigError(f"visibility set {phi} is not a subset of 0..{q - 1}")
        if not vis[0]:
            raise ConfigError("the downlink band must see at least one target")
        for b in range(1, k + 1):
            if any(abs(users[b - 1] - targets[i]) < 1e-12 for i in vis[b]):
                raise ConfigError(f"user {b} coincides with a visible target")
        object.__setattr__(self, "target_angles", targets)
        object.__setattr__(self, "user_angles", users)
        object.__setattr__(self, "visibility", vis)

    @property
    def num_targets(self) -> int:
        return len(self.target_angles)

    @property
    def num_users(self) -> int:
        return len(self.user_angles)

    @property
    def path_power(self) -> float:
        """Per-path power: ``snr`` times the noise power (times 1 when noiseless)."""
        ref = self.noise_power if self.noise_power > 0 else 1.0
        return ref * 10 ** (self.snr_db / 10)

    def band_angles(self, k: int) -> tuple:
        """Ordered path angles of band ``k``: the user first (uplink), then visible targets."""
        targets = tuple(self.target_angles[i] for i in self.visibility[k])
        return targets if k == 0 else (self.user_angles[k - 1],) + targets

    def with_snr(self, snr_db: float) -> "SceneConfig":
        return SceneConfig(self.target_angles, self.user_angles, self.visibility,
                           self.noise_power, snr_db)

    def to_dict(self) -> dict:
        return {
            "target_angles_deg": [math.degrees(t) for t in self.target_angles],
            "user_angles_deg": [math.degrees(t) for t in self.user_angles],
            "visibility": [list(phi) for phi in self.visibility],
            "noise_power": self.noise_power,
            "snr_db": self.snr_db,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        vis = d.get("visibility")
        return cls(
            target_angles=tuple(math.radians(t) for t in d["target_angles_deg"]),
            user_angles=tuple(math.radians(t) for t in d.get("user_angles_deg", ())),
            visibility=None if vis is None else tuple(tuple(p) for p in vis),
            noise_power=float(d.get("noise_power", 1.0)),
            snr_db=float(d.get("snr_db", 0.0)),
        )


@dataclass(frozen=True)
class BandConfig:
    band_index: int
    num_symbols: int
    num_subcarriers: int

    def __post_init__(self):
        if self.band_index < 0 or self.num_symbols < 1 or self.num_subcarriers < 1:
            raise ConfigError(f"invalid band configuration {self}")

    @property
    def num_snapshots(self) -> int:
        return self.num_symbols * self.num_subcarriers

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BandConfig":
        return cls(int(d["band_index"]), int(d["num_symbols"]), int(d["num_subcarriers"]))


@dataclass(frozen=True, eq=False)
class BandData:
    snapshots: np.ndarray
    covariance: np.ndarray
    config: BandConfig
    sources: np.ndarray
    angles: tuple = field(default=())


def qpsk_stream(count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. symbols from ``{(+-1 +- 1j) / sqrt(2)}``."""
    bits = rng.integers(0, 2, size=(2, count))
    return ((1 - 2 * bits[0]) + 1j * (1 - 2 * bits[1])) / np.sqrt(2)


def complex_gaussian(shape, power: float, rng: np.random.Generator) -> np.ndarray:
    """Circular complex Gaussian samples with ``E|w|^2 = power``."""
    scale = np.sqrt(power / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_covariance(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 2 or y.shape[1] < 1:
        raise ValueError(f"expected an N x T snapshot matrix with T >= 1, got shape {y.shape}")
    return hermitian_part(y @ y.conj().T / y.shape[1])


def synthesize_band(
    scene: SceneConfig,
    band: BandConfig,
    geometry: ArrayGeometry,
    rng: np.random.Generator,
) -> BandData:
    """Draw ``Y_k = A_k X_k + W_k`` for one band and its sample covariance."""
    k = band.band_index
    if k > scene.num_users:
        raise ConfigError(f"band {k} requested but the scene has {scene.num_users} users")
    angles = scene.band_angles(k)
    n = geometry.num_antennas
    if len(angles) > n:
        raise RankOverflow(f"band {k} has {len(angles)} paths but only {n} antennas")
    t = band.num_snapshots
    if t < n:
        warnings.warn(f"band {k} has {t} snapshots for {n} antennas; covariance is rank deficient",
                      RuntimeWarning, stacklevel=2)
    a = manifold(geometry, angles).matrix
    amplitude = np.sqrt(scene.path_power)
    x = amplitude * qpsk_stream(len(angles) * t, rng).reshape(len(angles), t)
    y = a @ x
    if scene.noise_power > 0:
        y = y + complex_gaussian((n, t), scene.noise_power, rng)
    return BandData(y, sample_covariance(y), band, x, angles)


def user_angles_deg(num_users: int) -> list[float]:
    """Users spread evenly from -10 to -70 degrees."""
    if num_users == 0:
        return []
    if num_users == 1:
        return [-10.0]
    return [-10.0 - k * 60.0 / (num_users - 1) for k in range(num_users)]


def make_scenario(
    which: int,
    num_users: int,
    num_antennas: int,
    num_targets: int,
    snr_db: float,
    target_angles_deg: Sequence[float] | None = None,
    noise_power: float = 1.0,
    dl_resources: tuple[int, int] | None = None,
) -> tuple[SceneConfig, list[BandConfig]]:
    """Scene and band resources for one of the two resource-allocation scenarios.

    Scenario 1 keeps ``L_k * |C_k| = 512`` for every band (users get
    ``|C_k| = 32/K`` subcarriers and ``L_k = 16K`` symbols; the downlink 16
    symbols on 32 subcarriers). Scenario 2 gives every band 32 symbols on 32
    subcarriers. ``dl_resources=(symbols, subcarriers)`` overrides the
    downlink allocation.
    """
    if which not in (1, 2):
        raise ConfigError(f"scenario must be 1 or 2, got {which!r}")
    if num_users < 0:
        raise ConfigError("number of users must be >= 0")
    if which == 1 and num_users and 32 % num_users:
        raise InvalidDivisor(f"scenario 1 splits 32 subcarriers evenly; K={num_users} does not divide 32")
    if target_angles_deg is None:
        if num_targets > len(DEFAULT_TARGETS_DEG):
            raise ConfigError(f"only {len(DEFAULT_TARGETS_DEG)} default targets; pass target angles")
        target_angles_deg = DEFAULT_TARGETS_DEG[:num_targets]
    target_angles_deg = sorted(float(t) for t in target_angles_deg)
    if len(target_angles_deg) != num_targets:
        raise ConfigError(f"{num_targets} targets requested, {len(target_angles_deg)} angles given")
    if num_targets >= num_antennas:
        raise ConfigError(f"{num_targets} targets need more than {num_antennas} antennas")
    if num_users and num_targets + 1 > num_antennas:
        raise ConfigError(f"uplink bands carry {num_targets + 1} paths but N={num_antennas}")

    scene = SceneConfig(
        target_angles=tuple(math.radians(t) for t in target_angles_deg),
        user_angles=tuple(math.radians(t) for t in user_angles_deg(num_users)),
        noise_power=noise_power,
        snr_db=snr_db,
    )
    bands = [BandConfig(0, *(dl_resources or DL_RESOURCES[which]))]
    for k in range(1, num_users + 1):
        if which == 1:
            bands.append(BandConfig(k, 16 * num_users, 32 // num_users))
        else:
            bands.append(BandConfig(k, 32, 32))
    return scene, bands


def model_covariance(scene: SceneConfig, band_index: int, geometry: ArrayGeometry) -> np.ndarray:
    """Expected covariance ``A_k R_xx A_k^H + sigma^2 I`` with ``R_xx = path_power * I``.

    The infinite-snapshot limit of :func:`synthesize_band`'s sample covariance.
    """
    a = manifold(geometry, scene.band_angles(band_index)).matrix
    n = geometry.num_antennas
    return hermitian_part(scene.path_power * a @ a.conj().T + scene.noise_power * np.eye(n))
