import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrfusion.array_core import ArrayGeometry, steering_vector
from hrfusion.crb import (
    band_fisher,
    crb_inputs,
    crb_special,
    crb_targets,
    fisher_matrix,
    manifold_derivative,
    selection_matrix,
)
from hrfusion.errors import ConfigError, Unidentifiable
from hrfusion.scene import BandConfig, SceneConfig, make_scenario, synthesize_band

from conftest import deg


def realize(scene, bands, n=5, seed=0):
    g = ArrayGeometry(n)
    rng = np.random.default_rng(seed)
    data = [synthesize_band(scene, b, g, rng) for b in bands]
    return crb_inputs(scene, data, g)


def test_derivative_at_broadside():
    np.testing.assert_allclose(manifold_derivative(ArrayGeometry(3), 0.0), [0, 1j * np.pi, 2j * np.pi])


def test_derivative_central_difference():
    g, theta, h = ArrayGeometry(8), 0.4, 1e-6
    fd = (steering_vector(g, theta + h) - steering_vector(g, theta - h)) / (2 * h)
    assert np.linalg.norm(fd - manifold_derivative(g, theta)) < 1e-6


@settings(max_examples=40, deadline=None)
@given(theta=st.floats(-1.4, 1.4), n=st.integers(2, 12))
def test_derivative_property(theta, n):
    g, h = ArrayGeometry(n), 1e-6
    fd = (steering_vector(g, theta + h) - steering_vector(g, theta - h)) / (2 * h)
    d = manifold_derivative(g, theta)
    assert np.linalg.norm(fd - d) <= 1e-6 * max(1.0, np.linalg.norm(d))


def test_derivative_vanishes_at_endfire():
    assert np.linalg.norm(manifold_derivative(ArrayGeometry(6), np.pi / 2 - 1e-9)) < 1e-6


def test_selection_matrix():
    scene = SceneConfig(deg(0, 30, 60), deg(-10), visibility=((0, 2), (1, 2)))
    np.testing.assert_array_equal(selection_matrix(scene, 0), [[1, 0], [0, 0], [0, 1]])
    np.testing.assert_array_equal(selection_matrix(scene, 1), [[0, 0, 0], [0, 1, 0], [0, 0, 1]])


def test_noise_power_linearity():
    scene, bands = make_scenario(1, 2, 5, 3, 0.0)
    inputs = realize(scene, bands)
    base = crb_targets(inputs).matrix
    np.testing.assert_allclose(crb_targets(inputs.with_noise_power(2 * inputs.noise_power)).matrix,
                               2 * base, rtol=1e-13)


@settings(max_examples=15, deadline=None)
@given(c=st.floats(0.01, 100.0), seed=st.integers(0, 1000))
def test_noise_power_linearity_property(c, seed):
    scene, bands = make_scenario(2, 1, 4, 2, 0.0)
    inputs = realize(scene, bands, n=4, seed=seed)
    base = crb_targets(inputs).matrix
    scaled = crb_targets(inputs.with_noise_power(c * inputs.noise_power)).matrix
    np.testing.assert_allclose(scaled, c * base, rtol=1e-12)


def test_symmetric_positive_definite():
    scene, bands = make_scenario(2, 2, 5, 3, 5.0)
    m = crb_targets(realize(scene, bands)).matrix
    assert np.linalg.norm(m - m.T) < 1e-12 * np.linalg.norm(m)
    assert np.linalg.eigvalsh(m).min() > 0


def test_fisher_additivity_and_band_removal():
    scene, bands = make_scenario(1, 4, 5, 2, 0.0)
    inputs = realize(scene, bands)
    total = fisher_matrix(inputs)
    np.testing.assert_allclose(total, sum(band_fisher(inputs, k) for k in range(5)))
    full = crb_targets(inputs).per_target_variance
    for drop in range(1, 5):
        keep = [k for k in range(5) if k != drop]
        assert np.all(crb_targets(inputs.restrict(keep)).per_target_variance >= full * (1 - 1e-12))


def test_hybrid_smaller_than_monostatic():
    scene, bands = make_scenario(1, 2, 5, 1, 0.0)
    inputs = realize(scene, bands)
    hybrid = crb_targets(inputs).per_target_variance
    mono = crb_special("monostatic", inputs).per_target_variance
    bi = crb_special("bistatic", inputs).per_target_variance
    assert np.all(hybrid < mono)
    assert np.all(hybrid <= np.minimum(mono, bi))
    np.testing.assert_allclose(mono, crb_targets(inputs.restrict([0])).per_target_variance)


def test_bistatic_single_band_finite():
    scene, bands = make_scenario(1, 1, 5, 1, 0.0)
    bi = crb_special("bistatic", realize(scene, bands)).per_target_variance
    assert np.all(np.isfinite(bi)) and np.all(bi > 0)


def test_special_mode_errors():
    scene, bands = make_scenario(1, 0, 5, 1, 0.0)
    inputs = realize(scene, bands)
    with pytest.raises(ConfigError):
        crb_special("bistatic", inputs)
    with pytest.raises(ValueError):
        crb_special("other", inputs)


def test_unidentifiable_without_signal():
    scene = SceneConfig(deg(0, 30), noise_power=1.0)
    g = ArrayGeometry(4)
    data = synthesize_band(scene, BandConfig(0, 4, 4), g, np.random.default_rng(0))
    inputs = crb_inputs(scene, [data], g)
    zero = type(inputs)(inputs.manifolds, inputs.derivatives, (np.zeros_like(inputs.sources[0]),),
                        inputs.selections, 1.0)
    with pytest.raises(Unidentifiable):
        crb_targets(zero)


def test_snapshot_doubling_halves_bound():
    scene = SceneConfig(deg(0, 30), deg(-40), noise_power=1.0)
    ratios = []
    for seed in range(50):
        short = realize(scene, [BandConfig(0, 8, 8), BandConfig(1, 8, 8)], seed=seed)
        long = realize(scene, [BandConfig(0, 16, 8), BandConfig(1, 16, 8)], seed=seed + 1000)
        ratios.append(crb_targets(short).per_target_variance / crb_targets(long).per_target_variance)
    assert np.mean(ratios) == pytest.approx(2.0, rel=0.2)


def test_user_count_gain_scenario1():
    def mean_crb(k):
        scene, bands = make_scenario(1, k, 5, 1, 0.0)
        return np.mean([crb_targets(realize(scene, bands, seed=s)).per_target_variance[0] for s in range(20)])

    gain = 10 * np.log10(mean_crb(1) / mean_crb(2))
    assert 2.0 <= gain <= 4.0
