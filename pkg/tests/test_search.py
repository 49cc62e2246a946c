import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrfusion.search import GridSpec, argmax_1d, find_peaks, golden_section_max, local_maxima


def test_grid_defaults():
    g = GridSpec()
    pts = np.rad2deg(g.points)
    assert pts[0] == pytest.approx(-89.5) and pts[-1] == pytest.approx(89.5)
    assert len(pts) == 359


@pytest.mark.parametrize("kwargs", [dict(lo=0.5, hi=0.1), dict(coarse_step=1e-6, refine_tol=1e-5),
                                    dict(lo=-2.0)])
def test_grid_invalid(kwargs):
    with pytest.raises(ValueError):
        GridSpec(**kwargs)


@settings(max_examples=50, deadline=None)
@given(center=st.floats(-0.9, 0.9), width=st.floats(0.05, 2.0))
def test_golden_section_finds_parabola_vertex(center, width):
    x = golden_section_max(lambda t: -(t - center) ** 2, center - width / 3, center + 2 * width / 3, 1e-9)
    assert abs(x - center) < 1e-8


def test_local_maxima_rules():
    v = np.array([0.0, 1.0, 0.0, 2.0, 2.0, 1.0, np.nan, 3.0])
    assert local_maxima(v).tolist() == [1, 3]
    assert local_maxima(v, valid=np.array([1, 0, 1, 1, 1, 1, 1, 1], bool)).tolist() == [3]


def test_find_peaks_refines_and_orders():
    grid = GridSpec.from_degrees(step=1.0)
    centers = np.deg2rad([-20.3, 40.7])
    heights = [1.0, 2.0]

    def f(t):
        t = np.asarray(t)
        return sum(h / (1 + ((t - c) / 0.02) ** 2) for h, c in zip(heights, centers))

    peaks = find_peaks(f, grid, 2)
    assert [round(np.rad2deg(p.angle), 3) for p in peaks] == [40.7, -20.3]
    assert all(abs(p.angle - c) < grid.refine_tol for p, c in zip(peaks, centers[::-1]))


def test_find_peaks_fewer_than_requested():
    grid = GridSpec()
    assert len(find_peaks(lambda t: -np.asarray(t) ** 2, grid, 3)) == 1


def test_argmax_monotone_returns_edge():
    grid = GridSpec()
    peak = argmax_1d(lambda t: np.asarray(t), grid)
    assert peak.angle == pytest.approx(grid.hi)


def test_argmax_all_invalid():
    grid = GridSpec()
    assert argmax_1d(lambda t: np.full(np.shape(t), -np.inf), grid) is None
