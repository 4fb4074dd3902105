import numpy as np
import pytest
from hypothesis import given, strategies as st

from shearlf.errors import InvalidArgument
from shearlf.shearlet import (
    analysis,
    build_system,
    project_admissible,
    scale_count,
    shearlet_count,
    synthesis,
)


@pytest.mark.parametrize("tau,xi", [(16, 4), (17, 5), (2, 1), (9, 4), (8, 3)])
def test_scale_count(tau, xi):
    assert scale_count(tau) == xi


def test_scale_count_rejects_small_tau():
    with pytest.raises(InvalidArgument):
        scale_count(1)


@pytest.mark.parametrize("xi,eta", [(4, 35), (5, 68), (1, 4)])
def test_shearlet_count(xi, eta):
    assert shearlet_count(xi) == eta


@given(st.integers(1, 12))
def test_shearlet_count_matches_enumeration(xi):
    assert shearlet_count(xi) == 1 + sum(2 ** (j + 1) + 1 for j in range(xi))


def test_shearlet_count_rejects_zero():
    with pytest.raises(InvalidArgument):
        shearlet_count(0)


def test_layout(system):
    assert system.eta == 35
    assert system.layout[0].kind == "lowpass"
    assert sum(info.kind == "lowpass" for info in system.layout) == 1
    per_scale = [len(system.indices_at_scale(j)) for j in range(4)]
    assert per_scale == [3, 5, 9, 17]
    for j in range(4):
        shears = [system.layout[t].shear for t in system.indices_at_scale(j)]
        assert shears == list(range(-(2**j), 2**j + 1))
    # ordering: scale ascending then shear ascending
    keys = [(i.scale, i.shear) for i in system.layout[1:]]
    assert keys == sorted(keys)


def test_parseval_partition(system):
    total = np.sum(system.filters**2, axis=0)
    assert np.max(np.abs(total - 1.0)) < 1e-10


def test_directional_filters_vanish_at_dc(system):
    assert np.all(system.filters[1:, 0, 0] == 0.0)


@pytest.mark.parametrize("shape,xi", [((64, 64), 2), ((64, 128), 3), ((96, 160), 4)])
def test_other_geometries_are_parseval(shape, xi):
    s = build_system(*shape, xi)
    assert s.eta == shearlet_count(xi)
    assert np.max(np.abs(np.sum(s.filters**2, axis=0) - 1.0)) < 1e-10


def test_build_rejects_bad_arguments():
    with pytest.raises(InvalidArgument):
        build_system(32, 384, 4)
    with pytest.raises(InvalidArgument):
        build_system(64, 64, 5)
    with pytest.raises(InvalidArgument):
        build_system(128, 384, 4, gamma=128)
    with pytest.raises(InvalidArgument):
        build_system(128, 384, 0)


def test_build_is_deterministic():
    a, b = build_system(64, 128, 3), build_system(64, 128, 3)
    assert np.array_equal(a.filters, b.filters)
    assert a.filters.tobytes() == b.filters.tobytes()


def test_constant_image_lives_in_lowpass(system):
    c = analysis(system, np.full(system.shape, 0.7))
    assert np.max(np.abs(c[1:])) < 1e-10
    np.testing.assert_allclose(c[0], 0.7, atol=1e-12)


def test_analysis_is_linear(small_system, rng):
    x, y = rng.normal(size=(2, 64, 64))
    lhs = analysis(small_system, 2.5 * x - 0.75 * y)
    rhs = 2.5 * analysis(small_system, x) - 0.75 * analysis(small_system, y)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_zero_coefficients_synthesize_zero(small_system):
    assert not synthesis(small_system, np.zeros((small_system.eta, 64, 64))).any()


def test_shape_mismatch(small_system):
    with pytest.raises(InvalidArgument):
        analysis(small_system, np.zeros((64, 32)))
    with pytest.raises(InvalidArgument):
        synthesis(small_system, np.zeros((3, 64, 64)))


@given(st.integers(0, 2**32 - 1))
def test_tight_frame_properties(small_system, seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=(64, 64))
    c = analysis(small_system, x)
    assert np.max(np.abs(synthesis(small_system, c) - x)) < 1e-8
    assert abs(np.sum(c**2) / np.sum(x**2) - 1.0) < 1e-8
    d = r.normal(size=c.shape)
    lhs, rhs = np.vdot(c, d), np.vdot(x, synthesis(small_system, d))
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_batched_transforms_match_single(small_system, rng):
    x = rng.normal(size=(3, 64, 64))
    c = analysis(small_system, x)
    assert c.shape == (3, small_system.eta, 64, 64)
    for i in range(3):
        np.testing.assert_allclose(c[i], analysis(small_system, x[i]), atol=1e-13)
    np.testing.assert_allclose(synthesis(small_system, c), x, atol=1e-10)


def test_float32_path_close_to_float64(system, rng):
    x = rng.normal(size=system.shape)
    c32 = analysis(system, x.astype(np.float32))
    assert c32.dtype == np.float32
    np.testing.assert_allclose(synthesis(system, c32), x, atol=1e-4)


def _grating(shape, slope, period=3.0):
    h, w = shape
    r = np.arange(h)[:, None]
    x = np.arange(w)[None, :]
    window = np.hanning(h)[:, None] * np.hanning(w)[None, :]
    return np.cos(2 * np.pi * (x - slope * r) / period) * window


@pytest.mark.parametrize("slope", np.round(np.linspace(0.0, 1.0, 21), 2))
def test_directional_selectivity_at_finest_scale(system, slope):
    # fine parallel lines put their energy at the finest scale; the filter
    # whose nominal slope is nearest should dominate the directional energy
    energy = np.sum(analysis(system, _grating(system.shape, slope)) ** 2, axis=(1, 2))
    finest = system.indices_at_scale(system.xi - 1)
    nearest = min(finest, key=lambda t: abs(system.layout[t].slope - slope))
    share = energy[nearest] / energy[1:].sum()
    assert share >= 0.5, share


def test_projection_passes_admissible_lines(system):
    img = _grating(system.shape, 0.4, period=7.0) + 0.3
    np.testing.assert_allclose(project_admissible(system, img), img, atol=1e-2)


def test_projection_removes_negative_slopes(system):
    img = _grating(system.shape, -0.6, period=5.0)
    out = project_admissible(system, img)
    assert np.sum(out**2) < 0.05 * np.sum(img**2)
