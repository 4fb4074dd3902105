import numpy as np
import pytest
from hypothesis import given, strategies as st

from shearlf.errors import InvalidArgument
from shearlf.lightfield import DisparityConfig, LightField3D, dense_view_count, select_views
from shearlf.nn import ChannelPlan, init_params
from shearlf.pipeline import (
    PAPER_TIMINGS,
    RunConfig,
    bench,
    centered_box,
    cubic_resize,
    evaluate_against_gt,
    prep_eval_data,
    reconstruct_dslf,
    subsample_for_eval,
)
from shearlf.solver import SolverConfig
from shearlf.synth import random_texture, render_planar_lightfield

QUICK = SolverConfig(iterations=3)


def quick_cfg(**kw):
    base = dict(disparity=DisparityConfig(0.0, 4.0), solver=QUICK)
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def sslf5():
    rng = np.random.default_rng(7)
    tex = [[random_texture(rng) for _ in range(3)] for _ in range(2)]
    return render_planar_lightfield(tex, 5, 48, 2.0, supersample=2)


def test_run_config_validation():
    with pytest.raises(InvalidArgument):
        RunConfig(method="nerf")
    with pytest.raises(InvalidArgument):
        RunConfig(tau=1)
    with pytest.raises(InvalidArgument):
        RunConfig(disparity=DisparityConfig(0.0, 17.0))
    with pytest.raises(InvalidArgument):
        RunConfig(tau=64)
    assert RunConfig().xi == 4


def test_view_count_and_pass_through(sslf5):
    out = reconstruct_dslf(sslf5, quick_cfg())
    assert out.n == dense_view_count(5, 16) == 65
    for i in range(5):
        np.testing.assert_array_equal(out.views[16 * i], sslf5.views[i])


def test_reconstruction_is_deterministic_and_job_independent(sslf5):
    a = reconstruct_dslf(select_views(sslf5, [0, 1, 2]), quick_cfg())
    b = reconstruct_dslf(select_views(sslf5, [0, 1, 2]), quick_cfg(jobs=2))
    np.testing.assert_array_equal(a.views, b.views)


def test_drst_needs_parameters(sslf5):
    with pytest.raises(InvalidArgument):
        reconstruct_dslf(sslf5, quick_cfg(method="drst"))
    with pytest.raises(InvalidArgument):
        reconstruct_dslf(sslf5, RunConfig())


def test_drst_pass(sslf5):
    three = select_views(sslf5, [0, 1, 2])
    params = init_params(ChannelPlan((2, 3, 4, 5)), 35, rng=0)
    out = reconstruct_dslf(three, quick_cfg(method="drst"), params)
    assert out.n == 33 and np.all(np.isfinite(out.views))
    np.testing.assert_array_equal(out.views[16], three.views[1])


def test_even_view_count_is_rejected(sslf5):
    with pytest.raises(InvalidArgument):
        reconstruct_dslf(select_views(sslf5, [0, 1, 2, 3]), quick_cfg())


def test_dump_intermediates(sslf5, tmp_path):
    reconstruct_dslf(select_views(sslf5, [0, 1, 2]), quick_cfg(dump_dir=str(tmp_path)))
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["triple000_row0000_dense.png", "triple000_row0000_measured.png"]


@pytest.mark.parametrize("n,delta,expected", [(97, 8, 13), (193, 16, 13), (5, 1, 5)])
def test_subsample_for_eval(n, delta, expected):
    gt = LightField3D(np.zeros((n, 1, 2, 3)))
    assert subsample_for_eval(gt, delta).n == expected


def test_subsample_rejects_indivisible():
    with pytest.raises(InvalidArgument):
        subsample_for_eval(LightField3D(np.zeros((10, 1, 2, 3))), 4)


def test_evaluate_maps_gt_views_onto_dslf(rng):
    dslf = LightField3D(rng.random((33, 2, 4, 3)))
    gt = select_views(dslf, range(0, 33, 2))
    scores = evaluate_against_gt(dslf, gt, delta=8, tau=16)
    assert sorted(scores) == [g for g in range(17) if g % 8]
    assert all(v == np.inf for v in scores.values())
    with pytest.raises(InvalidArgument):
        evaluate_against_gt(dslf, gt, delta=5, tau=16)


def test_centered_box():
    assert centered_box(3976, 2652) == (0, 208, 3976, 2236)
    assert centered_box(1280, 720) == (0, 0, 1280, 720)


def test_resize_identity_and_constants(rng):
    img = rng.random((20, 30, 3))
    np.testing.assert_array_equal(cubic_resize(img, (30, 20)), img)
    const = np.full((90, 160, 3), 0.3)
    np.testing.assert_allclose(cubic_resize(const, (32, 18)), 0.3, atol=1e-12)
    np.testing.assert_allclose(cubic_resize(const, (320, 180)), 0.3, atol=1e-12)


@given(st.integers(4, 40), st.integers(4, 40))
def test_resize_shapes(w, h):
    out = cubic_resize(np.ones((17, 23)), (w, h))
    assert out.shape == (h, w)


def test_upscale_reproduces_linear_ramps():
    # the kernel reproduces linear functions, so away from the clamped
    # edges a ramp comes out sampled at the output pixel centres
    ramp = np.tile(np.arange(16.0), (4, 1))
    out = cubic_resize(ramp, (32, 4))
    expected = (np.arange(32) + 0.5) / 2 - 0.5
    np.testing.assert_allclose(out[:, 4:-4], np.tile(expected[4:-4], (4, 1)), atol=1e-12)


def test_prep_eval_data(rng):
    lf = LightField3D(np.full((2, 45, 100, 3), 0.6))
    box = centered_box(100, 45)
    out = prep_eval_data(lf, box, (32, 18))
    assert (out.n, out.height, out.width) == (2, 18, 32)
    np.testing.assert_allclose(out.views, 0.6, atol=1e-12)
    with pytest.raises(InvalidArgument):
        prep_eval_data(lf, (10, 0, 100, 45), (32, 18))


def test_bench_report():
    cfg = RunConfig(solver=SolverConfig(iterations=2))
    report = bench(64, 3, cfg, ChannelPlan((2, 3, 4, 5)))
    assert report["canvas"] == (128, 64)
    assert report["st_ms"] > 0 and report["drst_ms"] > 0
    assert report["speedup"] == pytest.approx(report["st_ms"] / report["drst_ms"])
    assert report["reference"] == PAPER_TIMINGS[0]
    assert PAPER_TIMINGS[0]["st_ms"] == 1529.1 and PAPER_TIMINGS[0]["drst_ms"] == 640.5
