import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from edgesparse.decoder import (
    DecoderConfig,
    extract_embeddings,
    fit,
    forward,
    init_params,
    member_rngs,
    preset,
    stage_sizes,
)
from edgesparse.diagnostics import (
    count_activated_regions,
    count_mask_regions,
    expected_region_count,
    simulate_region_count,
)
from edgesparse.errors import InvalidParameterError, InvalidShapeError, NumericFailureError
from edgesparse.imaging import load_image
from conftest import DATA
from helpers import flood_fill_count, rel_error, toy_decoder_gradients

TINY = DecoderConfig(k=8, blocks=2, nd=1, steps=40, lr_decay_step=30)


@pytest.fixture(scope="module")
def natural():
    return load_image(DATA / "coffee_48x32.png")


# -- configuration ---------------------------------------------------------


def test_defaults_and_presets():
    cfg = DecoderConfig()
    assert (cfg.k, cfg.blocks, cfg.nd, cfg.lam, cfg.steps, cfg.lr_decay_step) == (128, 5, 3, 0.1, 1500, 1000)
    d = preset("downsized")
    assert (d.k, d.blocks, d.nd, d.blur_factor) == (32, 4, 5, 0.0002)
    with pytest.raises(InvalidParameterError):
        preset("nope")


@pytest.mark.parametrize("bad", [
    dict(steps=10, lr_decay_step=20),
    dict(lam=1.5),
    dict(nd=0),
    dict(blocks=0),
    dict(dropout_p=1.0),
    dict(blur_factor=0.0),
])
def test_invalid_configs(bad):
    with pytest.raises(InvalidParameterError):
        DecoderConfig(**bad)


def test_with_steps_keeps_decay_fraction():
    cfg = DecoderConfig().with_steps(300)
    assert (cfg.steps, cfg.lr_decay_step) == (300, 200)


def test_sigma_override():
    assert DecoderConfig().input_sigma(480, 320) == 15
    assert DecoderConfig(sigma=4.0).input_sigma(480, 320) == 4.0


# -- stage sizes -----------------------------------------------------------


def test_stage_sizes_square():
    assert stage_sizes(320, 320, 5) == [(10, 10), (20, 20), (40, 40), (80, 80), (160, 160), (320, 320)]


def test_stage_sizes_odd():
    sizes = stage_sizes(481, 321, 5)
    assert [s[0] for s in sizes] == [16, 31, 61, 121, 241, 481]
    assert sizes[0] == (16, 11)


def test_stage_sizes_one_block():
    assert stage_sizes(4, 4, 1) == [(2, 2), (4, 4)]


def test_stage_sizes_too_small():
    with pytest.raises(InvalidShapeError, match="fewer blocks"):
        stage_sizes(8, 8, 3)


@given(st.integers(2, 400), st.integers(2, 400), st.integers(1, 6))
def test_stage_sizes_chain(w, h, blocks):
    try:
        sizes = stage_sizes(w, h, blocks)
    except InvalidShapeError:
        # ceil(n / 2**B) < 2 exactly when n <= 2**B
        assert min(w, h) <= 2**blocks
        return
    assert min(w, h) > 2**blocks
    assert sizes[-1] == (w, h) and len(sizes) == blocks + 1
    for (a, b), (c, d) in zip(sizes, sizes[1:]):
        assert (a, b) == (math.ceil(c / 2), math.ceil(d / 2))


# -- forward ---------------------------------------------------------------


def _toy_forward(rng, k=6, blocks=2, w=8, h=6, out=11):
    sizes = stage_sizes(w, h, blocks)
    params = init_params(k, blocks, out, rng)
    inp = rng.uniform(-1, 1, (k, sizes[0][1], sizes[0][0]))
    return params, inp, sizes


def test_forward_shapes_and_range(rng):
    params, inp, sizes = _toy_forward(rng)
    res = forward(params, inp, sizes)
    assert res.recon.shape == (11, 6, 8)
    assert res.last_hidden.shape == (6, 6, 8)
    assert res.last_relu.shape == (6, 6, 8) and res.last_relu.min() >= 0
    assert np.all((res.recon.data > 0) & (res.recon.data < 1))


def test_forward_zero_mixing_gives_half(rng):
    params, inp, sizes = _toy_forward(rng)
    for name, p in params.items():
        if name.startswith("mix"):
            p.data[:] = 0.0
    np.testing.assert_array_equal(forward(params, inp, sizes).recon.data, 0.5)


def test_forward_hidden_is_normalised_before_dropout(rng):
    params, inp, sizes = _toy_forward(rng)
    res = forward(params, inp, sizes, dropout_enabled=True, rng=np.random.default_rng(0), dropout_p=0.5)
    h = res.last_hidden.data
    assert np.all(np.abs(h.mean(axis=(1, 2))) < 1e-10)
    # dropout would zero whole channels; the hidden map must not show that
    assert np.all(h.std(axis=(1, 2)) > 0)


def test_forward_input_size_checked(rng):
    params, inp, sizes = _toy_forward(rng)
    with pytest.raises(InvalidShapeError):
        forward(params, inp[:, :-1], sizes)


@pytest.mark.parametrize("seed", range(5))
def test_end_to_end_gradient(seed):
    analytic, numeric = toy_decoder_gradients(seed)
    assert rel_error(analytic, numeric) < 1e-3


# -- fitting ---------------------------------------------------------------


def test_fit_reduces_loss(natural):
    res = fit(natural, TINY.replace(steps=120, lr_decay_step=100))
    assert res.loss_history.shape == (120, 3)
    assert res.loss_history[-1, 0] < res.loss_history[0, 0]


def test_fit_is_reproducible(natural):
    a = fit(natural, TINY)
    b = fit(natural, TINY)
    np.testing.assert_array_equal(a.loss_history, b.loss_history)
    for name in a.params:
        np.testing.assert_array_equal(a.params[name].data, b.params[name].data)


def test_fit_members_differ(natural):
    a = fit(natural, TINY, 0)
    b = fit(natural, TINY, 1)
    assert not np.array_equal(a.last_hidden, b.last_hidden)


def test_loss_terms_combine(natural):
    cfg = TINY.replace(lam=0.25)
    hist = fit(natural, cfg).loss_history
    np.testing.assert_allclose(hist[:, 0], 0.75 * hist[:, 1] + 0.25 * hist[:, 2], rtol=1e-12)


def test_lambda_zero_leaves_spatial_head_rows_alone(natural):
    cfg = TINY.replace(lam=0.0, steps=30, lr_decay_step=30)
    rngs = member_rngs(cfg.seed, 0)
    init = init_params(cfg.k, cfg.blocks, 11, rngs["weights"])
    res = fit(natural, cfg)
    # Adam with zero gradient never moves a weight, so rows 3.. stay at their initial values
    np.testing.assert_array_equal(res.params["head"].data[3:], init["head"].data[3:])
    assert not np.array_equal(res.params["head"].data[:3], init["head"].data[:3])


def test_fit_nan_reports_step(natural):
    bad = natural.copy()
    bad[0, 0, 0] = np.nan
    with pytest.raises(NumericFailureError, match="step 0"):
        fit(bad, TINY)


def test_loss_csv(tmp_path, natural):
    res = fit(natural, TINY.replace(steps=3, lr_decay_step=3))
    path = tmp_path / "loss.csv"
    res.write_loss_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "step,total,recon,spatial" and len(lines) == 4


def test_no_dead_feature_maps(natural):
    res = fit(natural, DecoderConfig(k=16, blocks=3, nd=1, steps=260, lr_decay_step=200))
    assert np.all(res.last_hidden.std(axis=(1, 2)) > 0)


# -- embeddings ------------------------------------------------------------


def test_embedding_dims(natural):
    emb = extract_embeddings(natural, TINY.replace(nd=2, steps=5, lr_decay_step=5))
    assert emb.dims == 16 and (emb.width, emb.height) == (48, 32)
    assert np.all(np.isfinite(emb.features))
    np.testing.assert_array_equal(emb.pixel(3, 2), emb.features[:, 2, 3])


def test_threads_do_not_change_result(natural):
    cfg = TINY.replace(nd=3, steps=8, lr_decay_step=4)
    a = extract_embeddings(natural, cfg, threads=1)
    b = extract_embeddings(natural, cfg, threads=3)
    np.testing.assert_array_equal(a.features, b.features)


def test_grayscale_input(rng):
    emb = extract_embeddings(rng.random((16, 16)), TINY.replace(steps=3, lr_decay_step=3))
    assert emb.features.shape == (8, 16, 16)


# -- region diagnostics ----------------------------------------------------


def test_regions_all_positive():
    assert count_activated_regions(np.ones((1, 5, 5))) == 1.0


def test_regions_checkerboard():
    assert count_activated_regions(np.array([[[1.0, 0.0], [0.0, 1.0]]])) == 2.0


def test_regions_average_over_channels():
    maps = np.zeros((2, 3, 3))
    maps[0] = 1
    maps[1, 0, 0] = maps[1, 2, 2] = maps[1, 0, 2] = 1
    assert count_activated_regions(maps) == 2.0


@pytest.mark.parametrize("seed", range(50))
def test_regions_match_flood_fill(seed):
    r = np.random.default_rng(seed)
    field = r.normal(size=(int(r.integers(3, 20)), int(r.integers(3, 20))))
    mask = field > 0.3
    assert count_mask_regions(mask) == flood_fill_count(mask.astype(int), mask)


def test_periodic_regions_join_across_edges():
    mask = np.zeros((5, 5), bool)
    mask[2, 0] = mask[2, 4] = True
    assert count_mask_regions(mask) == 2
    assert count_mask_regions(mask, periodic=True) == 1


def test_expected_count_examples():
    assert expected_region_count(100, 10, 0) == 0
    assert abs(expected_region_count(100, 10, 1) - 50 * (2 * math.pi) ** -1.5 * math.exp(-0.5)) < 1e-12
    assert abs(expected_region_count(100, 10, 1) - 1.926) < 1e-3


def test_monte_carlo_near_formula():
    sim = simulate_region_count(128, 8, 1.5, 60, np.random.default_rng(0))
    assert abs(sim / expected_region_count(128, 8, 1.5) - 1) < 0.3
