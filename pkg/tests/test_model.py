"""Tests for the query-based spotting network.

Conv indexing and the container layout are checked against independent
hand computations; functional properties (purity, equivariance, support
nesting, map normalization) are asserted structurally.
"""

import json
import math
import struct
from dataclasses import asdict

import numpy as np
import pytest

from textspot import tensor as T
from textspot import model as M
from textspot.charset import NUM_CLASSES
from textspot.rng import Rng

from helpers import max_relative_error


def small_config(**overrides):
    base = dict(embed_dim=16, n_queries=3, layers=1, heads=2, refine_r=1,
                conv_channels=(4, 8))
    base.update(overrides)
    return M.ModelConfig(**base)


def random_image(seed, size=64):
    return T.Tensor(Rng(seed).uniform(0.0, 1.0, (size, size)))


# ---------------------------------------------------------------------------
# config validation


def test_config_rejects_indivisible_heads():
    with pytest.raises(ValueError):
        M.ModelConfig(embed_dim=30, heads=4)


def test_config_rejects_bad_refine_r():
    with pytest.raises(ValueError):
        M.ModelConfig(refine_r=3)


def test_config_rejects_zero_layers():
    with pytest.raises(ValueError):
        M.ModelConfig(layers=0)


# ---------------------------------------------------------------------------
# conv indexing oracle


def test_conv_ids_manual_4x4():
    # 3x3 stride-2 pad-1 window over a 4x4 map; index 16 is the zero row.
    ids, ho, wo = M._conv_ids(4, 4)
    assert (ho, wo) == (2, 2)
    z = 16
    expected = {
        (0, 0): [z, z, z, z, 0, 1, z, 4, 5],      # centered at (0, 0)
        (0, 1): [z, z, z, 1, 2, 3, 5, 6, 7],      # centered at (0, 2)
        (1, 0): [z, 4, 5, z, 8, 9, z, 12, 13],    # centered at (2, 0)
        (1, 1): [5, 6, 7, 9, 10, 11, 13, 14, 15],
    }
    for (oy, ox), want in expected.items():
        got = ids[(oy * wo + ox) * 9:(oy * wo + ox + 1) * 9]
        assert got.tolist() == want, (oy, ox)


def test_conv_block_matches_naive_convolution():
    # Independent nested-loop conv over an 8x8 2-channel map.
    h = w = 8
    c_in, c_out = 2, 3
    rng = Rng(41)
    x = rng.uniform(-1.0, 1.0, (h * w, c_in))
    weight = rng.uniform(-0.5, 0.5, (9 * c_in, c_out))
    bias = rng.uniform(-0.1, 0.1, (1, c_out))
    out, ho, wo = M._conv_block(T.Tensor(x), T.Tensor(weight), T.Tensor(bias),
                                h, w)
    assert (ho, wo) == (4, 4)

    grid = x.reshape(h, w, c_in)
    kernel = weight.reshape(3, 3, c_in, c_out)
    for oy in range(ho):
        for ox in range(wo):
            acc = bias[0].copy()
            for ky in range(3):
                for kx in range(3):
                    iy, ix = 2 * oy - 1 + ky, 2 * ox - 1 + kx
                    if 0 <= iy < h and 0 <= ix < w:
                        acc += grid[iy, ix] @ kernel[ky, kx]
            want = np.maximum(acc, 0.0)
            np.testing.assert_allclose(out.data[oy * wo + ox], want,
                                       rtol=1e-12, atol=1e-12)


def test_position_encoding_row_zero():
    pe = M._position_encoding(8, 64)
    half = 32
    # grid position 0 has row 0 and col 0: sin terms 0, cos terms 1
    assert np.all(pe[0, 0:half:2] == 0.0) and np.all(pe[0, 1:half:2] == 1.0)
    assert np.all(pe[0, half::2] == 0.0) and np.all(pe[0, half + 1::2] == 1.0)
    # two cells in the same row share the row half of the encoding
    np.testing.assert_array_equal(pe[8 * 3 + 1, :half], pe[8 * 3 + 5, :half])
    # ... and differ in the column half
    assert not np.array_equal(pe[8 * 3 + 1, half:], pe[8 * 3 + 5, half:])


# ---------------------------------------------------------------------------
# forward contracts


def test_forward_shapes_64px():
    cfg = small_config()
    params = M.init_params(cfg, 5)
    preds = M.forward(random_image(1), params, cfg)
    assert len(preds) == cfg.n_queries
    for q, p in enumerate(preds):
        assert p.query_id == q
        assert p.char_logits.shape == (cfg.t_max, NUM_CLASSES)
        assert p.confidence.shape == (1, 1)
        assert 0.0 <= p.confidence.item() <= 1.0
        assert p.attention_map.shape == (8, 8)
        assert p.refined_map.shape == (8, 8)


def test_forward_shapes_128px():
    cfg = small_config()
    params = M.init_params(cfg, 5)
    preds = M.forward(random_image(2, size=128), params, cfg)
    assert preds[0].attention_map.shape == (16, 16)


@pytest.mark.parametrize("shape", [(32, 32), (64, 65), (64,), (64, 64, 1)])
def test_forward_rejects_bad_shapes(shape):
    cfg = small_config()
    params = M.init_params(cfg, 5)
    with pytest.raises(M.DimensionError):
        M.forward(T.Tensor(np.zeros(shape)), params, cfg)


def test_maps_are_distributions():
    cfg = small_config(refine_r=2)
    params = M.init_params(cfg, 9)
    preds = M.forward(random_image(3), params, cfg)
    for p in preds:
        for m in (p.attention_map, p.refined_map):
            assert abs(m.data.sum() - 1.0) <= 1e-6
            assert np.all(m.data >= 0.0)


def test_forward_is_pure():
    cfg = small_config()
    params = M.init_params(cfg, 5)
    before = {k: v.data.tobytes() for k, v in params.items()}
    img = random_image(4)
    a = M.forward(img, params, cfg)
    b = M.forward(img, params, cfg)
    for pa, pb in zip(a, b):
        assert pa.char_logits.data.tobytes() == pb.char_logits.data.tobytes()
        assert pa.refined_map.data.tobytes() == pb.refined_map.data.tobytes()
    assert {k: v.data.tobytes() for k, v in params.items()} == before


def test_different_images_give_different_outputs():
    cfg = small_config()
    params = M.init_params(cfg, 5)
    zeros = M.forward(T.Tensor(np.zeros((64, 64))), params, cfg)
    ones = M.forward(T.Tensor(np.ones((64, 64))), params, cfg)
    assert not np.array_equal(zeros[0].char_logits.data,
                              ones[0].char_logits.data)
    assert not np.array_equal(zeros[0].attention_map.data,
                              ones[0].attention_map.data)


def test_query_permutation_equivariance():
    """Permuting the query embeddings permutes the predictions.

    All per-query heads are shared, so only float summation order can
    differ; tolerance is loose for exactness but tight for meaning.
    """
    cfg = small_config(n_queries=5)
    params = M.init_params(cfg, 13)
    img = random_image(6)
    base = M.forward(img, params, cfg)

    perm = [3, 0, 4, 1, 2]
    permuted = dict(params)
    permuted["queries"] = T.Tensor(params["queries"].data[perm],
                                   requires_grad=True)
    swapped = M.forward(img, permuted, cfg)
    for i, q in enumerate(perm):
        np.testing.assert_allclose(swapped[i].char_logits.data,
                                   base[q].char_logits.data, atol=1e-9)
        np.testing.assert_allclose(swapped[i].confidence.data,
                                   base[q].confidence.data, atol=1e-9)
        np.testing.assert_allclose(swapped[i].refined_map.data,
                                   base[q].refined_map.data, atol=1e-9)


# ---------------------------------------------------------------------------
# refinement


def test_r0_returns_coarse_map_bit_identical():
    cfg = small_config(refine_r=1)
    params = M.init_params(cfg, 5)
    preds = M.forward(random_image(7), params, cfg, r=0)
    for p in preds:
        assert p.refined_map.data.tobytes() == p.attention_map.data.tobytes()


def test_refined_support_nests_in_coarse_mask():
    cfg = small_config(refine_r=1)
    params = M.init_params(cfg, 5)
    preds = M.forward(random_image(8), params, cfg)
    for p in preds:
        coarse = p.attention_map.data.reshape(-1)
        refined = p.refined_map.data.reshape(-1)
        outside = coarse < cfg.alpha * coarse.max()
        assert np.all(refined[outside] == 0.0)


def test_two_stage_refinement_nests_stagewise():
    cfg = small_config(refine_r=2)
    params = M.init_params(cfg, 21)
    img = random_image(9)
    emb = M.encode_image(img, params, cfg)
    states, coarse = M.decode_queries(emb, params, cfg)
    _, stage1 = M.refine(states, coarse, emb, params, cfg, 1)
    _, stage2 = M.refine(states, coarse, emb, params, cfg, 2)
    m1 = stage1.data
    outside = m1 < cfg.alpha * m1.max(axis=1, keepdims=True)
    assert np.all(stage2.data[outside] == 0.0)


def test_requesting_unallocated_stage_raises():
    cfg = small_config(refine_r=1)
    params = M.init_params(cfg, 5)
    with pytest.raises(ValueError, match="stage 1"):
        M.forward(random_image(10), params, cfg, r=2)


# ---------------------------------------------------------------------------
# init


def test_init_deterministic_and_seed_sensitive():
    cfg = small_config()
    a = M.init_params(cfg, 5)
    b = M.init_params(cfg, 5)
    c = M.init_params(cfg, 6)
    assert all(a[k].data.tobytes() == b[k].data.tobytes() for k in a)
    assert any(a[k].data.tobytes() != c[k].data.tobytes() for k in a)


def test_init_layout_matches_specs():
    cfg = small_config(refine_r=2)
    params = M.init_params(cfg, 5)
    specs = M.param_specs(cfg)
    assert set(params) == {name for name, _, _ in specs}
    for name, shape, kind in specs:
        assert params[name].data.shape == shape
        if kind == "zero":
            assert np.all(params[name].data == 0.0)
        elif kind == "one":
            assert np.all(params[name].data == 1.0)


# ---------------------------------------------------------------------------
# gradients


def test_finite_difference_on_conv_weights():
    cfg = small_config()
    params = M.init_params(cfg, 17)
    img = random_image(11)
    probe = Rng(99).uniform(-1.0, 1.0, (8, 8))

    def loss_tensor():
        preds = M.forward(img, params, cfg)
        total = None
        for p in preds:
            term = T.add(T.sum_all(p.char_logits), T.sum_all(p.confidence))
            term = T.add(term, T.sum_all(T.mul(p.refined_map, T.Tensor(probe))))
            total = term if total is None else T.add(total, term)
        return total

    loss = loss_tensor()
    T.backward(loss)
    h = 1e-5
    checks = [("conv0_w", 3, 1), ("conv1_w", 17, 5), ("conv2_w", 40, 2),
              ("rec_q_w", 5, 3), ("rec_w1", 7, 6),
              ("rec_ln_g", 0, 2), ("pos_emb", 1, 4)]
    for name, i, j in checks:
        buf = params[name].data
        keep = buf[i, j]
        buf[i, j] = keep + h
        up = loss_tensor().item()
        buf[i, j] = keep - h
        down = loss_tensor().item()
        buf[i, j] = keep
        fd = (up - down) / (2 * h)
        got = params[name].grad[i, j]
        assert max_relative_error(np.array([got]), np.array([fd])) < 1e-4, name


# ---------------------------------------------------------------------------
# container format


def container_size(params, config):
    """Independent byte-count oracle for the container layout."""
    total = len(M.MAGIC)
    total += 4 + len(json.dumps(asdict(config), sort_keys=True).encode())
    total += 4
    for name, t in params.items():
        total += 4 + len(name.encode()) + 4 + 4 * t.data.ndim + 8 * t.data.size
    return total


def test_save_load_round_trip(tmp_path):
    cfg = small_config(refine_r=2)
    params = M.init_params(cfg, 23)
    path = tmp_path / "model.echo"
    M.save_model(path, params, cfg)
    assert path.stat().st_size == container_size(params, cfg)

    loaded, cfg2 = M.load_model(path)
    assert cfg2 == cfg
    assert set(loaded) == set(params)
    for k in params:
        assert loaded[k].data.tobytes() == params[k].data.tobytes()
        assert loaded[k].requires_grad

    # write-back of the loaded model is byte-identical
    path2 = tmp_path / "model2.echo"
    M.save_model(path2, loaded, cfg2)
    assert path.read_bytes() == path2.read_bytes()


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.echo"
    path.write_bytes(b"NOPE!" + b"\x00" * 32)
    with pytest.raises(M.FormatError, match="byte 0"):
        M.load_model(path)


def test_load_rejects_truncation(tmp_path):
    cfg = small_config()
    params = M.init_params(cfg, 5)
    path = tmp_path / "model.echo"
    M.save_model(path, params, cfg)
    blob = path.read_bytes()
    cut = path.with_suffix(".cut")
    cut.write_bytes(blob[:len(blob) - 100])
    with pytest.raises(M.FormatError, match="byte"):
        M.load_model(cut)


def test_load_rejects_trailing_garbage(tmp_path):
    cfg = small_config()
    params = M.init_params(cfg, 5)
    path = tmp_path / "model.echo"
    M.save_model(path, params, cfg)
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(M.FormatError, match="trailing"):
        M.load_model(path)


def test_save_is_deterministic(tmp_path):
    cfg = small_config()
    params = M.init_params(cfg, 5)
    a, b = tmp_path / "a.echo", tmp_path / "b.echo"
    M.save_model(a, params, cfg)
    M.save_model(b, params, cfg)
    assert a.read_bytes() == b.read_bytes()
