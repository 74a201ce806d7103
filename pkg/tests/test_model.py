"""Parameter containers, masked forwards against deletion oracles, width
slimming against its structured-mask equivalent, and checkpoint round-trips."""

from __future__ import annotations

import math

import numpy as np
import pytest

from helpers import flatten_layers, max_rel_err

from mgaug.autodiff import ShapeError, Tape
from mgaug.model import (Mask, ParamSet, apply_mask, build_network, collect_grads,
                         combine, forward, forward_masked, init_params, load_checkpoint,
                         save_checkpoint, scatter_slim, slim, slim_mask, slim_widths)


def test_paramset_validates_chaining():
    with pytest.raises(ShapeError):
        ParamSet([(np.zeros((3, 4)), np.zeros(4)), (np.zeros((5, 2)), np.zeros(2))])
    with pytest.raises(ShapeError):
        ParamSet([(np.zeros((3, 4)), np.zeros(3))])  # bias width mismatch


def test_paramset_counts_and_arch():
    ps = init_params([4, 8, 3], 0)
    assert ps.arch == [4, 8, 3]
    assert ps.n == 4 * 8 + 8 + 8 * 3 + 3


def test_init_is_seed_deterministic_and_seed_sensitive():
    a = init_params([6, 5, 2], 42)
    b = init_params([6, 5, 2], 42)
    c = init_params([6, 5, 2], 43)
    assert all(np.array_equal(x[0], y[0]) for x, y in zip(a.layers, b.layers))
    assert any(not np.array_equal(x[0], y[0]) for x, y in zip(a.layers, c.layers))


def test_init_biases_zero_and_weights_bounded():
    ps = init_params([10, 7, 4], 3)
    for (w, b), (i_dim, o_dim) in zip(ps.layers, [(10, 7), (7, 4)]):
        bound = math.sqrt(6.0 / (i_dim + o_dim))
        assert np.array_equal(b, np.zeros(o_dim))
        assert np.abs(w).max() <= bound


def test_init_weight_mean_consistent_with_uniform_draws():
    # mean of n uniform(-a, a) draws has std a / sqrt(3 n); demand 3 sigma
    i_dim, o_dim = 40, 30
    ps = init_params([i_dim, o_dim], 11)
    w = ps.layers[0][0]
    a = math.sqrt(6.0 / (i_dim + o_dim))
    tol = 3.0 * a / math.sqrt(3.0 * w.size)
    assert abs(w.mean()) < tol


def test_forward_masked_with_identity_mask_is_exact():
    ps = init_params([5, 6, 3], 1)
    x = np.random.default_rng(2).normal(size=(4, 5))
    assert np.array_equal(forward(ps, x), forward_masked(ps, Mask.ones_like(ps), x))


def test_forward_masked_all_zeros_outputs_zero():
    ps = init_params([5, 6, 3], 1)
    mask = Mask([(np.zeros_like(w), np.zeros_like(b)) for w, b in ps.layers])
    x = np.random.default_rng(3).normal(size=(4, 5))
    assert np.array_equal(forward_masked(ps, mask, x), np.zeros((4, 3)))


def test_single_masked_parameter_matches_physical_deletion():
    ps = init_params([4, 5, 2], 7)
    x = np.random.default_rng(8).normal(size=(3, 4))
    rng = np.random.default_rng(9)
    for _ in range(20):
        li = rng.integers(0, 2)
        mask = Mask.ones_like(ps)
        mw = [(amw.copy(), amb.copy()) for amw, amb in mask.layers]
        w_shape = ps.layers[li][0].shape
        idx = (rng.integers(0, w_shape[0]), rng.integers(0, w_shape[1]))
        mw[li][0][idx] = 0.0
        mask = Mask(mw)
        # oracle: physically zero that parameter and run unmasked
        deleted = [(w.copy(), b.copy()) for w, b in ps.layers]
        deleted[li][0][idx] = 0.0
        assert np.array_equal(forward_masked(ps, mask, x), forward(ParamSet(deleted), x))


def test_mask_rejects_non_binary_entries():
    ps = init_params([3, 3], 0)
    with pytest.raises(ValueError):
        Mask([(np.full((3, 3), 0.5), np.zeros(3))])


def test_mask_pruned_fraction():
    mw = np.ones((4, 4))
    mw[:2, :2] = 0.0
    m = Mask([(mw, np.ones(4))])
    assert m.pruned_fraction == 4 / 20


def test_masked_gradients_are_exactly_zero_at_masked_coordinates():
    ps = init_params([6, 8, 4], 5)
    rng = np.random.default_rng(6)
    x = rng.normal(size=(5, 6))
    y = rng.integers(0, 4, size=5)
    layers = []
    for w, b in ps.layers:
        layers.append((rng.integers(0, 2, size=w.shape).astype(float),
                       rng.integers(0, 2, size=b.shape).astype(float)))
    mask = Mask(layers)
    tape = Tape()
    out = build_network(tape, ps, x, mask)
    grads = collect_grads(tape, tape.cross_entropy(out, y), ps)
    for (gw, gb), (mw, mb) in zip(grads.layers, mask.layers):
        assert np.array_equal(gw[mw == 0.0], np.zeros(int((mw == 0).sum())))
        assert np.array_equal(gb[mb == 0.0], np.zeros(int((mb == 0).sum())))


def test_slim_widths_rounding_and_bounds():
    assert slim_widths([16, 8, 8, 5], 0.5) == [16, 4, 4, 5]
    assert slim_widths([16, 8, 8, 5], 0.0) == [16, 8, 8, 5]
    assert slim_widths([16, 3, 5], 0.9) == [16, 1, 5]  # ceil keeps one unit
    with pytest.raises(ValueError):
        slim_widths([16, 8, 5], 1.0)
    with pytest.raises(ValueError):
        slim_widths([16, 8, 5], -0.1)


def test_slim_zero_rate_is_identity():
    ps = init_params([6, 8, 3], 0)
    s = slim(ps, 0.0)
    assert all(np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
               for a, b in zip(ps.layers, s.layers))


def test_slim_keeps_leading_blocks():
    ps = init_params([4, 8, 8, 2], 1)
    s = slim(ps, 0.5)
    assert s.arch == [4, 4, 4, 2]
    assert np.array_equal(s.layers[0][0], ps.layers[0][0][:, :4])
    assert np.array_equal(s.layers[1][0], ps.layers[1][0][:4, :4])
    assert np.array_equal(s.layers[2][0], ps.layers[2][0][:4, :])
    assert np.array_equal(s.layers[2][1], ps.layers[2][1])  # output bias untouched


def test_slim_forward_matches_structured_mask_forward():
    ps = init_params([8, 10, 10, 4], 2)
    x = np.random.default_rng(3).normal(size=(6, 8))
    for rho in (0.0, 0.3, 0.5, 0.75):
        slim_out = forward(slim(ps, rho), x)
        masked_out = forward_masked(ps, slim_mask(ps, rho), x)
        assert max_rel_err(slim_out, masked_out) < 1e-12


def test_scatter_slim_places_gradients_in_leading_blocks():
    ps = init_params([4, 6, 3], 4)
    sub = slim(ps, 0.5)
    fake = ParamSet([(np.full_like(w, 2.0), np.full_like(b, 3.0)) for w, b in sub.layers])
    full = scatter_slim(ps, fake, 0.5)
    assert full.layers[0][0].shape == ps.layers[0][0].shape
    assert np.all(full.layers[0][0][:, :3] == 2.0)
    assert np.all(full.layers[0][0][:, 3:] == 0.0)
    assert np.all(full.layers[1][0][:3, :] == 2.0)
    assert np.all(full.layers[1][0][3:, :] == 0.0)
    # nonzero support is exactly the structured mask's support
    sm = slim_mask(ps, 0.5)
    assert np.array_equal(flatten_layers(full) != 0.0,
                          (flatten_layers(sm) != 0.0)
                          & (flatten_layers(full) != 0.0))
    assert np.all(flatten_layers(full)[flatten_layers(sm) == 0.0] == 0.0)


def test_combine_and_apply_mask():
    ps = init_params([3, 4, 2], 0)
    g = init_params([3, 4, 2], 1)
    stepped = combine(ps, g, -0.5)
    for (w, b), (gw, gb), (sw, sb) in zip(ps.layers, g.layers, stepped.layers):
        assert np.array_equal(sw, w - 0.5 * gw)
        assert np.array_equal(sb, b - 0.5 * gb)
    m = Mask.ones_like(ps)
    assert np.array_equal(flatten_layers(apply_mask(ps, m)), flatten_layers(ps))


def test_checkpoint_round_trip(tmp_path):
    ps = init_params([7, 9, 4], 13)
    path = str(tmp_path / "model.mgck")
    save_checkpoint(path, ps, epoch=17)
    loaded, epoch, mask_blob = load_checkpoint(path)
    assert epoch == 17
    assert mask_blob is None
    assert loaded.arch == ps.arch
    assert np.array_equal(flatten_layers(loaded), flatten_layers(ps))


def test_checkpoint_magic_and_version_are_enforced(tmp_path):
    path = str(tmp_path / "bad.mgck")
    with open(path, "wb") as f:
        f.write(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_checkpoint_is_little_endian_f64_after_header(tmp_path):
    # byte-layout check: one 1x1 layer, weight 2.0, bias -3.0
    ps = ParamSet([(np.array([[2.0]]), np.array([-3.0]))])
    path = str(tmp_path / "tiny.mgck")
    save_checkpoint(path, ps, epoch=1)
    blob = open(path, "rb").read()
    assert blob[:4] == b"MGCK"
    assert int.from_bytes(blob[4:8], "little") == 1          # version
    assert int.from_bytes(blob[8:12], "little") == 1         # layer count
    assert int.from_bytes(blob[12:16], "little") == 1        # in dim
    assert int.from_bytes(blob[16:20], "little") == 1        # out dim
    assert np.frombuffer(blob, "<f8", count=2, offset=20).tolist() == [2.0, -3.0]
    assert int.from_bytes(blob[36:44], "little") == 1        # epoch
    assert blob[44] == 0                                     # no mask section
