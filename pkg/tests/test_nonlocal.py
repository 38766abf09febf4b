import numpy as np
import pytest
from numpy.lib.stride_tricks import sliding_window_view

from nldenoise.image import pad_plane
from nldenoise.nonlocal_op import (
    GroupWeights,
    PatchTransform,
    dct_transform,
    initial_group_weights,
    nl_adjoint,
    nl_forward,
)
from nldenoise.patches import PatchGeometry, accumulate_patches, block_match, extract_patches
from oracles import dense_nonlocal_rows


def geom(ph=5, pw=5, window=7, k=4):
    return PatchGeometry(patch_h=ph, patch_w=pw, window=window, group_size=k)


def random_setup(seed, h=12, w=12, ph=5, pw=5, k=4):
    rng = np.random.default_rng(seed)
    g = geom(ph=ph, pw=pw, k=k)
    plane = rng.uniform(0, 255, size=(h, w))
    groups = block_match(plane, g)
    transform = dct_transform(ph, pw)
    transform.matrix += 0.05 * rng.normal(size=transform.matrix.shape)
    weights = GroupWeights(rng.normal(size=k))
    return plane, g, groups, transform, weights


def test_transform_must_have_p_minus_1_rows():
    with pytest.raises(ValueError):
        PatchTransform(np.zeros((9, 9)))


def test_dct_transform_rows_are_orthonormal_and_dc_free():
    t = dct_transform(5, 5)
    assert t.matrix.shape == (24, 25)
    assert np.allclose(t.matrix @ t.matrix.T, np.eye(24), atol=1e-12)
    assert np.abs(t.matrix.sum(axis=1)).max() <= 1e-12


def test_dct_transform_zigzag_order_2x2():
    t = dct_transform(2, 2)
    base = 0.5 * np.array([1.0, 1.0, -1.0, -1.0])  # frequency (0,1), column-major samples
    assert np.allclose(t.matrix[0], base, atol=1e-12)
    assert np.allclose(t.matrix[1], 0.5 * np.array([1.0, -1.0, 1.0, -1.0]), atol=1e-12)
    assert np.allclose(t.matrix[2], 0.5 * np.array([1.0, -1.0, -1.0, 1.0]), atol=1e-12)


def test_forward_reduces_to_patch_transform_for_single_member_groups():
    plane, g, _, transform, _ = random_setup(1, k=1)
    groups = block_match(plane, geom(k=1))
    out = nl_forward(plane, transform, GroupWeights(np.array([1.0])), groups, geom(k=1))
    patches = extract_patches(pad_plane(plane, g.margins), g)
    assert np.allclose(out, patches @ transform.matrix.T, atol=1e-12)


def test_forward_annihilates_constants():
    g = geom()
    plane = np.full((10, 10), 7.5)
    groups = block_match(plane, g)
    out = nl_forward(plane, dct_transform(5, 5), GroupWeights(np.ones(4)), groups, g)
    assert np.abs(out).max() <= 1e-10


def test_forward_matches_dense_operator():
    plane, g, groups, transform, weights = random_setup(2)
    rows = dense_nonlocal_rows(12, 12, g, transform, weights, groups)
    ours = nl_forward(plane, transform, weights, groups, g)
    ref = np.stack([rows[r] @ plane.ravel() for r in range(144)])
    assert np.abs(ours - ref).max() <= 1e-12 * np.abs(ref).max()


def test_forward_is_linear():
    plane, g, groups, transform, weights = random_setup(3)
    other = np.random.default_rng(4).uniform(0, 255, size=plane.shape)
    lhs = nl_forward(2.0 * plane - 0.5 * other, transform, weights, groups, g)
    rhs = 2.0 * nl_forward(plane, transform, weights, groups, g) - 0.5 * nl_forward(
        other, transform, weights, groups, g
    )
    assert np.abs(lhs - rhs).max() <= 1e-12 * max(1.0, np.abs(rhs).max())


def test_adjoint_of_zero_field():
    plane, g, groups, transform, weights = random_setup(5)
    out = nl_adjoint(np.zeros((144, 24)), transform, weights, groups, g, (12, 12))
    assert np.array_equal(out, np.zeros((12, 12)))


def test_adjoint_collapses_for_single_member_groups():
    g = geom(k=1)
    plane = np.random.default_rng(6).uniform(0, 255, size=(9, 9))
    groups = block_match(plane, g)
    transform = dct_transform(5, 5)  # orthonormal rows
    field = np.random.default_rng(7).normal(size=(81, 24))
    ours = nl_adjoint(field, transform, GroupWeights(np.array([1.0])), groups, g, (9, 9))
    ref = accumulate_patches(field @ transform.matrix, g, (9, 9))
    assert np.allclose(ours, ref, atol=1e-12)


@pytest.mark.parametrize("ph,k", [(3, 1), (3, 4), (5, 4), (5, 8), (7, 8)])
def test_adjoint_identity(ph, k):
    rng = np.random.default_rng(100 + ph + k)
    g = geom(ph=ph, pw=ph, k=k)
    plane = rng.uniform(0, 255, size=(12, 12))
    groups = block_match(plane, g)
    transform = dct_transform(ph, ph)
    weights = GroupWeights(rng.normal(size=k))
    for _ in range(20):
        x = rng.normal(size=(12, 12))
        z = rng.normal(size=(144, transform.n_coeffs))
        lhs = float(np.sum(nl_forward(x, transform, weights, groups, g) * z))
        rhs = float(np.sum(x * nl_adjoint(z, transform, weights, groups, g, (12, 12))))
        assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(x) * np.linalg.norm(z)


def test_forward_matches_sliding_correlation():
    # the patch transform acts like a filterbank of patch-sized kernels
    plane, g, groups, transform, weights = random_setup(8)
    padded = pad_plane(plane, g.margins)
    windows = sliding_window_view(padded, (5, 5))
    # row entry p = a + b*ph pairs with window sample (a, b)
    kernels = transform.matrix.reshape(-1, 5, 5).transpose(0, 2, 1)
    per_patch = np.einsum("hwab,cab->hwc", windows, kernels).reshape(144, 24)
    ref = sum(
        weights.values[j] * per_patch[groups.indices[:, j]] for j in range(g.group_size)
    )
    ours = nl_forward(plane, transform, weights, groups, g)
    assert np.abs(ours - ref).max() <= 1e-12 * np.abs(ref).max()


def test_initial_group_weights():
    w = initial_group_weights(6)
    assert w.values.tolist() == [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]


def test_forward_rejects_mismatched_groups():
    plane, g, groups, transform, weights = random_setup(9)
    with pytest.raises(ValueError):
        nl_forward(plane[:10], transform, weights, groups, g)
