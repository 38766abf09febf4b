import numpy as np
import pytest

from nldenoise.image import (
    FormatError,
    ImageTensor,
    InfinitePSNRError,
    NoiseSpec,
    add_gaussian_noise,
    load_image,
    opponent_box_bounds,
    opponent_to_rgb,
    psnr,
    rgb_to_opponent,
    save_image,
    symmetric_pad,
)
from oracles import reflect_index, scalar_psnr


def gray(data):
    data = np.asarray(data, dtype=np.float64)
    return ImageTensor.from_planes(data[None] if data.ndim == 2 else data, 255.0)


def test_load_pgm_basic(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P5\n2 1\n255\n" + bytes([0, 255]))
    img = load_image(path)
    assert (img.height, img.width, img.channels, img.peak) == (1, 2, 1, 255.0)
    assert img.data.ravel().tolist() == [0.0, 255.0]


def test_load_ppm_scales_to_unit(tmp_path):
    path = tmp_path / "a.ppm"
    path.write_bytes(b"P6\n1 1\n255\n" + bytes([255, 0, 0]))
    img = load_image(path)
    assert (img.channels, img.peak) == (3, 1.0)
    assert img.data[:, 0, 0].tolist() == [1.0, 0.0, 0.0]


def test_load_rejects_other_magic(tmp_path):
    path = tmp_path / "a.pbm"
    path.write_bytes(b"P4\n1 1\n")
    with pytest.raises(FormatError):
        load_image(path)


def test_load_rejects_wrong_maxval(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P5\n1 1\n65535\n\0\0")
    with pytest.raises(FormatError, match="maxval"):
        load_image(path)


def test_load_parse_error_names_byte_offset(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P5\n2 x\n255\n\0\0")
    with pytest.raises(FormatError, match="byte"):
        load_image(path)


def test_load_accepts_header_comments(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P5\n# a comment\n2 1 # inline\n255\n" + bytes([7, 9]))
    img = load_image(path)
    assert img.data.ravel().tolist() == [7.0, 9.0]


def test_save_gray_identity_quantization(tmp_path):
    path = tmp_path / "a.pgm"
    save_image(gray(np.array([[0.0, 255.0]])), path)
    assert path.read_bytes().endswith(bytes([0, 255]))


def test_save_color_rounds_half_away_from_zero(tmp_path):
    img = ImageTensor.from_planes(np.full((3, 1, 1), 0.5), 1.0)
    path = tmp_path / "a.ppm"
    save_image(img, path)
    assert path.read_bytes().endswith(bytes([128, 128, 128]))


def test_save_clamps(tmp_path):
    path = tmp_path / "a.pgm"
    save_image(gray(np.array([[-3.0, 260.0]])), path)
    assert path.read_bytes().endswith(bytes([0, 255]))


@pytest.mark.parametrize("mode", ["gray", "color"])
def test_save_load_round_trip_idempotent(tmp_path, mode):
    rng = np.random.default_rng(5)
    if mode == "gray":
        img = gray(rng.uniform(0, 255, size=(7, 9)))
        path = tmp_path / "a.pgm"
    else:
        img = ImageTensor.from_planes(rng.uniform(0, 1, size=(3, 7, 9)), 1.0)
        path = tmp_path / "a.ppm"
    save_image(img, path)
    once = load_image(path)
    save_image(once, path)
    twice = load_image(path)
    assert np.array_equal(once.data, twice.data)


def test_symmetric_pad_row_example():
    img = gray(np.array([[1.0, 2.0, 3.0]]))
    padded = symmetric_pad(img, (0, 0, 2, 2))
    assert padded.data[0, 0].tolist() == [2.0, 1.0, 1.0, 2.0, 3.0, 3.0, 2.0]


def test_symmetric_pad_zero_margins_identity():
    img = gray(np.arange(12.0).reshape(3, 4))
    assert np.array_equal(symmetric_pad(img, (0, 0, 0, 0)).data, img.data)


def test_symmetric_pad_matches_reflection_oracle():
    plane = np.arange(9.0).reshape(3, 3)
    padded = symmetric_pad(gray(plane), (1, 1, 1, 1)).data[0]
    for i in range(5):
        for j in range(5):
            assert padded[i, j] == plane[reflect_index(i, 3, 1), reflect_index(j, 3, 1)]


def test_symmetric_pad_rejects_large_margin():
    with pytest.raises(ValueError):
        symmetric_pad(gray(np.zeros((3, 3))), (3, 0, 0, 0))


def test_symmetric_pad_is_linear():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, 4, 5))
    pad = lambda arr: symmetric_pad(gray(arr), (2, 1, 3, 2)).data
    assert np.allclose(pad(2.0 * a - 3.0 * b), 2.0 * pad(a) - 3.0 * pad(b), atol=1e-12)


def test_psnr_uniform_difference():
    a = gray(np.zeros((4, 4)))
    b = gray(np.full((4, 4), 25.0))
    assert psnr(a, b) == pytest.approx(20.0 * np.log10(255.0 / 25.0), abs=1e-9)


def test_psnr_full_scale_difference_is_zero_db():
    a = gray(np.zeros((4, 4)))
    b = gray(np.full((4, 4), 255.0))
    assert psnr(a, b) == pytest.approx(0.0, abs=1e-12)


def test_psnr_matches_scalar_oracle():
    rng = np.random.default_rng(11)
    a = rng.uniform(0, 255, size=(6, 7))
    b = rng.uniform(0, 255, size=(6, 7))
    ours = psnr(gray(a), gray(b))
    ref = scalar_psnr(a, b, 255.0)
    assert abs(ours - ref) <= 1e-12 * abs(ref)


def test_psnr_identical_images_raise():
    img = gray(np.ones((3, 3)))
    with pytest.raises(InfinitePSNRError):
        psnr(img, gray(np.ones((3, 3))))


def test_psnr_dimension_mismatch():
    with pytest.raises(ValueError):
        psnr(gray(np.zeros((3, 3))), gray(np.zeros((3, 4))))


def test_psnr_symmetry_and_permutation_invariance():
    rng = np.random.default_rng(2)
    a = rng.uniform(0, 255, size=(5, 5))
    b = rng.uniform(0, 255, size=(5, 5))
    assert psnr(gray(a), gray(b)) == psnr(gray(b), gray(a))
    perm = rng.permutation(25)
    ap = a.ravel()[perm].reshape(5, 5)
    bp = b.ravel()[perm].reshape(5, 5)
    assert psnr(gray(ap), gray(bp)) == pytest.approx(psnr(gray(a), gray(b)), rel=1e-15)


def test_noise_sigma_zero_is_identity():
    img = gray(np.arange(20.0).reshape(4, 5))
    out = add_gaussian_noise(img, NoiseSpec(sigma=0.0, seed=99))
    assert np.array_equal(out.data, img.data)


def test_noise_is_bit_deterministic():
    img = gray(np.zeros((8, 8)))
    spec = NoiseSpec(sigma=25.0, seed=1234)
    a = add_gaussian_noise(img, spec)
    b = add_gaussian_noise(img, spec)
    assert np.array_equal(a.data, b.data)


def test_noise_empirical_std():
    img = gray(np.zeros((1000, 1000)))
    out = add_gaussian_noise(img, NoiseSpec(sigma=25.0, seed=7))
    assert 24.9 <= out.data.std() <= 25.1


def test_opponent_of_gray_pixel():
    img = ImageTensor.from_planes(np.full((3, 2, 2), 0.37), 1.0)
    opp = rgb_to_opponent(img)
    assert np.allclose(opp.data[0], 0.37, atol=1e-15)
    assert np.allclose(opp.data[1:], 0.0, atol=1e-15)


def test_opponent_round_trip():
    rng = np.random.default_rng(3)
    img = ImageTensor.from_planes(rng.uniform(0, 1, size=(3, 25, 40)), 1.0)
    back = opponent_to_rgb(rgb_to_opponent(img))
    assert np.abs(back.data - img.data).max() <= 1e-12


def test_opponent_of_pure_red():
    img = ImageTensor.from_planes(np.array([1.0, 0.0, 0.0]).reshape(3, 1, 1), 1.0)
    opp = rgb_to_opponent(img)
    assert opp.data[:, 0, 0] == pytest.approx([1.0 / 3.0, 0.5, 0.25], abs=1e-15)


def test_opponent_requires_three_channels():
    with pytest.raises(ValueError):
        rgb_to_opponent(gray(np.zeros((2, 2))))


def test_opponent_box_bounds_from_cube_corners():
    lower, upper = opponent_box_bounds()
    assert lower == pytest.approx([0.0, -0.5, -0.5], abs=1e-15)
    assert upper == pytest.approx([1.0, 0.5, 0.5], abs=1e-15)
