"""Image containers, PGM/PPM I/O, padding, noise synthesis and PSNR.

Intensity conventions: grayscale images live in 0..255 floats with
``peak = 255``; color images are scaled to 0..1 floats with ``peak = 1``.
"""

from dataclasses import dataclass, field

import numpy as np

from .rng import SplitMix64

#: Opponent color transform, applied per pixel to (R, G, B) column vectors.
#: Row 0 is the luminance channel; the matrix is invertible and maps gray
#: pixels (R=G=B=v) to (v, 0, 0).
OPPONENT_MATRIX = np.array(
    [
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [0.5, 0.0, -0.5],
        [0.25, -0.5, 0.25],
    ]
)

OPPONENT_INVERSE = np.linalg.inv(OPPONENT_MATRIX)


class FormatError(ValueError):
    """Raised for malformed or unsupported image files."""


class InfinitePSNRError(ValueError):
    """Raised when PSNR is requested for two identical images."""


@dataclass
class ImageTensor:
    """Planar multi-channel image.

    ``data`` has shape (channels, height, width), float64, row-major within
    each plane.  ``peak`` is the maximum intensity level of the encoding
    (255 for grayscale, 1 for color).
    """

    height: int
    width: int
    channels: int
    data: np.ndarray
    peak: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        if self.data.shape != (self.channels, self.height, self.width):
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"({self.channels}, {self.height}, {self.width})"
            )
        if not self.peak > 0:
            raise ValueError("peak must be positive")

    @classmethod
    def from_planes(cls, data, peak):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 2:
            data = data[None]
        c, h, w = data.shape
        return cls(height=h, width=w, channels=c, data=data, peak=peak)

    def plane(self, c):
        return self.data[c]

    @property
    def sample_count(self):
        return self.height * self.width * self.channels


@dataclass
class NoiseSpec:
    """Additive white Gaussian noise: standard deviation and stream seed."""

    sigma: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


def _read_header_token(buf, pos):
    """Next whitespace-delimited header token, skipping '#' comment lines."""
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < n and buf[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    if pos >= n:
        raise FormatError(f"truncated header at byte {pos}")
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
        pos += 1
    return buf[start:pos], pos


def load_image(path):
    """Load a binary PGM (P5) or PPM (P6) file with maxval 255.

    Grayscale data is kept on the 0..255 scale (peak 255); color data is
    divided by 255 (peak 1).  Header comments are accepted; exactly one
    whitespace byte separates the maxval token from the raster.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 2:
        raise FormatError(f"{path}: truncated file at byte 0")
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"{path}: unsupported magic {magic!r} at byte 0")
    channels = 1 if magic == b"P5" else 3
    pos = 2
    fields = []
    for _ in range(3):
        token, pos = _read_header_token(buf, pos)
        if not token.isdigit():
            raise FormatError(f"{path}: non-numeric header token at byte {pos - len(token)}")
        fields.append(int(token))
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval} (only 255)")
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: invalid dimensions {width}x{height}")
    pos += 1  # single whitespace byte after maxval
    count = width * height * channels
    raster = buf[pos : pos + count]
    if len(raster) != count:
        raise FormatError(f"{path}: raster truncated at byte {pos + len(raster)}")
    samples = np.frombuffer(raster, dtype=np.uint8).astype(np.float64)
    if channels == 1:
        data = samples.reshape(1, height, width)
        peak = 255.0
    else:
        data = samples.reshape(height, width, 3).transpose(2, 0, 1) / 255.0
        peak = 1.0
    return ImageTensor(height=height, width=width, channels=channels, data=data, peak=peak)


def save_image(img, path):
    """Write ``img`` as binary PGM (1 channel) or PPM (3 channels).

    Samples are clamped to [0, peak], rescaled to 0..255 and rounded half
    away from zero, so load(save(img)) reproduces img up to quantization.
    """
    scaled = np.clip(img.data, 0.0, img.peak) * (255.0 / img.peak)
    bytes_ = np.floor(scaled + 0.5).astype(np.uint8)  # values >= 0 after clamp
    if img.channels == 1:
        magic, raster = b"P5", bytes_[0]
    else:
        magic, raster = b"P6", bytes_.transpose(1, 2, 0)
    header = magic + b"\n%d %d\n255\n" % (img.width, img.height)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(raster.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write image {path}: {exc}") from exc


def symmetric_pad(img, margins):
    """Mirror-pad by (top, bottom, left, right) pixels, edge included.

    A row [1, 2, 3] padded by 2 on each side becomes [2, 1, 1, 2, 3, 3, 2].
    """
    top, bottom, left, right = margins
    if top >= img.height or bottom >= img.height or left >= img.width or right >= img.width:
        raise ValueError(f"margins {margins} must be smaller than dimensions")
    padded = np.pad(img.data, ((0, 0), (top, bottom), (left, right)), mode="symmetric")
    return ImageTensor.from_planes(padded, img.peak)


def pad_plane(plane, margins):
    """symmetric_pad for a bare 2-D plane."""
    top, bottom, left, right = margins
    h, w = plane.shape
    if top >= h or bottom >= h or left >= w or right >= w:
        raise ValueError(f"margins {margins} must be smaller than dimensions")
    return np.pad(plane, ((top, bottom), (left, right)), mode="symmetric")


def fold_plane(padded, margins):
    """Adjoint of :func:`pad_plane`: add mirrored margins back onto the interior.

    Satisfies <pad(x), q> == <x, fold(q)> for all x, q.
    """
    top, bottom, left, right = margins

    def fold_axis(arr, lo, hi, axis):
        arr = np.moveaxis(arr, axis, 0)
        size = arr.shape[0] - lo - hi
        core = arr[lo : lo + size].copy()
        if lo:
            core[:lo] += arr[:lo][::-1]
        if hi:
            core[size - hi :] += arr[lo + size :][::-1]
        return np.moveaxis(core, 0, axis)

    out = fold_axis(padded, top, bottom, axis=0)
    return fold_axis(out, left, right, axis=1)


def psnr(a, b):
    """Peak signal-to-noise ratio 20*log10(peak*sqrt(N)/||a - b||) in dB.

    N counts samples over all channels.  Symmetric in its arguments.
    """
    if (a.height, a.width, a.channels) != (b.height, b.width, b.channels):
        raise ValueError("psnr requires identical dimensions and channel counts")
    if a.peak != b.peak:
        raise ValueError("psnr requires matching peak levels")
    err = np.linalg.norm((a.data - b.data).ravel())
    if err == 0.0:
        raise InfinitePSNRError("images are identical; PSNR is infinite")
    n = a.sample_count
    return 20.0 * np.log10(a.peak * np.sqrt(n) / err)


def add_gaussian_noise(img, spec):
    """Add i.i.d. N(0, sigma^2) noise from the documented SplitMix64 stream.

    No clamping is applied; range handling is left to downstream projection
    or to save-time quantization.  Samples are drawn in channel-planar
    row-major order, so the output is reproducible bit for bit from
    (image, spec).
    """
    if spec.sigma == 0.0:
        return ImageTensor.from_planes(img.data.copy(), img.peak)
    stream = SplitMix64(spec.seed)
    noise = stream.gaussian(img.sample_count).reshape(img.data.shape)
    return ImageTensor.from_planes(img.data + spec.sigma * noise, img.peak)


def rgb_to_opponent(img):
    """Transform RGB planes to one luminance plus two chrominance planes."""
    if img.channels != 3:
        raise ValueError("opponent transform requires 3 channels")
    out = np.einsum("ij,jhw->ihw", OPPONENT_MATRIX, img.data)
    return ImageTensor.from_planes(out, img.peak)


def opponent_to_rgb(img):
    """Exact inverse of :func:`rgb_to_opponent`."""
    if img.channels != 3:
        raise ValueError("opponent transform requires 3 channels")
    out = np.einsum("ij,jhw->ihw", OPPONENT_INVERSE, img.data)
    return ImageTensor.from_planes(out, img.peak)


def opponent_box_bounds():
    """Per-channel (lower, upper) bounds of the RGB unit cube in opponent space.

    Computed by mapping the cube's eight corners through the opponent matrix
    and taking the min/max per output channel.
    """
    corners = np.array(
        [[r, g, b] for r in (0.0, 1.0) for g in (0.0, 1.0) for b in (0.0, 1.0)]
    ).T
    mapped = OPPONENT_MATRIX @ corners
    return mapped.min(axis=1), mapped.max(axis=1)
