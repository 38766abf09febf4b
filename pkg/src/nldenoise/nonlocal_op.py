"""Non-local analysis operator and its adjoint.

The forward map takes an interior plane x to one coefficient row per pixel:

    coeffs[r] = sum_k  weights[k] * T @ patch(x, groups[r, k])

where T is the (P-1) x P patch transform (DC direction excluded by
construction) and patches come from the symmetric-padded plane.  The
adjoint reverses the gather: it scatter-adds weights[k] * T^T @ coeffs[r]
into patch slot groups[r, k] and folds the padding back, so the two maps
satisfy the exact inner-product identity <Lx, z> == <x, L^T z>.
"""

from dataclasses import dataclass

import numpy as np

from .image import ImageTensor, pad_plane
from .patches import extract_patches, accumulate_patches


@dataclass
class PatchTransform:
    """Learnable patch transform with one row per DC-free coefficient."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise ValueError("transform must be a matrix")
        rows, cols = self.matrix.shape
        if rows != cols - 1:
            raise ValueError(f"transform must be (P-1) x P, got {self.matrix.shape}")
        if not np.isfinite(self.matrix).all():
            raise ValueError("transform entries must be finite")

    @property
    def n_coeffs(self):
        return self.matrix.shape[0]


@dataclass
class GroupWeights:
    """Per-neighbor scalar weights of the collaborative sum."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("group weights must be a vector")
        if not np.isfinite(self.values).all():
            raise ValueError("group weights must be finite")


def _zigzag(ph, pw):
    """(u, v) frequency pairs by anti-diagonal, JPEG traversal order."""
    pairs = []
    for d in range(ph + pw - 1):
        diag = [(u, d - u) for u in range(ph) if 0 <= d - u < pw]
        pairs.extend(diag if d % 2 else diag[::-1])
    return pairs


def dct_transform(ph, pw):
    """Orthonormal 2-D DCT-II rows for a ph x pw patch, DC removed.

    Rows are ordered by zig-zag frequency; columns follow the column-major
    patch sample order.
    """

    def basis_1d(n, u):
        scale = np.sqrt(1.0 / n) if u == 0 else np.sqrt(2.0 / n)
        return scale * np.cos(np.pi * (2 * np.arange(n) + 1) * u / (2 * n))

    rows = []
    for u, v in _zigzag(ph, pw):
        if (u, v) == (0, 0):
            continue
        kernel = np.outer(basis_1d(ph, u), basis_1d(pw, v))
        rows.append(kernel.reshape(-1, order="F"))
    return PatchTransform(np.array(rows))


def initial_group_weights(k):
    """Start as a purely local model: unit weight on the reference patch."""
    values = np.zeros(k)
    values[0] = 1.0
    return GroupWeights(values)


def group_sum(rows, weights, groups):
    """Weighted gather sum_k w_k rows[groups[:, k]] over an (R, .) matrix."""
    out = weights.values[0] * rows[groups.indices[:, 0]]
    for k in range(1, groups.group_size):
        out += weights.values[k] * rows[groups.indices[:, k]]
    return out


def group_scatter(rows, weights, groups):
    """Adjoint of :func:`group_sum`: scatter-add w_k rows into slot groups[:, k]."""
    out = np.zeros_like(rows)
    for k in range(groups.group_size):
        np.add.at(out, groups.indices[:, k], weights.values[k] * rows)
    return out


def _as_plane(img):
    if isinstance(img, ImageTensor):
        if img.channels != 1:
            raise ValueError("expected a single-channel image")
        return img.plane(0)
    plane = np.asarray(img, dtype=np.float64)
    if plane.ndim != 2:
        raise ValueError("expected a single-channel image")
    return plane


def nl_forward(img, transform, weights, groups, geom):
    """Coefficient field of the non-local operator applied to an image.

    Accepts a single-channel :class:`ImageTensor` or a bare 2-D plane and
    returns the (R, P-1) coefficient matrix.
    """
    plane = _as_plane(img)
    h, w = plane.shape
    if groups.count != h * w:
        raise ValueError("group index set does not match plane dimensions")
    if groups.group_size != weights.values.shape[0]:
        raise ValueError("group size does not match weight count")
    if transform.matrix.shape[1] != geom.patch_len:
        raise ValueError("transform width does not match patch length")
    patches = extract_patches(pad_plane(plane, geom.margins), geom)
    return group_sum(patches, weights, groups) @ transform.matrix.T


def nl_adjoint(coeffs, transform, weights, groups, geom, dims):
    """Adjoint of :func:`nl_forward`, returning an interior plane of ``dims``."""
    h, w = dims
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (h * w, transform.n_coeffs):
        raise ValueError("coefficient field shape does not match dims/transform")
    if groups.count != h * w:
        raise ValueError("group index set does not match dims")
    gathered = group_scatter(coeffs, weights, groups)
    return accumulate_patches(gathered @ transform.matrix, geom, dims)
