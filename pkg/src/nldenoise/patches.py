"""Patch extraction/accumulation operators and block matching.

Linear patch indices enumerate interior pixels row-major (r = row*width +
col).  Within a patch, samples are ordered column-major (the patch's first
column top to bottom, then its second column, ...), matching the
column-stacked image vector convention used throughout.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .image import pad_plane, fold_plane


@dataclass(frozen=True)
class PatchGeometry:
    """Patch size, search window and group size; stride is fixed at 1."""

    patch_h: int
    patch_w: int
    window: int
    group_size: int
    stride: int = 1

    def __post_init__(self):
        if self.patch_h < 1 or self.patch_w < 1:
            raise ValueError("patch dimensions must be >= 1")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be odd and >= 1")
        if not 1 <= self.group_size <= self.window**2:
            raise ValueError("group size must lie in [1, window^2]")
        if self.stride != 1:
            raise ValueError("only stride 1 is supported")
        # worst case (image corner) must still offer group_size candidates
        reach = self.window // 2 + 1
        if self.group_size > reach * reach:
            raise ValueError(
                f"group size {self.group_size} exceeds the {reach * reach} "
                f"window candidates available at an image corner"
            )

    @property
    def patch_len(self):
        return self.patch_h * self.patch_w

    @property
    def margins(self):
        """(top, bottom, left, right) padding that makes every pixel a center."""
        mh, mw = self.patch_h // 2, self.patch_w // 2
        return (mh, mh, mw, mw)


@dataclass
class GroupIndexSet:
    """Per-center ordered tuples of similar-patch linear indices.

    ``indices[r, 0] == r`` always; all entries are distinct within a row and
    lie in [0, count).
    """

    count: int
    indices: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.indices.ndim != 2 or self.indices.shape[0] != self.count:
            raise ValueError("indices must have one row per patch center")
        self.validate()

    @property
    def group_size(self):
        return self.indices.shape[1]

    def validate(self):
        idx = self.indices
        if idx.size and (idx.min() < 0 or idx.max() >= self.count):
            raise ValueError("patch index out of range")
        if not np.array_equal(idx[:, 0], np.arange(self.count)):
            raise ValueError("first entry of each tuple must be the reference patch")
        sorted_rows = np.sort(idx, axis=1)
        if (sorted_rows[:, 1:] == sorted_rows[:, :-1]).any():
            raise ValueError("duplicate index within a group")


def extract_patches(plane, geom):
    """All stride-1 patches of a (padded) plane as an (R, P) matrix.

    Row r holds the patch whose top-left corner is interior pixel r of the
    unpadded image, in column-major sample order.  Callers pad with
    ``geom.margins`` first so that R equals the interior pixel count.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise ValueError("extract_patches expects a single-channel plane")
    if plane.shape[0] < geom.patch_h or plane.shape[1] < geom.patch_w:
        raise ValueError("plane smaller than patch")
    win = sliding_window_view(plane, (geom.patch_h, geom.patch_w))
    rows, cols = win.shape[:2]
    # transpose the within-patch axes so the flattened order is column-major
    return win.transpose(0, 1, 3, 2).reshape(rows * cols, geom.patch_len).copy()


def scatter_patches(patches, geom, dims):
    """Scatter-add patch samples back onto a padded canvas.

    Exact adjoint of :func:`extract_patches` for an interior of ``dims``.
    """
    h, w = dims
    patches = np.asarray(patches, dtype=np.float64)
    if patches.shape != (h * w, geom.patch_len):
        raise ValueError(f"patch matrix shape {patches.shape} does not match dims {dims}")
    top, bottom, left, right = geom.margins
    canvas = np.zeros((h + top + bottom, w + left + right))
    for p in range(geom.patch_len):
        a, b = p % geom.patch_h, p // geom.patch_h
        canvas[a : a + h, b : b + w] += patches[:, p].reshape(h, w)
    return canvas


def accumulate_patches(patches, geom, dims):
    """Adjoint of pad-then-extract: scatter-add, then fold mirrored margins.

    Satisfies <extract(pad(x)), q> == <x, accumulate(q)> for all x, q.
    """
    return fold_plane(scatter_patches(patches, geom, dims), geom.margins)


def _box_sums(arr, ph, pw):
    """Sliding-window sums over ph x pw blocks, accumulated in offset order."""
    out = np.zeros((arr.shape[0] - ph + 1, arr.shape[1] - pw + 1))
    for a in range(ph):
        for b in range(pw):
            out += arr[a : a + out.shape[0], b : b + out.shape[1]]
    return out


def block_match(plane, geom):
    """Group each patch with its most similar neighbors inside the window.

    Candidates are the patch centers within the window x window neighborhood
    of each center, clipped at the image border.  Similarity is the squared
    Euclidean distance between raw patch vectors (taken from the
    symmetric-padded plane); each group is the reference index followed by
    the group_size - 1 nearest candidates, ties broken by smaller linear
    index.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise ValueError("block_match expects a single-channel plane")
    h, w = plane.shape
    k = geom.group_size
    if k == 1:
        r = np.arange(h * w, dtype=np.int64)
        return GroupIndexSet(count=h * w, indices=r[:, None])

    padded = pad_plane(plane, geom.margins)
    half = geom.window // 2
    offsets = [
        (di, dj)
        for di in range(-half, half + 1)
        for dj in range(-half, half + 1)
        if (di, dj) != (0, 0)
    ]
    # offsets enumerated row-major keep candidate linear indices increasing,
    # so a stable sort on distance alone realizes the (distance, index) rule
    dist = np.full((h, w, len(offsets)), np.inf)
    cand = np.empty((h, w, len(offsets)), dtype=np.int64)
    base = (np.arange(h)[:, None] * w + np.arange(w)[None, :])[:, :, None]
    for col, (di, dj) in enumerate(offsets):
        r0, r1 = max(0, -di), h - max(0, di)  # valid center rows [r0, r1)
        c0, c1 = max(0, -dj), w - max(0, dj)
        nr, nc = r1 - r0, c1 - c0
        a = padded[r0 : r0 + nr + geom.patch_h - 1, c0 : c0 + nc + geom.patch_w - 1]
        b = padded[
            r0 + di : r0 + di + nr + geom.patch_h - 1,
            c0 + dj : c0 + dj + nc + geom.patch_w - 1,
        ]
        dist[r0:r1, c0:c1, col] = _box_sums((a - b) ** 2, geom.patch_h, geom.patch_w)
        cand[:, :, col] = base[:, :, 0, None].reshape(h, w) + di * w + dj

    order = np.argsort(dist.reshape(h * w, -1), axis=1, kind="stable")[:, : k - 1]
    rows = np.arange(h * w)
    chosen = cand.reshape(h * w, -1)[rows[:, None], order]
    if not np.isfinite(np.take_along_axis(dist.reshape(h * w, -1), order, axis=1)).all():
        raise ValueError("window does not contain enough candidates for the group size")
    indices = np.concatenate([rows[:, None], chosen], axis=1)
    return GroupIndexSet(count=h * w, indices=indices)


def groups_to_csv(groups, fh):
    """Write one "r,i_1,...,i_K" row per patch center (0-based indices)."""
    for r, row in enumerate(groups.indices):
        fh.write(",".join(str(int(v)) for v in [r, *row]) + "\n")
