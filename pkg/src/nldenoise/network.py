"""The unrolled proximal-gradient network: stages, projection, inference.

A stage maps the current iterate z to

    clamp_box( (1 - gamma) * z + gamma * y - L^T psi(L z) )

where L is the non-local operator of :mod:`nonlocal_op` built from the
stage's patch transform and group weights, and psi is the stage's RBF
shrinkage applied per coefficient.  The group index set is computed once
from the noisy input and shared by every stage.

Color images are processed in opponent space: groups come from the
luminance plane only, all channels share each stage's transform and group
weights, and each channel owns its RBF mixture and box bounds.  The three
channel recursions are fully decoupled.
"""

from dataclasses import dataclass, field

import numpy as np

from .image import (
    ImageTensor,
    opponent_box_bounds,
    opponent_to_rgb,
    pad_plane,
    rgb_to_opponent,
)
from .nonlocal_op import (
    GroupWeights,
    PatchTransform,
    dct_transform,
    group_scatter,
    group_sum,
    initial_group_weights,
)
from .patches import PatchGeometry, accumulate_patches, block_match, extract_patches
from .shrinkage import RBFMixture, apply_psi, initial_mixture, make_grid

GRAYSCALE_DELTA = 100.0
COLOR_DELTA = 0.4
DEFAULT_KERNELS = 63
INIT_SLOPE = 0.1
INIT_STEP_WEIGHT = 1.0


@dataclass
class BoxConstraint:
    """Per-channel closed intensity bounds [lower_c, upper_c]."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=np.float64))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=np.float64))
        if self.lower.shape != self.upper.shape:
            raise ValueError("bound shapes differ")
        if not (self.lower < self.upper).all():
            raise ValueError("lower bounds must be strictly below upper bounds")

    @property
    def channels(self):
        return self.lower.size


def grayscale_box():
    return BoxConstraint(lower=np.array([0.0]), upper=np.array([255.0]))


def color_box():
    lower, upper = opponent_box_bounds()
    return BoxConstraint(lower=lower, upper=upper)


@dataclass
class StageParams:
    """One stage's learnables: step weight, transform, group weights, mixture."""

    step_weight: float
    transform: PatchTransform
    group_weights: GroupWeights
    mixture: RBFMixture

    def __post_init__(self):
        if self.mixture.n_coeffs != self.transform.n_coeffs:
            raise ValueError("mixture rows must match transform coefficient count")


@dataclass
class Model:
    """Stages plus shared geometry, channel mode and box constraint."""

    stages: list
    geom: PatchGeometry
    mode: str  # "grayscale" | "color"
    box: BoxConstraint
    sigma_trained: float = 0.0

    def __post_init__(self):
        if self.mode not in ("grayscale", "color"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.stages:
            raise ValueError("model needs at least one stage")
        channels = 1 if self.mode == "grayscale" else 3
        if self.box.channels != channels:
            raise ValueError("box channel count does not match mode")
        for sp in self.stages:
            if sp.mixture.channels != channels:
                raise ValueError("mixture channel count does not match mode")
            if sp.transform.matrix.shape[1] != self.geom.patch_len:
                raise ValueError("transform width does not match patch size")

    @property
    def channels(self):
        return 1 if self.mode == "grayscale" else 3

    @property
    def n_stages(self):
        return len(self.stages)


def build_model(geom, mode, stages, sigma=0.0, kernels=DEFAULT_KERNELS, delta=None, epsilon=None):
    """Model in its documented initial state.

    Transform rows start as the DC-free 2-D DCT basis in zig-zag order,
    group weights as (1, 0, ..., 0), step weights at 1, and every mixture
    as a least-squares fit of a slope-0.1 ramp.
    """
    channels = 1 if mode == "grayscale" else 3
    if delta is None:
        delta = GRAYSCALE_DELTA if mode == "grayscale" else COLOR_DELTA
    grid = make_grid(kernels, delta, epsilon)
    box = grayscale_box() if mode == "grayscale" else color_box()
    stage_list = []
    for _ in range(stages):
        transform = dct_transform(geom.patch_h, geom.patch_w)
        stage_list.append(
            StageParams(
                step_weight=INIT_STEP_WEIGHT,
                transform=transform,
                group_weights=initial_group_weights(geom.group_size),
                mixture=initial_mixture(grid, channels, transform.n_coeffs, INIT_SLOPE),
            )
        )
    return Model(stages=stage_list, geom=geom, mode=mode, box=box, sigma_trained=sigma)


def project_box(img, box):
    """Elementwise clamp of each channel to its box interval."""
    if img.channels != box.channels:
        raise ValueError("channel count does not match box")
    lo = box.lower[:, None, None]
    hi = box.upper[:, None, None]
    return ImageTensor.from_planes(np.clip(img.data, lo, hi), img.peak)


@dataclass
class StageTape:
    """Forward-pass intermediates needed by the analytic backward pass."""

    z: np.ndarray  # stage input plane
    y: np.ndarray  # data-fidelity plane
    u: np.ndarray  # pre-projection plane
    mask: np.ndarray  # 1 where the projection is the identity
    zcoeffs: np.ndarray  # coefficient field of z, one row per pixel
    fcoeffs: np.ndarray  # transformed patches of z, one row per patch
    channel: int


def stage_forward(z, y, sp, groups, geom, bounds, channel=0, want_tape=True):
    """One proximal-gradient stage on an interior plane.

    ``bounds`` is the (lower, upper) pair for this channel; ``channel``
    selects the mixture.  Returns (output plane, StageTape or None).
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError("stage input and data plane must share dimensions")
    h, w = z.shape
    if groups.count != h * w:
        raise ValueError("group index set does not match plane dimensions")
    gamma = sp.step_weight
    patches = extract_patches(pad_plane(z, geom.margins), geom)
    fcoeffs = patches @ sp.transform.matrix.T
    zcoeffs = group_sum(fcoeffs, sp.group_weights, groups)
    shrunk = apply_psi(sp.mixture, channel, zcoeffs)
    back = group_scatter(shrunk, sp.group_weights, groups) @ sp.transform.matrix
    u = (1.0 - gamma) * z + gamma * y - accumulate_patches(back, geom, (h, w))
    lo, hi = bounds
    out = np.clip(u, lo, hi)
    tape = None
    if want_tape:
        mask = ((u >= lo) & (u <= hi)).astype(np.float64)
        tape = StageTape(z=z, y=y, u=u, mask=mask, zcoeffs=zcoeffs, fcoeffs=fcoeffs, channel=channel)
    return out, tape


@dataclass
class NetworkTape:
    """Everything the reverse sweep needs: per-stage tapes and the groups."""

    stage_tapes: list  # stage-major: [stage][channel] -> StageTape
    groups: object
    outputs: np.ndarray  # (channels, h, w) final opponent/grayscale planes


def channel_bounds(box, c):
    return float(box.lower[c]), float(box.upper[c])


def network_forward(model, planes, groups, want_tape=True, init=None):
    """Run all stages on (channels, h, w) planes.

    ``planes`` provides the per-stage data-fidelity term; the initial
    iterate defaults to the same planes (x^0 is the noisy input) but can be
    overridden with ``init``.
    """
    channels = planes.shape[0]
    start = planes if init is None else init
    current = [start[c] for c in range(channels)]
    tapes = []
    for sp in model.stages:
        stage_tapes = []
        for c in range(channels):
            out, tape = stage_forward(
                current[c],
                planes[c],
                sp,
                groups,
                model.geom,
                channel_bounds(model.box, c),
                channel=c,
                want_tape=want_tape,
            )
            current[c] = out
            stage_tapes.append(tape)
        tapes.append(stage_tapes)
    outputs = np.stack(current)
    return NetworkTape(stage_tapes=tapes, groups=groups, outputs=outputs)


def denoise(model, noisy):
    """Denoise a noisy image with a trained model.

    Grayscale: groups are matched once on the noisy plane, then all stages
    run with the noisy plane as both initial iterate and data term.  Color:
    the image moves to opponent space, groups come from the luminance plane
    of the noisy input, each channel runs through all stages, and the
    result returns to RGB.
    """
    expected = 1 if model.mode == "grayscale" else 3
    if noisy.channels != expected:
        raise ValueError(f"model mode {model.mode!r} does not match a {noisy.channels}-channel image")
    if model.mode == "grayscale":
        groups = block_match(noisy.plane(0), model.geom)
        net = network_forward(model, noisy.data, groups, want_tape=False)
        return ImageTensor.from_planes(net.outputs, noisy.peak)
    opponent = rgb_to_opponent(noisy)
    groups = block_match(opponent.plane(0), model.geom)
    net = network_forward(model, opponent.data, groups, want_tape=False)
    return opponent_to_rgb(ImageTensor.from_planes(net.outputs, noisy.peak))
