"""Training loss, analytic gradients, schedules and the gradient checker.

The loss is the negative PSNR of the stage (or network) output against the
clean image.  All parameter gradients are computed in closed form from the
stage tape; writing e for the projection-masked upstream gradient,
E_r = L_r e for the coefficient field of e, zb_r / eb_r for the
group-weighted raw patches of the stage input z and of e, and psi / psi'
for the shrinkage and its derivative evaluated on the coefficients of z:

    d/d_step   =  <y - z, e>
    d/d_coeffs[i, j] = -sum_r kernel_j(coeffs_z[r, i]) * E[r, i]
    d/d_weight[k] = -sum_r ( <psi_z[r], Fe[g(r,k)]> + <Fz[g(r,k)], psi'_z[r] * E[r]> )
    d/d_row[i] = -sum_r ( psi_i(z_r_i) * eb_r + psi'_i(z_r_i) * E[r, i] * zb_r )
    d/d_input  =  (1 - step) * e - L^T( psi'_z * E )

Gradients with respect to the transform rows follow from differentiating
<u, e> directly; note the last factor couples E[r, i] with zb_r (the
outer-product orientation matters and is pinned by the finite-difference
suite).  Joint training chains stages through d/d_input.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .image import (
    ImageTensor,
    InfinitePSNRError,
    OPPONENT_INVERSE,
    load_image,
    pad_plane,
    psnr,
    rgb_to_opponent,
)
from .lbfgs import lbfgs_minimize
from .network import (
    DEFAULT_KERNELS,
    Model,
    NetworkTape,
    StageParams,
    StageTape,
    build_model,
    channel_bounds,
    network_forward,
    stage_forward,
)
from .nonlocal_op import GroupWeights, PatchTransform, group_scatter, group_sum
from .patches import PatchGeometry, accumulate_patches, block_match, extract_patches
from .rng import SplitMix64
from .shrinkage import RBFMixture, mixture_backward

LOG_FACTOR = 20.0 / np.log(10.0)
GRADCHECK_CLASSES = ("gamma", "pi", "w", "F", "input")
GRADCHECK_TOL = 1e-5


class TrainingError(ValueError):
    """Configuration or data problems detected before optimization starts."""


def neg_psnr(yhat, x, peak):
    """Negative PSNR of two same-shape arrays; the training loss."""
    yhat = np.asarray(yhat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if yhat.shape != x.shape:
        raise ValueError("loss operands must share a shape")
    err = np.linalg.norm((yhat - x).ravel())
    if err == 0.0:
        raise InfinitePSNRError("zero reconstruction error; loss is -infinity")
    return -20.0 * np.log10(peak * np.sqrt(yhat.size) / err)


def loss(yhat, x):
    """Negative PSNR of two ImageTensors."""
    return -psnr(yhat, x)


def loss_grad(yhat, x, peak=None):
    """Gradient of :func:`neg_psnr` with respect to yhat.

    Closed form (20 / ln 10) * (yhat - x) / ||yhat - x||^2; satisfies
    <grad, yhat - x> == 20 / ln 10 exactly.
    """
    if isinstance(yhat, ImageTensor):
        yhat, x = yhat.data, x.data
    yhat = np.asarray(yhat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    diff = yhat - x
    sq = float(np.dot(diff.ravel(), diff.ravel()))
    if sq == 0.0:
        raise InfinitePSNRError("zero reconstruction error; gradient undefined")
    return LOG_FACTOR * diff / sq


@dataclass
class StageGrads:
    """Gradient blocks of one stage; shapes mirror the stage parameters."""

    d_step_weight: float
    d_transform: np.ndarray
    d_group_weights: np.ndarray
    d_rbf_coeffs: np.ndarray
    d_input: np.ndarray

    def add_(self, other):
        self.d_step_weight += other.d_step_weight
        self.d_transform += other.d_transform
        self.d_group_weights += other.d_group_weights
        self.d_rbf_coeffs += other.d_rbf_coeffs
        return self


def stage_backward(tape, upstream, sp, groups, geom):
    """All gradient blocks of one stage from its tape and upstream gradient."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != tape.z.shape:
        raise ValueError("upstream gradient shape does not match the stage")
    if tape.zcoeffs.shape != (groups.count, sp.transform.n_coeffs):
        raise ValueError("tape does not match the stage parameters")
    h, w = tape.z.shape
    grid = sp.mixture.grid
    pi_c = sp.mixture.coeffs[tape.channel]

    e = tape.mask * upstream
    e_patches = extract_patches(pad_plane(e, geom.margins), geom)
    fe = e_patches @ sp.transform.matrix.T
    eb = group_sum(e_patches, sp.group_weights, groups)
    ecoeffs = eb @ sp.transform.matrix.T
    z_patches = extract_patches(pad_plane(tape.z, geom.margins), geom)
    zb = group_sum(z_patches, sp.group_weights, groups)

    # one kernel pass yields psi, psi' and the mixture gradient
    psi_z, dpsi_z, d_pi_c = mixture_backward(grid, pi_c, tape.zcoeffs, -ecoeffs)

    d_step = float(np.dot((tape.y - tape.z).ravel(), e.ravel()))
    d_pi = np.zeros_like(sp.mixture.coeffs)
    d_pi[tape.channel] = d_pi_c
    weighted = dpsi_z * ecoeffs
    k = groups.group_size
    d_w = np.empty(k)
    for j in range(k):
        rows = groups.indices[:, j]
        d_w[j] = -(np.sum(psi_z * fe[rows]) + np.sum(tape.fcoeffs[rows] * weighted))
    d_f = -(psi_z.T @ eb + weighted.T @ zb)
    back = group_scatter(weighted, sp.group_weights, groups) @ sp.transform.matrix
    d_input = (1.0 - sp.step_weight) * e - accumulate_patches(back, geom, (h, w))
    return StageGrads(
        d_step_weight=d_step,
        d_transform=d_f,
        d_group_weights=d_w,
        d_rbf_coeffs=d_pi,
        d_input=d_input,
    )


def _zero_grads(sp, shape):
    return StageGrads(
        d_step_weight=0.0,
        d_transform=np.zeros_like(sp.transform.matrix),
        d_group_weights=np.zeros_like(sp.group_weights.values),
        d_rbf_coeffs=np.zeros_like(sp.mixture.coeffs),
        d_input=np.zeros(shape),
    )


def output_loss_and_seed(outputs, sample, mode):
    """Loss of network outputs against the clean target plus its gradient.

    For color the outputs live in opponent space; the loss is evaluated on
    the reconstructed RGB image and the gradient is pulled back through the
    linear inverse transform.
    """
    if mode == "grayscale":
        value = neg_psnr(outputs[0], sample.clean.plane(0), sample.clean.peak)
        seed = loss_grad(outputs[0], sample.clean.plane(0))[None]
    else:
        rgb = np.einsum("ij,jhw->ihw", OPPONENT_INVERSE, outputs)
        value = neg_psnr(rgb, sample.clean.data, sample.clean.peak)
        g_rgb = loss_grad(rgb, sample.clean.data)
        seed = np.einsum("ji,jhw->ihw", OPPONENT_INVERSE, g_rgb)
    return value, seed


def network_backward(net_tape, sample, model, upstream=None):
    """Reverse sweep over all stages; returns one aggregated StageGrads per stage.

    The sweep seeds with the loss gradient at the final output (or a caller
    supplied ``upstream`` field of per-channel planes) and chains stages
    through the input-gradient block.  ``d_input`` of entry t holds the
    per-channel gradient with respect to that stage's input, so entry 0
    carries the gradient with respect to the network input.
    """
    if len(net_tape.stage_tapes) != model.n_stages:
        raise ValueError("tape count does not match the model")
    channels = model.channels
    if upstream is None:
        _, upstream = output_loss_and_seed(net_tape.outputs, sample, model.mode)
    per_stage = []
    current = [upstream[c] for c in range(channels)]
    for t in range(model.n_stages - 1, -1, -1):
        sp = model.stages[t]
        agg = _zero_grads(sp, (channels,) + current[0].shape)
        nxt = []
        for c in range(channels):
            sg = stage_backward(net_tape.stage_tapes[t][c], current[c], sp, net_tape.groups, model.geom)
            agg.add_(sg)
            agg.d_input[c] = sg.d_input
            nxt.append(sg.d_input)
        current = nxt
        per_stage.append(agg)
    per_stage.reverse()
    return per_stage


# ---------------------------------------------------------------------------
# parameter vector layout: per stage (step, transform row-major, weights,
# mixture coefficients channel-major then coefficient then kernel)

def flatten_stage(sp):
    return np.concatenate(
        [
            [sp.step_weight],
            sp.transform.matrix.ravel(),
            sp.group_weights.values,
            sp.mixture.coeffs.ravel(),
        ]
    )


def flatten_grads(sg):
    return np.concatenate(
        [
            [sg.d_step_weight],
            sg.d_transform.ravel(),
            sg.d_group_weights,
            sg.d_rbf_coeffs.ravel(),
        ]
    )


def stage_size(geom, channels, kernels):
    p = geom.patch_len
    return 1 + (p - 1) * p + geom.group_size + channels * (p - 1) * kernels


def unflatten_stage(vec, geom, channels, grid):
    p = geom.patch_len
    n_f = (p - 1) * p
    k = geom.group_size
    pos = 0
    step = float(vec[pos])
    pos += 1
    matrix = vec[pos : pos + n_f].reshape(p - 1, p)
    pos += n_f
    weights = vec[pos : pos + k]
    pos += k
    coeffs = vec[pos:].reshape(channels, p - 1, grid.size)
    return StageParams(
        step_weight=step,
        transform=PatchTransform(matrix.copy()),
        group_weights=GroupWeights(weights.copy()),
        mixture=RBFMixture(grid=grid, coeffs=coeffs.copy()),
    )


def flatten_model(model):
    return np.concatenate([flatten_stage(sp) for sp in model.stages])


def unflatten_model(vec, model):
    size = stage_size(model.geom, model.channels, model.stages[0].mixture.grid.size)
    grid = model.stages[0].mixture.grid
    stages = [
        unflatten_stage(vec[t * size : (t + 1) * size], model.geom, model.channels, grid)
        for t in range(model.n_stages)
    ]
    return replace(model, stages=stages)


# ---------------------------------------------------------------------------
# training corpus

@dataclass
class TrainConfig:
    """Everything a training run needs; all randomness derives from ``seed``."""

    clean_dir: str
    sigma: float
    mode: str = "grayscale"
    crop_size: int = 64
    pairs: int = 8
    seed: int = 0
    stages: int = 1
    patch_size: int = 5
    group_size: int = 8
    window: int = 17
    greedy_iters: int = 100
    joint_iters: int = 400
    rbf_kernels: int = 63
    rbf_delta: float = None
    rbf_epsilon: float = None
    lbfgs_history: int = 10

    def __post_init__(self):
        if self.pairs < 1 or self.crop_size < 1 or self.stages < 1:
            raise TrainingError("pairs, crop_size and stages must be positive")
        if self.sigma < 0:
            raise TrainingError("sigma must be non-negative")
        if self.mode not in ("grayscale", "color"):
            raise TrainingError(f"unknown mode {self.mode!r}")
        if self.crop_size < self.patch_size + self.window // 2:
            raise TrainingError("crop_size too small for the patch and search window")

    def geometry(self):
        return PatchGeometry(
            patch_h=self.patch_size,
            patch_w=self.patch_size,
            window=self.window,
            group_size=self.group_size,
        )


@dataclass
class TrainSample:
    """One training pair plus its precomputed groups and network input."""

    clean: ImageTensor
    noisy: ImageTensor
    groups: object
    inputs: np.ndarray  # (channels, h, w) planes fed to the network


def make_sample(clean, noisy, geom, mode):
    """Groups from the noisy input (luminance plane for color) plus planes."""
    if mode == "grayscale":
        inputs = noisy.data
        groups = block_match(noisy.plane(0), geom)
    else:
        opponent = rgb_to_opponent(noisy)
        inputs = opponent.data
        groups = block_match(opponent.plane(0), geom)
    return TrainSample(clean=clean, noisy=noisy, groups=groups, inputs=inputs)


def build_training_pairs(cfg, hold_out=0):
    """Deterministic crops plus seeded noise from the clean-image directory.

    Files are visited in sorted order, round-robin when more pairs than
    files are requested; crop offsets and per-pair noise seeds come from
    one SplitMix64 stream over ``cfg.seed``.  Pairs whose noisy image
    equals the clean crop are rejected.  ``hold_out`` extra pairs are
    generated after the training pairs and returned separately.
    """
    import os

    from .image import NoiseSpec, add_gaussian_noise

    suffix = ".pgm" if cfg.mode == "grayscale" else ".ppm"
    try:
        names = sorted(n for n in os.listdir(cfg.clean_dir) if n.lower().endswith(suffix))
    except OSError as exc:
        raise TrainingError(f"cannot read clean directory {cfg.clean_dir}: {exc}") from exc
    if not names:
        raise TrainingError(f"no {suffix} images in {cfg.clean_dir}")
    geom = cfg.geometry()
    stream = SplitMix64(cfg.seed)
    samples = []
    for q in range(cfg.pairs + hold_out):
        img = load_image(os.path.join(cfg.clean_dir, names[q % len(names)]))
        if img.height < cfg.crop_size or img.width < cfg.crop_size:
            raise TrainingError(
                f"{names[q % len(names)]} is smaller than the {cfg.crop_size} crop"
            )
        top = int(stream.integers(0, img.height - cfg.crop_size + 1, 1)[0])
        left = int(stream.integers(0, img.width - cfg.crop_size + 1, 1)[0])
        noise_seed = int(stream.next_uint64(1)[0])
        crop = ImageTensor.from_planes(
            img.data[:, top : top + cfg.crop_size, left : left + cfg.crop_size].copy(),
            img.peak,
        )
        sigma = cfg.sigma if cfg.mode == "grayscale" else cfg.sigma / 255.0
        noisy = add_gaussian_noise(crop, NoiseSpec(sigma=sigma, seed=noise_seed))
        if np.array_equal(noisy.data, crop.data):
            raise TrainingError(
                f"pair {q} ({names[q % len(names)]}) has zero noise; "
                "its loss would be infinite"
            )
        samples.append(make_sample(crop, noisy, geom, cfg.mode))
    return samples[: cfg.pairs], samples[cfg.pairs :]


def _config_model(cfg):
    return build_model(
        cfg.geometry(),
        cfg.mode,
        cfg.stages,
        sigma=cfg.sigma,
        kernels=cfg.rbf_kernels,
        delta=cfg.rbf_delta,
        epsilon=cfg.rbf_epsilon,
    )


# ---------------------------------------------------------------------------
# objectives

def _stage_objective(theta, samples, currents, model):
    """Sum of stage losses and gradients over the corpus, inputs held fixed."""
    sp = unflatten_stage(theta, model.geom, model.channels, model.stages[0].mixture.grid)
    channels = model.channels
    total = 0.0
    acc = None
    for sample, current in zip(samples, currents):
        outs = np.empty_like(current)
        tapes = []
        for c in range(channels):
            outs[c], tape = stage_forward(
                current[c],
                sample.inputs[c],
                sp,
                sample.groups,
                model.geom,
                channel_bounds(model.box, c),
                channel=c,
            )
            tapes.append(tape)
        value, seed = output_loss_and_seed(outs, sample, model.mode)
        total += value
        for c in range(channels):
            sg = stage_backward(tapes[c], seed[c], sp, sample.groups, model.geom)
            acc = sg if acc is None else acc.add_(sg)
    return total, flatten_grads(acc)


def _network_objective(theta, samples, model):
    """Joint loss and gradients of the full unrolled network over the corpus."""
    trial = unflatten_model(theta, model)
    total = 0.0
    acc = None
    for sample in samples:
        net = network_forward(trial, sample.inputs, sample.groups)
        value, _ = output_loss_and_seed(net.outputs, sample, trial.mode)
        total += value
        grads = network_backward(net, sample, trial)
        flat = np.concatenate([flatten_grads(sg) for sg in grads])
        acc = flat if acc is None else acc + flat
    return total, acc


def greedy_train(cfg, log=None, samples=None):
    """Train each stage independently on the previous stage's outputs.

    Stage t starts from the documented initialization and minimizes the
    corpus loss of its own output for ``cfg.greedy_iters`` L-BFGS
    iterations while stages before it stay frozen.
    """
    if samples is None:
        samples, _ = build_training_pairs(cfg)
    model = _config_model(cfg)
    currents = [sample.inputs.copy() for sample in samples]
    for t in range(cfg.stages):
        theta0 = flatten_stage(model.stages[t])
        callback = _log_callback(log, f"greedy{t + 1}")
        theta = lbfgs_minimize(
            lambda v: _stage_objective(v, samples, currents, model),
            theta0,
            cfg.greedy_iters,
            history=cfg.lbfgs_history,
            callback=callback,
        )
        model.stages[t] = unflatten_stage(theta, model.geom, model.channels, model.stages[0].mixture.grid)
        for sample, current in zip(samples, currents):
            for c in range(model.channels):
                current[c], _ = stage_forward(
                    current[c],
                    sample.inputs[c],
                    model.stages[t],
                    sample.groups,
                    model.geom,
                    channel_bounds(model.box, c),
                    channel=c,
                    want_tape=False,
                )
    return model


def joint_train(model, cfg, log=None, samples=None):
    """Refine all stages together on the final-output loss."""
    if samples is None:
        samples, _ = build_training_pairs(cfg)
    theta0 = flatten_model(model)
    theta = lbfgs_minimize(
        lambda v: _network_objective(v, samples, model),
        theta0,
        cfg.joint_iters,
        history=cfg.lbfgs_history,
        callback=_log_callback(log, "joint"),
    )
    return unflatten_model(theta, model)


def _log_callback(log, phase):
    if log is None:
        return None

    def callback(iteration, value, gnorm, step):
        if iteration == 1:
            log.write(f"# {phase}\n")
        log.write(f"{iteration},{value!r},{gnorm!r},{step!r}\n")

    return callback


def corpus_psnr(model, samples):
    """Mean PSNR of the model's outputs over a list of samples."""
    from .network import denoise

    values = [psnr(denoise(model, s.noisy), s.clean) for s in samples]
    return float(np.mean(values))


def noisy_psnr(samples):
    return float(np.mean([psnr(s.noisy, s.clean) for s in samples]))


# ---------------------------------------------------------------------------
# finite-difference gradient checking

@dataclass
class GradcheckReport:
    """Per-class worst relative errors over all checked configurations."""

    errors: dict
    tolerance: float = GRADCHECK_TOL

    @property
    def passed(self):
        return all(v <= self.tolerance for v in self.errors.values())

    def __str__(self):
        lines = ["class,max_rel_error,tolerance,status"]
        for name in GRADCHECK_CLASSES:
            err = self.errors[name]
            status = "pass" if err <= self.tolerance else "FAIL"
            lines.append(f"{name},{err:.6e},{self.tolerance:.0e},{status}")
        lines.append(f"overall,{'pass' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def _smooth_field(stream, h, w, lo, hi, coarse=6):
    """Bilinearly upsampled coarse random grid; a crude natural-image stand-in."""
    grid = lo + (hi - lo) * stream.uniform(coarse * coarse).reshape(coarse, coarse)

    def interp_axis(a, n):
        xi = np.linspace(0, a.shape[0] - 1, n)
        i0 = np.clip(np.floor(xi).astype(int), 0, a.shape[0] - 2)
        t = xi - i0
        return a[i0] * (1 - t)[:, None] + a[i0 + 1] * t[:, None]

    return interp_axis(interp_axis(grid, h).T, w).T


def _gradcheck_instance(mode, stages, seed, size=24):
    """A seeded random model/sample pair built for tight FD agreement.

    Central differences at the pinned 1e-4 step are limited by the loss
    curvature, so the instance keeps it low without deactivating any
    gradient term:

    * smooth (bilinear) test images keep transform coefficients small;
    * the mixture span is widened and the kernels overlap 1.5x more than
      the training default, which suppresses the micro-ripples of the
      Gaussian comb that otherwise dominate the third derivative;
    * mild seeded mixture wiggles keep the shrinkage genuinely nonlinear.

    The box projection has a kink at its bounds and a 1e-4 parameter step
    moves pre-projection values by up to ~2.5e-5 of the data range, so
    instances with any pre-projection value closer than 2.5e-4 of the
    range to a bound are regenerated with the next seed.
    """
    geom = PatchGeometry(patch_h=5, patch_w=5, window=7, group_size=4)
    scale = 1.0 if mode == "color" else 255.0
    delta = 250.0 if mode == "grayscale" else 1.0
    spacing = 2.0 * delta / (DEFAULT_KERNELS - 1)
    epsilon = np.log(2.0) / (1.5 * spacing) ** 2
    bump = 0.02 * scale / 255.0
    from .image import NoiseSpec, add_gaussian_noise

    for attempt in range(30):
        stream = SplitMix64(seed + attempt)
        model = build_model(geom, mode, stages, delta=delta, epsilon=epsilon)
        for sp in model.stages:
            sp.step_weight = 0.9 + 0.05 * float(stream.uniform(1)[0])
            sp.transform.matrix += 0.05 * stream.gaussian(sp.transform.matrix.size).reshape(
                sp.transform.matrix.shape
            )
            w = np.zeros(geom.group_size)
            w[0] = 1.0
            w += 0.1 * stream.gaussian(geom.group_size)
            sp.group_weights = GroupWeights(w)
            sp.mixture.coeffs += bump * stream.gaussian(sp.mixture.coeffs.size).reshape(
                sp.mixture.coeffs.shape
            )
        channels = model.channels
        clean_data = np.stack(
            [_smooth_field(stream, size, size, 0.0, scale) for _ in range(channels)]
        )
        clean = ImageTensor.from_planes(clean_data, scale if mode == "grayscale" else 1.0)
        noisy = add_gaussian_noise(clean, NoiseSpec(sigma=scale * 25.0 / 255.0, seed=seed + attempt))
        sample = make_sample(clean, noisy, geom, mode)
        net = network_forward(model, sample.inputs, sample.groups)
        margin = np.inf
        for stage_tapes in net.stage_tapes:
            for c, tape in enumerate(stage_tapes):
                b_lo, b_hi = channel_bounds(model.box, c)
                margin = min(
                    margin,
                    float(np.abs(tape.u - b_lo).min()),
                    float(np.abs(tape.u - b_hi).min()),
                )
        if margin > max(1e-3, 2.5e-4 * scale):
            return model, sample
    raise RuntimeError("could not build a projection-safe gradcheck instance")


def _fd_pair(fun, theta, i):
    h = 1e-4 * max(1.0, abs(float(theta[i])))
    bumped = theta.copy()
    bumped[i] = theta[i] + h
    f_plus = fun(bumped)
    bumped[i] = theta[i] - h
    f_minus = fun(bumped)
    return (f_plus - f_minus) / (2.0 * h)


def _rel_err(analytic, numeric, floor=1e-5):
    """Relative error with a floor just above the FD roundoff scale.

    Central differences of a ~20 dB loss at step 1e-4 carry ~1e-11 of
    absolute roundoff, so components whose true magnitude sits below the
    floor are effectively held to a 1e-10 absolute agreement instead of a
    meaningless ratio of noise terms.
    """
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradcheck(seed=0, samples_per_class=36, corrupt=None):
    """Central-difference verification of every analytic gradient class.

    Runs single- and two-stage instances in both channel modes on 24 x 24
    images (5 x 5 patches, group size 4).  Step-weight and group-weight
    entries are checked exhaustively; the transform, mixture and input
    classes are checked on ``samples_per_class`` seeded component choices
    per configuration, with per-component steps 1e-4 * max(1, |theta|).
    ``corrupt`` names a class whose analytic gradient is scaled by 1.1
    before comparison (a harness-sensitivity hook used by the tests).
    """
    errors = {name: 0.0 for name in GRADCHECK_CLASSES}
    for mode in ("grayscale", "color"):
        for stages in (1, 2):
            inst_seed = seed * 7919 + stages * 101 + (0 if mode == "grayscale" else 1)
            model, sample = _gradcheck_instance(mode, stages, inst_seed)
            theta0 = flatten_model(model)

            def param_loss(vec):
                trial = unflatten_model(vec, model)
                net = network_forward(trial, sample.inputs, sample.groups, want_tape=False)
                value, _ = output_loss_and_seed(net.outputs, sample, mode)
                return value

            net = network_forward(model, sample.inputs, sample.groups)
            grads = network_backward(net, sample, model)
            analytic = np.concatenate([flatten_grads(sg) for sg in grads])
            scale_factor = 1.1 if corrupt else 1.0

            size = stage_size(model.geom, model.channels, model.stages[0].mixture.grid.size)
            p = model.geom.patch_len
            n_f = (p - 1) * p
            k = model.geom.group_size
            picker = SplitMix64(inst_seed + 17)
            targets = {"gamma": [], "w": [], "F": [], "pi": []}
            for t in range(stages):
                base = t * size
                targets["gamma"].append(base)
                targets["w"].extend(base + 1 + n_f + j for j in range(k))
                f_picks = picker.integers(0, n_f, samples_per_class // stages + 1)
                targets["F"].extend(base + 1 + int(j) for j in f_picks)
                pi_len = size - 1 - n_f - k
                pi_picks = picker.integers(0, pi_len, samples_per_class // stages + 1)
                targets["pi"].extend(base + 1 + n_f + k + int(j) for j in pi_picks)
            for name, idxs in targets.items():
                factor = scale_factor if corrupt == name else 1.0
                for i in sorted(set(idxs)):
                    numeric = _fd_pair(param_loss, theta0, i)
                    err = _rel_err(factor * analytic[i], numeric)
                    errors[name] = max(errors[name], err)

            # input class: perturb the initial iterate only, data planes fixed,
            # so the finite differences isolate the recursion Jacobian
            flat_input = sample.inputs.ravel()

            def input_loss(vec):
                trial_net = network_forward(
                    model,
                    sample.inputs,
                    sample.groups,
                    want_tape=False,
                    init=vec.reshape(sample.inputs.shape),
                )
                value, _ = output_loss_and_seed(trial_net.outputs, sample, mode)
                return value

            input_grad = grads[0].d_input.ravel()
            factor = scale_factor if corrupt == "input" else 1.0
            picks = picker.integers(0, flat_input.size, samples_per_class)
            for i in sorted(set(int(v) for v in picks)):
                numeric = _fd_pair(input_loss, flat_input, i)
                err = _rel_err(factor * input_grad[i], numeric)
                errors["input"] = max(errors["input"], err)
    return GradcheckReport(errors=errors)
