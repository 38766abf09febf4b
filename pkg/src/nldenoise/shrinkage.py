"""Gaussian RBF mixtures for the per-coefficient shrinkage functions.

Each transform coefficient i of each channel owns a function

    psi_i(x) = sum_j coeffs[i, j] * exp(-eps * (x - mu_j)^2)

with shared precision eps and equidistant centers mu_j spanning
[-delta, delta].  The closed-form derivative is

    psi_i'(x) = -2 * eps * sum_j coeffs[i, j] * (x - mu_j) * exp(-eps * (x - mu_j)^2).

Inputs outside [-delta, delta] are evaluated as-is; the Gaussians decay
naturally and no clamping is applied.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RBFGrid:
    """Equidistant Gaussian kernel centers on [-delta, delta] with shared precision."""

    centers: np.ndarray
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "centers", np.asarray(self.centers, dtype=np.float64))
        if self.centers.ndim != 1 or self.centers.size < 2:
            raise ValueError("need at least two kernel centers")
        gaps = np.diff(self.centers)
        if (gaps <= 0).any():
            raise ValueError("centers must be strictly increasing")
        if np.abs(gaps - gaps[0]).max() > 1e-12 * max(1.0, abs(gaps[0])):
            raise ValueError("centers must be equispaced")
        if not self.epsilon > 0:
            raise ValueError("precision must be positive")

    @property
    def size(self):
        return self.centers.size

    @property
    def span(self):
        return float(self.centers[-1])


def make_grid(kernels, delta, epsilon=None):
    """Build an RBFGrid; default precision makes neighbors overlap at half height."""
    if kernels < 2:
        raise ValueError("need at least two kernels")
    centers = np.linspace(-delta, delta, kernels)
    if epsilon is None:
        spacing = 2.0 * delta / (kernels - 1)
        epsilon = np.log(2.0) / spacing**2
    return RBFGrid(centers=centers, epsilon=float(epsilon))


@dataclass
class RBFMixture:
    """Expansion coefficients, one row of kernel weights per (channel, coefficient)."""

    grid: RBFGrid
    coeffs: np.ndarray  # (channels, n_coeffs, kernels)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.ndim != 3:
            raise ValueError("coeffs must have shape (channels, n_coeffs, kernels)")
        if self.coeffs.shape[0] not in (1, 3):
            raise ValueError("channel count must be 1 or 3")
        if self.coeffs.shape[2] != self.grid.size:
            raise ValueError("kernel axis does not match grid size")
        if not np.isfinite(self.coeffs).all():
            raise ValueError("coefficients must be finite")

    @property
    def channels(self):
        return self.coeffs.shape[0]

    @property
    def n_coeffs(self):
        return self.coeffs.shape[1]


def kernel_matrix(grid, x):
    """exp(-eps (x - mu_j)^2) for every sample/center pair; shape x.shape + (M,)."""
    x = np.asarray(x, dtype=np.float64)
    d = x[..., None] - grid.centers
    return np.exp(-grid.epsilon * d * d)


def kernel_halfwidth(grid):
    """Kernel-index reach beyond which Gaussians are numerically negligible.

    Six standard deviations of the kernel, measured in center spacings,
    bounds the dropped mass by exp(-36) per kernel, far below the 1e-12
    tolerances used anywhere in the package.
    """
    spacing = float(grid.centers[1] - grid.centers[0])
    sigma = 1.0 / np.sqrt(2.0 * grid.epsilon)
    return int(np.ceil(6.0 * sigma / spacing)) + 1


def _mixture_pass(grid, coeffs_c, field, cotangent=None, want_deriv=False):
    """One pass over the kernels for a whole (R, n_coeffs) field.

    Returns (psi, dpsi, d_coeffs); dpsi is None unless ``want_deriv`` and
    d_coeffs is None unless a ``cotangent`` field is given, in which case
    d_coeffs[i, j] = sum_r kernel_j(field[r, i]) * cotangent[r, i].

    Kernels farther than :func:`kernel_halfwidth` spacings from a field
    entry are skipped (their value is below exp(-36)); the loop runs over
    window offsets so only field-sized scratch arrays are touched, which
    keeps the pass allocation-friendly for large fields.
    """
    m = grid.size
    hw = kernel_halfwidth(grid)
    c0 = float(grid.centers[0])
    spacing = float(grid.centers[1] - grid.centers[0])
    n_coeffs = field.shape[1]
    psi = np.zeros_like(field)
    dpsi = np.zeros_like(field) if want_deriv else None
    d_coeffs = np.zeros(n_coeffs * m) if cotangent is not None else None
    scratch = np.empty_like(field)

    if 2 * hw + 1 >= m:
        for j in range(m):
            d = field - float(grid.centers[j])
            np.multiply(d, d, out=scratch)
            scratch *= -grid.epsilon
            phi = np.exp(scratch, out=scratch)
            weighted = phi * coeffs_c[:, j]
            psi += weighted
            if want_deriv:
                dpsi += d * weighted
            if cotangent is not None:
                d_coeffs[j::m] = (phi * cotangent).sum(axis=0)
    else:
        base = np.clip(
            np.rint((field - c0) / spacing).astype(np.int64), hw, m - 1 - hw
        )
        frac = field - c0 - base * spacing
        cols = np.broadcast_to(np.arange(n_coeffs), field.shape)
        flat_base = cols * m + base if cotangent is not None else None
        for o in range(-hw, hw + 1):
            d = frac - o * spacing
            np.multiply(d, d, out=scratch)
            scratch *= -grid.epsilon
            phi = np.exp(scratch, out=scratch)
            gathered = coeffs_c[cols, base + o]
            psi += phi * gathered
            if want_deriv:
                dpsi += (d * phi) * gathered
            if cotangent is not None:
                d_coeffs += np.bincount(
                    (flat_base + o).ravel(),
                    weights=(phi * cotangent).ravel(),
                    minlength=n_coeffs * m,
                )
    if want_deriv:
        dpsi *= -2.0 * grid.epsilon
    if cotangent is not None:
        d_coeffs = d_coeffs.reshape(n_coeffs, m)
    return psi, dpsi, d_coeffs


def rbf_eval(mix, channel, coeff, x):
    """Evaluate mixture (channel, coeff) at x (scalar or array)."""
    _check_index(mix, channel, coeff)
    return kernel_matrix(mix.grid, x) @ mix.coeffs[channel, coeff]


def rbf_deriv(mix, channel, coeff, x):
    """Closed-form derivative of :func:`rbf_eval` with respect to x."""
    _check_index(mix, channel, coeff)
    x = np.asarray(x, dtype=np.float64)
    d = x[..., None] - mix.grid.centers
    phi = np.exp(-mix.grid.epsilon * d * d)
    return -2.0 * mix.grid.epsilon * ((d * phi) @ mix.coeffs[channel, coeff])


def _check_index(mix, channel, coeff):
    if not 0 <= channel < mix.channels:
        raise ValueError(f"channel {channel} out of range")
    if not 0 <= coeff < mix.n_coeffs:
        raise ValueError(f"coefficient {coeff} out of range")


def apply_psi(mix, channel, field):
    """Map column i of an (R, n_coeffs) field through mixture i."""
    field = _check_field(mix, field)
    psi, _, _ = _mixture_pass(mix.grid, mix.coeffs[channel], field)
    return psi


def apply_psi_deriv(mix, channel, field):
    """Elementwise derivative values matching :func:`apply_psi`."""
    field = _check_field(mix, field)
    _, dpsi, _ = _mixture_pass(mix.grid, mix.coeffs[channel], field, want_deriv=True)
    return dpsi


def mixture_backward(grid, coeffs_c, field, cotangent):
    """psi, psi' and the coefficient gradient in one kernel pass.

    ``coeffs_c`` is the (n_coeffs, kernels) slice of one channel;
    ``cotangent`` weights each field entry's contribution to the
    coefficient gradient: d_coeffs[i, j] = sum_r kernel_j(field[r, i]) *
    cotangent[r, i].
    """
    return _mixture_pass(grid, coeffs_c, field, cotangent=cotangent, want_deriv=True)


def _check_field(mix, field):
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2 or field.shape[1] != mix.n_coeffs:
        raise ValueError(f"field must have {mix.n_coeffs} columns, got shape {field.shape}")
    return field


def fit_linear_init(grid, slope, samples=512):
    """Least-squares kernel weights approximating x -> slope * x on the span.

    The fit uses ``samples`` equispaced points over [-delta, delta].  The
    normal equations are solved via lstsq; a singular system cannot occur
    for a valid grid but non-finite solutions are rejected defensively.
    """
    x = np.linspace(-grid.span, grid.span, samples)
    design = kernel_matrix(grid, x)
    sol, *_ = np.linalg.lstsq(design, slope * x, rcond=None)
    if not np.isfinite(sol).all():
        raise ArithmeticError("linear RBF fit produced non-finite coefficients")
    return sol


def initial_mixture(grid, channels, n_coeffs, slope=0.1):
    """Mixture whose every row starts as the same near-linear ramp."""
    row = fit_linear_init(grid, slope)
    coeffs = np.broadcast_to(row, (channels, n_coeffs, grid.size)).copy()
    return RBFMixture(grid=grid, coeffs=coeffs)
