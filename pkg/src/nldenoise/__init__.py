"""Non-local unrolled proximal-gradient denoiser with exact training gradients."""

from .image import (
    FormatError,
    ImageTensor,
    InfinitePSNRError,
    NoiseSpec,
    add_gaussian_noise,
    load_image,
    opponent_to_rgb,
    psnr,
    rgb_to_opponent,
    save_image,
    symmetric_pad,
)
from .network import BoxConstraint, Model, StageParams, build_model, denoise, project_box
from .nonlocal_op import GroupWeights, PatchTransform, dct_transform, nl_adjoint, nl_forward
from .patches import GroupIndexSet, PatchGeometry, accumulate_patches, block_match, extract_patches
from .shrinkage import RBFGrid, RBFMixture, apply_psi, apply_psi_deriv, rbf_deriv, rbf_eval
from .training import (
    TrainConfig,
    gradcheck,
    greedy_train,
    joint_train,
    loss,
    loss_grad,
    network_backward,
    stage_backward,
)
from .lbfgs import lbfgs_minimize
from .modelio import load_model, save_model

__version__ = "0.1.0"
