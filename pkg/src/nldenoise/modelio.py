"""Binary model checkpoint format.

Layout (all integers little-endian):

    magic   "NLNT"                       4 bytes
    version u32 (currently 1)
    mode    u32 (0 grayscale, 1 color)
    S, Px, Py, K, window, M   u32 each
    sigma_trained, delta, epsilon   f64 each
    per stage: step weight f64,
               transform rows row-major ((P-1)*P f64),
               group weights (K f64),
               mixture coefficients channel-major then coefficient then
               kernel (C*(P-1)*M f64)
    checksum u64: sum of all preceding bytes modulo 2**64

Round trip is byte-exact: save(load(save(m))) == save(m).
"""

import struct

import numpy as np

from .network import BoxConstraint, Model, StageParams, color_box, grayscale_box
from .nonlocal_op import GroupWeights, PatchTransform
from .patches import PatchGeometry
from .shrinkage import RBFGrid, RBFMixture

MAGIC = b"NLNT"
VERSION = 1


class ModelFormatError(ValueError):
    """Raised for corrupt or structurally invalid model files."""


def _checksum(payload):
    return int(np.frombuffer(payload, dtype=np.uint8).astype(np.uint64).sum()) & 0xFFFFFFFFFFFFFFFF


def model_bytes(model):
    grid = model.stages[0].mixture.grid
    mode_flag = 0 if model.mode == "grayscale" else 1
    head = MAGIC + struct.pack(
        "<8I3d",
        VERSION,
        mode_flag,
        model.n_stages,
        model.geom.patch_h,
        model.geom.patch_w,
        model.geom.group_size,
        model.geom.window,
        grid.size,
        model.sigma_trained,
        grid.span,
        grid.epsilon,
    )
    parts = [head]
    for sp in model.stages:
        parts.append(struct.pack("<d", sp.step_weight))
        parts.append(sp.transform.matrix.astype("<f8").tobytes())
        parts.append(sp.group_weights.values.astype("<f8").tobytes())
        parts.append(sp.mixture.coeffs.astype("<f8").tobytes())
    payload = b"".join(parts)
    return payload + struct.pack("<Q", _checksum(payload))


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(model_bytes(model))


def load_model(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    return model_from_bytes(blob, name=str(path))


def model_from_bytes(blob, name="<bytes>"):
    head_len = 4 + 8 * 4 + 3 * 8
    if len(blob) < head_len + 8:
        raise ModelFormatError(f"{name}: file too short for a model")
    payload, (stored,) = blob[:-8], struct.unpack("<Q", blob[-8:])
    if _checksum(payload) != stored:
        raise ModelFormatError(f"{name}: checksum mismatch, corrupt model")
    if payload[:4] != MAGIC:
        raise ModelFormatError(f"{name}: bad magic {payload[:4]!r}")
    values = struct.unpack("<8I3d", payload[4:head_len])
    version, mode_flag, stages, ph, pw, k, window, kernels = values[:8]
    sigma, delta, epsilon = values[8:]
    if version != VERSION:
        raise ModelFormatError(f"{name}: unsupported version {version}")
    if mode_flag not in (0, 1):
        raise ModelFormatError(f"{name}: bad mode flag {mode_flag}")
    mode = "grayscale" if mode_flag == 0 else "color"
    channels = 1 if mode_flag == 0 else 3
    try:
        geom = PatchGeometry(patch_h=ph, patch_w=pw, window=window, group_size=k)
        grid = RBFGrid(centers=np.linspace(-delta, delta, kernels), epsilon=epsilon)
    except ValueError as exc:
        raise ModelFormatError(f"{name}: invalid geometry ({exc})") from exc
    p = geom.patch_len
    stage_floats = 1 + (p - 1) * p + k + channels * (p - 1) * kernels
    expected = head_len + stages * stage_floats * 8
    if len(payload) != expected:
        raise ModelFormatError(
            f"{name}: payload is {len(payload)} bytes, counts imply {expected}"
        )
    stage_list = []
    pos = head_len
    for _ in range(stages):
        floats = np.frombuffer(payload, dtype="<f8", count=stage_floats, offset=pos)
        pos += stage_floats * 8
        cursor = 0
        step = float(floats[cursor])
        cursor += 1
        matrix = floats[cursor : cursor + (p - 1) * p].reshape(p - 1, p).copy()
        cursor += (p - 1) * p
        weights = floats[cursor : cursor + k].copy()
        cursor += k
        coeffs = floats[cursor:].reshape(channels, p - 1, kernels).copy()
        stage_list.append(
            StageParams(
                step_weight=step,
                transform=PatchTransform(matrix),
                group_weights=GroupWeights(weights),
                mixture=RBFMixture(grid=grid, coeffs=coeffs),
            )
        )
    box = grayscale_box() if mode_flag == 0 else color_box()
    return Model(stages=stage_list, geom=geom, mode=mode, box=box, sigma_trained=sigma)
