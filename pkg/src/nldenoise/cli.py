"""Command-line front end.

Subcommands: add-noise, train, denoise, eval, gradcheck.  Exit codes:
0 success, 1 failed gradient check, 2 configuration/I-O/format errors,
3 numeric aborts during optimization.  All deterministic output (PSNR
values, CSV reports, logs) goes to stdout or to files; timing goes to
stderr so byte-level reproducibility of results is preserved.
"""

import argparse
import os
import sys
import time

import numpy as np

from .image import (
    FormatError,
    ImageTensor,
    InfinitePSNRError,
    NoiseSpec,
    add_gaussian_noise,
    load_image,
    psnr,
    save_image,
)
from .lbfgs import NumericAbort
from .modelio import ModelFormatError, load_model, save_model
from .network import denoise
from .training import TrainConfig, TrainingError, gradcheck, greedy_train, joint_train

CONFIG_KEYS = {
    "mode": str,
    "clean_dir": str,
    "sigma": float,
    "crop_size": int,
    "pairs": int,
    "seed": int,
    "stages": int,
    "patch_size": int,
    "group_size": int,
    "window": int,
    "greedy_iters": int,
    "joint_iters": int,
    "rbf_kernels": int,
    "rbf_delta": float,
    "rbf_epsilon": float,
    "lbfgs_history": int,
}
REQUIRED_KEYS = ("clean_dir", "sigma")


class ConfigError(ValueError):
    pass


def parse_config(text):
    """Flat key=value lines into a TrainConfig; '#' starts a comment."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            raw[key] = CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    for key in REQUIRED_KEYS:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    try:
        return TrainConfig(**raw)
    except TrainingError as exc:
        raise ConfigError(str(exc)) from exc


def _fmt(value):
    return repr(float(value))


def cmd_add_noise(args):
    img = load_image(args.input)
    sigma = args.sigma if img.channels == 1 else args.sigma / 255.0
    noisy = add_gaussian_noise(img, NoiseSpec(sigma=sigma, seed=args.seed))
    save_image(noisy, args.output)
    try:
        print(f"psnr_db={_fmt(psnr(noisy, img))}")
    except InfinitePSNRError:
        print("psnr_db=inf")
    return 0


def cmd_train(args):
    with open(args.config) as fh:
        cfg = parse_config(fh.read())
    log = sys.stdout if args.log is None else open(args.log, "w")
    try:
        model = greedy_train(cfg, log=log)
        model = joint_train(model, cfg, log=log)
    finally:
        if log is not sys.stdout:
            log.close()
    save_model(model, args.out)
    return 0


def cmd_denoise(args):
    model = load_model(args.model)
    img = load_image(args.input)
    start = time.perf_counter()
    restored = denoise(model, img)
    print(f"runtime_s={time.perf_counter() - start:.3f}", file=sys.stderr)
    save_image(restored, args.output)
    if args.clean is not None:
        clean = load_image(args.clean)
        print(f"psnr_db={_fmt(psnr(restored, clean))}")
    return 0


def cmd_eval(args):
    model = load_model(args.model)
    suffix = ".pgm" if model.mode == "grayscale" else ".ppm"
    try:
        names = sorted(n for n in os.listdir(args.clean_dir) if n.lower().endswith(suffix))
    except OSError as exc:
        raise FormatError(f"cannot read {args.clean_dir}: {exc}") from exc
    if not names:
        raise FormatError(f"no {suffix} images in {args.clean_dir}")
    out = sys.stdout if args.out is None else open(args.out, "w")
    try:
        values = []
        for index, name in enumerate(names):
            clean = load_image(os.path.join(args.clean_dir, name))
            sigma = args.sigma if clean.channels == 1 else args.sigma / 255.0
            noisy = add_gaussian_noise(clean, NoiseSpec(sigma=sigma, seed=args.seed + index))
            value = psnr(denoise(model, noisy), clean)
            values.append(value)
            out.write(f"{name},{_fmt(value)}\n")
        out.write(f"average,{_fmt(sum(values) / len(values))}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_gradcheck(args):
    report = gradcheck(seed=args.seed, samples_per_class=args.samples, corrupt=args.corrupt_class)
    sys.stdout.write(str(report))
    return 0 if report.passed else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="nldenoise", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("add-noise", help="add seeded Gaussian noise to an image")
    p.add_argument("--sigma", type=float, required=True, help="noise std on the 0..255 scale")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_add_noise)

    p = sub.add_parser("train", help="train a model from a key=value config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--log", default=None, help="iteration CSV log file (default stdout)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="denoise an image with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--clean", default=None, help="clean reference; prints PSNR when given")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("eval", help="noisy/denoise/PSNR sweep over a clean directory")
    p.add_argument("--model", required=True)
    p.add_argument("--clean-dir", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV report file (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradient classes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=36, help="checked components per class")
    p.add_argument("--corrupt-class", default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, ModelFormatError, ConfigError, TrainingError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericAbort as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
