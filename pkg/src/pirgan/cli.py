"""Command line entry points.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime abort.
``PIRGAN_CONFIG`` names a config file when ``--config`` is not given.
"""

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import torch

from ._validation import InvalidArgumentError, InvalidConfigError, NumericalError, TrainingAborted
from .config import TrainingConfig, load_config, save_config
from .data import ToySpec, emit_grid, generate_toy_domains, load_dataset, select_k_shot
from .losses import make_backend
from .metrics import evaluate
from .models import Generator, load_checkpoint, namespace_state, save_checkpoint, sample_latent
from .trainer import pretrain_source, train
from .translator import Translator

log = logging.getLogger("pirgan")

CONFIG_ENV = "PIRGAN_CONFIG"
LOSS_FLAGS = ("lambda1", "lambda2", "recon_metric", "recon_direction", "patch_weight")
TRAIN_FLAGS = ("iterations", "f_steps_per_iter", "batch_size", "lr_d", "lr_g", "lr_f", "k_shot",
               "seed", "checkpoint_interval", "share_z")


def _resolve_config(args):
    path = args.config or os.environ.get(CONFIG_ENV)
    cfg = load_config(path) if path else TrainingConfig()
    overrides = {k: getattr(args, k) for k in TRAIN_FLAGS if getattr(args, k, None) is not None}
    loss = {k: getattr(args, k) for k in LOSS_FLAGS if getattr(args, k, None) is not None}
    if getattr(args, "resolution", None):
        cfg.model = dataclasses.replace(cfg.model, resolution=args.resolution)
    if getattr(args, "baseline", False):
        overrides["baseline_mode"] = True
    cfg = dataclasses.replace(cfg, loss=dataclasses.replace(cfg.loss, **loss), **overrides)
    return cfg.validate()


def _dataset(args, domain, resolution):
    if args.data:
        return load_dataset(args.data, resolution)
    spec = ToySpec(resolution=resolution, seed=args.toy_seed)
    source, target = generate_toy_domains(spec)
    return source if domain == "source" else target


def _load_modules(path):
    payload = load_checkpoint(path)
    cfg = payload["config"]
    mods = {}
    for name, cls in (("g_s", Generator), ("g_t", Generator), ("f", Translator)):
        state = namespace_state(payload["tensors"], name)
        if state:
            m = cls(cfg.model)
            m.load_state_dict(state)
            mods[name] = m.eval()
    return payload, cfg, mods


def cmd_make_toy(args):
    source, target = generate_toy_domains(
        ToySpec(resolution=args.resolution or 32, n_source=args.n_source, n_target=args.n_target,
                seed=args.toy_seed))
    from PIL import Image
    from .data import to_uint8

    for ds in (source, target):
        out = Path(args.out) / ds.domain_name
        out.mkdir(parents=True, exist_ok=True)
        for entry, img in zip(ds.manifest, to_uint8(ds.images)):
            Image.fromarray(img.transpose(1, 2, 0)).save(out / f"{entry['file']}.png")
    print(f"wrote {len(source)} source and {len(target)} target images to {args.out}")


def cmd_pretrain_source(args):
    cfg = _resolve_config(args)
    ds = _dataset(args, "source", cfg.model.resolution)
    g = pretrain_source(ds, cfg, iterations=args.pretrain_iterations, batch_size=args.pretrain_batch,
                        seed=cfg.seed)
    save_checkpoint(args.out, {"g_s": g}, cfg)
    print(f"saved source generator to {args.out}")


def cmd_adapt(args):
    cfg = _resolve_config(args)
    payload, src_cfg, mods = _load_modules(args.source)
    g_s = mods.get("g_s")
    if g_s is None:
        raise InvalidConfigError(f"{args.source} holds no source generator")
    cfg.model = src_cfg.model
    ds = select_k_shot(_dataset(args, "target", cfg.model.resolution), cfg.k_shot, cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.yaml")
    _, paths = train(cfg, ds, g_s, out_dir=out, log_path=out / "losses.jsonl")
    for p in paths:
        print(p)


def cmd_eval(args):
    torch.manual_seed(0)
    _, cfg, mods = _load_modules(args.checkpoint)
    ds = _dataset(args, "target", cfg.model.resolution)
    payload = load_checkpoint(args.checkpoint)
    k_shot = payload.get("k_shot_images")
    if k_shot is None:
        k_shot = select_k_shot(ds, cfg.k_shot, cfg.seed).k_shot_images
    report = evaluate(mods.get("g_t", mods.get("g_s")), ds.images, k_shot,
                      n_samples=args.samples or cfg.eval_samples, seed=cfg.seed,
                      backend=make_backend(cfg.perceptual), constant=cfg.balance_constant)
    print(report.row(Path(args.checkpoint).name))
    if args.out:
        Path(args.out).write_text(report.to_text())


def cmd_sample(args):
    _, cfg, mods = _load_modules(args.checkpoint)
    if "g_s" not in mods or "g_t" not in mods:
        raise InvalidConfigError("sample needs a checkpoint holding both g_s and g_t")
    z = sample_latent(args.n, args.seed, cfg.model.z_dim)
    with torch.no_grad():
        grid = torch.cat([mods["g_s"](z), mods["g_t"](z)])
    print(emit_grid(grid, 2, args.n, args.out))


def cmd_translate(args):
    _, cfg, mods = _load_modules(args.checkpoint)
    if "f" not in mods:
        raise InvalidConfigError("checkpoint holds no translator (baseline run?)")
    with torch.no_grad():
        z = sample_latent(args.n, args.seed, cfg.model.z_dim)
        content = mods["g_s"](z)
        style = mods["g_t"](sample_latent(args.n, args.seed + 1, cfg.model.z_dim))
        out = mods["f"](content, style)
    print(emit_grid(torch.cat([content, style, out]), 3, args.n, args.out))


def _add_train_flags(p):
    p.add_argument("--config", help=f"YAML config (default: ${CONFIG_ENV})")
    p.add_argument("--data", help="image directory; the toy set is used when omitted")
    p.add_argument("--toy-seed", type=int, default=0)
    p.add_argument("--resolution", type=int)
    for name in TRAIN_FLAGS:
        flag = "--" + name.replace("_", "-")
        if name == "share_z":
            p.add_argument(flag, dest=name, action="store_const", const=True)
        elif name.startswith("lr"):
            p.add_argument(flag, dest=name, type=float)
        else:
            p.add_argument(flag, dest=name, type=int)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--recon-metric", dest="recon_metric")
    p.add_argument("--recon-direction", dest="recon_direction")
    p.add_argument("--patch-weight", dest="patch_weight", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="pirgan")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-toy", help="write the toy two-domain set as PNG files")
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", type=int)
    p.add_argument("--n-source", type=int, default=2000)
    p.add_argument("--n-target", type=int, default=1000)
    p.add_argument("--toy-seed", type=int, default=0)
    p.set_defaults(func=cmd_make_toy)

    p = sub.add_parser("pretrain-source", help="train G_S on the source domain")
    _add_train_flags(p)
    p.add_argument("--pretrain-iterations", type=int, default=4000)
    p.add_argument("--pretrain-batch", type=int, default=32)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain_source)

    p = sub.add_parser("adapt", help="few-shot adaptation with paired reconstruction")
    _add_train_flags(p)
    p.add_argument("--source", required=True, help="checkpoint from pretrain-source")
    p.add_argument("--baseline", action="store_true", help="naive fine-tune without F")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("eval", help="FID / intra-cluster distance / balance for a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--data")
    p.add_argument("--toy-seed", type=int, default=0)
    p.add_argument("--samples", type=int)
    p.add_argument("--out", help="write the report as YAML")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="grid of G_S(z) over G_T(z) for shared z")
    p.add_argument("checkpoint")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("translate", help="content row, style row, translation row")
    p.add_argument("checkpoint")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_translate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        args.func(args)
    except (InvalidConfigError, InvalidArgumentError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TrainingAborted, NumericalError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
