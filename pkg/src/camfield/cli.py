"""Command-line front end.

Commands:
  train   <config>            train a model, write checkpoint + logs
  eval    <checkpoint> <config>   report evaluation PSNR (optionally quantized)
  analyze <checkpoint> <config>   export grids, error spectra, feature variance
  ablate  <config>            train {baseline, CAM-N, CAM} and compare

``--threads`` caps BLAS/OpenMP pools: by environment variable for anything
not yet loaded, and through threadpoolctl (when installed) for pools that
already exist. Numeric imports are deferred until after argument parsing.
"""

from __future__ import annotations

import argparse
import os
import sys


def _build_parser():
    p = argparse.ArgumentParser(prog="camfield")
    p.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP thread cap")
    sub = p.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train a model from a config file")
    tr.add_argument("config")
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--out", default=None)
    tr.add_argument("--force", action="store_true", help="allow writing into a non-empty directory")

    ev = sub.add_parser("eval", help="evaluate a checkpoint on its task")
    ev.add_argument("checkpoint")
    ev.add_argument("config")
    ev.add_argument("--bits", type=int, default=None, choices=(32, 8, 6))
    ev.add_argument("--seed", type=int, default=None)

    an = sub.add_parser("analyze", help="export diagnostics for a checkpoint")
    an.add_argument("checkpoint")
    an.add_argument("config")
    an.add_argument("--out", default=None)
    an.add_argument("--seed", type=int, default=None)
    an.add_argument("--force", action="store_true")

    ab = sub.add_parser("ablate", help="train baseline / CAM-N / CAM with a shared seed")
    ab.add_argument("config")
    ab.add_argument("--seed", type=int, default=None)
    ab.add_argument("--out", default=None)
    ab.add_argument("--force", action="store_true")
    return p


def _load_config(path, seed=None, out=None):
    from .config import parse_config, variant

    with open(path) as f:
        cfg = parse_config(f.read())
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if out is not None:
        changes["out"] = out
    return variant(cfg, **changes) if changes else cfg


def _prepare_out_dir(path, force):
    if not path:
        raise ValueError("no output directory: set 'out' in [run] or pass --out")
    if os.path.isdir(path) and os.listdir(path) and not force:
        raise ValueError(f"output directory {path!r} is not empty (use --force)")
    os.makedirs(path, exist_ok=True)
    return path


def _write_summary(path, rows, header):
    with open(path, "w") as f:
        f.write("\t".join(header) + "\n")
        for row in rows:
            f.write("\t".join(str(v) for v in row) + "\n")


def _fmt_psnr(value):
    import math

    return "inf" if math.isinf(value) else f"{value:.4f}"


def cmd_train(args):
    from .config import serialize_config
    from .tasks import train

    cfg = _load_config(args.config, args.seed, args.out)
    out_dir = _prepare_out_dir(cfg.out, args.force)
    with open(os.path.join(out_dir, "config.txt"), "w") as f:
        f.write(serialize_config(cfg))
    run = train(cfg, out_dir=out_dir, log_to=sys.stderr)
    _write_summary(
        os.path.join(out_dir, "summary.tsv"),
        [(cfg.task, cfg.seed, cfg.iterations, repr(run.final_loss),
          _fmt_psnr(run.final_psnr), _fmt_psnr(run.eval_psnr))],
        header=("task", "seed", "iterations", "final_loss", "train_psnr", "eval_psnr"),
    )
    print(f"train_psnr {_fmt_psnr(run.final_psnr)}  eval_psnr {_fmt_psnr(run.eval_psnr)}")
    return 0


def cmd_eval(args):
    from .analysis import quantize_model
    from .checkpoint import load_model
    from .tasks import evaluate

    cfg = _load_config(args.config, args.seed)
    bits = args.bits if args.bits is not None else cfg.bits
    model = load_model(args.checkpoint)
    quantize_model(model, bits)
    value = evaluate(cfg, model)
    print(f"eval_psnr {_fmt_psnr(value)}  bits {bits}")
    return 0


def cmd_analyze(args):
    import numpy as np

    from . import analysis
    from .checkpoint import load_model
    from .tasks import _load_task_data, predict

    cfg = _load_config(args.config, args.seed)
    out_dir = _prepare_out_dir(args.out or (cfg.out + "-analysis" if cfg.out else ""), args.force)
    model = load_model(args.checkpoint)
    _, _, eval_coords, eval_targets, _ = _load_task_data(cfg)

    # grids
    for i, stage in enumerate(model.stages):
        if stage.kind != "cam":
            continue
        for name, grid in (("gamma", stage.gamma), ("beta", stage.beta)):
            base = os.path.join(out_dir, f"grid_stage{i}_{name}")
            if grid.rank == 2:
                analysis.export_grid_image(grid, base + ".pgm")
            else:
                np.savetxt(base + ".tsv", grid.values.data[:, 0], delimiter="\t")

    # pixel-feature variance per stage (image tasks have one pixel per row)
    rows = []
    variances = analysis.stage_variances(model, eval_coords)
    for name, v in variances:
        rows.append((name, repr(v)))
    _write_summary(os.path.join(out_dir, "variance.tsv"), rows, header=("stage", "variance"))

    # frequency-domain error maps
    summary_rows = []
    if cfg.task in ("image-regression", "image-generalization"):
        from .image_io import read_image

        target_img = read_image(cfg.image)
        pred = predict(model, eval_coords)
        pred_img = pred.reshape(target_img.shape)
        maps, high, total, ratio = analysis.rgb_error_spectrum(pred_img, target_img)
        for c, sm in enumerate(maps):
            analysis.export_spectrum_image(
                sm, os.path.join(out_dir, f"error_spectrum_ch{c}.pgm"), log_scale=True
            )
        summary_rows.append(("high_band_energy", repr(high)))
        summary_rows.append(("total_energy", repr(total)))
        summary_rows.append(("high_band_ratio", repr(ratio)))
    _write_summary(os.path.join(out_dir, "analysis.tsv"),
                   summary_rows or [("note", "no spectrum for this task")],
                   header=("metric", "value"))
    print(f"analysis written to {out_dir}")
    return 0


def cmd_ablate(args):
    from .config import serialize_config, variant
    from .tasks import train

    cfg = _load_config(args.config, args.seed, args.out)
    out_dir = _prepare_out_dir(cfg.out, args.force)
    placements = cfg.cam_layers or tuple(range(1, len(cfg.hidden) + 1))
    variants = (
        ("baseline", variant(cfg, cam_layers=(), out="")),
        ("cam_n", variant(cfg, cam_layers=placements, normalize=False, out="")),
        ("cam", variant(cfg, cam_layers=placements, normalize=True, out="")),
    )
    rows = []
    for name, vcfg in variants:
        sub = os.path.join(out_dir, name)
        os.makedirs(sub, exist_ok=True)
        with open(os.path.join(sub, "config.txt"), "w") as f:
            f.write(serialize_config(vcfg))
        run = train(vcfg, out_dir=sub)
        rows.append((name, _fmt_psnr(run.final_psnr), _fmt_psnr(run.eval_psnr),
                     repr(run.final_loss)))
        print(f"{name}: train_psnr {rows[-1][1]}  eval_psnr {rows[-1][2]}")
    _write_summary(os.path.join(out_dir, "ablate_summary.tsv"), rows,
                   header=("variant", "train_psnr", "eval_psnr", "final_loss"))
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handlers = {
        "train": cmd_train,
        "eval": cmd_eval,
        "analyze": cmd_analyze,
        "ablate": cmd_ablate,
    }
    try:
        if args.threads is not None:
            # cap both pre-import (env) and already-loaded BLAS pools
            for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
                os.environ.setdefault(var, str(args.threads))
            try:
                from threadpoolctl import threadpool_limits
            except ImportError:
                pass
            else:
                with threadpool_limits(limits=args.threads):
                    return handlers[args.command](args)
        return handlers[args.command](args)
    except (ValueError, OSError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
