"""Command-line interface.

Subcommands: train, restore, eval, synth, inspect, complexity. Exit status
is 0 on success, 2 on usage errors, and 1 on runtime failures with one
machine-readable JSON error line on stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import dataio, degrade, figures, pipeline
from .errors import GuslError, IdenticalImagesError, InvalidConfigError, InvalidInputError
from .imaging import psnr, ssim

IMAGE_SUFFIXES = (".png", ".pgm", ".raw")


def _cmd_train(args) -> int:
    manifest = dataio.load_manifest(args.manifest)
    cfg = dataio.config_from_json(args.config) if args.config else pipeline.TrainConfig()
    entries = manifest.subset("train")
    if not entries:
        raise InvalidConfigError("manifest has no train entries")
    pairs = []
    for e in entries:
        if e.ndct_path is None:
            raise InvalidConfigError(f"train entry {e.ldct_path} is missing ndct_path")
        pairs.append(
            (
                dataio.load_image(e.ldct_path, manifest.lo, manifest.hi),
                dataio.load_image(e.ndct_path, manifest.lo, manifest.hi),
            )
        )
    model = pipeline.train(pairs, cfg)
    out = Path(args.out)
    dataio.save_model(model, out)
    if model.diagnostics is not None:
        dataio.save_diagnostics(model.diagnostics, out / "diagnostics.json")
    report = pipeline.report_complexity(model)
    print(
        f"trained {len(pairs)} pairs, {cfg.level_count} levels -> {out} "
        f"(params={report.param_count}, macs/pixel={report.macs_per_pixel:.1f})"
    )
    return 0


def _cmd_restore(args) -> int:
    model = dataio.load_model(args.model)
    img = dataio.load_image(args.infile, args.lo, args.hi)
    restored = pipeline.restore(model, img)
    dataio.save_image(args.out, restored, args.lo, args.hi)
    print(f"restored {args.infile} -> {args.out}")
    return 0


def _metrics(restored: np.ndarray, reference: np.ndarray) -> tuple[float, float, bool]:
    identical = bool(np.array_equal(restored, reference))
    p = math.inf if identical else psnr(restored, reference)
    return p, ssim(restored, reference), identical


def _cmd_eval(args) -> int:
    model = dataio.load_model(args.model)
    manifest = dataio.load_manifest(args.manifest)
    entries = manifest.subset("test") or manifest.entries
    rows = []
    for e in entries:
        if e.ndct_path is None:
            raise InvalidConfigError(f"eval entry {e.ldct_path} is missing ndct_path")
        ldct = dataio.load_image(e.ldct_path, manifest.lo, manifest.hi)
        ndct = dataio.load_image(e.ndct_path, manifest.lo, manifest.hi)
        restored = pipeline.restore(model, ldct)
        p_in, s_in, _ = _metrics(ldct, ndct)
        p_out, s_out, identical = _metrics(restored, ndct)
        rows.append(
            {
                "image": str(e.ldct_path.name),
                "psnr_input": p_in,
                "ssim_input": s_in,
                "psnr_restored": p_out,
                "ssim_restored": s_out,
                "identical": int(identical),
            }
        )
    report = Path(args.report)
    report.parent.mkdir(parents=True, exist_ok=True)
    fields = ["image", "psnr_input", "ssim_input", "psnr_restored", "ssim_restored", "identical"]
    with report.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        mean_row = {"image": "mean", "identical": ""}
        for key in fields[1:-1]:
            mean_row[key] = repr(float(np.mean([r[key] for r in rows])))
        writer.writerow(mean_row)
    fig_path = figures.save_eval_figure(rows, report.with_suffix(".png"))
    print(f"evaluated {len(rows)} images -> {report} and {fig_path}")
    print(
        "mean psnr input/restored: "
        f"{np.mean([r['psnr_input'] for r in rows]):.4f} / "
        f"{np.mean([r['psnr_restored'] for r in rows]):.4f}  "
        "mean ssim input/restored: "
        f"{np.mean([r['ssim_input'] for r in rows]):.4f} / "
        f"{np.mean([r['ssim_restored'] for r in rows]):.4f}"
    )
    return 0


def _cmd_synth(args) -> int:
    src = Path(args.indir)
    dst = Path(args.out)
    if not src.is_dir():
        raise InvalidInputError(f"{src} is not a directory")
    dst.mkdir(parents=True, exist_ok=True)
    files = sorted(p for p in src.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise InvalidInputError(f"{src} contains no supported images")
    for i, path in enumerate(files):
        clean = dataio.load_image(path, args.lo, args.hi)
        seed = int(np.random.SeedSequence([args.seed, i]).generate_state(1)[0])
        params = degrade.DegradeParams(blur_sigma=args.blur, noise_sigma=args.noise, seed=seed)
        dataio.save_image(dst / path.name, degrade.synth_degrade(clean, params), args.lo, args.hi)
    print(f"degraded {len(files)} images -> {dst}")
    return 0


def _cmd_inspect(args) -> int:
    model = dataio.load_model(args.model)
    diag_all = dataio.load_diagnostics(Path(args.model) / "diagnostics.json")
    match = [d for d in diag_all.levels if d.level == args.level]
    if not match:
        raise InvalidConfigError(
            f"no diagnostics for level {args.level}; available: "
            f"{[d.level for d in diag_all.levels]}"
        )
    diag = match[0]
    lm = [m for m in model.levels if m.level == args.level][0]
    meta = pipeline._level_meta(lm)
    if len(meta) != diag.raw_losses.size:
        raise InvalidConfigError("diagnostics do not match the model's feature layout")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    selected = set(diag.selected.tolist())
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["column", "source", "kernel", "offset_dy", "offset_dx", "raw",
             "loss", "rank_train", "rank_val", "joint_score", "selected"]
        )
        for i, m in enumerate(meta):
            writer.writerow(
                [i, m.source, m.kernel, m.offset[0], m.offset[1], int(m.raw),
                 repr(float(diag.raw_losses[i])), int(diag.rank_train[i]),
                 int(diag.rank_val[i]), int(diag.joint_score[i]), int(i in selected)]
            )
    lnt_path = out.with_name(out.stem + "_generated.csv")
    with lnt_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["projection", "loss"])
        for i, loss in enumerate(diag.lnt_losses):
            writer.writerow([i, repr(float(loss))])
    fig_paths = figures.save_inspect_figures(diag, out.with_suffix(""))
    print(f"level {args.level}: {diag.raw_losses.size} candidate columns -> {out}")
    print(f"figures: {', '.join(str(p) for p in fig_paths)}")
    return 0


def _cmd_complexity(args) -> int:
    model = dataio.load_model(args.model)
    report = pipeline.report_complexity(model)
    print(json.dumps({
        "param_count": report.param_count,
        "macs_per_pixel": report.macs_per_pixel,
    }))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gusl",
        description="Feedforward coarse-to-fine residual restoration for grayscale images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model from a manifest of image pairs")
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--config", help="training config JSON (TrainConfig keys)")
    p.add_argument("--out", required=True, help="output model directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("restore", help="restore one image with a trained model")
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("--in", dest="infile", required=True, help="input image")
    p.add_argument("--out", required=True, help="output image")
    p.add_argument("--lo", type=float, help="intensity window low end")
    p.add_argument("--hi", type=float, help="intensity window high end")
    p.set_defaults(func=_cmd_restore)

    p = sub.add_parser("eval", help="PSNR/SSIM report over a manifest's test entries")
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--report", required=True, help="output CSV path (figure saved alongside)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="blur+noise degradation of a directory of images")
    p.add_argument("--in", dest="indir", required=True, help="input directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--blur", type=float, default=0.0, help="Gaussian blur sigma (pixels)")
    p.add_argument("--noise", type=float, default=0.0, help="noise sigma (intensity units)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lo", type=float, help="intensity window low end")
    p.add_argument("--hi", type=float, help="intensity window high end")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("inspect", help="per-level feature diagnostics captured at training")
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("--level", type=int, required=True, help="pyramid level (1 = finest)")
    p.add_argument("--out", required=True, help="output CSV path (figures saved alongside)")
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("complexity", help="print parameter count and MACs per pixel")
    p.add_argument("--model", required=True, help="model directory")
    p.set_defaults(func=_cmd_complexity)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GuslError as exc:
        print(json.dumps({"error": exc.category, "message": str(exc)}), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
