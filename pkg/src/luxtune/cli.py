"""Command-line entry point.

Subcommands: synth, train, finetune, enhance, eval, ablate, serve. Flags
beat config-file values beat built-in defaults; the effective settings are
printed at startup for provenance. Errors exit with documented per-class
codes (see README).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .dataio import DatasetConfig, build_dataset, load_manifest, read_raw
from .errors import AssetError, KnobRangeError, LuxtuneError, ShapeError
from .experiments import (
    ExperimentSpec,
    ablate_direction,
    ablate_filter_size,
    run_protocol,
)
from .network import EnhancerModel, UNetConfig
from .rawproc import TuningKnobs, pack_bayer
from .training import TrainSchedule, finetune_modulation, train_base


def _parse_size(value: str) -> tuple:
    try:
        w, h = value.lower().split("x")
        return int(w), int(h)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"size must look like 128x128, got {value!r}") from e


def _parse_exposures(value: str) -> List[float]:
    try:
        return [float(v) for v in value.split(",") if v]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad exposure list {value!r}") from e


def write_png(image: np.ndarray, path: Path) -> None:
    """(3, H, W) float [0,1] -> 8-bit PNG."""
    from PIL import Image

    arr = (np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(path)


def _emit(args, payload: Dict, text_lines: List[str]) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        for line in text_lines:
            print(line)


def _print_effective_config(args) -> None:
    skip = {"func", "json", "config"}
    pairs = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    if args.json:
        return
    print("config: " + " ".join(f"{k}={v}" for k, v in pairs.items()))


def _apply_config_file(parser: argparse.ArgumentParser, argv: List[str]) -> List[str]:
    """Config file supplies defaults; explicit flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path, default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            values = json.loads(Path(known.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            parser.error(f"cannot read config file {known.config}: {e}")
        for sub in parser._subparsers._group_actions[0].choices.values():  # type: ignore[union-attr]
            sub.set_defaults(**{k.replace("-", "_"): v for k, v in values.items()})
    return argv


def cmd_synth(args) -> int:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise AssetError(f"output dir {out} is not empty; pass --force to reuse it")
    width, height = args.size
    config = DatasetConfig(
        scenes=args.scenes, width=width, height=height, seed=args.seed,
        black_level=args.black_level,
    )
    manifest = build_dataset(config, out)
    counts = manifest.split_counts()
    styles = {s: sum(1 for r in manifest.scenes if r.style == s) for s in ("indoor", "outdoor")}
    payload = {
        "dataset": str(out),
        "scenes": args.scenes,
        "styles": styles,
        "splits": counts,
        "exposure_times_s": list(manifest.exposures_s),
        "exposure_ratios": [
            round(manifest.reference_exposure_s / e, 3) for e in manifest.exposures_s
        ],
        "resolution": f"{width}x{height}",
        "manifest_hash": manifest.content_hash(),
    }
    _emit(args, payload, [
        f"dataset written to {out}",
        f"scenes: {args.scenes} (indoor {styles['indoor']}, outdoor {styles['outdoor']})",
        f"splits: train {counts['train']} / val {counts['val']} / test {counts['test']}",
        "exposure times: " + ", ".join(f"{e:g}s" for e in manifest.exposures_s),
        f"resolution: {width}x{height}",
        f"manifest hash: {payload['manifest_hash']}",
    ])
    return 0


def cmd_train(args) -> int:
    manifest = load_manifest(Path(args.dataset))
    config = UNetConfig(depth=args.depth, base_channels=args.base_channels)
    model = EnhancerModel.build(config, init_seed=args.seed)
    schedule = TrainSchedule(
        patch_size=args.patch, epochs_high=args.epochs_high, epochs_low=args.epochs_low,
        seed=args.seed,
    )
    model, losses = train_base(
        model, manifest, args.input_exposure, args.target_exposure, schedule,
        log_path=args.log,
    )
    save_checkpoint(model, args.out, provenance={
        "stage": "base", "dataset": str(args.dataset), "seed": args.seed,
        "input_exposure": args.input_exposure, "target_exposures": args.target_exposure,
        "schedule": {"patch": args.patch, "epochs_high": args.epochs_high,
                     "epochs_low": args.epochs_low},
    })
    payload = {"checkpoint": str(args.out), "first_loss": losses[0], "last_loss": losses[-1],
               "anchors": model.anchors}
    _emit(args, payload, [
        f"trained base model -> {args.out}",
        f"loss: {losses[0]:.5f} -> {losses[-1]:.5f} over {len(losses)} epochs",
        f"anchors: {model.anchors}",
    ])
    return 0


def cmd_finetune(args) -> int:
    manifest = load_manifest(Path(args.dataset))
    model = load_checkpoint(args.checkpoint)
    model = model.insert_modulation(filter_size=args.filter_size)
    schedule = TrainSchedule(
        patch_size=args.patch, finetune_epochs=args.epochs, seed=args.seed,
    )
    model, losses = finetune_modulation(
        model, manifest, args.input_exposure, args.final_exposure, schedule,
        log_path=args.log,
    )
    save_checkpoint(model, args.out, provenance={
        "stage": "finetune", "dataset": str(args.dataset), "seed": args.seed,
        "base_checkpoint": str(args.checkpoint), "final_exposure": args.final_exposure,
        "filter_size": args.filter_size,
    })
    payload = {"checkpoint": str(args.out), "first_loss": losses[0], "last_loss": losses[-1],
               "anchors": model.anchors}
    _emit(args, payload, [
        f"fine-tuned modulation -> {args.out}",
        f"loss: {losses[0]:.5f} -> {losses[-1]:.5f} over {len(losses)} epochs",
        f"anchors: {model.anchors}",
    ])
    return 0


def cmd_enhance(args) -> int:
    model = load_checkpoint(args.checkpoint)
    raw = read_raw(Path(args.input))
    packed = pack_bayer(raw)
    knobs = TuningKnobs(alpha1=args.alpha1, alpha2=args.alpha2, extended=args.extended)
    srgb = model.enhance(packed, knobs)
    write_png(srgb, Path(args.out))
    payload = {"out": str(args.out), "alpha1": args.alpha1, "alpha2": args.alpha2,
               "shape": list(srgb.shape)}
    _emit(args, payload, [f"enhanced image -> {args.out} (alpha1={args.alpha1:g}, "
                          f"alpha2={args.alpha2:g})"])
    return 0


def cmd_eval(args) -> int:
    manifest = load_manifest(Path(args.dataset))
    models = {}
    for item in args.model or []:
        try:
            key, path = item.split("=", 1)
        except ValueError:
            raise ShapeError(f"--model expects KEY=PATH, got {item!r}")
        models[key] = load_checkpoint(path)
    spec = ExperimentSpec(
        protocol=args.protocol,
        input_exposure=args.input_exposure,
        anchor_exposures=tuple(args.anchors),
        test_exposures=tuple(args.test_exposures),
        alpha2_mode=args.alpha2_mode,
        seed=args.seed,
    )
    report = run_protocol(spec, manifest, models)
    txt, csvp = report.write(Path(args.out))
    aggregates = report.aggregates()
    payload = {"report_txt": str(txt), "report_csv": str(csvp), "aggregates": aggregates}
    lines = [f"report -> {txt} / {csvp}"]
    for agg in aggregates:
        lines.append(
            f"{agg['model']:>16s} @ {agg['exposure_s']:g}s: "
            f"psnr {agg['mean_psnr']:.3f} dB, ssim {agg['mean_ssim']:.4f}"
        )
    _emit(args, payload, lines)
    return 0


def cmd_ablate(args) -> int:
    manifest = load_manifest(Path(args.dataset))
    schedule = TrainSchedule(
        patch_size=args.patch, epochs_high=args.epochs_high, epochs_low=args.epochs_low,
        finetune_epochs=args.finetune_epochs, seed=args.seed,
    )
    if args.which == "filter":
        if not args.base_checkpoint:
            raise AssetError(
                "filter ablation needs --base-checkpoint; produce one with: "
                f"luxtune train --dataset {args.dataset} --target-exposure 1 --out <ckpt>"
            )
        report = ablate_filter_size(
            manifest,
            base_model_loader=lambda: load_checkpoint(args.base_checkpoint),
            schedule=schedule,
            sizes=tuple(args.sizes),
        )
    else:
        def make(base_exp: float, final_exp: float) -> EnhancerModel:
            model = EnhancerModel.build(
                UNetConfig(depth=args.depth, base_channels=args.base_channels),
                init_seed=args.seed,
            )
            model, _ = train_base(model, manifest, args.input_exposure, base_exp, schedule)
            model = model.insert_modulation(filter_size=3)
            model, _ = finetune_modulation(
                model, manifest, args.input_exposure, final_exp, schedule
            )
            return model

        report = ablate_direction(manifest, make, seed=args.seed)
    txt, csvp = report.write(Path(args.out))
    payload = {"report_txt": str(txt), "report_csv": str(csvp),
               "aggregates": report.aggregates(), "reference": report.reference}
    lines = [f"ablation report -> {txt}"]
    for agg in report.aggregates():
        lines.append(f"{agg['model']:>16s}: psnr {agg['mean_psnr']:.3f} dB")
    _emit(args, payload, lines)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(
        checkpoint_dir=Path(args.assets),
        extrapolate=args.extrapolate,
        preview_scale=args.preview_scale,
        ui_dir=args.ui,
    )
    print(f"serving on http://{args.host}:{args.port} (assets: {args.assets})")
    if args.ui:
        print(f"ui at http://{args.host}:{args.port}/ui/")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="luxtune",
        description="Continuously tunable raw-to-sRGB enhancement for extreme low light.",
    )
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON file with default values for any flag")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--json", action="store_true", help="machine-readable summary output")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth", help="generate the synthetic multi-exposure dataset")
    common(p)
    p.add_argument("--scenes", type=int, default=60)
    p.add_argument("--size", type=_parse_size, default=(128, 128), metavar="WxH")
    p.add_argument("--black-level", type=float, default=0.03125)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the base network")
    common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--input-exposure", type=float, default=0.1)
    p.add_argument("--target-exposure", type=_parse_exposures, required=True,
                   metavar="S[,S...]", help="one target, or several for the mixed baseline")
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--base-channels", type=int, default=8)
    p.add_argument("--patch", type=int, default=64)
    p.add_argument("--epochs-high", type=int, default=150)
    p.add_argument("--epochs-low", type=int, default=50)
    p.add_argument("--log", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="insert modulation layers and fine-tune them")
    common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--input-exposure", type=float, default=0.1)
    p.add_argument("--final-exposure", type=float, required=True)
    p.add_argument("--filter-size", type=int, default=3, choices=(1, 3, 5, 7))
    p.add_argument("--patch", type=int, default=64)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--log", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("enhance", help="enhance one raw image at given knob values")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--alpha1", type=float, required=True)
    p.add_argument("--alpha2", type=float, default=0.0)
    p.add_argument("--extended", action="store_true",
                   help="allow alpha2 outside [0,1] (extrapolation)")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("eval", help="run an evaluation protocol (A|B|C|D|range-sweep)")
    common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--protocol", choices=("A", "B", "C", "D", "range-sweep"), required=True)
    p.add_argument("--model", action="append", metavar="KEY=PATH",
                   help="checkpoint per role, e.g. continuous=ckpt.lxck")
    p.add_argument("--input-exposure", type=float, default=0.1)
    p.add_argument("--anchors", type=_parse_exposures, default=[1.0, 10.0])
    p.add_argument("--test-exposures", type=_parse_exposures, default=[1.0, 5.0, 10.0])
    p.add_argument("--alpha2-mode", choices=("loglinear", "grid"), default="loglinear")
    p.add_argument("--out", type=Path, required=True, help="report stem (.txt/.csv)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the filter-size or tuning-direction ablation")
    common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--which", choices=("filter", "direction"), required=True)
    p.add_argument("--base-checkpoint", type=Path, default=None)
    p.add_argument("--sizes", type=lambda s: [int(v) for v in s.split(",")],
                   default=[1, 3, 5, 7])
    p.add_argument("--input-exposure", type=float, default=0.1)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--base-channels", type=int, default=8)
    p.add_argument("--patch", type=int, default=64)
    p.add_argument("--epochs-high", type=int, default=150)
    p.add_argument("--epochs-low", type=int, default=50)
    p.add_argument("--finetune-epochs", type=int, default=150)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("serve", help="start the interactive tuning service")
    common(p)
    p.add_argument("--assets", type=Path, required=True,
                   help="directory with allow-listed checkpoints and raw images")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--extrapolate", action="store_true")
    p.add_argument("--preview-scale", type=float, default=0.5)
    p.add_argument("--ui", type=Path, default=None,
                   help="serve the built browser client from this directory at /ui")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    _apply_config_file(parser, argv)
    args = parser.parse_args(argv)
    _print_effective_config(args)
    try:
        return args.func(args)
    except KnobRangeError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except LuxtuneError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
