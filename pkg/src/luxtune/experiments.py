"""Experiment harness: evaluation protocols, ablations, and reports.

Protocols (all with 0.1s inputs, mirroring the full-scale study layout):

    A   fixed-output baselines trained per target exposure, each tested at
        every exposure (diagonal = specialist, off-diagonal = mismatch)
    B   one fixed-output baseline trained on mixed target exposures
    C   continuous model (base at the low anchor, fine-tuned to the high
        anchor) tested at an interior exposure
    D   continuous model tested outside its trained anchor range

Absolute full-scale reference numbers are recorded in reports for context
only; desk-scale synthetic results are never compared against them.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import convolve as _ndconvolve

from .dataio import DatasetManifest, SceneRecord
from .errors import AssetError, ShapeError
from .metrics import psnr, ssim
from .network import EnhancerModel
from .rawproc import PackedRaw, TuningKnobs, apply_brightness, exposure_ratio, unpack_bayer
from .sensor import GAMMA

# Reference results reported for the corresponding full-scale experiments
# on real captures. Recorded in reports for context; never asserted.
FULLSCALE_FILTER_PSNR = {1: 31.87, 3: 32.35, 5: 32.39, 7: 32.48}
FULLSCALE_DIRECTION_PSNR = {"forward": 32.35, "backward": 28.2}

PROTOCOLS = ("A", "B", "C", "D", "range-sweep")

REPORT_COLUMNS = ("experiment", "model", "exposure_s", "scene", "alpha1", "alpha2", "psnr", "ssim")


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run: protocol id, anchor/test exposures, knob mapping."""

    protocol: str
    input_exposure: float = 0.1
    anchor_exposures: Tuple[float, ...] = (1.0, 10.0)
    test_exposures: Tuple[float, ...] = (1.0, 5.0, 10.0)
    alpha2_mode: str = "loglinear"  # or "grid"
    alpha2_grid: Tuple[float, ...] = tuple(np.round(np.linspace(0.0, 1.0, 21), 3))
    split: str = "test"
    seed: int = 0

    def fingerprint_payload(self) -> Dict:
        return {
            "protocol": self.protocol,
            "input_exposure": self.input_exposure,
            "anchor_exposures": list(self.anchor_exposures),
            "test_exposures": list(self.test_exposures),
            "alpha2_mode": self.alpha2_mode,
            "alpha2_grid": list(self.alpha2_grid),
            "split": self.split,
            "seed": self.seed,
        }


@dataclass
class MetricReport:
    """Per-image metric rows plus aggregates and provenance."""

    experiment_id: str
    rows: List[Dict] = field(default_factory=list)
    reference: Dict = field(default_factory=dict)
    config_fingerprint: str = ""
    seeds: Dict = field(default_factory=dict)

    def add_row(self, **kw) -> None:
        missing = set(REPORT_COLUMNS) - kw.keys()
        if missing:
            raise ShapeError(f"report row missing columns: {sorted(missing)}")
        self.rows.append({k: kw[k] for k in REPORT_COLUMNS})

    def mean(self, model: str, exposure_s: float, metric: str = "psnr") -> float:
        vals = [
            r[metric]
            for r in self.rows
            if r["model"] == model and r["exposure_s"] == exposure_s
        ]
        if not vals:
            raise AssetError(f"no rows for model={model!r} exposure={exposure_s}")
        return float(np.mean(vals))

    def aggregates(self) -> List[Dict]:
        keys = sorted({(r["model"], r["exposure_s"]) for r in self.rows})
        out = []
        for model, exp in keys:
            out.append(
                {
                    "model": model,
                    "exposure_s": exp,
                    "mean_psnr": self.mean(model, exp, "psnr"),
                    "mean_ssim": self.mean(model, exp, "ssim"),
                    "images": sum(
                        1 for r in self.rows if r["model"] == model and r["exposure_s"] == exp
                    ),
                }
            )
        return out

    # -- serialization ------------------------------------------------------

    def to_text(self) -> str:
        """Aligned-column table with a machine-parseable header."""
        buf = io.StringIO()
        buf.write(f"# luxtune-report 1 experiment={self.experiment_id}\n")
        buf.write(f"# fingerprint={self.config_fingerprint}\n")
        for key, val in sorted(self.seeds.items()):
            buf.write(f"# seed {key}={val}\n")
        for key, val in sorted(self.reference.items()):
            buf.write(f"# reference {key}={val}\n")
        widths = {c: max(len(c), 12) for c in REPORT_COLUMNS}
        buf.write("  ".join(c.ljust(widths[c]) for c in REPORT_COLUMNS).rstrip() + "\n")
        for row in self.rows:
            cells = []
            for c in REPORT_COLUMNS:
                v = row[c]
                cells.append((f"{v:.4f}" if isinstance(v, float) else str(v)).ljust(widths[c]))
            buf.write("  ".join(cells).rstrip() + "\n")
        buf.write("\n# aggregates\n")
        for agg in self.aggregates():
            buf.write(
                f"{agg['model'].ljust(24)}  {agg['exposure_s']:<10.4f}  "
                f"psnr={agg['mean_psnr']:.4f}  ssim={agg['mean_ssim']:.4f}  "
                f"n={agg['images']}\n"
            )
        return buf.getvalue()

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in self.rows:
            writer.writerow(row)
        return buf.getvalue()

    def write(self, stem: Path) -> Tuple[Path, Path]:
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        txt = stem.with_suffix(".txt")
        csvp = stem.with_suffix(".csv")
        txt.write_text(self.to_text(), encoding="utf-8")
        csvp.write_text(self.to_csv(), encoding="utf-8")
        return txt, csvp


def fingerprint(spec: ExperimentSpec, manifest: DatasetManifest, extra: Optional[Dict] = None) -> str:
    payload = {
        "spec": spec.fingerprint_payload(),
        "manifest": manifest.content_hash(),
        "extra": extra or {},
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def alpha2_for_exposure(target_s: float, low_anchor_s: float, high_anchor_s: float) -> float:
    """Log-linear knob mapping between the trained anchor exposures.

    The low anchor maps to 0 and the high one to 1; exposures outside the
    range extrapolate linearly in log time.
    """
    if low_anchor_s <= 0 or high_anchor_s <= low_anchor_s:
        raise ShapeError(f"bad anchors ({low_anchor_s}, {high_anchor_s})")
    return float(
        (np.log(target_s) - np.log(low_anchor_s))
        / (np.log(high_anchor_s) - np.log(low_anchor_s))
    )


# -- brightness-only baseline ------------------------------------------------


_G_KERNEL = np.array([[0, 1, 0], [1, 4, 1], [0, 1, 0]], dtype=np.float64)
_RB_KERNEL = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=np.float64)


def _interp_plane(values: np.ndarray, mask: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    num = _ndconvolve(values * mask, kernel, mode="constant")
    den = _ndconvolve(mask, kernel, mode="constant")
    return num / np.maximum(den, 1e-12)


def bilinear_demosaic(mosaic: np.ndarray) -> np.ndarray:
    """Naive bilinear demosaic of an RGGB mosaic to (3, H, W) linear RGB."""
    h, w = mosaic.shape
    m = mosaic.astype(np.float64)
    rm = np.zeros((h, w))
    gm = np.zeros((h, w))
    bm = np.zeros((h, w))
    rm[0::2, 0::2] = 1.0
    gm[0::2, 1::2] = 1.0
    gm[1::2, 0::2] = 1.0
    bm[1::2, 1::2] = 1.0
    r = _interp_plane(m, rm, _RB_KERNEL)
    g = _interp_plane(m, gm, _G_KERNEL)
    b = _interp_plane(m, bm, _RB_KERNEL)
    return np.stack([r, g, b]).astype(np.float32)


def brightness_only_baseline(packed: PackedRaw, alpha1: float) -> np.ndarray:
    """Amplify, clip, bilinear-demosaic and gamma-encode; no learning."""
    amplified = apply_brightness(packed, alpha1)
    mosaic = unpack_bayer(amplified).mosaic
    rgb = bilinear_demosaic(mosaic)
    return np.power(np.clip(rgb, 0.0, 1.0), GAMMA).astype(np.float32)


# -- evaluation cores ---------------------------------------------------------


def evaluate_fixed(
    report: MetricReport,
    model: EnhancerModel,
    label: str,
    scenes: Sequence[SceneRecord],
    input_exposure: float,
    test_exposure: float,
) -> None:
    """Fixed-output model evaluated at one test exposure (alpha1 only)."""
    a1 = exposure_ratio(input_exposure, test_exposure)
    for rec in scenes:
        packed = PackedRaw(rec.load_packed(input_exposure))
        gt = rec.load_gt_srgb(test_exposure)
        out = model.enhance(packed, TuningKnobs(alpha1=a1, alpha2=0.0))
        report.add_row(
            experiment=report.experiment_id,
            model=label,
            exposure_s=test_exposure,
            scene=rec.scene_id,
            alpha1=a1,
            alpha2=0.0,
            psnr=psnr(out, gt),
            ssim=ssim(out, gt),
        )


def evaluate_continuous(
    report: MetricReport,
    model: EnhancerModel,
    label: str,
    scenes: Sequence[SceneRecord],
    spec: ExperimentSpec,
    test_exposure: float,
) -> None:
    """Continuous model with alpha2 from the log-linear map or grid search."""
    low, high = spec.anchor_exposures
    a1 = exposure_ratio(spec.input_exposure, test_exposure)
    extended = spec.protocol == "D"
    for rec in scenes:
        packed = PackedRaw(rec.load_packed(spec.input_exposure))
        gt = rec.load_gt_srgb(test_exposure)
        if spec.alpha2_mode == "grid":
            best = None
            for a2 in spec.alpha2_grid:
                knobs = TuningKnobs(alpha1=a1, alpha2=float(a2), extended=extended)
                out = model.enhance(packed, knobs)
                score = psnr(out, gt)
                if best is None or score > best[0]:
                    best = (score, float(a2), out)
            score, a2, out = best
        else:
            a2 = alpha2_for_exposure(test_exposure, low, high)
            knobs = TuningKnobs(alpha1=a1, alpha2=a2, extended=extended)
            out = model.enhance(packed, knobs)
            score = psnr(out, gt)
        report.add_row(
            experiment=report.experiment_id,
            model=label,
            exposure_s=test_exposure,
            scene=rec.scene_id,
            alpha1=a1,
            alpha2=a2,
            psnr=score,
            ssim=ssim(out, gt),
        )


def evaluate_brightness_only(
    report: MetricReport,
    scenes: Sequence[SceneRecord],
    input_exposure: float,
    test_exposure: float,
) -> None:
    a1 = exposure_ratio(input_exposure, test_exposure)
    for rec in scenes:
        packed = PackedRaw(rec.load_packed(input_exposure))
        gt = rec.load_gt_srgb(test_exposure)
        out = brightness_only_baseline(packed, a1)
        report.add_row(
            experiment=report.experiment_id,
            model="brightness-only",
            exposure_s=test_exposure,
            scene=rec.scene_id,
            alpha1=a1,
            alpha2=0.0,
            psnr=psnr(out, gt),
            ssim=ssim(out, gt),
        )


def _missing(model_key: str, hint: str) -> AssetError:
    return AssetError(
        f"protocol requires the {model_key!r} checkpoint; produce it with: {hint}"
    )


def run_protocol(
    spec: ExperimentSpec,
    manifest: DatasetManifest,
    models: Mapping[str, EnhancerModel],
) -> MetricReport:
    """Run one of the A-D protocols over the manifest's evaluation split."""
    if spec.protocol not in PROTOCOLS:
        raise ShapeError(f"unknown protocol {spec.protocol!r}; expected one of {PROTOCOLS}")
    scenes = manifest.split(spec.split)
    report = MetricReport(
        experiment_id=f"protocol-{spec.protocol}",
        config_fingerprint=fingerprint(spec, manifest),
        seeds={"dataset": manifest.seed, "experiment": spec.seed},
    )

    if spec.protocol == "A":
        for target in spec.test_exposures:
            key = f"fixed@{target:g}"
            if key not in models:
                raise _missing(
                    key,
                    f"luxtune train --dataset {manifest.root} --target-exposure {target:g} "
                    f"--out <ckpt>",
                )
        for target in spec.test_exposures:
            for test_exposure in spec.test_exposures:
                evaluate_fixed(
                    report,
                    models[f"fixed@{target:g}"],
                    f"fixed@{target:g}",
                    scenes,
                    spec.input_exposure,
                    test_exposure,
                )
    elif spec.protocol == "B":
        if "mixed" not in models:
            raise _missing(
                "mixed",
                f"luxtune train --dataset {manifest.root} --target-exposure "
                + ",".join(f"{t:g}" for t in spec.test_exposures)
                + " --out <ckpt>",
            )
        for test_exposure in spec.test_exposures:
            evaluate_fixed(
                report, models["mixed"], "mixed", scenes, spec.input_exposure, test_exposure
            )
    else:  # C, D or range-sweep
        if "continuous" not in models:
            low, high = spec.anchor_exposures
            raise _missing(
                "continuous",
                f"luxtune train --dataset {manifest.root} --target-exposure {low:g} "
                f"--out <base> && luxtune finetune --dataset {manifest.root} "
                f"--checkpoint <base> --final-exposure {high:g} --out <ckpt>",
            )
        if spec.protocol == "range-sweep":
            for test_exposure in spec.test_exposures:
                _sweep_grid(report, models["continuous"], scenes, spec, test_exposure)
        else:
            for test_exposure in spec.test_exposures:
                evaluate_continuous(
                    report, models["continuous"], "continuous", scenes, spec, test_exposure
                )
    return report


def _sweep_grid(
    report: MetricReport,
    model: EnhancerModel,
    scenes: Sequence[SceneRecord],
    spec: ExperimentSpec,
    test_exposure: float,
) -> None:
    """One row per (scene, alpha2 grid point) at a fixed test exposure."""
    a1 = exposure_ratio(spec.input_exposure, test_exposure)
    extended = any(a2 < 0.0 or a2 > 1.0 for a2 in spec.alpha2_grid)
    for rec in scenes:
        packed = PackedRaw(rec.load_packed(spec.input_exposure))
        gt = rec.load_gt_srgb(test_exposure)
        for a2 in spec.alpha2_grid:
            out = model.enhance(packed, TuningKnobs(alpha1=a1, alpha2=float(a2), extended=extended))
            report.add_row(
                experiment=report.experiment_id,
                model=f"sweep@a2={a2:g}",
                exposure_s=test_exposure,
                scene=rec.scene_id,
                alpha1=a1,
                alpha2=float(a2),
                psnr=psnr(out, gt),
                ssim=ssim(out, gt),
            )


# -- ablations ----------------------------------------------------------------


def ablate_filter_size(
    manifest: DatasetManifest,
    base_model_loader,
    schedule,
    sizes: Sequence[int] = (1, 3, 5, 7),
    input_exposure: float = 0.1,
    final_exposure: float = 10.0,
    test_exposure: float = 5.0,
) -> MetricReport:
    """Fine-tune one modulation variant per filter size, evaluate at the
    unseen middle exposure.

    ``base_model_loader`` returns a fresh copy of the trained base model
    per call (each variant fine-tunes from the same starting point).
    """
    from .training import finetune_modulation

    spec = ExperimentSpec(
        protocol="C",
        input_exposure=input_exposure,
        anchor_exposures=(1.0, final_exposure),
        test_exposures=(test_exposure,),
        alpha2_mode="loglinear",
        seed=schedule.seed,
    )
    report = MetricReport(
        experiment_id="ablation-filter",
        config_fingerprint=fingerprint(spec, manifest, {"sizes": list(sizes)}),
        seeds={"dataset": manifest.seed, "train": schedule.seed},
        reference={f"fullscale_psnr_{k}x{k}": v for k, v in FULLSCALE_FILTER_PSNR.items()},
    )
    scenes = manifest.split(spec.split)
    for size in sizes:
        model = base_model_loader().insert_modulation(filter_size=size)
        model, _ = finetune_modulation(model, manifest, input_exposure, final_exposure, schedule)
        low = model.anchors[0][0] * input_exposure  # low-anchor exposure in seconds
        var_spec = ExperimentSpec(
            protocol="C",
            input_exposure=input_exposure,
            anchor_exposures=(low, final_exposure),
            test_exposures=(test_exposure,),
            alpha2_mode="loglinear",
            seed=schedule.seed,
        )
        evaluate_continuous(report, model, f"filter-{size}x{size}", scenes, var_spec, test_exposure)
    return report


def ablate_direction(
    manifest: DatasetManifest,
    make_base_and_finetune,
    low_exposure: float = 1.0,
    high_exposure: float = 10.0,
    input_exposure: float = 0.1,
    test_exposure: float = 5.0,
    seed: int = 0,
) -> MetricReport:
    """Compare forward (base at low, fine-tune to high) against backward
    (base at high, fine-tune to low) tuning at the interior exposure.

    ``make_base_and_finetune(base_exposure, final_exposure)`` trains both
    stages with identical seeds/config and returns the continuous model.
    """
    report = MetricReport(
        experiment_id="ablation-direction",
        seeds={"dataset": manifest.seed, "train": seed},
        reference={
            f"fullscale_psnr_{k}": v for k, v in FULLSCALE_DIRECTION_PSNR.items()
        },
    )
    scenes = manifest.split("test")
    runs = {
        "forward": (low_exposure, high_exposure),
        "backward": (high_exposure, low_exposure),
    }
    for label, (base_exp, final_exp) in runs.items():
        model = make_base_and_finetune(base_exp, final_exp)
        anchors = sorted([base_exp, final_exp])
        spec = ExperimentSpec(
            protocol="C",
            input_exposure=input_exposure,
            anchor_exposures=(anchors[0], anchors[1]),
            test_exposures=(test_exposure,),
            alpha2_mode="grid",
            seed=seed,
        )
        evaluate_continuous(report, model, label, scenes, spec, test_exposure)
    report.config_fingerprint = fingerprint(spec, manifest, {"runs": sorted(runs)})
    return report
