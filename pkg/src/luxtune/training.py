"""Two-stage training: base network first, then modulation fine-tuning.

Training pairs are (amplified short-exposure packed raw, ground-truth sRGB
at the target exposure). Patches are cropped on the packed grid with the
sRGB crop indices doubled, then rotated/flipped identically. Loss is mean
absolute error under Adam, with a two-phase learning rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dataio import DatasetManifest, SceneRecord
from .engine import AdamState, Tensor, adam_step, l1_loss
from .errors import ShapeError, TrainingDiverged
from .network import EnhancerModel
from .rawproc import PackedRaw, apply_brightness, exposure_ratio

METRICS_LOG_HEADER = "# epoch loss lr"


@dataclass(frozen=True)
class TrainSchedule:
    """Patching, augmentation and epoch layout for one training stage.

    ``patch_size`` is in packed-grid units (half the mosaic resolution);
    the full-scale recipe uses 512-pixel patches, the desk-scale default
    covers the whole 64x64 packed image.
    """

    patch_size: int = 64
    epochs_high: int = 150
    epochs_low: int = 50
    finetune_epochs: int = 150
    lr_high: float = 1e-4
    lr_low: float = 1e-5
    rotate: bool = True
    flip: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs_high <= 0 or self.epochs_low < 0 or self.finetune_epochs <= 0:
            raise ShapeError("epoch counts must be positive")
        if self.patch_size < 2 or self.patch_size % 2:
            raise ShapeError(f"patch_size must be even and >= 2, got {self.patch_size}")


class MetricsLog:
    """Plain-text training log: one 'epoch loss lr' line per epoch."""

    def __init__(self, path: Optional[Path]):
        self.path = Path(path) if path else None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(METRICS_LOG_HEADER + "\n", encoding="utf-8")

    def append(self, epoch: int, loss: float, lr: float) -> None:
        if self.path:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(f"{epoch} {loss:.8f} {lr:.3e}\n")


def _crop_pair(
    packed: np.ndarray,
    target: np.ndarray,
    patch: int,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    _, h, w = packed.shape
    if patch > h or patch > w:
        raise ShapeError(f"patch {patch} exceeds packed image {h}x{w}")
    y0 = int(rng.integers(0, h - patch + 1))
    x0 = int(rng.integers(0, w - patch + 1))
    pc = packed[:, y0 : y0 + patch, x0 : x0 + patch]
    tc = target[:, 2 * y0 : 2 * (y0 + patch), 2 * x0 : 2 * (x0 + patch)]
    return pc, tc


def _augment_pair(
    packed: np.ndarray,
    target: np.ndarray,
    schedule: TrainSchedule,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    if schedule.rotate:
        k = int(rng.integers(0, 4))
        if k:
            packed = np.rot90(packed, k, axes=(1, 2))
            target = np.rot90(target, k, axes=(1, 2))
    if schedule.flip:
        if rng.random() < 0.5:
            packed = np.flip(packed, axis=1)
            target = np.flip(target, axis=1)
        if rng.random() < 0.5:
            packed = np.flip(packed, axis=2)
            target = np.flip(target, axis=2)
    return np.ascontiguousarray(packed), np.ascontiguousarray(target)


def _training_pair(
    record: SceneRecord,
    input_exposure: float,
    target_exposure: float,
    schedule: TrainSchedule,
    rng: np.random.Generator,
    cache: Dict[Tuple[str, float], np.ndarray],
) -> Tuple[np.ndarray, np.ndarray]:
    key_in = (record.scene_id, input_exposure)
    if key_in not in cache:
        cache[key_in] = record.load_packed(input_exposure)
    key_gt = (record.scene_id, -target_exposure)
    if key_gt not in cache:
        cache[key_gt] = record.load_gt_srgb(target_exposure)

    ratio = exposure_ratio(input_exposure, target_exposure)
    amplified = apply_brightness(PackedRaw(cache[key_in]), ratio).data
    packed, target = _crop_pair(amplified, cache[key_gt], schedule.patch_size, rng)
    return _augment_pair(packed, target, schedule, rng)


def _run_epochs(
    model: EnhancerModel,
    scenes: Sequence[SceneRecord],
    input_exposure: float,
    target_exposures: Sequence[float],
    schedule: TrainSchedule,
    phases: Sequence[Tuple[int, float]],
    log: MetricsLog,
) -> List[float]:
    rng = np.random.default_rng(schedule.seed)
    cache: Dict[Tuple[str, float], np.ndarray] = {}
    state = AdamState()
    losses: List[float] = []
    epoch = 0
    for n_epochs, lr in phases:
        state.lr = lr
        for _ in range(n_epochs):
            epoch += 1
            epoch_loss = 0.0
            order = rng.permutation(len(scenes))
            for idx in order:
                record = scenes[int(idx)]
                target_exp = float(target_exposures[int(rng.integers(len(target_exposures)))])
                packed, target = _training_pair(
                    record, input_exposure, target_exp, schedule, rng, cache
                )
                pred = model.forward_train(packed[None, ...])
                loss = l1_loss(pred, Tensor(target[None, ...]))
                value = float(loss.data)
                if not np.isfinite(value):
                    raise TrainingDiverged(epoch, f"loss={value} on scene {record.scene_id}")
                loss.backward()
                trainable = model.trainable()
                grads = {
                    name: p.grad for name, p in trainable.items() if p.grad is not None
                }
                model.update_params(adam_step(trainable, grads, state))
                epoch_loss += value
            mean_loss = epoch_loss / max(len(scenes), 1)
            losses.append(mean_loss)
            log.append(epoch, mean_loss, lr)
    return losses


def train_base(
    model: EnhancerModel,
    manifest: DatasetManifest,
    input_exposure: float,
    target_exposures: Sequence[float] | float,
    schedule: TrainSchedule,
    log_path: Optional[Path] = None,
) -> Tuple[EnhancerModel, List[float]]:
    """Train the base network (no modulation) toward one or more targets.

    A single target is the standard recipe; several targets yield the
    mixed-exposure fixed baseline, sampling one target per step. Records
    an (alpha1, 0) anchor per target.
    """
    if model.has_modulation:
        raise ShapeError("base training must run before modulation is inserted")
    targets = [target_exposures] if np.isscalar(target_exposures) else list(target_exposures)
    for t in targets:
        if t < input_exposure:
            raise ShapeError(f"target exposure {t}s is below input exposure {input_exposure}s")
    scenes = manifest.split("train")
    phases = [(schedule.epochs_high, schedule.lr_high), (schedule.epochs_low, schedule.lr_low)]
    losses = _run_epochs(model, scenes, input_exposure, targets, schedule, phases, MetricsLog(log_path))
    model.anchors = [(exposure_ratio(input_exposure, t), 0.0) for t in targets]
    return model, losses


def finetune_modulation(
    model: EnhancerModel,
    manifest: DatasetManifest,
    input_exposure: float,
    final_exposure: float,
    schedule: TrainSchedule,
    log_path: Optional[Path] = None,
) -> Tuple[EnhancerModel, List[float]]:
    """Fine-tune only the modulation layers toward the final exposure.

    The enhancement level is pinned at 1 for the whole stage; intermediate
    levels are never trained, they are inference-time interpolation. Base
    parameters are asserted byte-identical afterwards.
    """
    if not model.has_modulation:
        raise ShapeError("insert modulation layers before fine-tuning")
    base_names = sorted(model.frozen)
    before = model.checksums(base_names)

    scenes = manifest.split("train")
    phases = [(schedule.finetune_epochs, schedule.lr_high)]
    losses = _run_epochs(
        model, scenes, input_exposure, [final_exposure], schedule, phases, MetricsLog(log_path)
    )

    after = model.checksums(base_names)
    changed = [n for n in base_names if before[n] != after[n]]
    if changed:
        raise ShapeError(f"frozen base parameters changed during fine-tuning: {changed[:5]}")
    model.anchors = list(model.anchors) + [
        (exposure_ratio(input_exposure, final_exposure), 1.0)
    ]
    return model, losses
