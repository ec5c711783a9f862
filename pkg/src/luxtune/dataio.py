"""Dataset directory layout and binary file formats.

A dataset directory contains:

    manifest.lxm                 UTF-8 manifest, explicit key=value fields
    scene_<id>_exp_<ms>.lxrw     raw Bayer mosaic per exposure time
    scene_<id>_gt.lxpm           ground-truth sRGB at the reference exposure

``.lxrw`` layout (little-endian): magic ``LXRW``, u32 version, u32 width,
u32 height, f32 black_level, then height*width float32 values row-major.

``.lxpm`` (portable float map): magic ``LXPM``, u32 version, u32 channels,
u32 width, u32 height, then channels*height*width float32 values.

Ground truth at a shorter exposure follows from the stored reference
rendering by an exact power-law scale (see ``sensor.srgb_at_exposure``),
so one ``_gt`` file serves every target exposure.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from .errors import AssetError, FormatError, ShapeError
from .rawproc import RawImage, pack_bayer
from .sensor import (
    DEFAULT_BLACK_LEVEL,
    EXPOSURE_TIMES_S,
    NOISE_PARAM_POOL,
    REFERENCE_EXPOSURE_S,
    NoiseParams,
    expose,
    generate_scene,
    mosaic,
    render_reference_srgb,
    sample_noisy_raw,
    srgb_at_exposure,
)

RAW_MAGIC = b"LXRW"
FLOATMAP_MAGIC = b"LXPM"
FORMAT_VERSION = 1

MANIFEST_NAME = "manifest.lxm"
MANIFEST_HEADER = "luxtune-dataset"

SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.7, 0.1, 0.2)


def write_raw(path: Path, raw: RawImage) -> None:
    h, w = raw.mosaic.shape
    payload = np.ascontiguousarray(raw.mosaic, dtype="<f4")
    try:
        with open(path, "wb") as f:
            f.write(RAW_MAGIC)
            f.write(struct.pack("<IIIf", FORMAT_VERSION, w, h, raw.black_level))
            f.write(payload.tobytes())
    except OSError as e:
        raise AssetError(f"cannot write raw file {path}: {e}") from e


def read_raw(path: Path) -> RawImage:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise AssetError(f"cannot read raw file {path}: {e}") from e
    if blob[:4] != RAW_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {RAW_MAGIC!r}")
    if len(blob) < 20:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes)")
    version, w, h, black = struct.unpack("<IIIf", blob[4:20])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported raw version {version}")
    expected = 20 + 4 * w * h
    if len(blob) != expected:
        raise FormatError(f"{path}: size {len(blob)} does not match {w}x{h} payload ({expected})")
    data = np.frombuffer(blob, dtype="<f4", offset=20).reshape(h, w).copy()
    return RawImage(mosaic=data, black_level=float(black))


def write_floatmap(path: Path, data: np.ndarray) -> None:
    if data.ndim != 3:
        raise ShapeError(f"floatmap payload must be (C, H, W), got {data.shape}")
    c, h, w = data.shape
    payload = np.ascontiguousarray(data, dtype="<f4")
    try:
        with open(path, "wb") as f:
            f.write(FLOATMAP_MAGIC)
            f.write(struct.pack("<IIII", FORMAT_VERSION, c, w, h))
            f.write(payload.tobytes())
    except OSError as e:
        raise AssetError(f"cannot write floatmap {path}: {e}") from e


def read_floatmap(path: Path) -> np.ndarray:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise AssetError(f"cannot read floatmap {path}: {e}") from e
    if blob[:4] != FLOATMAP_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {FLOATMAP_MAGIC!r}")
    if len(blob) < 20:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes)")
    version, c, w, h = struct.unpack("<IIII", blob[4:20])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported floatmap version {version}")
    expected = 20 + 4 * c * h * w
    if len(blob) != expected:
        raise FormatError(f"{path}: size {len(blob)} does not match (C,H,W)=({c},{h},{w})")
    return np.frombuffer(blob, dtype="<f4", offset=20).reshape(c, h, w).copy()


@dataclass(frozen=True)
class DatasetConfig:
    """Parameters for the synthetic dataset builder."""

    scenes: int = 60
    width: int = 128
    height: int = 128
    seed: int = 2024
    black_level: float = DEFAULT_BLACK_LEVEL
    exposures_s: Tuple[float, ...] = EXPOSURE_TIMES_S
    reference_exposure_s: float = REFERENCE_EXPOSURE_S

    def __post_init__(self):
        if self.scenes < 10:
            raise ShapeError(f"need at least 10 scenes for meaningful splits, got {self.scenes}")
        if self.width % 2 or self.height % 2:
            raise ShapeError(f"mosaic dims must be even, got {self.width}x{self.height}")


@dataclass(frozen=True)
class SceneRecord:
    """One scene of the manifest: identity, sensor settings, file names."""

    scene_id: str
    style: str
    scene_seed: int
    noise: NoiseParams
    split: str
    root: Path
    exposures_s: Tuple[float, ...]
    reference_exposure_s: float
    black_level: float

    def raw_path(self, exposure_s: float) -> Path:
        return self.root / f"scene_{self.scene_id}_exp_{exposure_ms(exposure_s)}.lxrw"

    def gt_path(self) -> Path:
        return self.root / f"scene_{self.scene_id}_gt.lxpm"

    def load_raw(self, exposure_s: float) -> RawImage:
        if exposure_s not in self.exposures_s:
            raise AssetError(
                f"scene {self.scene_id} has no {exposure_s}s exposure; "
                f"available: {list(self.exposures_s)}"
            )
        return read_raw(self.raw_path(exposure_s))

    def load_packed(self, exposure_s: float) -> np.ndarray:
        """Black-level subtracted 4-channel packed input for the network."""
        return pack_bayer(self.load_raw(exposure_s)).data

    def load_gt_srgb(self, exposure_s: float) -> np.ndarray:
        reference = read_floatmap(self.gt_path())
        return srgb_at_exposure(reference, exposure_s, self.reference_exposure_s)


def exposure_ms(exposure_s: float) -> int:
    return int(round(exposure_s * 1000))


@dataclass
class DatasetManifest:
    """Parsed manifest plus helpers over the scene records."""

    root: Path
    version: int
    seed: int
    width: int
    height: int
    black_level: float
    exposures_s: Tuple[float, ...]
    reference_exposure_s: float
    scenes: List[SceneRecord] = field(default_factory=list)

    def split(self, name: str) -> List[SceneRecord]:
        if name not in SPLITS:
            raise AssetError(f"unknown split {name!r}; expected one of {SPLITS}")
        return [s for s in self.scenes if s.split == name]

    def split_counts(self) -> Dict[str, int]:
        return {name: len(self.split(name)) for name in SPLITS}

    def content_hash(self) -> str:
        return hashlib.sha256((self.root / MANIFEST_NAME).read_bytes()).hexdigest()


def _spread_indices(n: int, k: int) -> List[int]:
    """k indices spread evenly over range(n) (deterministic, no RNG)."""
    if k <= 0:
        return []
    return sorted({int((i + 0.5) * n / k) for i in range(k)})


def assign_splits(n: int) -> List[str]:
    """70/10/20 split assignment over n interleaved-style scenes.

    Test and val indices are spread evenly across the (style-alternating)
    scene order, which keeps styles balanced inside each split.
    """
    n_test = round(SPLIT_FRACTIONS[2] * n)
    n_val = round(SPLIT_FRACTIONS[1] * n)
    splits = ["train"] * n
    test_idx = _spread_indices(n, n_test)
    for i in test_idx:
        splits[i] = "test"
    remaining = [i for i in range(n) if splits[i] == "train"]
    for j in _spread_indices(len(remaining), n_val):
        splits[remaining[j]] = "val"
    return splits


def build_dataset(config: DatasetConfig, out_dir: Path) -> DatasetManifest:
    """Generate scenes, expose, add sensor noise, and write the dataset.

    Fully deterministic: the same config reproduces byte-identical files.
    Styles alternate scene by scene for equal representation, and the
    split assignment is stratified over that ordering.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    styles = ["indoor" if i % 2 == 0 else "outdoor" for i in range(config.scenes)]
    splits = assign_splits(config.scenes)

    lines = [
        f"{MANIFEST_HEADER} {FORMAT_VERSION}",
        f"seed {config.seed}",
        f"scenes {config.scenes}",
        f"mosaic_width {config.width}",
        f"mosaic_height {config.height}",
        f"black_level {config.black_level!r}",
        f"reference_exposure_ms {exposure_ms(config.reference_exposure_s)}",
        "exposures_ms " + ",".join(str(exposure_ms(e)) for e in config.exposures_s),
    ]

    records: List[SceneRecord] = []
    for i in range(config.scenes):
        scene_id = f"{i:04d}"
        ss = np.random.SeedSequence([config.seed, i])
        scene_seed = int(ss.generate_state(1)[0])
        pick = np.random.default_rng(np.random.SeedSequence([config.seed, i, 7]))
        noise = NOISE_PARAM_POOL[int(pick.integers(len(NOISE_PARAM_POOL)))]

        scene = generate_scene(scene_seed, config.width, config.height, styles[i])
        signal = mosaic(scene)
        record = SceneRecord(
            scene_id=scene_id,
            style=styles[i],
            scene_seed=scene_seed,
            noise=noise,
            split=splits[i],
            root=out_dir,
            exposures_s=config.exposures_s,
            reference_exposure_s=config.reference_exposure_s,
            black_level=config.black_level,
        )

        for k, exp_s in enumerate(config.exposures_s):
            exposed = expose(signal, exp_s, config.reference_exposure_s)
            draw_seed = int(
                np.random.SeedSequence([config.seed, i, 100 + k]).generate_state(1)[0]
            )
            noisy = sample_noisy_raw(exposed, noise, draw_seed, black_level=config.black_level)
            write_raw(record.raw_path(exp_s), noisy)

        write_floatmap(record.gt_path(), render_reference_srgb(scene))
        records.append(record)
        lines.append(
            f"scene {scene_id} style={styles[i]} seed={scene_seed} split={splits[i]} "
            f"sigma_r={noise.sigma_r!r} g_a={noise.g_a!r} g_d={noise.g_d!r}"
        )

    lines.append("end")
    (out_dir / MANIFEST_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return DatasetManifest(
        root=out_dir,
        version=FORMAT_VERSION,
        seed=config.seed,
        width=config.width,
        height=config.height,
        black_level=config.black_level,
        exposures_s=config.exposures_s,
        reference_exposure_s=config.reference_exposure_s,
        scenes=records,
    )


def load_manifest(root: Path) -> DatasetManifest:
    root = Path(root)
    path = root / MANIFEST_NAME
    if not path.exists():
        raise AssetError(f"no {MANIFEST_NAME} in {root}")
    text = path.read_text(encoding="utf-8").strip().splitlines()
    if not text or not text[0].startswith(MANIFEST_HEADER):
        raise FormatError(f"{path}: missing '{MANIFEST_HEADER}' header line")
    version = int(text[0].split()[1])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported manifest version {version}")

    fields: Dict[str, str] = {}
    scene_lines: List[str] = []
    for line in text[1:]:
        if line == "end":
            break
        key, _, rest = line.partition(" ")
        if key == "scene":
            scene_lines.append(rest)
        else:
            fields[key] = rest

    try:
        exposures_s = tuple(int(v) / 1000.0 for v in fields["exposures_ms"].split(","))
        reference_s = int(fields["reference_exposure_ms"]) / 1000.0
        manifest = DatasetManifest(
            root=root,
            version=version,
            seed=int(fields["seed"]),
            width=int(fields["mosaic_width"]),
            height=int(fields["mosaic_height"]),
            black_level=float(fields["black_level"]),
            exposures_s=exposures_s,
            reference_exposure_s=reference_s,
        )
        for rest in scene_lines:
            parts = rest.split()
            scene_id = parts[0]
            kv = dict(p.split("=", 1) for p in parts[1:])
            manifest.scenes.append(
                SceneRecord(
                    scene_id=scene_id,
                    style=kv["style"],
                    scene_seed=int(kv["seed"]),
                    noise=NoiseParams(
                        sigma_r=float(kv["sigma_r"]),
                        g_a=float(kv["g_a"]),
                        g_d=float(kv["g_d"]),
                    ),
                    split=kv["split"],
                    root=root,
                    exposures_s=exposures_s,
                    reference_exposure_s=reference_s,
                    black_level=float(fields["black_level"]),
                )
            )
    except (KeyError, ValueError, IndexError) as e:
        raise FormatError(f"{path}: malformed manifest field ({e})") from e

    expected = int(fields.get("scenes", len(manifest.scenes)))
    if expected != len(manifest.scenes):
        raise FormatError(
            f"{path}: manifest declares {expected} scenes but lists {len(manifest.scenes)}"
        )
    return manifest
