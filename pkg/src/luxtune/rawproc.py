"""Deterministic raw-domain transforms.

Bayer packing, black-level subtraction and brightness amplification with
the exposure-ratio truncation and clipping rules. All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import KnobRangeError, ShapeError

MAX_BRIGHTNESS_RATIO = 100.0

ALPHA2_RANGE = (0.0, 1.0)
ALPHA2_EXTENDED_RANGE = (-0.5, 1.5)

CFA_RGGB = "RGGB"


@dataclass(frozen=True)
class RawImage:
    """Single-channel Bayer mosaic of linear intensities.

    Values are normalized floats: 1.0 is the white point of the black-level
    subtracted signal, so stored values may reach 1.0 + black_level.
    """

    mosaic: np.ndarray
    black_level: float = 0.0
    cfa_layout: str = CFA_RGGB

    def __post_init__(self):
        if self.mosaic.ndim != 2:
            raise ShapeError(f"raw mosaic must be 2-D, got {self.mosaic.ndim} dims")
        h, w = self.mosaic.shape
        if h % 2 or w % 2:
            raise ShapeError(f"raw mosaic dims must be even, got {h}x{w}")
        if not 0.0 <= self.black_level < 1.0:
            raise ShapeError(f"black_level must be in [0, 1), got {self.black_level}")
        if self.cfa_layout != CFA_RGGB:
            raise ShapeError(f"unsupported CFA layout {self.cfa_layout!r}; only RGGB is handled")

    @property
    def height(self) -> int:
        return self.mosaic.shape[0]

    @property
    def width(self) -> int:
        return self.mosaic.shape[1]


@dataclass(frozen=True)
class PackedRaw:
    """4 x (H/2) x (W/2) tensor of Bayer sites, channel order (R, G1, B, G2)."""

    data: np.ndarray
    black_level: float = 0.0

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[0] != 4:
            raise ShapeError(f"packed raw must be (4, H/2, W/2), got {self.data.shape}")

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def mosaic_shape(self) -> Tuple[int, int]:
        return 2 * self.data.shape[1], 2 * self.data.shape[2]


@dataclass(frozen=True)
class TuningKnobs:
    """Runtime user controls: brightness ratio and enhancement level."""

    alpha1: float
    alpha2: float = 0.0
    extended: bool = False

    @property
    def alpha2_bounds(self) -> Tuple[float, float]:
        return ALPHA2_EXTENDED_RANGE if self.extended else ALPHA2_RANGE

    def validate(self) -> "TuningKnobs":
        if not 1.0 <= self.alpha1 <= MAX_BRIGHTNESS_RATIO:
            raise KnobRangeError(
                f"alpha1={self.alpha1} outside legal range "
                f"[1, {MAX_BRIGHTNESS_RATIO:g}] (exposure ratio is truncated at "
                f"{MAX_BRIGHTNESS_RATIO:g})",
                1.0,
                MAX_BRIGHTNESS_RATIO,
            )
        lo, hi = self.alpha2_bounds
        if not lo <= self.alpha2 <= hi:
            raise KnobRangeError(
                f"alpha2={self.alpha2} outside legal range [{lo:g}, {hi:g}]", lo, hi
            )
        return self


def pack_bayer(raw: RawImage) -> PackedRaw:
    """Pack an RGGB mosaic into 4 half-resolution channels.

    The black level is subtracted and the result clamped at zero. Channel
    order is (R, G1, B, G2) where G1 is the green site sharing a row with
    R and G2 the one sharing a row with B.
    """
    m = raw.mosaic.astype(np.float32, copy=False)
    r = m[0::2, 0::2]
    g1 = m[0::2, 1::2]
    g2 = m[1::2, 0::2]
    b = m[1::2, 1::2]
    packed = np.stack([r, g1, b, g2], axis=0)
    if raw.black_level:
        packed = packed - np.float32(raw.black_level)
    packed = np.maximum(packed, 0.0, dtype=np.float32)
    return PackedRaw(data=packed, black_level=raw.black_level)


def unpack_bayer(packed: PackedRaw) -> RawImage:
    """Exact inverse of :func:`pack_bayer` for black_level 0."""
    r, g1, b, g2 = packed.data
    h2, w2 = r.shape
    mosaic = np.empty((2 * h2, 2 * w2), dtype=packed.data.dtype)
    mosaic[0::2, 0::2] = r
    mosaic[0::2, 1::2] = g1
    mosaic[1::2, 0::2] = g2
    mosaic[1::2, 1::2] = b
    return RawImage(mosaic=mosaic, black_level=0.0)


def apply_brightness(packed: PackedRaw, alpha1: float, clip: bool = True) -> PackedRaw:
    """Multiply by the brightness ratio, truncated at 100, then clip to [0, 1].

    ``clip=False`` is an ablation toggle that skips the clip on the tensor
    entering the network; the final sRGB output is clipped regardless.
    """
    if alpha1 <= 0:
        raise KnobRangeError(f"alpha1 must be positive, got {alpha1}", 1.0, MAX_BRIGHTNESS_RATIO)
    gain = np.float32(min(alpha1, MAX_BRIGHTNESS_RATIO))
    out = packed.data * gain
    if clip:
        out = np.clip(out, 0.0, 1.0)
    return PackedRaw(data=out.astype(np.float32, copy=False), black_level=packed.black_level)


def exposure_ratio(input_exposure: float, target_exposure: float) -> float:
    """target/input exposure-time ratio, truncated at 100."""
    if input_exposure <= 0 or target_exposure <= 0:
        raise KnobRangeError(
            f"exposure times must be positive, got {input_exposure} and {target_exposure}",
            0.0,
            float("inf"),
        )
    return min(target_exposure / input_exposure, MAX_BRIGHTNESS_RATIO)
