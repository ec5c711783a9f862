"""Synthetic multi-exposure low-light sensor simulation.

Produces procedurally generated linear-radiance scenes, mosaics them onto
an RGGB Bayer grid, scales them per exposure time and corrupts them with
heteroscedastic Gaussian sensor noise:

    y ~ Normal(x, beta_read + beta_shot * x)
    beta_read = g_d^2 * sigma_r^2,  beta_shot = g_d * g_a

where sigma_r is the readout std dev, g_a the analog gain and g_d the
digital gain. Everything is deterministic given its seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .rawproc import RawImage

EXPOSURE_TIMES_S = (0.1, 0.5, 1.0, 5.0, 10.0)
REFERENCE_EXPOSURE_S = 10.0

GAMMA = 1.0 / 2.2

DEFAULT_BLACK_LEVEL = 0.03125

STYLES = ("indoor", "outdoor")

# Target mean luminance per style; indoor scenes are lit brighter than
# outdoor night scenes. Checked by the generator tests.
STYLE_MEAN_LUMINANCE = {"indoor": 0.42, "outdoor": 0.28}


@dataclass(frozen=True)
class NoiseParams:
    """Sensor noise description; the betas are always derived, never stored."""

    sigma_r: float
    g_a: float
    g_d: float

    def __post_init__(self):
        if self.sigma_r < 0:
            raise ShapeError(f"sigma_r must be >= 0, got {self.sigma_r}")
        # g_a == 0 is permitted as the degenerate noise-free sensor.
        if self.g_a < 0 or self.g_d <= 0:
            raise ShapeError(f"bad gains: g_a={self.g_a} (>= 0), g_d={self.g_d} (> 0)")

    @property
    def beta_read(self) -> float:
        return self.g_d**2 * self.sigma_r**2

    @property
    def beta_shot(self) -> float:
        return self.g_d * self.g_a

    def variance(self, x):
        return self.beta_read + self.beta_shot * np.asarray(x)


# Pool the dataset generator draws per-scene sensor settings from. The
# values are arbitrary but calibrated so a 0.1s capture has shadow SNR
# below 3 dB (scenes are "completely dark" at the shortest exposure).
NOISE_PARAM_POOL = (
    NoiseParams(sigma_r=1.0e-3, g_a=1.0e-4, g_d=1.0),
    NoiseParams(sigma_r=8.0e-4, g_a=6.0e-5, g_d=1.25),
    NoiseParams(sigma_r=1.5e-3, g_a=1.6e-4, g_d=1.0),
    NoiseParams(sigma_r=1.2e-3, g_a=8.0e-5, g_d=1.6),
    NoiseParams(sigma_r=7.0e-4, g_a=1.2e-4, g_d=2.0),
)


@dataclass(frozen=True)
class CleanScene:
    """Linear radiance image (3, H, W) in [0, 1], the pre-sensor signal."""

    radiance: np.ndarray
    seed: int
    style: str

    def __post_init__(self):
        if self.radiance.ndim != 3 or self.radiance.shape[0] != 3:
            raise ShapeError(f"scene radiance must be (3, H, W), got {self.radiance.shape}")
        if self.style not in STYLES:
            raise ShapeError(f"unknown scene style {self.style!r}; expected one of {STYLES}")

    @property
    def height(self) -> int:
        return self.radiance.shape[1]

    @property
    def width(self) -> int:
        return self.radiance.shape[2]


def _smooth_field(rng: np.random.Generator, h: int, w: int, orders: int = 3) -> np.ndarray:
    """Random low-order 2-D cosine mixture in roughly [-1, 1]."""
    yy = np.linspace(0.0, 1.0, h, dtype=np.float64)[:, None]
    xx = np.linspace(0.0, 1.0, w, dtype=np.float64)[None, :]
    field = np.zeros((h, w))
    for _ in range(orders):
        fy, fx = rng.uniform(0.3, 2.2, size=2)
        py, px = rng.uniform(0.0, 2 * np.pi, size=2)
        amp = rng.uniform(0.3, 1.0)
        field += amp * np.cos(2 * np.pi * fy * yy + py) * np.cos(2 * np.pi * fx * xx + px)
    m = np.abs(field).max()
    return field / m if m > 0 else field


def _band_limited_texture(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """White noise low-passed with a few box blurs; unit peak amplitude."""
    noise = rng.standard_normal((h, w))
    k = 5
    kernel = np.ones(k) / k
    for axis in (0, 1):
        noise = np.apply_along_axis(lambda v: np.convolve(v, kernel, mode="same"), axis, noise)
    peak = np.abs(noise).max()
    return noise / peak if peak > 0 else noise


def generate_scene(seed: int, width: int, height: int, style: str = "indoor") -> CleanScene:
    """Deterministic procedural radiance scene occupying the full [0, 1] range.

    Composition: per-channel smooth gradients, a set of flat geometric
    shapes with colors stratified across the range, band-limited texture,
    and forced near-black regions, followed by a style-specific luminance
    rescale.
    """
    if width % 2 or height % 2:
        raise ShapeError(f"scene dims must be even, got {width}x{height}")
    if style not in STYLES:
        raise ShapeError(f"unknown scene style {style!r}; expected one of {STYLES}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, STYLES.index(style)]))

    img = np.empty((3, height, width))
    base = _smooth_field(rng, height, width)
    for c in range(3):
        lo = rng.uniform(0.03, 0.25)
        hi = rng.uniform(0.7, 0.97)
        tilt = _smooth_field(rng, height, width, orders=1)
        mix = 0.5 * (0.75 * base + 0.25 * tilt) + 0.5
        img[c] = lo + (hi - lo) * mix

    # Flat shapes with stratified brightness so the histogram fills out.
    n_shapes = int(rng.integers(10, 16))
    levels = rng.permutation(np.linspace(0.0, 1.0, n_shapes))
    yy = np.arange(height)[:, None]
    xx = np.arange(width)[None, :]
    for i in range(n_shapes):
        cy = rng.uniform(0, height)
        cx = rng.uniform(0, width)
        size = rng.uniform(0.04, 0.22) * min(height, width)
        color = np.clip(levels[i] + rng.uniform(-0.08, 0.08, size=3), 0.0, 1.0)
        if rng.random() < 0.5:
            mask = (np.abs(yy - cy) < size) & (np.abs(xx - cx) < size * rng.uniform(0.5, 1.8))
        else:
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < size**2
        img[:, mask] = color[:, None]

    # Deep shadows: radial ramps that bottom out at exactly zero, so the
    # dark end of the histogram stays populated under any tone adjustment.
    for _ in range(2):
        cy = rng.uniform(0.1, 0.9) * height
        cx = rng.uniform(0.1, 0.9) * width
        size = rng.uniform(0.1, 0.2) * min(height, width)
        dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
        attenuation = np.clip(dist / size, 0.0, 1.0) ** 0.7
        img *= attenuation[None, :, :]

    # One or two local light sources with smooth radial falloff, saturated
    # at the center; their decay keeps the value continuum dense in [0, 1].
    for _ in range(int(rng.integers(1, 3))):
        cy = rng.uniform(0.1, 0.9) * height
        cx = rng.uniform(0.1, 0.9) * width
        radius = rng.uniform(0.45, 0.75) * min(height, width)
        dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
        falloff = np.clip(1.0 - dist / radius, 0.0, 1.0) ** 1.2
        tint = rng.uniform(0.97, 1.0, size=3)
        tint[int(rng.integers(3))] = 1.0
        img = np.maximum(img, falloff[None, :, :] * tint[:, None, None])

    img += 0.04 * _band_limited_texture(rng, height, width)[None, :, :]
    img = np.clip(img, 0.0, 1.0)

    # Style-specific luminance via an endpoint-preserving power map, so the
    # histogram keeps occupying the full [0, 1] range.
    img = _match_mean_luminance(img, STYLE_MEAN_LUMINANCE[style])

    return CleanScene(radiance=img.astype(np.float32), seed=seed, style=style)


def _match_mean_luminance(img: np.ndarray, target: float) -> np.ndarray:
    """Raise the image to a power chosen so mean luminance hits ``target``.

    x -> x**p maps [0, 1] onto itself and is monotone, so dynamic range is
    preserved; the exponent is found by bisection.
    """

    def mean_lum(p: float) -> float:
        t = np.power(img, p)
        return float((0.299 * t[0] + 0.587 * t[1] + 0.114 * t[2]).mean())

    lo, hi = 0.15, 8.0  # brightening vs darkening exponents
    if mean_lum(lo) < target:
        return np.power(img, lo)
    if mean_lum(hi) > target:
        return np.power(img, hi)
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        if mean_lum(mid) > target:
            lo = mid
        else:
            hi = mid
    return np.power(img, 0.5 * (lo + hi))


def mosaic(scene: CleanScene) -> RawImage:
    """Sample the radiance planes onto an RGGB grid (noiseless mean signal)."""
    r, g, b = scene.radiance
    out = np.empty((scene.height, scene.width), dtype=np.float32)
    out[0::2, 0::2] = r[0::2, 0::2]
    out[0::2, 1::2] = g[0::2, 1::2]
    out[1::2, 0::2] = g[1::2, 0::2]
    out[1::2, 1::2] = b[1::2, 1::2]
    return RawImage(mosaic=out, black_level=0.0)


def expose(
    mosaic_signal: RawImage,
    exposure_time: float,
    reference_time: float = REFERENCE_EXPOSURE_S,
) -> RawImage:
    """Scale the mean signal by exposure ratio, saturating at full well (1.0).

    ``reference_time`` is the exposure at which the scene radiance reaches
    the nominal full-scale range.
    """
    if exposure_time <= 0 or reference_time <= 0:
        raise ShapeError(
            f"exposure times must be positive, got {exposure_time} and {reference_time}"
        )
    scale = np.float32(exposure_time / reference_time)
    scaled = np.minimum(mosaic_signal.mosaic * scale, np.float32(1.0))
    return RawImage(mosaic=scaled, black_level=mosaic_signal.black_level)


def sample_noisy_raw(
    signal: RawImage,
    params: NoiseParams,
    rng_seed: int,
    black_level: float = 0.0,
) -> RawImage:
    """Draw y ~ Normal(x, beta_read + beta_shot*x) per pixel and clamp.

    With ``black_level`` zero the draw is clamped to [0, 1] (ADC
    saturation). A nonzero black level adds the pedestal after the draw,
    so small negative read-noise excursions survive until black-level
    subtraction clamps them during packing; stored values then live in
    [0, 1 + black_level].
    """
    x = signal.mosaic.astype(np.float64, copy=False)
    var = params.variance(x)
    if np.any(var < 0):
        raise ShapeError("negative noise variance; corrupt NoiseParams")
    rng = np.random.default_rng(rng_seed)
    y = rng.normal(loc=x, scale=np.sqrt(var))
    y = np.clip(y, -black_level, 1.0) + black_level
    return RawImage(mosaic=y.astype(np.float32), black_level=black_level)


def render_reference_srgb(scene: CleanScene, exposure_scale: float = 1.0) -> np.ndarray:
    """Fixed analytic ground-truth rendering: gamma 1/2.2 of the radiance.

    ``exposure_scale`` darkens the linear radiance first (clipped at 1.0),
    producing the reference rendition for a shorter exposure.
    """
    lin = np.clip(scene.radiance.astype(np.float64) * exposure_scale, 0.0, 1.0)
    return np.power(lin, GAMMA).astype(np.float32)


def srgb_at_exposure(
    reference_srgb: np.ndarray,
    exposure_time: float,
    reference_time: float = REFERENCE_EXPOSURE_S,
) -> np.ndarray:
    """Ground-truth sRGB for a shorter exposure, from the reference rendering.

    The reference curve is a pure power law, so scaling linear radiance by
    s <= 1 is exactly a multiplication by s**gamma after encoding.
    """
    s = exposure_time / reference_time
    if s > 1.0:
        raise ShapeError(
            f"exposure {exposure_time}s exceeds the reference {reference_time}s"
        )
    return (reference_srgb * np.float32(s**GAMMA)).astype(np.float32)
