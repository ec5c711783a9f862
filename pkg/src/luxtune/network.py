"""U-Net raw-to-sRGB model with runtime-interpolatable modulation layers.

The base network maps a packed 4-channel raw tensor to a 12-channel map
that a sub-pixel rearrangement turns back into a full-resolution sRGB
image. After base training, a modulation convolution can be inserted
behind every internal convolution; its effective weights at enhancement
level a2 are the affine blend

    w_eff = a2 * w + (1 - a2) * I,    b_eff = a2 * b

where I is the Dirac identity kernel. a2 = 0 therefore reproduces the
frozen base network exactly, and a2 = 1 the fine-tuned endpoint.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .engine import (
    Tensor,
    concat,
    conv2d,
    depth_to_space,
    leaky_relu,
    max_pool2,
    no_grad,
    upsample2,
)
from .errors import ShapeError
from .rawproc import PackedRaw, TuningKnobs, apply_brightness

MODULATION_FILTER_SIZES = (1, 3, 5, 7)


@dataclass(frozen=True)
class UNetConfig:
    """Architecture hyperparameters. Output channels are fixed at 12 by the
    factor-2 sub-pixel upsampling to 3-channel sRGB."""

    depth: int = 4
    base_channels: int = 8
    in_channels: int = 4
    out_channels: int = 12
    activation_slope: float = 0.2
    modulate_projection: bool = False

    def __post_init__(self):
        if self.depth < 1:
            raise ShapeError(f"depth must be >= 1, got {self.depth}")
        if self.out_channels != 12:
            raise ShapeError(
                f"out_channels is fixed at 12 (3 sRGB channels x 2x2 sub-pixel), "
                f"got {self.out_channels}"
            )

    def level_channels(self, i: int) -> int:
        return self.base_channels * (2**i)


@dataclass(frozen=True)
class ConvSpec:
    """One convolution of the architecture walk."""

    name: str
    cin: int
    cout: int
    ksize: int
    activated: bool


def conv_specs(config: UNetConfig) -> List[ConvSpec]:
    """Ordered convolution layout: encoder, bottleneck, decoder, projection."""
    specs: List[ConvSpec] = []
    for i in range(config.depth):
        cin = config.in_channels if i == 0 else config.level_channels(i - 1)
        c = config.level_channels(i)
        specs.append(ConvSpec(f"enc{i}.c1", cin, c, 3, True))
        specs.append(ConvSpec(f"enc{i}.c2", c, c, 3, True))
    cb = config.level_channels(config.depth)
    specs.append(ConvSpec("bott.c1", config.level_channels(config.depth - 1), cb, 3, True))
    specs.append(ConvSpec("bott.c2", cb, cb, 3, True))
    for i in reversed(range(config.depth)):
        c = config.level_channels(i)
        specs.append(ConvSpec(f"dec{i}.up", config.level_channels(i + 1), c, 3, False))
        specs.append(ConvSpec(f"dec{i}.c1", 2 * c, c, 3, True))
        specs.append(ConvSpec(f"dec{i}.c2", c, c, 3, True))
    specs.append(ConvSpec("proj", config.base_channels, config.out_channels, 1, False))
    return specs


def identity_kernel(channels: int, ksize: int, dtype=np.float32) -> np.ndarray:
    """Dirac kernel: convolving with it is the identity map."""
    ident = np.zeros((channels, channels, ksize, ksize), dtype=dtype)
    mid = ksize // 2
    for c in range(channels):
        ident[c, c, mid, mid] = 1.0
    return ident


def _he_init(rng: np.random.Generator, shape: Tuple[int, ...], slope: float) -> np.ndarray:
    fan_in = int(np.prod(shape[1:]))
    std = np.sqrt(2.0 / ((1.0 + slope**2) * fan_in))
    return (rng.standard_normal(shape) * std).astype(np.float32)


@dataclass
class EnhancerModel:
    """Named parameter store plus the forward walks that realize the model.

    ``params`` maps "<layer>.w"/"<layer>.b" (and, once modulation is
    inserted, "<layer>.mod.w"/"<layer>.mod.b") to tensors. ``frozen``
    lists parameter names that must never change after fine-tuning starts.
    ``anchors`` records the (alpha1, alpha2) pairs realized in training.
    """

    config: UNetConfig
    params: Dict[str, Tensor]
    filter_size: Optional[int] = None
    frozen: frozenset = frozenset()
    anchors: List[Tuple[float, float]] = field(default_factory=list)

    # -- construction ------------------------------------------------------

    @classmethod
    def build(cls, config: UNetConfig, init_seed: int = 0) -> "EnhancerModel":
        rng = np.random.default_rng(init_seed)
        params: Dict[str, Tensor] = {}
        for spec in conv_specs(config):
            w = _he_init(rng, (spec.cout, spec.cin, spec.ksize, spec.ksize), config.activation_slope)
            params[f"{spec.name}.w"] = Tensor(w, requires_grad=True, name=f"{spec.name}.w")
            params[f"{spec.name}.b"] = Tensor(
                np.zeros(spec.cout, dtype=np.float32), requires_grad=True, name=f"{spec.name}.b"
            )
        return cls(config=config, params=params)

    @property
    def has_modulation(self) -> bool:
        return self.filter_size is not None

    def modulated_layers(self) -> List[ConvSpec]:
        """Convolutions that carry a modulation module.

        Every internal convolution qualifies; the final projection changes
        channel count (identity kernel undefined) and is excluded unless
        the config explicitly opts in via a square post-projection module.
        """
        specs = conv_specs(self.config)
        out = [s for s in specs if s.name != "proj"]
        if self.config.modulate_projection:
            out.append(ConvSpec("post_proj", 12, 12, 3, False))
        return out

    def insert_modulation(self, filter_size: int = 3) -> "EnhancerModel":
        """Add identity-initialized modulation layers and freeze the base.

        Returns a new model; the base parameter tensors are shared but
        marked frozen (requires_grad off).
        """
        if self.has_modulation:
            raise ShapeError("modulation layers are already present")
        if filter_size not in MODULATION_FILTER_SIZES:
            raise ShapeError(
                f"modulation filter size must be one of {MODULATION_FILTER_SIZES}, "
                f"got {filter_size}"
            )
        params: Dict[str, Tensor] = {}
        for name, p in self.params.items():
            t = Tensor(p.data.copy(), requires_grad=False, name=name)
            params[name] = t
        frozen = frozenset(params.keys())
        new = EnhancerModel(
            config=self.config,
            params=params,
            filter_size=filter_size,
            frozen=frozen,
            anchors=list(self.anchors),
        )
        for spec in new.modulated_layers():
            wname, bname = f"{spec.name}.mod.w", f"{spec.name}.mod.b"
            params[wname] = Tensor(
                identity_kernel(spec.cout, filter_size), requires_grad=True, name=wname
            )
            params[bname] = Tensor(
                np.zeros(spec.cout, dtype=np.float32), requires_grad=True, name=bname
            )
        return new

    # -- parameter bookkeeping --------------------------------------------

    def trainable(self) -> Dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if v.requires_grad}

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def checksums(self, names: Optional[Sequence[str]] = None) -> Dict[str, str]:
        """SHA-256 of each parameter's raw bytes (freeze-discipline audits)."""
        names = list(names) if names is not None else sorted(self.params)
        return {
            n: hashlib.sha256(np.ascontiguousarray(self.params[n].data).tobytes()).hexdigest()
            for n in names
        }

    def update_params(self, new_params: Dict[str, Tensor]) -> None:
        for name, p in new_params.items():
            if name in self.frozen:
                raise ShapeError(f"attempted update of frozen parameter '{name}'")
            self.params[name] = p

    # -- runtime weight blending --------------------------------------------

    def modulate_weights(self, layer: str, alpha2: float) -> Tuple[np.ndarray, np.ndarray]:
        """Effective (kernel, bias) of one modulation layer at level alpha2."""
        w = self.params[f"{layer}.mod.w"].data
        b = self.params[f"{layer}.mod.b"].data
        ident = identity_kernel(w.shape[0], w.shape[2], dtype=w.dtype)
        a = np.float32(alpha2)
        return a * w + (np.float32(1.0) - a) * ident, a * b

    # -- forward -----------------------------------------------------------

    def _check_input(self, x_shape: Tuple[int, ...]) -> None:
        if len(x_shape) != 4 or x_shape[1] != self.config.in_channels:
            raise ShapeError(
                f"expected (N, {self.config.in_channels}, H, W) input, got {x_shape}"
            )
        div = 2**self.config.depth
        h, w = x_shape[2], x_shape[3]
        if h % div or w % div:
            pad_h = (div - h % div) % div
            pad_w = (div - w % div) % div
            raise ShapeError(
                f"input {h}x{w} not divisible by 2^depth={div}; "
                f"pad by ({pad_h}, {pad_w}) or crop"
            )

    def _apply_modulation(self, h: Tensor, spec: ConvSpec, alpha2: Optional[float]) -> Tensor:
        if not self.has_modulation or f"{spec.name}.mod.w" not in self.params:
            return h
        k = self.filter_size
        pad = k // 2
        if alpha2 is None:
            # Fine-tuning path: alpha2 pinned at 1, gradients flow into the
            # raw modulation tensors.
            return conv2d(
                h,
                self.params[f"{spec.name}.mod.w"],
                self.params[f"{spec.name}.mod.b"],
                padding=pad,
            )
        w_eff, b_eff = self.modulate_weights(spec.name, alpha2)
        return conv2d(h, Tensor(w_eff), Tensor(b_eff), padding=pad)

    def forward_net(self, x: Tensor, alpha2: Optional[float] = None) -> Tensor:
        """Packed input tensor -> 12-channel feature map.

        ``alpha2=None`` selects the training path (modulation tensors used
        directly, i.e. the level-1 endpoint); a float selects the blended
        inference path.
        """
        self._check_input(x.shape)
        cfg = self.config
        slope = cfg.activation_slope

        def run_conv(h: Tensor, spec: ConvSpec) -> Tensor:
            h = conv2d(
                h,
                self.params[f"{spec.name}.w"],
                self.params[f"{spec.name}.b"],
                padding=spec.ksize // 2,
            )
            h = self._apply_modulation(h, spec, alpha2)
            if spec.activated:
                h = leaky_relu(h, slope)
            return h

        specs = {s.name: s for s in conv_specs(cfg)}
        skips: List[Tensor] = []
        h = x
        for i in range(cfg.depth):
            h = run_conv(h, specs[f"enc{i}.c1"])
            h = run_conv(h, specs[f"enc{i}.c2"])
            skips.append(h)
            h = max_pool2(h)
        h = run_conv(h, specs["bott.c1"])
        h = run_conv(h, specs["bott.c2"])
        for i in reversed(range(cfg.depth)):
            h = upsample2(h)
            h = run_conv(h, specs[f"dec{i}.up"])
            h = concat([h, skips[i]])
            h = run_conv(h, specs[f"dec{i}.c1"])
            h = run_conv(h, specs[f"dec{i}.c2"])
        h = run_conv(h, specs["proj"])
        if self.config.modulate_projection and self.has_modulation:
            h = self._apply_modulation(h, ConvSpec("post_proj", 12, 12, 3, False), alpha2)
        return h

    def forward_train(self, packed_batch: np.ndarray) -> Tensor:
        """Training forward: amplified packed batch -> unclipped sRGB tensor."""
        x = Tensor(packed_batch)
        return depth_to_space(self.forward_net(x, alpha2=None))

    def enhance(self, packed: PackedRaw, knobs: TuningKnobs, clip_input: bool = True) -> np.ndarray:
        """Full inference pipeline: brightness, network, sub-pixel, clip.

        Returns an sRGB image (3, H, W) at the original mosaic resolution,
        clipped to [0, 1].
        """
        knobs.validate()
        amplified = apply_brightness(packed, knobs.alpha1, clip=clip_input)
        with no_grad():
            x = Tensor(amplified.data[None, ...])
            alpha2 = knobs.alpha2 if self.has_modulation else 0.0
            out = depth_to_space(self.forward_net(x, alpha2=alpha2))
        return np.clip(out.data[0], 0.0, 1.0)
