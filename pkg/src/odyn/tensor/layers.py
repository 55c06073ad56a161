"""Layer specifications, end-to-end shape inference, and sequential nets.

A network is described by a list of LayerSpec values. Shapes are inferred
for the whole stack at construction time, so an inconsistent architecture
fails before any training step, with the offending layer named.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, ShapeError
from . import functional as F
from .core import Array, Tensor, get_default_dtype

KINDS = ("dense", "conv", "transpconv", "maxpool", "batchnorm", "activation", "concat")

Shape = tuple[int, ...]


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    units: int | None = None
    out_channels: int | None = None
    kernel: tuple[int, int] | None = None
    stride: tuple[int, int] = (1, 1)
    padding: tuple[tuple[int, int], tuple[int, int]] = ((0, 0), (0, 0))
    activation: str | None = None
    axis: int = 1

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise DomainError(f"unknown layer kind {self.kind!r}")
        if self.kind == "dense" and (self.units is None or self.units < 1):
            raise DomainError(f"dense layer needs positive units, got {self.units}")
        if self.kind in ("conv", "transpconv"):
            if self.out_channels is None or self.out_channels < 1:
                raise DomainError(f"{self.kind} needs positive out_channels")
            if self.kernel is None or min(self.kernel) < 1:
                raise DomainError(f"{self.kind} needs a positive kernel, got {self.kernel}")
            if min(self.stride) < 1:
                raise DomainError(f"{self.kind} stride must be positive, got {self.stride}")
            if min(min(p) for p in self.padding) < 0:
                raise DomainError(f"{self.kind} padding must be non-negative")
        if self.kind == "activation" and self.activation not in ("relu", "sigmoid"):
            raise DomainError(f"unsupported activation {self.activation!r}")


def fc(units: int) -> LayerSpec:
    return LayerSpec("dense", units=units)


def conv(out_channels: int, kernel=(3, 3), stride=1, padding=0) -> LayerSpec:
    return LayerSpec(
        "conv",
        out_channels=out_channels,
        kernel=_pair(kernel),
        stride=_pair(stride),
        padding=F.normalize_padding(padding),
    )


def tconv(out_channels: int, kernel, stride=1, padding=0) -> LayerSpec:
    return LayerSpec(
        "transpconv",
        out_channels=out_channels,
        kernel=_pair(kernel),
        stride=_pair(stride),
        padding=F.normalize_padding(padding),
    )


def mp() -> LayerSpec:
    return LayerSpec("maxpool")


def bn() -> LayerSpec:
    return LayerSpec("batchnorm")


def relu() -> LayerSpec:
    return LayerSpec("activation", activation="relu")


def sigmoid() -> LayerSpec:
    return LayerSpec("activation", activation="sigmoid")


def _pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return (v, v)
    a, b = v
    return (int(a), int(b))


def infer_shape(spec: LayerSpec, in_shape: Shape, where: str = "layer") -> Shape:
    """Output shape of one layer given its input shape (batch omitted)."""
    spec.validate()
    if spec.kind == "dense":
        if len(in_shape) != 1:
            raise ShapeError(f"{where}: dense needs a flat input, got {in_shape}")
        return (spec.units,)
    if spec.kind == "conv":
        if len(in_shape) != 3:
            raise ShapeError(f"{where}: conv needs (C, H, W), got {in_shape}")
        c, h, w = in_shape
        (pt, pb), (pl, pr) = spec.padding
        kh, kw = spec.kernel
        sh, sw = spec.stride
        if h + pt + pb < kh or w + pl + pr < kw:
            raise ShapeError(
                f"{where}: kernel {spec.kernel} exceeds padded input {in_shape}"
            )
        oh = (h + pt + pb - kh) // sh + 1
        ow = (w + pl + pr - kw) // sw + 1
        return (spec.out_channels, oh, ow)
    if spec.kind == "transpconv":
        if len(in_shape) != 3:
            raise ShapeError(f"{where}: transpconv needs (C, H, W), got {in_shape}")
        c, h, w = in_shape
        (pt, pb), (pl, pr) = spec.padding
        kh, kw = spec.kernel
        sh, sw = spec.stride
        oh = (h - 1) * sh + kh - pt - pb
        ow = (w - 1) * sw + kw - pl - pr
        if oh < 1 or ow < 1:
            raise ShapeError(f"{where}: padding {spec.padding} consumes output of {in_shape}")
        return (spec.out_channels, oh, ow)
    if spec.kind == "maxpool":
        if len(in_shape) != 3:
            raise ShapeError(f"{where}: maxpool needs (C, H, W), got {in_shape}")
        c, h, w = in_shape
        return (c, (h + 1) // 2, (w + 1) // 2)
    # batchnorm and activations keep their shape
    return in_shape


def infer_shapes(specs: list[LayerSpec], in_shape: Shape) -> list[Shape]:
    shapes = []
    cur = tuple(in_shape)
    for i, s in enumerate(specs):
        cur = infer_shape(s, cur, where=f"layer {i} ({s.kind})")
        shapes.append(cur)
    return shapes


class Network:
    """A named sequential stack of layers with its own parameters.

    Weights use He-normal initialization (fan-in scaled); biases start at
    zero. `zero_init_last=True` zeroes the final parametric layer so the
    network computes exactly 0 at initialization, which residual update
    networks rely on.
    """

    def __init__(
        self,
        name: str,
        specs: list[LayerSpec],
        in_shape: Shape,
        rng: np.random.Generator,
        zero_init_last: bool = False,
    ):
        self.name = name
        self.specs = list(specs)
        self.in_shape = tuple(int(s) for s in in_shape)
        self.shapes = infer_shapes(self.specs, self.in_shape)
        self.out_shape = self.shapes[-1] if self.shapes else self.in_shape
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, Array] = {}

        last_parametric = -1
        for i, s in enumerate(self.specs):
            if s.kind in ("dense", "conv", "transpconv"):
                last_parametric = i

        dtype = get_default_dtype()
        cur = self.in_shape
        for i, s in enumerate(self.specs):
            zero = zero_init_last and i == last_parametric
            if s.kind == "dense":
                fan_in = cur[0]
                wshape = (cur[0], s.units)
                bshape = (s.units,)
            elif s.kind == "conv":
                fan_in = cur[0] * s.kernel[0] * s.kernel[1]
                wshape = (s.out_channels, cur[0], s.kernel[0], s.kernel[1])
                bshape = (s.out_channels,)
            elif s.kind == "transpconv":
                fan_in = cur[0] * s.kernel[0] * s.kernel[1]
                wshape = (cur[0], s.out_channels, s.kernel[0], s.kernel[1])
                bshape = (s.out_channels,)
            elif s.kind == "batchnorm":
                nfeat = cur[0]
                self._params[f"{i}.gamma"] = Tensor(np.ones(nfeat, dtype=dtype), requires_grad=True)
                self._params[f"{i}.beta"] = Tensor(np.zeros(nfeat, dtype=dtype), requires_grad=True)
                self._buffers[f"{i}.running_mean"] = np.zeros(nfeat, dtype=dtype)
                self._buffers[f"{i}.running_var"] = np.ones(nfeat, dtype=dtype)
                cur = self.shapes[i]
                continue
            else:
                cur = self.shapes[i]
                continue
            if zero:
                w = np.zeros(wshape, dtype=dtype)
            else:
                std = np.sqrt(2.0 / fan_in)
                w = rng.normal(0.0, std, size=wshape).astype(dtype)
            self._params[f"{i}.w"] = Tensor(w, requires_grad=True)
            self._params[f"{i}.b"] = Tensor(np.zeros(bshape, dtype=dtype), requires_grad=True)
            cur = self.shapes[i]

    @property
    def out_width(self) -> int:
        if len(self.out_shape) != 1:
            raise ShapeError(f"{self.name}: output {self.out_shape} is not a flat vector")
        return self.out_shape[0]

    def __call__(self, x: Tensor, training: bool = False) -> Tensor:
        if x.shape[1:] != self.in_shape:
            raise ShapeError(
                f"{self.name}: input shape {x.shape[1:]} does not match expected {self.in_shape}"
            )
        for i, s in enumerate(self.specs):
            if s.kind == "dense":
                x = F.dense(x, self._params[f"{i}.w"], self._params[f"{i}.b"])
            elif s.kind == "conv":
                x = F.conv2d(x, self._params[f"{i}.w"], self._params[f"{i}.b"], s.stride, s.padding)
            elif s.kind == "transpconv":
                x = F.transp_conv2d(
                    x, self._params[f"{i}.w"], self._params[f"{i}.b"], s.stride, s.padding
                )
            elif s.kind == "maxpool":
                x = F.maxpool2x2(x)
            elif s.kind == "batchnorm":
                x = F.batch_norm(
                    x,
                    self._params[f"{i}.gamma"],
                    self._params[f"{i}.beta"],
                    self._buffers[f"{i}.running_mean"],
                    self._buffers[f"{i}.running_var"],
                    training=training,
                )
            elif s.kind == "activation":
                x = F.relu(x) if s.activation == "relu" else F.sigmoid(x)
            else:
                raise DomainError(f"{self.name}: cannot apply layer kind {s.kind!r}")
        return x

    def params(self) -> dict[str, Tensor]:
        return {f"{self.name}.{k}": v for k, v in self._params.items()}

    def buffers(self) -> dict[str, Array]:
        return {f"{self.name}.{k}": v for k, v in self._buffers.items()}
