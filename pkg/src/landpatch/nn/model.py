"""Layer and model specifications with construction-time shape checking."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import DataError

ACTIVATIONS = ("relu", "sigmoid", "tanh")
N_CLASSES = 2


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    k: int = 0
    channels: int = 0
    stride: int = 1
    units: int = 0
    p: float = 0.0
    fn: str = ""

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "conv2d":
            d.update(k=self.k, channels=self.channels, stride=self.stride)
        elif self.kind == "maxpool":
            d.update(k=self.k)
        elif self.kind == "dense":
            d.update(units=self.units)
        elif self.kind == "dropout":
            d.update(p=self.p)
        elif self.kind == "activation":
            d.update(fn=self.fn)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(**d)


def conv2d(k: int, channels: int, stride: int = 1) -> LayerSpec:
    return LayerSpec("conv2d", k=k, channels=channels, stride=stride)


def maxpool(k: int) -> LayerSpec:
    return LayerSpec("maxpool", k=k)


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


def dense(units: int) -> LayerSpec:
    return LayerSpec("dense", units=units)


def dropout(p: float) -> LayerSpec:
    return LayerSpec("dropout", p=p)


def activation(fn: str) -> LayerSpec:
    return LayerSpec("activation", fn=fn)


@dataclass(frozen=True)
class ModelSpec:
    """An ordered layer stack ending in dense(2); softmax is applied by ops.

    Shapes are chain-checked at construction; ``shapes[i]`` is the input
    shape of layer i, ``shapes[-1]`` the output shape.
    """

    input_px: int
    layers: tuple[LayerSpec, ...]
    input_channels: int = 3
    shapes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.input_px < 1:
            raise DataError(f"input_px must be >= 1, got {self.input_px}")
        if self.input_channels < 1:
            raise DataError(f"input_channels must be >= 1, got {self.input_channels}")
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "shapes", self._check_shapes())

    def _check_shapes(self) -> tuple:
        shapes = [(self.input_px, self.input_px, self.input_channels)]
        shape = shapes[0]
        for i, ly in enumerate(self.layers):
            where = f"layer {i} ({ly.kind})"
            if ly.kind == "conv2d":
                if len(shape) != 3:
                    raise DataError(f"{where}: needs a feature map, got {shape}")
                h, w, c = shape
                if ly.k < 1 or ly.channels < 1 or ly.stride < 1:
                    raise DataError(f"{where}: invalid parameters {ly}")
                if ly.k > h or ly.k > w:
                    raise DataError(f"{where}: kernel {ly.k} exceeds input {h}x{w}")
                shape = ((h - ly.k) // ly.stride + 1, (w - ly.k) // ly.stride + 1, ly.channels)
            elif ly.kind == "maxpool":
                if len(shape) != 3:
                    raise DataError(f"{where}: needs a feature map, got {shape}")
                h, w, c = shape
                if ly.k < 1 or ly.k > h or ly.k > w:
                    raise DataError(f"{where}: pool size {ly.k} invalid for {h}x{w}")
                shape = (h // ly.k, w // ly.k, c)
            elif ly.kind == "flatten":
                n = 1
                for d in shape:
                    n *= d
                shape = (n,)
            elif ly.kind == "dense":
                if len(shape) != 1:
                    raise DataError(f"{where}: needs a flat input, got {shape}; add flatten()")
                if ly.units < 1:
                    raise DataError(f"{where}: units must be >= 1")
                shape = (ly.units,)
            elif ly.kind == "dropout":
                if not 0.0 <= ly.p < 1.0:
                    raise DataError(f"{where}: dropout p must be in [0, 1), got {ly.p}")
            elif ly.kind == "activation":
                if ly.fn not in ACTIVATIONS:
                    raise DataError(f"{where}: unknown activation {ly.fn!r}")
            else:
                raise DataError(f"{where}: unknown layer kind {ly.kind!r}")
            shapes.append(shape)
        last = self.layers[-1] if self.layers else None
        if last is None or last.kind != "dense" or last.units != N_CLASSES:
            raise DataError(f"model must end with dense({N_CLASSES}), got {last}")
        return tuple(shapes)

    def to_dict(self) -> dict:
        return {
            "input_px": self.input_px,
            "input_channels": self.input_channels,
            "layers": [ly.to_dict() for ly in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            input_px=d["input_px"],
            input_channels=d.get("input_channels", 3),
            layers=tuple(LayerSpec.from_dict(x) for x in d["layers"]),
        )


def default_convnet(input_px: int, input_channels: int = 3) -> ModelSpec:
    """The stock small CNN: two conv/pool stages, a 64-unit head, dropout."""
    return ModelSpec(
        input_px=input_px,
        input_channels=input_channels,
        layers=(
            conv2d(3, 16),
            activation("relu"),
            maxpool(2),
            conv2d(3, 32),
            activation("relu"),
            maxpool(2),
            flatten(),
            dense(64),
            activation("relu"),
            dropout(0.5),
            dense(N_CLASSES),
        ),
    )


# Architecture registry. Only "convnet" ships; the menu of big pretrained
# backbones is intentionally unpopulated and names resolve to a clear error.
_REGISTRY: dict[str, object] = {"convnet": default_convnet}


def register_architecture(name: str, builder) -> None:
    _REGISTRY[name.lower()] = builder


def architectures() -> list[str]:
    return sorted(_REGISTRY)


def build_architecture(name: str, input_px: int, input_channels: int = 3) -> ModelSpec:
    builder = _REGISTRY.get(name.lower())
    if builder is None:
        raise DataError(
            f"unknown architecture {name!r}; available: {', '.join(architectures())}"
        )
    return builder(input_px, input_channels)
