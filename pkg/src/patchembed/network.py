"""Patch encoder: a small configurable conv/inception/fc network that maps
16x16x3 patches onto the unit hypersphere in 128D.

The architecture family is fixed (conv, inception, maxpool, fc); widths and
depth come from ArchitectureConfig. Forward/backward run through torch on
CPU; a float64 mode exists so gradients can be checked against central
finite differences.
"""

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, DataError
from .validation import EMBED_DIM, PATCH_SIZE, check_patch_batch, rng_from

NORM_GUARD = 1e-8


@dataclass(frozen=True)
class ConvSpec:
    out_channels: int
    kernel_size: int = 3
    relu: bool = True
    kind: str = "conv"


@dataclass(frozen=True)
class InceptionSpec:
    """Parallel 1x1 / 1x1-3x3 / 1x1-5x5 / pool-1x1 branches, concatenated."""

    b1: int
    b3r: int
    b3: int
    b5r: int
    b5: int
    pool_proj: int
    kind: str = "inception"

    @property
    def out_channels(self):
        return self.b1 + self.b3 + self.b5 + self.pool_proj


@dataclass(frozen=True)
class MaxPoolSpec:
    kernel_size: int = 2
    kind: str = "maxpool"


@dataclass(frozen=True)
class FcSpec:
    out_features: int
    relu: bool = True
    kind: str = "fc"


@dataclass(frozen=True)
class ArchitectureConfig:
    layers: tuple
    embedding_dim: int = EMBED_DIM
    normalize_output: bool = True

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("architecture: at least one layer required")
        if not self.normalize_output:
            raise ConfigError("architecture: normalize_output must stay enabled")
        last = self.layers[-1]
        if not isinstance(last, FcSpec) or last.out_features != self.embedding_dim:
            raise ConfigError(
                f"architecture: final layer must be fc with out={self.embedding_dim}"
            )
        object.__setattr__(self, "layers", tuple(self.layers))
        layer_shapes(self)  # raises on geometric inconsistency


def default_architecture():
    """Stem conv, two inception blocks with 2x2 pools, then fc 256 -> fc 128."""
    return ArchitectureConfig(
        layers=(
            ConvSpec(out_channels=32, kernel_size=3),
            InceptionSpec(b1=16, b3r=16, b3=24, b5r=8, b5=12, pool_proj=12),
            MaxPoolSpec(kernel_size=2),
            InceptionSpec(b1=24, b3r=24, b3=36, b5r=12, b5=18, pool_proj=18),
            MaxPoolSpec(kernel_size=2),
            FcSpec(out_features=256, relu=True),
            FcSpec(out_features=EMBED_DIM, relu=False),
        )
    )


def tiny_architecture():
    """A <=500-parameter member of the same family, for gradient oracles."""
    return ArchitectureConfig(
        layers=(
            ConvSpec(out_channels=2, kernel_size=3),
            MaxPoolSpec(kernel_size=16),
            FcSpec(out_features=EMBED_DIM, relu=False),
        )
    )


def layer_shapes(config):
    """Walk the layer list and return (spatial, channels/features) after each layer."""
    size, channels = PATCH_SIZE, 3
    flat = None
    shapes = []
    for i, spec in enumerate(config.layers):
        if isinstance(spec, (ConvSpec, InceptionSpec, MaxPoolSpec)) and flat is not None:
            raise ConfigError(f"architecture: layer {i} ({spec.kind}) after flatten")
        if isinstance(spec, ConvSpec):
            if spec.kernel_size % 2 == 0 or spec.kernel_size < 1:
                raise ConfigError(f"architecture: conv kernel must be odd, got {spec.kernel_size}")
            channels = spec.out_channels
        elif isinstance(spec, InceptionSpec):
            channels = spec.out_channels
        elif isinstance(spec, MaxPoolSpec):
            if size % spec.kernel_size != 0:
                raise ConfigError(
                    f"architecture: maxpool {spec.kernel_size} does not divide size {size}"
                )
            size //= spec.kernel_size
        elif isinstance(spec, FcSpec):
            if flat is None:
                flat = size * size * channels
            channels = spec.out_features
            flat = spec.out_features
            size = 1
        else:
            raise ConfigError(f"architecture: unknown layer kind {spec!r}")
        shapes.append((size, channels))
    return shapes


def parameter_count(config):
    """Parameter total implied by the layer list (weights + biases)."""
    size, channels = PATCH_SIZE, 3
    total = 0
    for spec in config.layers:
        if isinstance(spec, ConvSpec):
            total += channels * spec.out_channels * spec.kernel_size**2 + spec.out_channels
            channels = spec.out_channels
        elif isinstance(spec, InceptionSpec):
            total += channels * spec.b1 + spec.b1
            total += channels * spec.b3r + spec.b3r
            total += spec.b3r * spec.b3 * 9 + spec.b3
            total += channels * spec.b5r + spec.b5r
            total += spec.b5r * spec.b5 * 25 + spec.b5
            total += channels * spec.pool_proj + spec.pool_proj
            channels = spec.out_channels
        elif isinstance(spec, MaxPoolSpec):
            size //= spec.kernel_size
        elif isinstance(spec, FcSpec):
            fan_in = size * size * channels
            total += fan_in * spec.out_features + spec.out_features
            size, channels = 1, spec.out_features
    return total


class _Inception(nn.Module):
    def __init__(self, in_channels, spec):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, spec.b1, 1)
        self.conv3_reduce = nn.Conv2d(in_channels, spec.b3r, 1)
        self.conv3 = nn.Conv2d(spec.b3r, spec.b3, 3, padding=1)
        self.conv5_reduce = nn.Conv2d(in_channels, spec.b5r, 1)
        self.conv5 = nn.Conv2d(spec.b5r, spec.b5, 5, padding=2)
        self.pool_proj = nn.Conv2d(in_channels, spec.pool_proj, 1)

    def forward(self, x):
        relu = torch.relu
        b1 = relu(self.conv1(x))
        b3 = relu(self.conv3(relu(self.conv3_reduce(x))))
        b5 = relu(self.conv5(relu(self.conv5_reduce(x))))
        bp = relu(self.pool_proj(nn.functional.max_pool2d(x, 3, stride=1, padding=1)))
        return torch.cat([b1, b3, b5, bp], dim=1)


class PatchEncoder(nn.Module):
    """Torch realization of an ArchitectureConfig; input N x 3 x 16 x 16."""

    def __init__(self, config):
        super().__init__()
        self.config = config
        blocks = []
        size, channels = PATCH_SIZE, 3
        flat = None
        for spec in config.layers:
            if isinstance(spec, ConvSpec):
                pad = spec.kernel_size // 2
                conv = nn.Conv2d(channels, spec.out_channels, spec.kernel_size, padding=pad)
                blocks.append(nn.Sequential(conv, nn.ReLU()) if spec.relu else conv)
                channels = spec.out_channels
            elif isinstance(spec, InceptionSpec):
                blocks.append(_Inception(channels, spec))
                channels = spec.out_channels
            elif isinstance(spec, MaxPoolSpec):
                blocks.append(nn.MaxPool2d(spec.kernel_size))
                size //= spec.kernel_size
            elif isinstance(spec, FcSpec):
                if flat is None:
                    blocks.append(nn.Flatten())
                    flat = size * size * channels
                fc = nn.Linear(flat, spec.out_features)
                blocks.append(nn.Sequential(fc, nn.ReLU()) if spec.relu else fc)
                flat = spec.out_features
        self.blocks = nn.ModuleList(blocks)

    def forward(self, x):
        for block in self.blocks:
            x = block(x)
        norm = x.norm(dim=1, keepdim=True)
        norm = torch.where(norm < NORM_GUARD, norm + NORM_GUARD, norm)
        return x / norm


class ParameterSet:
    """Ordered name -> array mapping matching a PatchEncoder's parameters."""

    def __init__(self, arrays):
        self.arrays = OrderedDict(arrays)
        for name, arr in self.arrays.items():
            if not np.isfinite(arr).all():
                raise ConfigError(f"parameter {name}: non-finite values")

    def __eq__(self, other):
        if not isinstance(other, ParameterSet):
            return NotImplemented
        if list(self.arrays) != list(other.arrays):
            return False
        return all(np.array_equal(self.arrays[k], other.arrays[k]) for k in self.arrays)

    def __len__(self):
        return len(self.arrays)

    def items(self):
        return self.arrays.items()

    def total_count(self):
        return sum(a.size for a in self.arrays.values())

    def copy(self):
        return ParameterSet((k, v.copy()) for k, v in self.arrays.items())

    def astype(self, dtype):
        return ParameterSet((k, v.astype(dtype)) for k, v in self.arrays.items())

    @classmethod
    def from_module(cls, module):
        return cls(
            (name, p.detach().cpu().numpy().copy()) for name, p in module.named_parameters()
        )

    def load_into(self, module):
        with torch.no_grad():
            for name, p in module.named_parameters():
                arr = self.arrays.get(name)
                if arr is None or tuple(arr.shape) != tuple(p.shape):
                    raise ConfigError(f"parameter {name}: missing or shape mismatch")
                p.copy_(torch.from_numpy(np.ascontiguousarray(arr)).to(p.dtype))


def init_parameters(config, seed, dtype=np.float32):
    """Fan-in-scaled uniform weights, zero biases; bit-deterministic per seed."""
    module = PatchEncoder(config)
    rng = rng_from(seed)
    arrays = OrderedDict()
    for name, p in module.named_parameters():
        shape = tuple(p.shape)
        if name.endswith("bias"):
            arr = np.zeros(shape, dtype=np.float64)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(3.0 / fan_in)
            arr = rng.uniform(-bound, bound, size=shape)
        arrays[name] = arr.astype(dtype)
    return ParameterSet(arrays)


def build_encoder(config, params=None, dtype=torch.float32):
    """Instantiate a PatchEncoder and optionally load a ParameterSet."""
    module = PatchEncoder(config).to(dtype)
    module.eval()
    if params is not None:
        params.load_into(module)
    return module


def patches_to_tensor(patches, dtype=torch.float32):
    arr = check_patch_batch(patches, dtype=np.float64 if dtype == torch.float64 else np.float32)
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2))).to(dtype)


def forward(params, patches, config, dtype=torch.float32):
    """Embed a batch of patches; rows are independent, outputs unit-norm."""
    module = build_encoder(config, params, dtype=dtype)
    with torch.no_grad():
        out = module(patches_to_tensor(patches, dtype=dtype))
    return out.numpy()


def arch_to_text(config):
    """Canonical key=value rendering; the checkpoint stores exactly this."""
    lines = [
        f"embedding_dim={config.embedding_dim}",
        f"normalize_output={int(config.normalize_output)}",
    ]
    for i, spec in enumerate(config.layers):
        if isinstance(spec, ConvSpec):
            body = f"conv:out={spec.out_channels},kernel={spec.kernel_size},relu={int(spec.relu)}"
        elif isinstance(spec, InceptionSpec):
            body = (
                f"inception:b1={spec.b1},b3r={spec.b3r},b3={spec.b3},"
                f"b5r={spec.b5r},b5={spec.b5},pool={spec.pool_proj}"
            )
        elif isinstance(spec, MaxPoolSpec):
            body = f"maxpool:kernel={spec.kernel_size}"
        elif isinstance(spec, FcSpec):
            body = f"fc:out={spec.out_features},relu={int(spec.relu)}"
        else:
            raise ConfigError(f"architecture: unknown layer kind {spec!r}")
        lines.append(f"layer.{i}={body}")
    return "\n".join(lines) + "\n"


def arch_from_text(text):
    fields = {}
    layer_bodies = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        if key.startswith("layer."):
            layer_bodies[int(key.split(".", 1)[1])] = value
        else:
            fields[key] = value
    layers = []
    for i in sorted(layer_bodies):
        kind, _, argtext = layer_bodies[i].partition(":")
        args = dict(kv.split("=", 1) for kv in argtext.split(",") if kv)
        if kind == "conv":
            layers.append(
                ConvSpec(int(args["out"]), int(args["kernel"]), bool(int(args["relu"])))
            )
        elif kind == "inception":
            layers.append(
                InceptionSpec(
                    int(args["b1"]), int(args["b3r"]), int(args["b3"]),
                    int(args["b5r"]), int(args["b5"]), int(args["pool"]),
                )
            )
        elif kind == "maxpool":
            layers.append(MaxPoolSpec(int(args["kernel"])))
        elif kind == "fc":
            layers.append(FcSpec(int(args["out"]), bool(int(args["relu"]))))
        else:
            raise ConfigError(f"architecture text: unknown layer kind {kind!r}")
    return ArchitectureConfig(
        layers=tuple(layers),
        embedding_dim=int(fields.get("embedding_dim", EMBED_DIM)),
        normalize_output=bool(int(fields.get("normalize_output", 1))),
    )


def backward(params, patches, upstream, config, dtype=torch.float32):
    """Exact parameter gradients of sum(upstream * embeddings).

    ``upstream`` holds dLoss/dEmbedding rows; the returned ParameterSet-shaped
    mapping includes the Jacobian of the output normalization.
    """
    module = build_encoder(config, params, dtype=dtype)
    x = patches_to_tensor(patches, dtype=dtype)
    up = np.asarray(upstream, dtype=np.float64 if dtype == torch.float64 else np.float32)
    out = module(x)
    if up.shape != tuple(out.shape):
        raise DataError(f"upstream gradient shape {up.shape} != output {tuple(out.shape)}")
    out.backward(torch.from_numpy(up).to(dtype))
    grads = OrderedDict()
    for name, p in module.named_parameters():
        g = p.grad
        grads[name] = (
            np.zeros(tuple(p.shape), dtype=up.dtype) if g is None else g.detach().numpy().copy()
        )
    return grads
