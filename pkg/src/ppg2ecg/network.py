"""Multi-task PPG-to-ECG network: encoder, attention-gated decoder, diagnosis branch.

The full architecture (input length 268) is::

    first conv (1,60,30,1) -> FEM1 -> FEM2 -> FTM1 -> FTM2 -> fusion gate
        -> ECG generation (60,1,30,1)
        -> channel attention 240-20-60 -> classifier convs -> FC 53-10-5

Each FEM/FTM concatenates ``C1(x)`` and ``C2(C1(x))`` along channels. All
conv layers except the generation layer are followed by layer norm and ReLU.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

N_CLASSES = 5
CYCLE_LENGTH = 268
LN_EPS = 1.0
COSINE_FLOOR = 1e-12


@dataclass(frozen=True)
class LayerSpec:
    """One conv / transposed-conv layer as (n_in, n_out, kernel, stride)."""

    n_in: int
    n_out: int
    kernel: int
    stride: int = 1
    padding: str = "same"
    has_layer_norm: bool = True
    transposed: bool = False

    @property
    def quad(self) -> tuple[int, int, int, int]:
        return (self.n_in, self.n_out, self.kernel, self.stride)

    def out_length(self, v: int) -> int:
        left = (self.kernel - 1) // 2 if self.padding == "same" else 0
        right = self.kernel - 1 - left if self.padding == "same" else 0
        if self.transposed:
            return (v - 1) * self.stride + self.kernel if self.padding == "valid" else v * self.stride
        return (v + left + right - self.kernel) // self.stride + 1

    def n_params(self) -> int:
        n = self.n_in * self.n_out * self.kernel + self.n_out
        return n + (2 * self.n_out if self.has_layer_norm else 0)


@dataclass(frozen=True)
class ModuleSpec:
    """FEM or FTM: a pair of layers whose outputs are channel-concatenated."""

    c1: LayerSpec
    c2: LayerSpec

    @property
    def n_in(self) -> int:
        return self.c1.n_in

    @property
    def n_out(self) -> int:
        return self.c1.n_out + self.c2.n_out


@dataclass(frozen=True)
class ArchConfig:
    length: int
    first_conv: LayerSpec
    fems: tuple[ModuleSpec, ...]
    ftms: tuple[ModuleSpec, ...]
    generation: LayerSpec
    attention: tuple[int, ...] | None
    classifier: tuple[LayerSpec, ...] | None
    classifier_fc: tuple[int, ...] | None
    recursion_depth: int = 1
    variant: str = "full"

    @property
    def channels(self) -> int:
        return self.first_conv.n_out

    @property
    def has_diagnosis(self) -> bool:
        return self.classifier is not None

    @property
    def n_classes(self) -> int:
        return self.classifier_fc[-1] if self.classifier_fc else 0

    def classifier_lengths(self) -> list[int]:
        lengths, v = [], self.length
        for spec in self.classifier or ():
            v = spec.out_length(v)
            lengths.append(v)
        return lengths

    def layer_table(self) -> list[tuple[str, LayerSpec]]:
        rows = [("first_conv", self.first_conv)]
        fem_prefix = "fem" if self.recursion_depth > 1 else "fem{}"
        ftm_prefix = "ftm" if self.recursion_depth > 1 else "ftm{}"
        for i, m in enumerate(self.fems, 1):
            rows += [(fem_prefix.format(i) + ".c1", m.c1), (fem_prefix.format(i) + ".c2", m.c2)]
        for i, m in enumerate(self.ftms, 1):
            rows += [(ftm_prefix.format(i) + ".c1", m.c1), (ftm_prefix.format(i) + ".c2", m.c2)]
        rows.append(("gen", self.generation))
        for i, spec in enumerate(self.classifier or (), 1):
            rows.append((f"cls.conv{i}", spec))
        return rows

    def validate(self) -> None:
        c = self.channels
        if self.first_conv.n_in != 1:
            raise ValueError("first conv must take a single input channel")
        for m in self.fems + self.ftms:
            if m.c2.n_in != m.c1.n_out:
                raise ValueError(f"module C2 expects {m.c2.n_in} channels but C1 gives {m.c1.n_out}")
        chain = [m for m in self.fems + self.ftms]
        prev = c
        for m in chain:
            if m.n_in != prev:
                raise ValueError(f"module expects {m.n_in} input channels, gets {prev}")
            prev = m.n_out
        if self.recursion_depth > 1 and any(m.n_in != m.n_out for m in chain):
            raise ValueError("recursive modules need equal input and output channel counts")
        if prev != c and self.variant != "pruned":
            raise ValueError(f"decoder output has {prev} channels, fusion needs {c}")
        if self.generation.n_out != 1:
            raise ValueError("generation layer must emit one channel")
        if self.has_diagnosis:
            att = self.attention
            if att[0] != 4 * self.generation.n_in or att[-1] != self.generation.n_in:
                raise ValueError(f"attention widths {att} inconsistent with {self.generation.n_in} channels")
            if self.classifier[0].n_in != self.generation.n_in:
                raise ValueError("classifier input channels must match the fused map")
            v = self.classifier_lengths()[-1] * self.classifier[-1].n_out
            if v != self.classifier_fc[0]:
                raise ValueError(f"classifier produces {v} features, FC expects {self.classifier_fc[0]}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        def mod(m):
            return ModuleSpec(LayerSpec(**m["c1"]), LayerSpec(**m["c2"]))

        return cls(
            length=d["length"],
            first_conv=LayerSpec(**d["first_conv"]),
            fems=tuple(mod(m) for m in d["fems"]),
            ftms=tuple(mod(m) for m in d["ftms"]),
            generation=LayerSpec(**d["generation"]),
            attention=tuple(d["attention"]) if d["attention"] is not None else None,
            classifier=tuple(LayerSpec(**s) for s in d["classifier"]) if d["classifier"] is not None else None,
            classifier_fc=tuple(d["classifier_fc"]) if d["classifier_fc"] is not None else None,
            recursion_depth=d["recursion_depth"],
            variant=d["variant"],
        )


def _conv(n_in, n_out, k, s=1, padding="same", ln=True):
    return LayerSpec(n_in, n_out, k, s, padding, ln, False)


def _tconv(n_in, n_out, k, s=1):
    return LayerSpec(n_in, n_out, k, s, "same", True, True)


def full_architecture(length: int = CYCLE_LENGTH, diagnosis: bool = True) -> ArchConfig:
    """Layer table of the full network; ``diagnosis=False`` gives the ECG-to-PPG twin."""
    arch = ArchConfig(
        length=length,
        first_conv=_conv(1, 60, 30),
        fems=(ModuleSpec(_conv(60, 40, 15), _conv(40, 20, 3)), ModuleSpec(_conv(60, 40, 5), _conv(40, 20, 3))),
        ftms=(ModuleSpec(_tconv(60, 40, 5), _tconv(40, 20, 3)), ModuleSpec(_tconv(60, 40, 15), _tconv(40, 20, 3))),
        generation=LayerSpec(60, 1, 30, 1, "same", False, True),
        attention=(240, 20, 60) if diagnosis else None,
        classifier=(
            (_conv(60, 30, 30, 2, "valid"), _conv(30, 20, 10, 2, "valid"), _conv(20, 1, 4, 1, "valid"))
            if diagnosis
            else None
        ),
        classifier_fc=(53, 10, N_CLASSES) if diagnosis else None,
    )
    arch.validate()
    return arch


def without_diagnosis(arch: ArchConfig) -> ArchConfig:
    """Same encoder/decoder with the diagnosis branch removed (the ECG-to-PPG twin)."""
    return replace(arch, attention=None, classifier=None, classifier_fc=None)


def compressed_architecture(length: int = CYCLE_LENGTH, diagnosis: bool = True) -> ArchConfig:
    """Pruned 30-channel variant with one shared FEM and FTM applied twice."""
    arch = ArchConfig(
        length=length,
        first_conv=_conv(1, 30, 30),
        fems=(ModuleSpec(_conv(30, 20, 15), _conv(20, 10, 3)),),
        ftms=(ModuleSpec(_tconv(30, 20, 15), _tconv(20, 10, 3)),),
        generation=LayerSpec(30, 1, 30, 1, "same", False, True),
        attention=(120, 20, 30) if diagnosis else None,
        classifier=(
            (_conv(30, 30, 30, 2, "valid"), _conv(30, 20, 10, 2, "valid"), _conv(20, 1, 4, 1, "valid"))
            if diagnosis
            else None
        ),
        classifier_fc=(53, 10, N_CLASSES) if diagnosis else None,
        recursion_depth=2,
        variant="compressed",
    )
    arch.validate()
    return arch


def tiny_architecture(length: int = 32, diagnosis: bool = True, channels: int = 6) -> ArchConfig:
    """Scaled-down geometry with the same operators, for gradient checks and fast tests."""
    c = channels
    a, b = c - c // 3, c // 3
    v1 = (length - 6) // 2 + 1
    v2 = (v1 - 4) // 2 + 1
    v3 = v2 - 2 + 1
    arch = ArchConfig(
        length=length,
        first_conv=_conv(1, c, 4),
        fems=(ModuleSpec(_conv(c, a, 3), _conv(a, b, 3)), ModuleSpec(_conv(c, a, 2), _conv(a, b, 3))),
        ftms=(ModuleSpec(_tconv(c, a, 3), _tconv(a, b, 3)), ModuleSpec(_tconv(c, a, 4), _tconv(a, b, 2))),
        generation=LayerSpec(c, 1, 4, 1, "same", False, True),
        attention=(4 * c, 5, c) if diagnosis else None,
        classifier=(
            (_conv(c, 3, 6, 2, "valid"), _conv(3, 2, 4, 2, "valid"), _conv(2, 1, 2, 1, "valid")) if diagnosis else None
        ),
        classifier_fc=(v3, 4, N_CLASSES) if diagnosis else None,
    )
    arch.validate()
    return arch


def tiny_compressed_architecture(length: int = 32, diagnosis: bool = True, channels: int = 4) -> ArchConfig:
    c = channels
    a, b = c - c // 2, c // 2
    v1 = (length - 6) // 2 + 1
    v2 = (v1 - 4) // 2 + 1
    arch = ArchConfig(
        length=length,
        first_conv=_conv(1, c, 4),
        fems=(ModuleSpec(_conv(c, a, 3), _conv(a, b, 3)),),
        ftms=(ModuleSpec(_tconv(c, a, 3), _tconv(a, b, 3)),),
        generation=LayerSpec(c, 1, 4, 1, "same", False, True),
        attention=(4 * c, 5, c) if diagnosis else None,
        classifier=(
            (_conv(c, 3, 6, 2, "valid"), _conv(3, 2, 4, 2, "valid"), _conv(2, 1, 2, 1, "valid")) if diagnosis else None
        ),
        classifier_fc=(v2 - 1, 4, N_CLASSES) if diagnosis else None,
        recursion_depth=2,
        variant="compressed",
    )
    arch.validate()
    return arch


# ----------------------------------------------------------------------------
# parameters


def _layer_shapes(prefix: str, spec: LayerSpec) -> dict[str, tuple[int, ...]]:
    if spec.transposed:
        w = (spec.n_in, spec.n_out, spec.kernel)
    else:
        w = (spec.n_out, spec.n_in, spec.kernel)
    shapes = {f"{prefix}.w": w, f"{prefix}.b": (spec.n_out,)}
    if spec.has_layer_norm:
        shapes[f"{prefix}.ln_g"] = (spec.n_out,)
        shapes[f"{prefix}.ln_b"] = (spec.n_out,)
    return shapes


def param_shapes(arch: ArchConfig) -> dict[str, tuple[int, ...]]:
    """Ordered name -> shape map; the order defines the flat checkpoint payload."""
    shapes: dict[str, tuple[int, ...]] = {}
    for name, spec in arch.layer_table():
        if name.startswith("cls."):
            continue
        shapes.update(_layer_shapes(name, spec))
    c_gen = arch.generation.n_in
    shapes["fusion.theta"] = (c_gen, arch.channels)
    if arch.has_diagnosis:
        widths = arch.attention
        for i in range(len(widths) - 1):
            shapes[f"att.fc{i + 1}.w"] = (widths[i + 1], widths[i])
            shapes[f"att.fc{i + 1}.b"] = (widths[i + 1],)
        for i, spec in enumerate(arch.classifier, 1):
            shapes.update(_layer_shapes(f"cls.conv{i}", spec))
        widths = arch.classifier_fc
        for i in range(len(widths) - 1):
            shapes[f"cls.fc{i + 1}.w"] = (widths[i + 1], widths[i])
            shapes[f"cls.fc{i + 1}.b"] = (widths[i + 1],)
    return shapes


def fan_in(name: str, shape: tuple[int, ...], arch: ArchConfig) -> int:
    if len(shape) == 2:
        return shape[1]
    spec = dict(arch.layer_table())[name.rsplit(".", 1)[0]]
    if spec.transposed:
        # each output sample sees ~ n_in * kernel / stride inputs
        return max(1, spec.n_in * spec.kernel // spec.stride)
    return spec.n_in * spec.kernel


def init_params(arch: ArchConfig, seed: int | np.random.Generator = 0) -> dict[str, np.ndarray]:
    """Scaled-uniform weights (variance 2 / fan_in), zero biases, unit LN gains, Theta ~ I + N(0, 0.01)."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(arch).items():
        kind = name.rsplit(".", 1)[1]
        if name == "fusion.theta":
            eye = np.eye(*shape)
            params[name] = eye + rng.normal(0.0, 0.01, size=shape)
        elif kind == "w":
            limit = math.sqrt(6.0 / fan_in(name, shape, arch))
            params[name] = rng.uniform(-limit, limit, size=shape)
        elif kind == "ln_g":
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    return params


def count_params(arch: ArchConfig) -> int:
    return int(np.sum([np.prod(s) for s in param_shapes(arch).values()]))


def census(arch: ArchConfig) -> dict[str, int]:
    """Per-group parameter counts, grouped by the layer/component prefix."""
    out: dict[str, int] = {}
    for name, shape in param_shapes(arch).items():
        group = name.rsplit(".", 1)[0]
        out[group] = out.get(group, 0) + int(np.prod(shape))
    return out


@dataclass
class ModelParams:
    """Architecture, parameter arrays, and pruning bookkeeping."""

    arch: ArchConfig
    values: dict[str, np.ndarray]
    f1_keep: list[int] | None = None
    fstar_keep: list[int] | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def initialize(cls, arch: ArchConfig, seed: int | np.random.Generator = 0) -> "ModelParams":
        return cls(arch, init_params(arch, seed))

    @property
    def variant(self) -> str:
        return self.arch.variant

    def n_params(self) -> int:
        return int(np.sum([v.size for v in self.values.values()]))

    def copy(self) -> "ModelParams":
        return replace(
            self,
            values={k: v.copy() for k, v in self.values.items()},
            f1_keep=None if self.f1_keep is None else list(self.f1_keep),
            fstar_keep=None if self.fstar_keep is None else list(self.fstar_keep),
            meta=dict(self.meta),
        )

    def tensors(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad) for k, v in self.values.items()}


# ----------------------------------------------------------------------------
# forward pass


@dataclass
class ForwardOutputs:
    ecg_hat: Tensor
    class_probs: Tensor | None
    f1_map: Tensor
    fstar_map: Tensor
    channel_weights: Tensor | None
    fusion_alpha: Tensor


def apply_layer(x: Tensor, p: dict[str, Tensor], prefix: str, spec: LayerSpec, activate: bool = True) -> Tensor:
    op = ad.tconv1d if spec.transposed else ad.conv1d
    y = op(x, p[prefix + ".w"], p[prefix + ".b"], spec.stride, spec.padding)
    if spec.has_layer_norm:
        y = ad.layer_norm(y, p[prefix + ".ln_g"], p[prefix + ".ln_b"], LN_EPS)
    return ad.relu(y) if activate else y


def module_forward(x: Tensor, p: dict[str, Tensor], prefix: str, spec: ModuleSpec) -> Tensor:
    """``[C1(x), C2(C1(x))]`` concatenated along channels."""
    if x.shape[-2] != spec.n_in:
        raise ValueError(f"{prefix}: expected {spec.n_in} input channels, got {x.shape[-2]}")
    h = apply_layer(x, p, prefix + ".c1", spec.c1)
    return ad.concat_channels([h, apply_layer(h, p, prefix + ".c2", spec.c2)])


def fem_forward(x: Tensor, p: dict[str, Tensor], prefix: str, spec: ModuleSpec) -> Tensor:
    return module_forward(x, p, prefix, spec)


def ftm_forward(x: Tensor, p: dict[str, Tensor], prefix: str, spec: ModuleSpec) -> Tensor:
    if not (spec.c1.transposed and spec.c2.transposed):
        raise ValueError("FTM layers must be transposed convolutions")
    return module_forward(x, p, prefix, spec)


def recursive_forward(x: Tensor, p: dict[str, Tensor], prefix: str, spec: ModuleSpec, depth: int) -> Tensor:
    """Apply one shared module ``depth`` times."""
    if depth < 1:
        raise ValueError("recursion depth must be >= 1")
    if depth > 1 and spec.n_in != spec.n_out:
        raise ValueError(f"recursion needs equal in/out channels, module maps {spec.n_in} -> {spec.n_out}")
    for _ in range(depth):
        x = module_forward(x, p, prefix, spec)
    return x


def fusion_attention(f1: Tensor, ft: Tensor, theta: Tensor) -> tuple[Tensor, Tensor]:
    """Attention-gated fusion: ``F*[i] = F_T[i] + sum_j alpha[i, j] F_1[j]``.

    ``alpha`` is the row softmax of ``G @ Theta`` where ``G`` holds the cosine
    similarity between channels of ``F_1`` and ``F_T``.
    """
    g = ad.row_cosine(f1, ft, COSINE_FLOOR)
    alpha = ad.softmax(ad.matmul(g, theta), axis=-1)
    return ft + ad.matmul(alpha, f1), alpha


def generate_ecg(fstar: Tensor, p: dict[str, Tensor], spec: LayerSpec) -> Tensor:
    """Sum over channels of per-channel transposed convolutions, plus a scalar bias."""
    y = ad.tconv1d(fstar, p["gen.w"], p["gen.b"], spec.stride, spec.padding)
    return ad.reshape(y, y.shape[:-2] + y.shape[-1:])


def diagnose(fstar: Tensor, p: dict[str, Tensor], arch: ArchConfig) -> tuple[Tensor, Tensor]:
    """Channel attention from per-channel statistics, then the conv + FC classifier."""
    if fstar.shape[-1] != arch.length:
        raise ValueError(f"diagnosis branch needs length {arch.length}, got {fstar.shape[-1]}")
    h = ad.channel_stats(fstar)
    n_att = len(arch.attention) - 1
    for i in range(1, n_att + 1):
        h = ad.linear(h, p[f"att.fc{i}.w"], p[f"att.fc{i}.b"])
        h = ad.relu(h) if i < n_att else ad.sigmoid(h)
    w = h
    z = ad.scale_channels(fstar, w)
    for i, spec in enumerate(arch.classifier, 1):
        z = apply_layer(z, p, f"cls.conv{i}", spec)
    z = ad.reshape(z, z.shape[:-2] + (z.shape[-2] * z.shape[-1],))
    n_fc = len(arch.classifier_fc) - 1
    for i in range(1, n_fc + 1):
        z = ad.linear(z, p[f"cls.fc{i}.w"], p[f"cls.fc{i}.b"])
        if i < n_fc:
            z = ad.relu(z)
    return ad.softmax(z, axis=-1), w


def encode_decode(x: Tensor, p: dict[str, Tensor], model: ModelParams) -> tuple[Tensor, Tensor]:
    arch = model.arch
    f1 = apply_layer(x, p, "first_conv", arch.first_conv)
    if model.f1_keep is not None and f1.shape[-2] != len(model.f1_keep):
        f1 = ad.select_channels(f1, model.f1_keep)
    h = f1
    if arch.recursion_depth > 1:
        h = recursive_forward(h, p, "fem", arch.fems[0], arch.recursion_depth)
        h = recursive_forward(h, p, "ftm", arch.ftms[0], arch.recursion_depth)
    else:
        for i, m in enumerate(arch.fems, 1):
            h = fem_forward(h, p, f"fem{i}", m)
        for i, m in enumerate(arch.ftms, 1):
            h = ftm_forward(h, p, f"ftm{i}", m)
    if model.fstar_keep is not None and h.shape[-2] != len(model.fstar_keep):
        h = ad.select_channels(h, model.fstar_keep)
    return f1, h


def forward(model: ModelParams, x, p: dict[str, Tensor] | None = None, diagnosis: bool = True) -> ForwardOutputs:
    """Run the network on ``x`` of shape ``(L,)`` or ``(B, L)``.

    ``p`` supplies parameter tensors (e.g. ones tracking gradients); by default
    constants are built from ``model.values``. ``diagnosis=False`` skips the
    classifier branch when only the ECG output is needed.
    """
    if p is None:
        p = model.tensors()
    x = ad.as_tensor(x)
    single = x.ndim == 1
    if single:
        x = ad.reshape(x, (1, x.shape[0]))
    if x.shape[-1] != model.arch.length:
        raise ValueError(f"input length {x.shape[-1]} != model length {model.arch.length}")
    x = ad.reshape(x, (x.shape[0], 1, x.shape[1]))
    f1, ft = encode_decode(x, p, model)
    fstar, alpha = fusion_attention(f1, ft, p["fusion.theta"])
    ecg = generate_ecg(fstar, p, model.arch.generation)
    probs = w = None
    if diagnosis and model.arch.has_diagnosis:
        probs, w = diagnose(fstar, p, model.arch)
    out = ForwardOutputs(ecg, probs, f1, fstar, w, alpha)
    if single:
        out = ForwardOutputs(*(None if t is None else ad.take(t, 0) for t in (ecg, probs, f1, fstar, w, alpha)))
    return out


def forward_full(p_cycle, model: ModelParams) -> dict[str, np.ndarray]:
    """Inference on one or more cycles; returns plain arrays."""
    out = forward(model, np.asarray(p_cycle, dtype=np.float64))
    return {
        "ecg_hat": out.ecg_hat.data,
        "class_probs": None if out.class_probs is None else out.class_probs.data,
        "f1_map": out.f1_map.data,
        "fstar_map": out.fstar_map.data,
        "channel_weights": None if out.channel_weights is None else out.channel_weights.data,
        "fusion_alpha": out.fusion_alpha.data,
    }


# ----------------------------------------------------------------------------
# U-Net baseline


UNET_TABLE = (
    ("enc1", _conv(1, 60, 30)),
    ("enc2", _conv(60, 40, 15)),
    ("enc3", _conv(40, 20, 5)),
    ("dec1", _tconv(20, 40, 5)),
    ("dec2", _tconv(40, 60, 15)),
    ("gen", LayerSpec(60, 1, 30, 1, "same", False, True)),
)


@dataclass
class UNetParams:
    table: tuple[tuple[str, LayerSpec], ...]
    values: dict[str, np.ndarray]
    length: int = CYCLE_LENGTH

    def n_params(self) -> int:
        return int(np.sum([v.size for v in self.values.values()]))

    def tensors(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad) for k, v in self.values.items()}


def build_unet_baseline(table=UNET_TABLE, length: int = CYCLE_LENGTH, seed: int = 0) -> UNetParams:
    """Three conv encoder layers, two transposed-conv decoder layers, generation layer.

    Mirrored layers are joined by element-wise summation.
    """
    table = tuple(table)
    enc = [s for n, s in table if n.startswith("enc")]
    dec = [s for n, s in table if n.startswith("dec")]
    for d, e in zip(dec, reversed(enc[:-1])):
        if d.n_out != e.n_out:
            raise ValueError(f"skip connection needs matching channels, got {d.n_out} vs {e.n_out}")
    rng = np.random.default_rng(seed)
    values = {}
    for name, spec in table:
        for pname, shape in _layer_shapes(name, spec).items():
            kind = pname.rsplit(".", 1)[1]
            if kind == "w":
                fi = spec.n_in * spec.kernel
                limit = math.sqrt(6.0 / fi)
                values[pname] = rng.uniform(-limit, limit, size=shape)
            else:
                values[pname] = np.ones(shape) if kind == "ln_g" else np.zeros(shape)
    return UNetParams(table, values, length)


def unet_forward(model: UNetParams, x, p: dict[str, Tensor] | None = None) -> Tensor:
    if p is None:
        p = model.tensors()
    x = ad.as_tensor(x)
    single = x.ndim == 1
    if single:
        x = ad.reshape(x, (1, x.shape[0]))
    h = ad.reshape(x, (x.shape[0], 1, x.shape[1]))
    skips = []
    enc = [(n, s) for n, s in model.table if n.startswith("enc")]
    dec = [(n, s) for n, s in model.table if n.startswith("dec")]
    for name, spec in enc:
        h = apply_layer(h, p, name, spec)
        skips.append(h)
    skips = skips[:-1]
    for name, spec in dec:
        h = apply_layer(h, p, name, spec) + skips.pop()
    gen = dict(model.table)["gen"]
    y = ad.tconv1d(h, p["gen.w"], p["gen.b"], gen.stride, gen.padding)
    y = ad.reshape(y, y.shape[:-2] + y.shape[-1:])
    return ad.take(y, 0) if single else y
