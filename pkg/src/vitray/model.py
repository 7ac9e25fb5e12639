"""Vision Transformer classifier built on the autodiff tensor library.

Pipeline: split the image into non-overlapping square patches, linearly
project each flattened patch into the hidden dimension, prepend a learned
classification token, add position embeddings, run a stack of pre-norm
encoder blocks (multi-head self-attention + MLP, residual around each),
apply a final layer norm, and map the classification token through a
linear head to per-class logits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import (
    Tensor,
    broadcast_to,
    concat,
    gelu,
    layer_norm,
    matmul,
    softmax,
    truncated_normal,
)

INIT_STD = 0.02

FROZEN_PREFIXES = ("layers.", "final_ln.")  # encoder scope for freeze_encoder


@dataclass
class ViTConfig:
    """Architecture hyperparameters; defaults mirror the base 224px setup."""

    image_size: int = 224
    patch_size: int = 16
    in_channels: int = 3
    hidden_size: int = 768
    intermediate_size: int = 3072
    num_layers: int = 12
    num_heads: int = 12
    num_classes: int = 7
    attn_dropout: float = 0.0
    hidden_dropout: float = 0.0
    ln_eps: float = 1e-12
    freeze_encoder: bool = False

    def __post_init__(self):
        if self.image_size <= 0 or self.patch_size <= 0:
            raise ConfigError("image_size and patch_size must be positive")
        if self.image_size % self.patch_size != 0:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )
        if self.hidden_size % self.num_heads != 0:
            raise ConfigError(
                f"hidden_size {self.hidden_size} not divisible by num_heads {self.num_heads}"
            )
        for name in ("attn_dropout", "hidden_dropout"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {p}")
        if self.ln_eps <= 0:
            raise ConfigError(f"ln_eps must be positive, got {self.ln_eps}")
        for name in ("in_channels", "hidden_size", "intermediate_size", "num_layers",
                     "num_heads", "num_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")

    @property
    def num_patches(self) -> int:
        side = self.image_size // self.patch_size
        return side * side

    @property
    def seq_len(self) -> int:
        return self.num_patches + 1  # patches plus classification token

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.num_heads

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ViTConfig":
        return cls(**d)


def parameter_shapes(cfg: ViTConfig) -> dict[str, tuple]:
    """Name -> shape for every parameter tensor, in canonical order."""
    d, i = cfg.hidden_size, cfg.intermediate_size
    shapes: dict[str, tuple] = {
        "patch_embed.weight": (cfg.patch_size**2 * cfg.in_channels, d),
        "patch_embed.bias": (d,),
        "cls_token": (1, d),
        "pos_embed": (cfg.seq_len, d),
    }
    for k in range(cfg.num_layers):
        pre = f"layers.{k}."
        shapes[pre + "ln1.gamma"] = (d,)
        shapes[pre + "ln1.beta"] = (d,)
        for name in ("q", "k", "v", "out"):
            shapes[pre + f"attn.{name}.weight"] = (d, d)
            shapes[pre + f"attn.{name}.bias"] = (d,)
        shapes[pre + "ln2.gamma"] = (d,)
        shapes[pre + "ln2.beta"] = (d,)
        shapes[pre + "mlp.fc1.weight"] = (d, i)
        shapes[pre + "mlp.fc1.bias"] = (i,)
        shapes[pre + "mlp.fc2.weight"] = (i, d)
        shapes[pre + "mlp.fc2.bias"] = (d,)
    shapes["final_ln.gamma"] = (d,)
    shapes["final_ln.beta"] = (d,)
    shapes["head.weight"] = (d, cfg.num_classes)
    shapes["head.bias"] = (cfg.num_classes,)
    return shapes


def count_parameters(cfg: ViTConfig, scope: str = "all") -> int:
    """Exact parameter count for a scope, straight from the config.

    ``trainable`` excludes the encoder stack (``layers.*`` plus the final
    layer norm) when freeze_encoder is set; the patch projection, class
    token, position embeddings, and head always remain trainable.
    """
    shapes = parameter_shapes(cfg)
    if scope == "all":
        selected = shapes
    elif scope in ("patch_embed", "head"):
        selected = {n: s for n, s in shapes.items() if n.startswith(scope + ".")}
    elif scope == "trainable":
        if cfg.freeze_encoder:
            selected = {n: s for n, s in shapes.items() if not n.startswith(FROZEN_PREFIXES)}
        else:
            selected = shapes
    else:
        raise ConfigError(f"unknown parameter scope {scope!r}")
    return int(sum(math.prod(s) for s in selected.values()))


def patchify(images: Tensor, cfg: ViTConfig) -> Tensor:
    """[B, C, H, W] (or [C, H, W]) -> [B, N, P*P*C] rows of flattened patches.

    Row i is patch i in row-major patch-grid order; each patch flattens
    channel-major then row-major, so the mapping is a lossless partition
    of the pixels.
    """
    single = images.ndim == 3
    if single:
        images = images.reshape((1,) + images.shape)
    b, c, h, w = images.shape
    s, p = cfg.image_size, cfg.patch_size
    if c != cfg.in_channels or h != s or w != s:
        raise ShapeError(
            f"patchify: expected images [{cfg.in_channels}, {s}, {s}], got {images.shape[1:]}"
        )
    g = s // p
    x = images.reshape((b, c, g, p, g, p))        # [B, C, Gy, P, Gx, P]
    x = x.transpose((0, 2, 4, 1, 3, 5))           # [B, Gy, Gx, C, P, P]
    x = x.reshape((b, g * g, c * p * p))          # [B, N, P*P*C]
    return x.reshape((g * g, c * p * p)) if single else x


class ViTModel:
    """Parameter container plus forward pass.

    Parameters live in an insertion-ordered name -> Tensor mapping so
    optimizer iteration, checkpoints, and gradient accumulation all share
    one deterministic order.
    """

    def __init__(self, config: ViTConfig, rng: np.random.Generator | None = None,
                 params: dict[str, Tensor] | None = None):
        self.config = config
        shapes = parameter_shapes(config)
        if params is not None:
            if set(params) != set(shapes):
                missing = set(shapes).symmetric_difference(params)
                raise ConfigError(f"parameter set mismatch: {sorted(missing)}")
            self.params = {name: params[name] for name in shapes}
            for name, shape in shapes.items():
                if self.params[name].shape != shape:
                    raise ShapeError(f"parameter {name}: expected {shape}, got {self.params[name].shape}")
        else:
            if rng is None:
                raise ConfigError("ViTModel needs an rng (or explicit params) to initialize")
            self.params = self._init_params(shapes, rng)

    @staticmethod
    def _init_params(shapes: dict[str, tuple], rng: np.random.Generator) -> dict[str, Tensor]:
        # Truncated normal (std 0.02) for weights, embeddings, and the class
        # token; zeros for biases; identity affine for the layer norms.
        params: dict[str, Tensor] = {}
        for name, shape in shapes.items():
            if name.endswith(".bias") or name.endswith(".beta"):
                data = np.zeros(shape)
            elif name.endswith(".gamma"):
                data = np.ones(shape)
            else:
                data = truncated_normal(rng, shape, std=INIT_STD)
            params[name] = Tensor(data)
        return params

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def trainable_parameters(self) -> dict[str, Tensor]:
        """All parameters, minus the encoder stack when it is frozen.

        Frozen scope = every ``layers.*`` tensor plus the final layer norm;
        the patch projection, class token, position embeddings, and head
        stay trainable, matching a head-plus-embedding fine-tuning setup.
        """
        if not self.config.freeze_encoder:
            return dict(self.params)
        return {name: t for name, t in self.params.items()
                if not name.startswith(FROZEN_PREFIXES)}

    def parameter_count(self, scope: str = "all") -> int:
        return count_parameters(self.config, scope)

    def forward(self, images: Tensor, train: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        """[B, C, H, W] images -> [B, num_classes] logits."""
        cfg = self.config
        patches = patchify(images, cfg)                       # [B, N, PPC]
        x = embed(patches, self)                              # [B, N+1, D]
        x = _dropout(x, cfg.hidden_dropout, train, rng)
        for k in range(cfg.num_layers):
            x = encoder_block(x, self, k, train=train, rng=rng)
        x = layer_norm(x, self.params["final_ln.gamma"], self.params["final_ln.beta"], cfg.ln_eps)
        cls = x[:, 0, :]                                      # [B, D]
        return matmul(cls, self.params["head.weight"]) + self.params["head.bias"]

    def predict_proba(self, images: Tensor) -> np.ndarray:
        """Class probabilities from a softmax over the logits."""
        return softmax(self.forward(images, train=False), axis=-1).data


def embed(patches: Tensor, model: ViTModel) -> Tensor:
    """Project patches, prepend the class token, add position embeddings.

    [B, N, P*P*C] -> [B, N+1, D]; also accepts a single [N, P*P*C] sequence.
    """
    cfg = model.config
    single = patches.ndim == 2
    if single:
        patches = patches.reshape((1,) + patches.shape)
    b, n, ppc = patches.shape
    if n != cfg.num_patches or ppc != cfg.patch_size**2 * cfg.in_channels:
        raise ShapeError(
            f"embed: expected patches [*, {cfg.num_patches}, {cfg.patch_size**2 * cfg.in_channels}],"
            f" got {patches.shape}"
        )
    tokens = matmul(patches, model.params["patch_embed.weight"]) + model.params["patch_embed.bias"]
    cls = broadcast_to(model.params["cls_token"].reshape((1, 1, cfg.hidden_size)),
                       (b, 1, cfg.hidden_size))
    x = concat([cls, tokens], axis=1) + model.params["pos_embed"]   # [B, N+1, D]
    return x.reshape((cfg.seq_len, cfg.hidden_size)) if single else x


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(Q Kᵀ / sqrt(d_k)) V with row-wise softmax.

    Works on [T, d] matrices or with leading batch/head axes; every output
    row is a convex combination of the rows of V.
    """
    return _attention_core(q, k, v, dropout=0.0, train=False, rng=None)


def _attention_core(q: Tensor, k: Tensor, v: Tensor, dropout: float,
                    train: bool, rng: np.random.Generator | None) -> Tensor:
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"attention: Q {q.shape} and K {k.shape} must share the key dimension")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention: K {k.shape} and V {v.shape} must share the sequence length")
    scale = 1.0 / math.sqrt(q.shape[-1])
    kt = k.transpose(tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))
    weights = softmax(matmul(q, kt) * scale, axis=-1)      # [..., Tq, Tk]
    weights = _dropout(weights, dropout, train, rng)
    return matmul(weights, v)                              # [..., Tq, d_v]


def multi_head_attention(x: Tensor, model: ViTModel, layer: int, train: bool = False,
                         rng: np.random.Generator | None = None) -> Tensor:
    """Split D into heads, attend per head, concatenate, project."""
    cfg = model.config
    p = model.params
    pre = f"layers.{layer}.attn."
    b, t, d = x.shape
    h, dk = cfg.num_heads, cfg.head_dim

    def heads(name):
        y = matmul(x, p[pre + name + ".weight"]) + p[pre + name + ".bias"]  # [B, T, D]
        return y.reshape((b, t, h, dk)).transpose((0, 2, 1, 3))             # [B, H, T, dk]

    att = _attention_core(heads("q"), heads("k"), heads("v"),
                          cfg.attn_dropout, train, rng)                     # [B, H, T, dk]
    merged = att.transpose((0, 2, 1, 3)).reshape((b, t, d))                 # [B, T, D]
    out = matmul(merged, p[pre + "out.weight"]) + p[pre + "out.bias"]
    return _dropout(out, cfg.hidden_dropout, train, rng)


def mlp_block(x: Tensor, model: ViTModel, layer: int, train: bool = False,
              rng: np.random.Generator | None = None) -> Tensor:
    p = model.params
    pre = f"layers.{layer}.mlp."
    hidden = gelu(matmul(x, p[pre + "fc1.weight"]) + p[pre + "fc1.bias"])
    out = matmul(hidden, p[pre + "fc2.weight"]) + p[pre + "fc2.bias"]
    return _dropout(out, model.config.hidden_dropout, train, rng)


def encoder_block(x: Tensor, model: ViTModel, layer: int, train: bool = False,
                  rng: np.random.Generator | None = None) -> Tensor:
    """Pre-norm residual block: x + MHSA(LN(x)), then + MLP(LN(.))."""
    cfg = model.config
    p = model.params
    pre = f"layers.{layer}."
    normed = layer_norm(x, p[pre + "ln1.gamma"], p[pre + "ln1.beta"], cfg.ln_eps)
    x = x + multi_head_attention(normed, model, layer, train=train, rng=rng)
    normed = layer_norm(x, p[pre + "ln2.gamma"], p[pre + "ln2.beta"], cfg.ln_eps)
    return x + mlp_block(normed, model, layer, train=train, rng=rng)


def _dropout(x: Tensor, p: float, train: bool, rng: np.random.Generator | None) -> Tensor:
    if not train or p <= 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs an rng")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * Tensor(mask)
