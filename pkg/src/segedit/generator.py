"""Deterministic differentiable toy decoder with StyleGAN-shaped latent spaces.

The decoder maps a code in one of four spaces (Z -> W -> WPlus -> SSpace,
promotion only) to an RGB image: a learned constant feeds a stack of
3x3 conv layers, each bilinearly upsampled x2 (except the first), modulated
per channel by that layer's style vector, and squashed through leaky-ReLU;
a final 1x1 conv plus logistic squash produces pixels strictly inside (0, 1).

Everything is plain float64 numpy with hand-written reverse-mode gradients,
so repeated calls are bit-identical and finite differences stay meaningful.
Weights are drawn from a SplitMix64 stream in a fixed, documented order
(mapping W1, b1, W2, b2; constant; per layer: kernel, bias, style weight,
style bias; RGB weight, bias), each tensor uniform(-g/sqrt(fan_in),
+g/sqrt(fan_in)) with g = sqrt(3) so activations keep unit-order variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache

import numpy as np

from .prng import SplitMix64

LEAKY_SLOPE = 0.2
_GAIN = np.sqrt(3.0)  # uniform(-g/sqrt(fan_in), +) has variance 1/fan_in


class SpaceError(Exception):
    """Latent space mismatch or an attempted demotion."""


class CodeFileError(Exception):
    """Latent-code file malformed or written against a different generator."""


class Space(Enum):
    Z = "Z"
    W = "W"
    WPLUS = "WPlus"
    SSPACE = "SSpace"

    @property
    def rank(self) -> int:
        return _SPACE_RANK[self]


_SPACE_RANK = {Space.Z: 0, Space.W: 1, Space.WPLUS: 2, Space.SSPACE: 3}


def space_from_name(name: str) -> Space:
    for s in Space:
        if s.value == name:
            return s
    raise SpaceError(f"unknown latent space {name!r}")


@dataclass(frozen=True)
class GeneratorConfig:
    latent_dim: int = 32
    layer_count: int = 4
    base_resolution: int = 4
    channels_per_layer: tuple[int, ...] = (16, 16, 8, 8)
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim < 1 or self.layer_count < 1 or self.base_resolution < 1:
            raise ValueError("all generator dimensions must be >= 1")
        if len(self.channels_per_layer) != self.layer_count:
            raise ValueError("channels_per_layer length must equal layer_count")
        if any(c < 1 for c in self.channels_per_layer):
            raise ValueError("channel counts must be >= 1")
        object.__setattr__(self, "channels_per_layer", tuple(int(c) for c in self.channels_per_layer))

    @property
    def output_resolution(self) -> int:
        return self.base_resolution * 2 ** (self.layer_count - 1)

    def payload_dim(self, space: Space) -> int:
        if space in (Space.Z, Space.W):
            return self.latent_dim
        if space is Space.WPLUS:
            return self.layer_count * self.latent_dim
        return sum(self.channels_per_layer)


@dataclass(frozen=True)
class LatentCode:
    """A code in one space, stored as a flat float64 vector."""

    space: Space
    payload: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.payload, dtype=np.float64).ravel()
        if not np.all(np.isfinite(p)):
            raise ValueError("latent payload contains non-finite values")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "payload", p)


def _check_code(code: LatentCode, space: Space, config: GeneratorConfig) -> None:
    if code.space is not space:
        raise SpaceError(f"expected a {space.value} code, got {code.space.value}")
    want = config.payload_dim(space)
    if code.payload.shape != (want,):
        raise SpaceError(f"{space.value} payload must have {want} entries, got {code.payload.shape}")


@dataclass(frozen=True)
class ToyGenerator:
    config: GeneratorConfig
    map_w1: np.ndarray
    map_b1: np.ndarray
    map_w2: np.ndarray
    map_b2: np.ndarray
    constant: np.ndarray
    conv_kernels: tuple[np.ndarray, ...]
    conv_biases: tuple[np.ndarray, ...]
    style_weights: tuple[np.ndarray, ...]
    style_biases: tuple[np.ndarray, ...]
    rgb_weight: np.ndarray
    rgb_bias: np.ndarray

    def weight_arrays(self) -> list[np.ndarray]:
        out = [self.map_w1, self.map_b1, self.map_w2, self.map_b2, self.constant]
        for k, b, a, sb in zip(self.conv_kernels, self.conv_biases, self.style_weights, self.style_biases):
            out += [k, b, a, sb]
        out += [self.rgb_weight, self.rgb_bias]
        return out

    def parameter_count(self) -> int:
        return sum(a.size for a in self.weight_arrays())

    def with_updated_weights(
        self,
        final_layer: np.ndarray | None = None,
        rgb_projection: np.ndarray | None = None,
    ) -> "ToyGenerator":
        """Copy of this generator with the fine-tunable weight subsets replaced."""
        gen = self
        if final_layer is not None:
            k, b = unpack_weight_subset(self.config, "final_layer", final_layer)
            kernels = self.conv_kernels[:-1] + (k,)
            biases = self.conv_biases[:-1] + (b,)
            gen = replace(gen, conv_kernels=kernels, conv_biases=biases)
        if rgb_projection is not None:
            w, b = unpack_weight_subset(self.config, "rgb_projection", rgb_projection)
            gen = replace(gen, rgb_weight=w, rgb_bias=b)
        return gen


WEIGHT_SUBSETS = ("final_layer", "rgb_projection")


def subset_size(config: GeneratorConfig, subset: str) -> int:
    ch = config.channels_per_layer
    if subset == "final_layer":
        cin = ch[-2] if config.layer_count > 1 else ch[0]
        return ch[-1] * cin * 9 + ch[-1]
    if subset == "rgb_projection":
        return 3 * ch[-1] + 3
    raise ValueError(f"unknown weight subset {subset!r}")


def pack_weight_subset(gen: ToyGenerator, subset: str) -> np.ndarray:
    if subset == "final_layer":
        return np.concatenate([gen.conv_kernels[-1].ravel(), gen.conv_biases[-1]])
    if subset == "rgb_projection":
        return np.concatenate([gen.rgb_weight.ravel(), gen.rgb_bias])
    raise ValueError(f"unknown weight subset {subset!r}")


def unpack_weight_subset(config: GeneratorConfig, subset: str, flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    flat = np.asarray(flat, dtype=np.float64).ravel()
    if flat.shape != (subset_size(config, subset),):
        raise ValueError(f"subset {subset!r} expects {subset_size(config, subset)} entries, got {flat.size}")
    ch = config.channels_per_layer
    if subset == "final_layer":
        cin = ch[-2] if config.layer_count > 1 else ch[0]
        k = flat[: ch[-1] * cin * 9].reshape(ch[-1], cin, 3, 3)
        b = flat[ch[-1] * cin * 9 :]
        return k, b
    w = flat[: 3 * ch[-1]].reshape(3, ch[-1])
    b = flat[3 * ch[-1] :]
    return w, b


def new_generator(config: GeneratorConfig) -> ToyGenerator:
    """Draw all weights from the seeded stream in the documented fixed order."""
    rng = SplitMix64(config.seed)
    d = config.latent_dim
    ch = config.channels_per_layer

    def draw(shape: tuple[int, ...], fan_in: float) -> np.ndarray:
        bound = _GAIN / np.sqrt(fan_in)
        return rng.uniform(int(np.prod(shape)), -bound, bound).reshape(shape)

    map_w1 = draw((d, d), d)
    map_b1 = draw((d,), d)
    map_w2 = draw((d, d), d)
    map_b2 = draw((d,), d)
    constant = rng.uniform(ch[0] * config.base_resolution**2, -1.0, 1.0).reshape(
        ch[0], config.base_resolution, config.base_resolution
    )
    kernels, biases, style_ws, style_bs = [], [], [], []
    for layer in range(config.layer_count):
        cin = ch[layer - 1] if layer > 0 else ch[0]
        kernels.append(draw((ch[layer], cin, 3, 3), cin * 9))
        biases.append(draw((ch[layer],), cin * 9))
        style_ws.append(draw((ch[layer], d), d))
        style_bs.append(draw((ch[layer],), d))
    rgb_w = draw((3, ch[-1]), ch[-1])
    rgb_b = draw((3,), ch[-1])
    gen = ToyGenerator(
        config=config,
        map_w1=map_w1,
        map_b1=map_b1,
        map_w2=map_w2,
        map_b2=map_b2,
        constant=constant,
        conv_kernels=tuple(kernels),
        conv_biases=tuple(biases),
        style_weights=tuple(style_ws),
        style_biases=tuple(style_bs),
        rgb_weight=rgb_w,
        rgb_bias=rgb_b,
    )
    for arr in gen.weight_arrays():
        arr.flags.writeable = False
    return gen


# --- primitive ops -----------------------------------------------------------


def _lrelu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, x, LEAKY_SLOPE * x)


def _lrelu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, 1.0, LEAKY_SLOPE)


@lru_cache(maxsize=None)
def _upsample_matrix(n: int) -> np.ndarray:
    """(2n x n) bilinear interpolation; output j samples source at (j+0.5)/2 - 0.5."""
    u = np.zeros((2 * n, n))
    for j in range(2 * n):
        p = min(max((j + 0.5) / 2.0 - 0.5, 0.0), float(n - 1))
        i0 = int(np.floor(p))
        t = p - i0
        i1 = min(i0 + 1, n - 1)
        u[j, i0] += 1.0 - t
        u[j, i1] += t
    u.flags.writeable = False
    return u


def _upsample2x(x: np.ndarray) -> np.ndarray:
    u = _upsample_matrix(x.shape[1])
    return np.matmul(np.matmul(u, x), u.T)


def _upsample2x_adjoint(g: np.ndarray) -> np.ndarray:
    u = _upsample_matrix(g.shape[1] // 2)
    return np.matmul(np.matmul(u.T, g), u)


def _conv3x3(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Zero-padded 3x3 conv as an im2col GEMM; also returns the column matrix."""
    c, h, w = x.shape
    xpad = np.zeros((c, h + 2, w + 2))
    xpad[:, 1:-1, 1:-1] = x
    cols5 = np.empty((c, 3, 3, h, w))
    for ky in range(3):
        for kx in range(3):
            cols5[:, ky, kx] = xpad[:, ky : ky + h, kx : kx + w]
    cols = cols5.reshape(c * 9, h * w)
    cout = kernel.shape[0]
    y = (kernel.reshape(cout, c * 9) @ cols).reshape(cout, h, w) + bias[:, None, None]
    return y, cols


def _conv3x3_input_grad(g: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    cout, cin = kernel.shape[:2]
    h, w = g.shape[1:]
    t = (kernel.reshape(cout, cin * 9).T @ g.reshape(cout, h * w)).reshape(cin, 3, 3, h, w)
    dxpad = np.zeros((cin, h + 2, w + 2))
    for ky in range(3):
        for kx in range(3):
            dxpad[:, ky : ky + h, kx : kx + w] += t[:, ky, kx]
    return dxpad[:, 1 : h + 1, 1 : w + 1]


def _conv1x1(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    return (weight @ x.reshape(c, h * w)).reshape(weight.shape[0], h, w) + bias[:, None, None]


# --- latent-space plumbing ---------------------------------------------------


def map_z_to_w(gen: ToyGenerator, z: LatentCode) -> LatentCode:
    """Two affine layers with a leaky-ReLU between them."""
    _check_code(z, Space.Z, gen.config)
    h = gen.map_w1 @ z.payload + gen.map_b1
    w = gen.map_w2 @ _lrelu(h) + gen.map_b2
    return LatentCode(Space.W, w)


def split_style_payload(config: GeneratorConfig, payload: np.ndarray) -> list[np.ndarray]:
    cuts = np.cumsum(config.channels_per_layer)[:-1]
    return np.split(payload, cuts)


def promote(code: LatentCode, target_space: Space, gen: ToyGenerator) -> LatentCode:
    """Promote along Z -> W -> WPlus -> SSpace; demotions are not invertible."""
    cfg = gen.config
    _check_code(code, code.space, cfg)
    if target_space.rank < code.space.rank:
        raise SpaceError(f"cannot demote {code.space.value} to {target_space.value}")
    cur = code
    while cur.space is not target_space:
        if cur.space is Space.Z:
            cur = map_z_to_w(gen, cur)
        elif cur.space is Space.W:
            cur = LatentCode(Space.WPLUS, np.tile(cur.payload, cfg.layer_count))
        else:  # WPlus -> SSpace: s_l = A_l w_l + b_l
            rows = cur.payload.reshape(cfg.layer_count, cfg.latent_dim)
            styles = [a @ w + b for a, b, w in zip(gen.style_weights, gen.style_biases, rows)]
            cur = LatentCode(Space.SSPACE, np.concatenate(styles))
    return cur


# --- forward / backward ------------------------------------------------------


def _forward(gen: ToyGenerator, style_payload: np.ndarray) -> tuple[np.ndarray, dict]:
    cfg = gen.config
    styles = split_style_payload(cfg, style_payload)
    x = gen.constant
    layer_cache = []
    for layer in range(cfg.layer_count):
        x_in = _upsample2x(x) if layer > 0 else x
        conv_out, cols = _conv3x3(x_in, gen.conv_kernels[layer], gen.conv_biases[layer])
        scaled = conv_out * styles[layer][:, None, None]
        layer_cache.append({"cols": cols, "conv_out": conv_out, "scaled": scaled, "style": styles[layer]})
        x = _lrelu(scaled)
    rgb = _conv1x1(x, gen.rgb_weight, gen.rgb_bias)
    out = 1.0 / (1.0 + np.exp(-rgb))
    return out, {"layers": layer_cache, "features": x, "out": out}


def synthesize(gen: ToyGenerator, code: LatentCode) -> "ImageBuffer":
    """Render a code from any space (promoted internally to SSpace)."""
    img, _ = render_with_cache(gen, code)
    return img


def render_with_cache(gen: ToyGenerator, code: LatentCode) -> tuple["ImageBuffer", dict]:
    """Synthesize and keep the forward cache so a backward pass can reuse it."""
    from .image import ImageBuffer

    style = promote(code, Space.SSPACE, gen)
    out, cache = _forward(gen, style.payload)
    return ImageBuffer(np.ascontiguousarray(out.transpose(1, 2, 0))), cache


def code_grad_from_cache(gen: ToyGenerator, code: LatentCode, cache: dict, upstream: np.ndarray) -> np.ndarray:
    """Code gradient reusing a forward cache from render_with_cache."""
    up = _check_upstream(gen, upstream)
    grads = _backward(gen, cache, up, want_weights=False)
    return _style_grads_to_code_grad(gen, code, grads["styles"])


def grads_from_cache(gen: ToyGenerator, code: LatentCode, cache: dict, upstream: np.ndarray) -> tuple[np.ndarray, dict]:
    """Code gradient plus both weight-subset gradients from one cached forward."""
    up = _check_upstream(gen, upstream)
    grads = _backward(gen, cache, up, want_weights=True)
    code_grad = _style_grads_to_code_grad(gen, code, grads["styles"])
    weight_grads = {
        "final_layer": np.concatenate([grads["final_kernel"].ravel(), grads["final_bias"]]),
        "rgb_projection": np.concatenate([grads["rgb_weight"].ravel(), grads["rgb_bias"]]),
    }
    return code_grad, weight_grads


def _backward(
    gen: ToyGenerator,
    cache: dict,
    upstream_hw3: np.ndarray,
    want_weights: bool,
) -> dict:
    """Reverse pass from an image-shaped gradient down to per-layer style grads."""
    g = np.ascontiguousarray(upstream_hw3.transpose(2, 0, 1))
    out = cache["out"]
    g = g * out * (1.0 - out)
    grads: dict = {}
    feats = cache["features"]
    if want_weights:
        grads["rgb_weight"] = g.reshape(3, -1) @ feats.reshape(feats.shape[0], -1).T
        grads["rgb_bias"] = g.sum(axis=(1, 2))
    g = (gen.rgb_weight.T @ g.reshape(3, -1)).reshape(feats.shape)
    style_grads: list[np.ndarray] = [None] * gen.config.layer_count  # type: ignore[list-item]
    for layer in reversed(range(gen.config.layer_count)):
        lc = cache["layers"][layer]
        g = g * _lrelu_grad(lc["scaled"])
        style_grads[layer] = (g * lc["conv_out"]).sum(axis=(1, 2))
        g = g * lc["style"][:, None, None]
        if want_weights and layer == gen.config.layer_count - 1:
            kern = gen.conv_kernels[layer]
            grads["final_kernel"] = (g.reshape(kern.shape[0], -1) @ lc["cols"].T).reshape(kern.shape)
            grads["final_bias"] = g.sum(axis=(1, 2))
        g = _conv3x3_input_grad(g, gen.conv_kernels[layer])
        if layer > 0:
            g = _upsample2x_adjoint(g)
    grads["styles"] = style_grads
    return grads


def _style_grads_to_code_grad(gen: ToyGenerator, code: LatentCode, style_grads: list[np.ndarray]) -> np.ndarray:
    cfg = gen.config
    if code.space is Space.SSPACE:
        return np.concatenate(style_grads)
    # chain through s_l = A_l w_l + b_l
    per_layer = [a.T @ ds for a, ds in zip(gen.style_weights, style_grads)]
    if code.space is Space.WPLUS:
        return np.concatenate(per_layer)
    dw = np.sum(per_layer, axis=0)
    if code.space is Space.W:
        return dw
    # Z: chain through the mapping network
    h = gen.map_w1 @ code.payload + gen.map_b1
    return gen.map_w1.T @ (_lrelu_grad(h) * (gen.map_w2.T @ dw))


def _check_upstream(gen: ToyGenerator, upstream: np.ndarray) -> np.ndarray:
    res = gen.config.output_resolution
    up = np.asarray(upstream, dtype=np.float64)
    if up.shape != (res, res, 3):
        raise ValueError(f"upstream gradient must be ({res}, {res}, 3), got {up.shape}")
    if not np.all(np.isfinite(up)):
        raise ValueError("upstream gradient contains non-finite values")
    return up


def synth_grad_code(gen: ToyGenerator, code: LatentCode, upstream: np.ndarray) -> np.ndarray:
    """Exact gradient of synthesize w.r.t. the code payload, chained through promotions."""
    _check_code(code, code.space, gen.config)
    _, cache = render_with_cache(gen, code)
    return code_grad_from_cache(gen, code, cache, upstream)


def synth_grad_weights(gen: ToyGenerator, code: LatentCode, upstream: np.ndarray, subset: str) -> np.ndarray:
    """Exact gradient of synthesize w.r.t. one fine-tunable weight subset."""
    if subset not in WEIGHT_SUBSETS:
        raise ValueError(f"unknown weight subset {subset!r}; expected one of {WEIGHT_SUBSETS}")
    _, cache = render_with_cache(gen, code)
    _, weight_grads = grads_from_cache(gen, code, cache, upstream)
    return weight_grads[subset]


def synth_grad_code_and_weights(gen: ToyGenerator, code: LatentCode, upstream: np.ndarray) -> tuple[np.ndarray, dict]:
    """One backward pass returning the code gradient plus both weight subsets."""
    _, cache = render_with_cache(gen, code)
    return grads_from_cache(gen, code, cache, upstream)


# --- serialization -----------------------------------------------------------


def code_to_obj(code: LatentCode, gen: ToyGenerator) -> dict:
    cfg = gen.config
    if code.space in (Space.Z, Space.W):
        payload = code.payload.tolist()
    elif code.space is Space.WPLUS:
        payload = code.payload.reshape(cfg.layer_count, cfg.latent_dim).tolist()
    else:
        payload = [p.tolist() for p in split_style_payload(cfg, code.payload)]
    return {
        "space": code.space.value,
        "payload": payload,
        "latent_dim": cfg.latent_dim,
        "layer_count": cfg.layer_count,
        "generator_seed": cfg.seed,
    }


def code_from_obj(obj: dict, gen: ToyGenerator) -> LatentCode:
    cfg = gen.config
    try:
        space = space_from_name(obj["space"])
        seed = obj["generator_seed"]
        payload = obj["payload"]
    except (KeyError, TypeError) as e:
        raise CodeFileError(f"malformed latent code object: {e}") from None
    if seed != cfg.seed:
        raise CodeFileError(f"code was written for generator seed {seed}, active generator has seed {cfg.seed}")
    if obj.get("latent_dim") != cfg.latent_dim or obj.get("layer_count") != cfg.layer_count:
        raise CodeFileError("code dimensions do not match the active generator config")
    try:
        if payload and isinstance(payload[0], list):
            # per-layer rows; SSpace rows are ragged
            flat = np.concatenate([np.asarray(row, dtype=np.float64).ravel() for row in payload])
        else:
            flat = np.asarray(payload, dtype=np.float64).ravel()
        code = LatentCode(space, flat)
        _check_code(code, space, cfg)
    except (ValueError, TypeError, SpaceError) as e:
        raise CodeFileError(f"malformed latent payload: {e}") from None
    return code
