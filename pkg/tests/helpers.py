"""Shared test fixtures: deterministic images, label maps, brute-force oracles."""

from __future__ import annotations

import numpy as np

import segedit as se
from segedit.prng import SplitMix64


def default_generator(seed: int = 7) -> se.ToyGenerator:
    return se.new_generator(se.GeneratorConfig(seed=seed))


def full_mask(res: int) -> se.BinaryMask:
    return se.BinaryMask(np.ones((res, res), dtype=bool))


def quadrant_labels(res: int) -> se.LabelMap:
    lab = np.zeros((res, res), dtype=np.int32)
    h = res // 2
    lab[:h, :h] = 1
    lab[:h, h:] = 2
    lab[h:, :h] = 3
    lab[h:, h:] = 4
    return se.LabelMap(lab)


def random_w_code(gen: se.ToyGenerator, seed: int) -> se.LatentCode:
    rng = SplitMix64(seed)
    z = se.LatentCode(se.Space.Z, rng.normal(gen.config.latent_dim))
    return se.map_z_to_w(gen, z)


def segment_target(gen: se.ToyGenerator, labels: se.LabelMap, seed: int) -> se.ImageBuffer:
    """Image whose segments each come from an independent random code."""
    res = labels.shape[0]
    rng = SplitMix64(seed)
    pieces = []
    for k in range(1, labels.segment_count + 1):
        z = se.LatentCode(se.Space.Z, rng.normal(gen.config.latent_dim))
        pieces.append((k, se.synthesize(gen, se.map_z_to_w(gen, z))))
    blank = se.ImageBuffer(np.full((res, res, 3), 0.5))
    return se.compose(pieces, labels, blank)


def brute_force_disk_count(radius: int) -> int:
    r = radius
    return sum(
        1
        for dy in range(-r, r + 1)
        for dx in range(-r, r + 1)
        if dy * dy + dx * dx <= r * r
    )


def brute_force_dilate(bits: np.ndarray, radius: int) -> np.ndarray:
    h, w = bits.shape
    out = np.zeros_like(bits)
    src = np.argwhere(bits)
    for y in range(h):
        for x in range(w):
            if ((src[:, 0] - y) ** 2 + (src[:, 1] - x) ** 2 <= radius * radius).any():
                out[y, x] = True
    return out


def brute_force_distance_inside(bits: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance from each inside pixel to the nearest outside pixel."""
    outside = np.argwhere(~bits)
    inside = np.argwhere(bits)
    d = np.empty(len(inside))
    for i, (y, x) in enumerate(inside):
        d[i] = np.sqrt(((outside - (y, x)) ** 2).sum(axis=1).min())
    return d


def fd_code_gradient(gen, code, upstream, eps):
    """Central finite differences of sum(synthesize(code) * upstream)."""

    def j(payload):
        img = se.synthesize(gen, se.LatentCode(code.space, payload))
        return float((img.data * upstream).sum())

    base = code.payload
    out = np.empty(base.size)
    for i in range(base.size):
        p = base.copy()
        p[i] += eps
        jp = j(p)
        p[i] -= 2 * eps
        jm = j(p)
        out[i] = (jp - jm) / (2 * eps)
    return out


def max_rel_err(analytic: np.ndarray, reference: np.ndarray) -> float:
    return float(np.max(np.abs(analytic - reference)) / max(np.max(np.abs(reference)), 1e-12))
