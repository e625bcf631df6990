"""Segment-boundary refinement by front propagation.

A segment's boundary is the zero crossing of a signed field (positive
inside), initialized as a chamfer signed distance so the gradient magnitude
is ~1 and the time step has geometric meaning. The field evolves by
phi <- phi + dt * f * ||grad phi||, where the speed f is the normalized,
smoothed pixel difference between the original image and the segment's
reconstruction: the front races through high-difference pixels and comes to
rest where the reconstruction already matches.

The gradient magnitude uses the Godunov upwind branch for a growing
positive region; combined with the CFL bound dt * max(f) <= 1/2 the update
is monotone, so the region can only grow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import BinaryMask, ImageBuffer, LabelMap, MaskError, dilate, mask_of

SQRT2 = float(np.sqrt(2.0))
CFL_LIMIT = 0.5


class CFLError(Exception):
    """Requested time step violates the stability bound."""

    def __init__(self, dt: float, max_dt: float):
        self.max_dt = max_dt
        super().__init__(f"dt={dt:g} violates CFL; max admissible dt is {max_dt:g}")


class RefineError(Exception):
    """Refinement would destroy the partition (a segment fully consumed)."""


@dataclass(frozen=True)
class LevelSetField:
    """Signed per-pixel field; > 0 inside the segment, zero crossing = boundary."""

    phi: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.phi, dtype=np.float64)
        if p.ndim != 2:
            raise ValueError("phi must be 2-D")
        if not np.all(np.isfinite(p)):
            raise ValueError("phi contains non-finite values")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "phi", p)

    @property
    def shape(self) -> tuple[int, int]:
        return self.phi.shape

    def interior_mask(self) -> BinaryMask:
        return BinaryMask(self.phi > 0.0)


@dataclass(frozen=True)
class StoppingFunction:
    """Per-pixel speed in [0, 1]; high where the reconstruction disagrees."""

    f: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f, dtype=np.float64)
        if f.ndim != 2:
            raise ValueError("f must be 2-D")
        if not np.all(np.isfinite(f)) or f.min() < 0.0 or f.max() > 1.0:
            raise ValueError("stopping function must lie in [0, 1]")
        f = f.copy()
        f.flags.writeable = False
        object.__setattr__(self, "f", f)


def _chamfer_to_set(seed: np.ndarray) -> np.ndarray:
    """Two-pass chamfer distance (weights 1 / sqrt(2)) to the true pixels of `seed`."""
    h, w = seed.shape
    big = float(h + w) * 2.0
    d = np.where(seed, 0.0, big)
    cols = np.arange(w, dtype=np.float64)

    def row_relax(row: np.ndarray) -> np.ndarray:
        # left-to-right then right-to-left propagation at unit cost
        row = cols + np.minimum.accumulate(row - cols)
        rev = row[::-1]
        rev = cols + np.minimum.accumulate(rev - cols)
        return rev[::-1]

    for y in range(h):
        if y > 0:
            up = d[y - 1]
            cand = up + 1.0
            cand[1:] = np.minimum(cand[1:], up[:-1] + SQRT2)
            cand[:-1] = np.minimum(cand[:-1], up[1:] + SQRT2)
            d[y] = np.minimum(d[y], cand)
        d[y] = row_relax(d[y])
    for y in range(h - 2, -1, -1):
        down = d[y + 1]
        cand = down + 1.0
        cand[1:] = np.minimum(cand[1:], down[:-1] + SQRT2)
        cand[:-1] = np.minimum(cand[:-1], down[1:] + SQRT2)
        d[y] = np.minimum(d[y], cand)
        d[y] = row_relax(d[y])
    return d


def signed_distance_from_mask(mask: BinaryMask) -> LevelSetField:
    """Chamfer signed distance: +d to the nearest outside pixel inside, -d outside."""
    bits = mask.bits
    if mask.pixel_count == 0 or mask.pixel_count == bits.size:
        raise MaskError("signed distance needs both inside and outside pixels")
    d_out = _chamfer_to_set(~bits)
    d_in = _chamfer_to_set(bits)
    return LevelSetField(np.where(bits, d_out, -d_in))


def _box_blur(field: np.ndarray, radius: int) -> np.ndarray:
    """Mean over the clipped (2r+1)^2 window via an integral image."""
    if radius == 0:
        return field.copy()
    h, w = field.shape
    integ = np.zeros((h + 1, w + 1))
    integ[1:, 1:] = field.cumsum(axis=0).cumsum(axis=1)
    y0 = np.clip(np.arange(h) - radius, 0, h)
    y1 = np.clip(np.arange(h) + radius + 1, 0, h)
    x0 = np.clip(np.arange(w) - radius, 0, w)
    x1 = np.clip(np.arange(w) + radius + 1, 0, w)
    sums = integ[y1[:, None], x1[None, :]] - integ[y0[:, None], x1[None, :]] \
        - integ[y1[:, None], x0[None, :]] + integ[y0[:, None], x0[None, :]]
    counts = (y1 - y0)[:, None] * (x1 - x0)[None, :]
    return sums / counts


def stopping_function(original: ImageBuffer, rendered: ImageBuffer, smooth_radius: int) -> StoppingFunction:
    """Smoothed per-pixel |original - rendered|, normalized so the max is 1."""
    if original.shape != rendered.shape:
        raise ValueError("original and rendered dims must match")
    if smooth_radius < 0:
        raise ValueError("smooth_radius must be >= 0")
    diff = np.abs(original.data - rendered.data).mean(axis=2)
    blurred = _box_blur(diff, smooth_radius)
    peak = blurred.max()
    if peak > 0.0:
        blurred = blurred / peak
    return StoppingFunction(np.clip(blurred, 0.0, 1.0))


def _godunov_expansion_grad(phi: np.ndarray) -> np.ndarray:
    """Upwind ||grad phi|| for a growing positive-inside field (one-sided diffs, unit grid).

    Missing one-sided differences at image edges are zero; anything else
    (e.g. replicating the inner difference) makes edge pixels grow off their
    own neighbor and breaks the scheme's monotonicity.
    """
    dmx = np.zeros_like(phi)
    dpx = np.zeros_like(phi)
    dmx[:, 1:] = phi[:, 1:] - phi[:, :-1]
    dpx[:, :-1] = phi[:, 1:] - phi[:, :-1]
    dmy = np.zeros_like(phi)
    dpy = np.zeros_like(phi)
    dmy[1:, :] = phi[1:, :] - phi[:-1, :]
    dpy[:-1, :] = phi[1:, :] - phi[:-1, :]
    gx = np.maximum(np.minimum(dmx, 0.0) ** 2, np.maximum(dpx, 0.0) ** 2)
    gy = np.maximum(np.minimum(dmy, 0.0) ** 2, np.maximum(dpy, 0.0) ** 2)
    return np.sqrt(gx + gy)


def max_admissible_dt(f: StoppingFunction) -> float:
    peak = float(f.f.max())
    return np.inf if peak == 0.0 else CFL_LIMIT / peak


def evolve(
    phi: LevelSetField,
    f: StoppingFunction,
    dt: float,
    iterations: int,
    reinit_every: int = 20,
) -> LevelSetField:
    """Iterate phi <- phi + dt * f * ||grad phi||, re-distancing every `reinit_every` steps."""
    if phi.shape != f.f.shape:
        raise ValueError("phi and f dims must match")
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    limit = max_admissible_dt(f)
    if dt > limit:
        raise CFLError(dt, limit)
    cur = phi.phi.copy()
    speed = f.f
    for it in range(iterations):
        cur = cur + dt * speed * _godunov_expansion_grad(cur)
        if reinit_every > 0 and (it + 1) % reinit_every == 0:
            pos = cur > 0.0
            if pos.any() and not pos.all():
                cur = signed_distance_from_mask(BinaryMask(pos)).phi.copy()
    return LevelSetField(cur)


@dataclass(frozen=True)
class RefineParams:
    dt: float
    iterations: int
    smooth_radius: int = 1
    max_growth: int = 8
    reinit_every: int = 20

    def __post_init__(self):
        if self.dt <= 0.0 or self.iterations < 0 or self.max_growth < 0 or self.smooth_radius < 0:
            raise ValueError("invalid refinement parameters")


def refine_segment(
    labels: LabelMap,
    k: int,
    original: ImageBuffer,
    rendered_k: ImageBuffer,
    params: RefineParams,
) -> LabelMap:
    """Grow segment k's boundary away from poorly reconstructed pixels.

    Growth is capped at `max_growth` pixels from the original boundary;
    gained pixels are relabeled from their previous owner (label 0 may be
    absorbed). Fails without touching the input if any other segment would
    vanish.
    """
    mask = mask_of(labels, k)
    phi = signed_distance_from_mask(mask)
    f = stopping_function(original, rendered_k, params.smooth_radius)
    evolved = evolve(phi, f, params.dt, params.iterations, params.reinit_every)
    allowed = dilate(mask, params.max_growth).bits
    new_bits = ((evolved.phi > 0.0) & allowed) | mask.bits

    new_labels = labels.labels.copy()
    new_labels[new_bits] = k
    for j in range(1, labels.segment_count + 1):
        if j != k and not np.any(new_labels == j):
            raise RefineError(f"refining segment {k} would consume segment {j} entirely")
    return LabelMap(new_labels)
