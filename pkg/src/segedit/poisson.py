"""Gradient-domain stitching of composed segments.

Each segment is re-solved as a discrete Poisson problem: keep the segment
piece's own gradients (guidance field) while matching the running composite
at the pixels just outside the region, which hides the small intensity
discrepancies between independently projected segments. The 5-point system
(4 f_p - sum of neighbors = divergence + boundary terms) is symmetric
positive definite and solved matrix-free by Jacobi-preconditioned conjugate
gradients; a dense direct solve is kept alongside as the verification
oracle for small problems.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .image import BinaryMask, ImageBuffer, LabelMap


class StitchError(Exception):
    """Region unusable (touches frame, empty) or a segment solve failed."""


@dataclass(frozen=True)
class StitchConfig:
    enabled: bool = True
    tol: float = 1e-8
    max_iters: Optional[int] = None  # None: 10x unknown count
    sweeps: int = 3


@dataclass(frozen=True)
class StitchProblem:
    """One Poisson system: interior region, Dirichlet ring values, guidance field."""

    region: BinaryMask
    boundary: np.ndarray  # (H, W, 3), values on the ring adjacent to the region
    guidance_x: np.ndarray  # (H, W, 3) forward differences of the source
    guidance_y: np.ndarray


@dataclass(frozen=True)
class StitchSolution:
    pixels: np.ndarray  # (H, W, 3), solution over the region, zero elsewhere
    converged: bool
    iterations: tuple[int, int, int]
    residuals: tuple[float, float, float]


def build_problem(composite: ImageBuffer, source: ImageBuffer, region: BinaryMask) -> StitchProblem:
    """Assemble the system for one region against the current composite."""
    if composite.shape != source.shape or composite.shape != region.shape:
        raise ValueError("composite, source and region dims must match")
    if region.pixel_count == 0:
        raise StitchError("empty stitch region")
    bits = region.bits
    if bits[0, :].any() or bits[-1, :].any() or bits[:, 0].any() or bits[:, -1].any():
        raise StitchError("stitch region touches the image frame; shrink it by one pixel")

    src = source.data
    gx = np.zeros_like(src)
    gy = np.zeros_like(src)
    gx[:, :-1] = src[:, 1:] - src[:, :-1]
    gy[:-1, :] = src[1:, :] - src[:-1, :]

    ring = np.zeros_like(bits)
    ring[:-1, :] |= bits[1:, :]
    ring[1:, :] |= bits[:-1, :]
    ring[:, :-1] |= bits[:, 1:]
    ring[:, 1:] |= bits[:, :-1]
    ring &= ~bits
    boundary = np.where(ring[:, :, None], composite.data, 0.0)
    return StitchProblem(region=region, boundary=boundary, guidance_x=gx, guidance_y=gy)


def _system_parts(problem: StitchProblem):
    """Index map, neighbor table and per-channel RHS for the 5-point system."""
    bits = problem.region.bits
    h, w = bits.shape
    idx = -np.ones((h, w), dtype=np.int64)
    ys, xs = np.nonzero(bits)
    k = ys.size
    idx[ys, xs] = np.arange(k)

    offsets = ((-1, 0), (1, 0), (0, -1), (0, 1))
    neighbors = np.empty((k, 4), dtype=np.int64)
    boundary_sum = np.zeros((k, 3))
    for j, (dy, dx) in enumerate(offsets):
        ny, nx = ys + dy, xs + dx
        neighbors[:, j] = idx[ny, nx]
        outside = neighbors[:, j] < 0
        boundary_sum[outside] += problem.boundary[ny[outside], nx[outside]]

    # negative backward divergence of the guidance field: 4g_p - sum g_q for grad fields
    gx, gy = problem.guidance_x, problem.guidance_y
    div = gx[ys, xs] - gx[ys, xs - 1] + gy[ys, xs] - gy[ys - 1, xs]
    rhs = boundary_sum - div
    return idx, ys, xs, neighbors, rhs


def _apply_operator(x: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    acc = 4.0 * x
    for j in range(4):
        n = neighbors[:, j]
        valid = n >= 0
        acc[valid] -= x[n[valid]]
    return acc


def solve(
    problem: StitchProblem,
    tol: float = 1e-8,
    max_iters: Optional[int] = None,
    warm_start: Optional[np.ndarray] = None,
) -> StitchSolution:
    """Jacobi-preconditioned CG per channel; clamps to [0, 1] only after convergence.

    `warm_start` is an optional (H, W, 3) array whose region values seed the
    iteration; if it already solves the system the solve is an exact no-op.
    """
    if tol <= 0.0:
        raise ValueError("tol must be > 0")
    idx, ys, xs, neighbors, rhs = _system_parts(problem)
    k = ys.size
    iters_cap = max_iters if max_iters is not None else 10 * k

    h, w = problem.region.shape
    out = np.zeros((h, w, 3))
    iterations = []
    residuals = []
    converged = True
    for c in range(3):
        b = rhs[:, c]
        b_norm = float(np.linalg.norm(b))
        if b_norm == 0.0:
            iterations.append(0)
            residuals.append(0.0)
            continue
        x = np.zeros(k) if warm_start is None else warm_start[ys, xs, c].astype(np.float64)
        r = b - _apply_operator(x, neighbors)
        z = r / 4.0
        p = z.copy()
        rz = float(r @ z)
        best_x = x.copy()
        best_res = float(np.linalg.norm(r))
        it = 0
        while best_res > tol * b_norm and it < iters_cap:
            ap = _apply_operator(p, neighbors)
            alpha = rz / float(p @ ap)
            x = x + alpha * p
            r = r - alpha * ap
            res = float(np.linalg.norm(r))
            if res < best_res:
                best_res = res
                best_x = x.copy()
            z = r / 4.0
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
            it += 1
        iterations.append(it)
        residuals.append(best_res)
        if best_res > tol * b_norm:
            converged = False
        out[ys, xs, c] = best_x
    clamped = np.clip(out, 0.0, 1.0)
    clamped[~problem.region.bits] = 0.0
    return StitchSolution(
        pixels=clamped,
        converged=converged,
        iterations=tuple(iterations),
        residuals=tuple(residuals),
    )


def solve_dense(problem: StitchProblem) -> StitchSolution:
    """Oracle: assemble the full matrix and solve by elimination (small regions only)."""
    idx, ys, xs, neighbors, rhs = _system_parts(problem)
    k = ys.size
    a = np.zeros((k, k))
    np.fill_diagonal(a, 4.0)
    for j in range(4):
        n = neighbors[:, j]
        rows = np.nonzero(n >= 0)[0]
        a[rows, n[rows]] -= 1.0
    sol = np.linalg.solve(a, rhs)
    h, w = problem.region.shape
    out = np.zeros((h, w, 3))
    out[ys, xs] = sol
    out = np.clip(out, 0.0, 1.0)
    out[~problem.region.bits] = 0.0
    return StitchSolution(pixels=out, converged=True, iterations=(k, k, k), residuals=(0.0, 0.0, 0.0))


def _frame_shrunk_region(labels: LabelMap, segment_id: int) -> BinaryMask:
    bits = (labels.labels == segment_id).copy()
    bits[0, :] = False
    bits[-1, :] = False
    bits[:, 0] = False
    bits[:, -1] = False
    return BinaryMask(bits)


def stitch_composite(
    composite: ImageBuffer,
    pieces: list[tuple[int, ImageBuffer]],
    labels: LabelMap,
    tol: float = 1e-8,
    max_iters: Optional[int] = None,
    skip_segments: Optional[set[int]] = None,
    sweeps: int = 3,
) -> ImageBuffer:
    """Sweep segments in ascending id, re-solving each against the running composite.

    Multiple sweeps let early segments re-blend against their neighbors'
    corrected values (one sweep leaves them matched to stale hard-composite
    data). Label-0 pixels and the 1-pixel image frame are never modified.
    Segments listed in `skip_segments` are left as hard-composited.
    """
    n = labels.segment_count
    by_id = dict(pieces)
    if sorted(by_id) != list(range(1, n + 1)) or len(pieces) != n:
        raise ValueError(f"pieces must cover segment ids 1..{n} exactly once")
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    skip = skip_segments or set()
    running = composite.data.copy()
    for _ in range(sweeps):
        for sid in range(1, n + 1):
            if sid in skip:
                continue
            region = _frame_shrunk_region(labels, sid)
            if region.pixel_count == 0:
                continue
            try:
                problem = build_problem(ImageBuffer(running), by_id[sid], region)
                solution = solve(problem, tol=tol, max_iters=max_iters, warm_start=running)
            except (StitchError, ValueError) as e:
                raise StitchError(f"segment {sid}: {e}") from None
            if not solution.converged:
                raise StitchError(f"segment {sid}: stitch solve did not converge (residuals {solution.residuals})")
            running[region.bits] = solution.pixels[region.bits]
    return ImageBuffer(running)
