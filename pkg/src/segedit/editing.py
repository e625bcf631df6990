"""Latent-space edits over per-segment codes and the full edit pipeline.

Edits add a scaled direction vector to codes: either the same move applied
to every segment at once, or an incremental script where each step edits a
few segments, re-composites, and feeds the stitched result to the next step
as the new working image. Codes are promoted (never demoted) to the
direction's space before the move.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .generator import LatentCode, Space, SpaceError, ToyGenerator, promote, space_from_name, synthesize
from .image import ImageBuffer, LabelMap, compose, quantized
from .poisson import StitchConfig, stitch_composite
from .projection import ProjectionConfig, SegmentProjection, project_segment
from .image import background_mask, mask_of


class EditError(Exception):
    """Script invalid or a step failed; messages carry the step index."""


@dataclass(frozen=True)
class EditDirection:
    name: str
    space: Space
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64).ravel()
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise ValueError("direction vector must be finite and non-empty")
        if not np.any(v):
            raise ValueError("direction vector is zero")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "vector", v)


@dataclass(frozen=True)
class EditStep:
    direction: EditDirection
    alpha: float
    segment_ids: Optional[tuple[int, ...]] = None  # None means ALL
    reproject: bool = True


@dataclass(frozen=True)
class EditScript:
    steps: tuple[EditStep, ...]


def apply_direction(
    code: LatentCode,
    d: EditDirection,
    alpha: float,
    gen: Optional[ToyGenerator] = None,
) -> LatentCode:
    """code + alpha * D, promoting the code into the direction's space first."""
    if code.space is not d.space:
        if gen is None:
            raise SpaceError(f"code is {code.space.value} but direction is {d.space.value}; pass the generator to promote")
        code = promote(code, d.space, gen)
    if code.payload.shape != d.vector.shape:
        raise SpaceError(f"direction shape {d.vector.shape} does not match code payload {code.payload.shape}")
    return LatentCode(code.space, code.payload + alpha * d.vector)


def edit_simultaneous(
    projections: list[SegmentProjection],
    d: EditDirection,
    alpha: float,
    gen: Optional[ToyGenerator] = None,
) -> list[SegmentProjection]:
    """Locally-global edit: every segment moves by the same alpha * D."""
    return [replace(p, code=apply_direction(p.code, d, alpha, gen)) for p in projections]


def direction_from_codes(a: LatentCode, b: LatentCode, name: str = "delta") -> EditDirection:
    """Unit direction from code a to code b."""
    if a.space is not b.space or a.payload.shape != b.payload.shape:
        raise SpaceError("codes must share a space and shape")
    delta = b.payload - a.payload
    norm = float(np.linalg.norm(delta))
    if norm == 0.0:
        raise ValueError("codes are identical; direction undefined")
    return EditDirection(name=name, space=a.space, vector=delta / norm)


def render_projection(gen: ToyGenerator, proj: SegmentProjection) -> ImageBuffer:
    """Synthesize a projection's code, applying its fine-tuned weights if any."""
    if proj.fine_tuned_weights:
        gen = gen.with_updated_weights(
            final_layer=proj.fine_tuned_weights.get("final_layer"),
            rgb_projection=proj.fine_tuned_weights.get("rgb_projection"),
        )
    return synthesize(gen, proj.code)


def reconstruct(
    gen: ToyGenerator,
    projections: list[SegmentProjection],
    labels: LabelMap,
    original: ImageBuffer,
    stitch: StitchConfig = StitchConfig(),
) -> ImageBuffer:
    """Synthesize every segment, compose with back-substitution, optionally stitch."""
    pieces = [(p.segment_id, render_projection(gen, p)) for p in projections]
    composite = compose(pieces, labels, original)
    if stitch.enabled and labels.segment_count > 0:
        composite = stitch_composite(
            composite, pieces, labels, tol=stitch.tol, max_iters=stitch.max_iters, sweeps=stitch.sweeps
        )
    return composite


def edit_incremental_with_state(
    gen: ToyGenerator,
    image: ImageBuffer,
    labels: LabelMap,
    script: EditScript,
    proj_cfg: ProjectionConfig,
    stitch: StitchConfig = StitchConfig(),
    initial: Optional[dict[int, SegmentProjection]] = None,
) -> tuple[ImageBuffer, dict[int, SegmentProjection]]:
    """Run the incremental loop, returning the final image and per-segment codes.

    Each step's stitched composite is snapped to the 8-bit grid before
    becoming the next working image, so intermediate states survive a PNG
    round-trip unchanged.
    """
    n = labels.segment_count
    cache: dict[int, SegmentProjection] = dict(initial or {})
    current = image
    excluded = background_mask(labels)

    def project_one(k: int) -> SegmentProjection:
        return project_segment(
            gen, current, mask_of(labels, k), proj_cfg, segment_id=k, exclude=excluded
        )

    for step_idx, step in enumerate(script.steps):
        ids = step.segment_ids if step.segment_ids is not None else tuple(range(1, n + 1))
        bad = [k for k in ids if not 1 <= k <= n]
        if bad or not ids:
            raise EditError(f"step {step_idx}: invalid segment ids {bad or ids}")
        try:
            for k in ids:
                if step.reproject or k not in cache:
                    cache[k] = project_one(k)
            for k in range(1, n + 1):
                if k not in cache:
                    cache[k] = project_one(k)
            for k in ids:
                cache[k] = replace(cache[k], code=apply_direction(cache[k].code, step.direction, step.alpha, gen))
            pieces = [(k, render_projection(gen, cache[k])) for k in range(1, n + 1)]
            composite = compose(pieces, labels, current)
            if stitch.enabled:
                composite = stitch_composite(
                    composite, pieces, labels, tol=stitch.tol, max_iters=stitch.max_iters, sweeps=stitch.sweeps
                )
            # snap to the 8-bit grid so the working image is exactly file-representable;
            # chained single-step runs through PNG files then reproduce scripted runs bit-exactly
            current = quantized(composite)
        except EditError:
            raise
        except Exception as e:
            raise EditError(f"step {step_idx}: {e}") from e
    return current, cache


def edit_incremental(
    gen: ToyGenerator,
    image: ImageBuffer,
    labels: LabelMap,
    script: EditScript,
    proj_cfg: ProjectionConfig,
    stitch: StitchConfig = StitchConfig(),
) -> ImageBuffer:
    """Sequentially edited composite; each step's output is the next step's input."""
    final, _ = edit_incremental_with_state(gen, image, labels, script, proj_cfg, stitch)
    return final


# --- file formats -------------------------------------------------------------


def direction_to_obj(d: EditDirection) -> dict:
    return {"name": d.name, "space": d.space.value, "payload": d.vector.tolist()}


def direction_from_obj(obj: dict) -> EditDirection:
    try:
        return EditDirection(
            name=str(obj["name"]),
            space=space_from_name(obj["space"]),
            vector=np.asarray(obj["payload"], dtype=np.float64).ravel(),
        )
    except (KeyError, TypeError) as e:
        raise EditError(f"malformed direction object: {e}") from None


def script_from_obj(obj) -> EditScript:
    if not isinstance(obj, list):
        raise EditError("edit script must be a JSON array of steps")
    steps = []
    for i, raw in enumerate(obj):
        try:
            segs = raw.get("segments", "ALL")
            ids = None if segs == "ALL" else tuple(int(s) for s in segs)
            steps.append(
                EditStep(
                    direction=direction_from_obj(raw["direction"]),
                    alpha=float(raw["alpha"]),
                    segment_ids=ids,
                    reproject=bool(raw.get("reproject", True)),
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise EditError(f"step {i}: {e}") from None
    return EditScript(steps=tuple(steps))


def script_to_obj(script: EditScript) -> list:
    out = []
    for s in script.steps:
        out.append(
            {
                "segments": "ALL" if s.segment_ids is None else list(s.segment_ids),
                "direction": direction_to_obj(s.direction),
                "alpha": s.alpha,
                "reproject": s.reproject,
            }
        )
    return out


def load_direction(path) -> EditDirection:
    with open(path, "r", encoding="utf-8") as fh:
        return direction_from_obj(json.load(fh))


def load_script(path) -> EditScript:
    with open(path, "r", encoding="utf-8") as fh:
        return script_from_obj(json.load(fh))
