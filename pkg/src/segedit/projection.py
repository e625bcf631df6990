"""Per-segment latent-code estimation by masked gradient descent.

Each segment is projected independently: the loss is a pixel MSE restricted
to the segment's mask dilated by a small band (the neighborhood that hides
seams), the start point is the mean latent over a seeded batch of z draws,
and the optimizer is deterministic Adam. The returned code is the best
iterate seen, not the last, so descent can never report a regression.

Per-segment seeds are derived as global_seed XOR segment_id, which makes
results independent of execution order and safe to compute concurrently.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .generator import (
    LatentCode,
    Space,
    ToyGenerator,
    code_grad_from_cache,
    grads_from_cache,
    map_z_to_w,
    promote,
    render_with_cache,
)
from .image import BinaryMask, ImageBuffer, LabelMap, MaskError, background_mask, dilate, mask_of
from .prng import SplitMix64

ADAM_EPS = 1e-8


class NonFiniteLossError(Exception):
    """Loss or gradient became non-finite; carries the step index."""

    def __init__(self, step: int, what: str = "loss"):
        self.step = step
        super().__init__(f"non-finite {what} at optimization step {step}")


@dataclass(frozen=True)
class ProjectionConfig:
    space: Space = Space.W
    steps: int = 200
    learning_rate: float = 0.05
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    band_radius: int = 3
    mean_latent_samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be > 0")
        if self.band_radius < 0:
            raise ValueError("band_radius must be >= 0")
        if self.mean_latent_samples < 1:
            raise ValueError("mean_latent_samples must be >= 1")
        if self.space is Space.Z:
            raise ValueError("projection targets W, WPlus or SSpace")


@dataclass(frozen=True)
class SegmentProjection:
    segment_id: int
    code: LatentCode
    final_loss: float
    loss_history: tuple[float, ...]
    fine_tuned_weights: Optional[dict] = None

    def __post_init__(self):
        if self.final_loss < 0.0:
            raise ValueError("final_loss must be >= 0")


def masked_loss(target: ImageBuffer, rendered: ImageBuffer, mask: BinaryMask) -> float:
    """MSE over masked pixels only, averaged over (pixel count x 3 channels)."""
    if target.shape != rendered.shape or target.shape != mask.shape:
        raise ValueError("target, rendered and mask dims must match")
    if mask.pixel_count == 0:
        raise MaskError("masked loss over an empty mask")
    # same formulation as the optimizer loop, so recorded losses reproduce bit-exactly
    loss, _ = _masked_loss_and_grad(
        target.data, rendered.data, mask.bits.astype(np.float64), mask.pixel_count
    )
    return loss


def _masked_loss_and_grad(target: np.ndarray, rendered: np.ndarray, bits: np.ndarray, count: int):
    diff = (rendered - target) * bits[:, :, None]
    loss = float(np.sum(diff * diff) / (count * 3))
    grad = (2.0 / (count * 3)) * diff
    return loss, grad


def mean_latent_init(gen: ToyGenerator, space: Space, samples: int, seed: int) -> LatentCode:
    """Mean of map_z_to_w over seeded standard-normal z draws, promoted to `space`."""
    cfg = gen.config
    rng = SplitMix64(seed)
    z = rng.normal(samples * cfg.latent_dim).reshape(samples, cfg.latent_dim)
    h = z @ gen.map_w1.T + gen.map_b1
    a = np.where(h > 0.0, h, 0.2 * h)
    w = a @ gen.map_w2.T + gen.map_b2
    w_bar = LatentCode(Space.W, w.mean(axis=0))
    return promote(w_bar, space, gen)


def loss_support(mask: BinaryMask, band_radius: int, exclude: Optional[BinaryMask] = None) -> BinaryMask:
    """Pixels the projection loss sees: the mask plus its band, minus exclusions."""
    band = dilate(mask, band_radius)
    if exclude is None:
        return band
    return BinaryMask(band.bits & ~exclude.bits)


def project_segment(
    gen: ToyGenerator,
    target: ImageBuffer,
    mask: BinaryMask,
    cfg: ProjectionConfig,
    segment_id: int = 0,
    exclude: Optional[BinaryMask] = None,
    init_code: Optional[LatentCode] = None,
    progress: Optional[Callable[[int], None]] = None,
) -> SegmentProjection:
    """Estimate one latent code for the region `mask` of `target`.

    The loss support is dilate(mask, band_radius) minus `exclude` (the
    never-projected region). The per-segment stream is cfg.seed XOR
    segment_id. `init_code` overrides the mean-latent start, e.g. to warm
    start WPlus from a finished W solution.
    """
    if mask.pixel_count == 0:
        raise MaskError(f"segment {segment_id}: empty mask")
    support = loss_support(mask, cfg.band_radius, exclude)
    if support.pixel_count == 0:
        raise MaskError(f"segment {segment_id}: loss support empty after band/exclusion")
    if target.shape != mask.shape:
        raise ValueError("target and mask dims must match")

    stream_seed = cfg.seed ^ segment_id
    if init_code is None:
        code = mean_latent_init(gen, cfg.space, cfg.mean_latent_samples, stream_seed)
    else:
        code = promote(init_code, cfg.space, gen)

    bits = support.bits.astype(np.float64)
    count = support.pixel_count
    payload = code.payload.copy()
    m = np.zeros_like(payload)
    v = np.zeros_like(payload)
    best_loss = np.inf
    best_payload = payload.copy()
    history: list[float] = []

    for step in range(cfg.steps):
        current = LatentCode(cfg.space, payload)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                rendered, cache = render_with_cache(gen, current)
        except ValueError:
            raise NonFiniteLossError(step, "render") from None
        loss, grad_img = _masked_loss_and_grad(target.data, rendered.data, bits, count)
        if not np.isfinite(loss):
            raise NonFiniteLossError(step)
        history.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_payload = payload.copy()
        with np.errstate(over="ignore", invalid="ignore"):
            grad = code_grad_from_cache(gen, current, cache, grad_img)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteLossError(step, "gradient")
        t = step + 1
        m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad
        v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * grad * grad
        m_hat = m / (1.0 - cfg.adam_beta1**t)
        v_hat = v / (1.0 - cfg.adam_beta2**t)
        payload = payload - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        if progress is not None:
            progress(step + 1)

    return SegmentProjection(
        segment_id=segment_id,
        code=LatentCode(cfg.space, best_payload),
        final_loss=best_loss,
        loss_history=tuple(history),
    )


def project_all(
    gen: ToyGenerator,
    target: ImageBuffer,
    labels: LabelMap,
    cfg: ProjectionConfig,
    workers: int = 1,
    progress: Optional[Callable[[int], None]] = None,
) -> list[SegmentProjection]:
    """One independent projection per segment 1..n; label-0 never enters any loss."""
    n = labels.segment_count
    if n < 1:
        raise ValueError("label map has no segments to project")
    if target.shape != labels.shape:
        raise ValueError("target and label map dims must match")
    excluded = background_mask(labels)

    def run(k: int) -> SegmentProjection:
        # errors raised by project_segment already carry the segment id
        return project_segment(
            gen, target, mask_of(labels, k), cfg,
            segment_id=k, exclude=excluded, progress=progress,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, range(1, n + 1)))
    return [run(k) for k in range(1, n + 1)]


def project_global(
    gen: ToyGenerator,
    target: ImageBuffer,
    cfg: ProjectionConfig,
    progress: Optional[Callable[[int], None]] = None,
) -> SegmentProjection:
    """Single-code baseline: project_segment with the all-true mask (pseudo-id 0)."""
    full = BinaryMask(np.ones(target.shape, dtype=bool))
    return project_segment(gen, target, full, cfg, segment_id=0, progress=progress)


def finetune_segment(
    gen: ToyGenerator,
    proj: SegmentProjection,
    target: ImageBuffer,
    mask: BinaryMask,
    steps: int,
    lr: float,
) -> SegmentProjection:
    """Adapt the last conv and RGB projection around the frozen pivot code.

    The loss is evaluated over exactly `mask`; pass the same support the
    projection used so the best-iterate guarantee (never worse than the
    input) lines up with proj.final_loss.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if steps == 0:
        return proj
    if mask.pixel_count == 0:
        raise MaskError("fine-tuning over an empty mask")

    from .generator import pack_weight_subset

    final_vec = pack_weight_subset(gen, "final_layer")
    rgb_vec = pack_weight_subset(gen, "rgb_projection")
    split = final_vec.size
    params = np.concatenate([final_vec, rgb_vec])
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    bits = mask.bits.astype(np.float64)
    count = mask.pixel_count
    best_loss = np.inf
    best_params = params.copy()
    history: list[float] = []

    for step in range(steps):
        tuned = gen.with_updated_weights(final_layer=params[:split], rgb_projection=params[split:])
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                rendered, cache = render_with_cache(tuned, proj.code)
        except ValueError:
            raise NonFiniteLossError(step, "render") from None
        loss, grad_img = _masked_loss_and_grad(target.data, rendered.data, bits, count)
        if not np.isfinite(loss):
            raise NonFiniteLossError(step)
        history.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_params = params.copy()
        _, wgrads = grads_from_cache(tuned, proj.code, cache, grad_img)
        grad = np.concatenate([wgrads["final_layer"], wgrads["rgb_projection"]])
        t = step + 1
        m = 0.9 * m + 0.1 * grad
        v = 0.999 * v + 0.001 * grad * grad
        m_hat = m / (1.0 - 0.9**t)
        v_hat = v / (1.0 - 0.999**t)
        params = params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

    # history[0] is the untouched-weights loss, so best_loss can never exceed
    # the pivot's loss on this support
    return replace(
        proj,
        final_loss=best_loss,
        loss_history=tuple(history),
        fine_tuned_weights={
            "final_layer": best_params[:split],
            "rgb_projection": best_params[split:],
        },
    )


# --- result file format --------------------------------------------------------


def config_to_obj(cfg: ProjectionConfig) -> dict:
    return {
        "space": cfg.space.value,
        "steps": cfg.steps,
        "learning_rate": cfg.learning_rate,
        "adam_beta1": cfg.adam_beta1,
        "adam_beta2": cfg.adam_beta2,
        "band_radius": cfg.band_radius,
        "mean_latent_samples": cfg.mean_latent_samples,
        "seed": cfg.seed,
    }


def config_from_obj(obj: dict) -> ProjectionConfig:
    from .generator import space_from_name

    return ProjectionConfig(
        space=space_from_name(obj["space"]),
        steps=int(obj["steps"]),
        learning_rate=float(obj["learning_rate"]),
        adam_beta1=float(obj["adam_beta1"]),
        adam_beta2=float(obj["adam_beta2"]),
        band_radius=int(obj["band_radius"]),
        mean_latent_samples=int(obj["mean_latent_samples"]),
        seed=int(obj["seed"]),
    )


def projections_to_obj(
    projections: list[SegmentProjection], cfg: ProjectionConfig, gen: ToyGenerator
) -> dict:
    from .generator import code_to_obj

    segments = []
    for p in projections:
        entry = {
            "id": p.segment_id,
            "code": code_to_obj(p.code, gen),
            "final_loss": p.final_loss,
        }
        if p.fine_tuned_weights:
            entry["fine_tuned"] = {k: np.asarray(v).tolist() for k, v in p.fine_tuned_weights.items()}
        segments.append(entry)
    return {
        "generator_seed": gen.config.seed,
        "space": cfg.space.value,
        "segments": segments,
        "config": config_to_obj(cfg),
    }


def projections_from_obj(obj: dict, gen: ToyGenerator) -> list[SegmentProjection]:
    from .generator import CodeFileError, code_from_obj

    if obj.get("generator_seed") != gen.config.seed:
        raise CodeFileError(
            f"projection file generator seed {obj.get('generator_seed')} "
            f"does not match active generator seed {gen.config.seed}"
        )
    out = []
    for entry in obj["segments"]:
        tuned = None
        if "fine_tuned" in entry:
            tuned = {k: np.asarray(v, dtype=np.float64) for k, v in entry["fine_tuned"].items()}
        out.append(
            SegmentProjection(
                segment_id=int(entry["id"]),
                code=code_from_obj(entry["code"], gen),
                final_loss=float(entry["final_loss"]),
                loss_history=(),
                fine_tuned_weights=tuned,
            )
        )
    return out
