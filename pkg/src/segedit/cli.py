"""Command-line front door for the segment-wise projection and editing pipeline.

Every command snapshots its resolved configuration, input hashes and output
paths into a manifest.json next to its outputs; rerunning the same command with
the same inputs reproduces every output byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .editing import (
    EditError,
    EditScript,
    EditStep,
    edit_incremental_with_state,
    load_direction,
    load_script,
    reconstruct,
    render_projection,
)
from .generator import CodeFileError, GeneratorConfig, SpaceError, new_generator, space_from_name
from .image import (
    ImageIOError,
    LabelMapError,
    MaskError,
    inner_boundary,
    load_image,
    load_label_map,
    mask_of,
    quantize_to_bytes,
    save_image,
    save_label_map,
)
from .levelset import CFLError, RefineError, RefineParams, refine_segment, stopping_function
from .poisson import StitchConfig, StitchError
from .projection import (
    NonFiniteLossError,
    ProjectionConfig,
    config_to_obj,
    finetune_segment,
    loss_support,
    project_all,
    project_global,
    projections_from_obj,
    projections_to_obj,
)

RUNTIME_ERRORS = (
    ImageIOError,
    LabelMapError,
    MaskError,
    SpaceError,
    CodeFileError,
    CFLError,
    RefineError,
    StitchError,
    EditError,
    NonFiniteLossError,
    OSError,
    ValueError,
)


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, command: str, config: dict, inputs: dict, outputs: list, seed: int, t0: float):
    manifest = {
        "command": command,
        "config": config,
        "input_hashes": {str(k): _sha256(v) for k, v in inputs.items()},
        "generator_seed": seed,
        "outputs": [str(p) for p in outputs],
        "wall_time_s": time.time() - t0,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True), encoding="utf-8")


def _stitch_config(poisson: bool, tol: float) -> StitchConfig:
    return StitchConfig(enabled=poisson, tol=tol)


def _runtime(fn):
    """Map domain errors to exit code 1 with a message on stderr."""
    import functools

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except RUNTIME_ERRORS as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
@click.version_option(__version__)
def main():
    """Segment-wise latent inversion and local editing toolkit."""


@main.command("project")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--space", default="W", type=click.Choice(["W", "WPlus", "SSpace"]))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--global", "global_", is_flag=True, help="Single-code baseline over the whole image.")
@click.option("--finetune", default=0, type=int, help="Per-segment weight fine-tuning steps (0 = off).")
@click.option("--finetune-lr", default=0.01, type=float)
@click.option("--steps", default=200, type=int)
@click.option("--lr", default=0.05, type=float)
@click.option("--band-radius", default=3, type=int)
@click.option("--seed", default=0, type=int)
@click.option("--gen-seed", default=7, type=int)
@click.option("--workers", default=1, type=int)
@click.option("--poisson/--no-poisson", default=True)
@click.option("--poisson-tol", default=1e-8, type=float)
@_runtime
def cmd_project(image_path, labels_path, space, out_dir, global_, finetune, finetune_lr,
                steps, lr, band_radius, seed, gen_seed, workers, poisson, poisson_tol):
    """Estimate one latent code per segment (or one global code with --global)."""
    t0 = time.time()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    image = load_image(image_path)
    labels = load_label_map(labels_path, image.shape)
    gen = new_generator(GeneratorConfig(seed=gen_seed))
    cfg = ProjectionConfig(
        space=space_from_name(space), steps=steps, learning_rate=lr,
        band_radius=band_radius, seed=seed,
    )
    if global_:
        projections = [project_global(gen, image, cfg)]
        recon = render_projection(gen, projections[0])
    else:
        projections = project_all(gen, image, labels, cfg, workers=workers)
        if finetune > 0:
            projections = [
                finetune_segment(
                    gen, p, image,
                    loss_support(mask_of(labels, p.segment_id), cfg.band_radius),
                    finetune, finetune_lr,
                )
                for p in projections
            ]
        recon = reconstruct(gen, projections, labels, image, _stitch_config(poisson, poisson_tol))

    codes_path = out / "codes.json"
    recon_path = out / "reconstruction.png"
    loss_path = out / "losses.csv"
    _dump_json(codes_path, projections_to_obj(projections, cfg, gen))
    save_image(recon, recon_path)
    with open(loss_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment_id", "step", "loss"])
        for p in projections:
            for i, value in enumerate(p.loss_history):
                writer.writerow([p.segment_id, i, repr(value)])
    config = dict(config_to_obj(cfg), global_=global_, finetune=finetune, finetune_lr=finetune_lr,
                  workers=workers, poisson=poisson, poisson_tol=poisson_tol, gen_seed=gen_seed)
    _write_manifest(out, "project", config, {"image": image_path, "labels": labels_path},
                    [codes_path, recon_path, loss_path], gen_seed, t0)
    click.echo(f"projected {len(projections)} code(s); best losses "
               + ", ".join(f"{p.segment_id}:{p.final_loss:.3e}" for p in projections))


def _parse_segments(raw: str):
    if raw.upper() == "ALL":
        return None
    return tuple(int(s) for s in raw.split(",") if s.strip())


@main.command("edit")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--codes", "codes_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--script", "script_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--direction", "direction_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", type=float)
@click.option("--segments", default="ALL")
@click.option("--reproject/--no-reproject", default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--space", default="W", type=click.Choice(["W", "WPlus", "SSpace"]))
@click.option("--steps", default=200, type=int)
@click.option("--lr", default=0.05, type=float)
@click.option("--band-radius", default=3, type=int)
@click.option("--seed", default=0, type=int)
@click.option("--gen-seed", default=7, type=int)
@click.option("--poisson/--no-poisson", default=True)
@click.option("--poisson-tol", default=1e-8, type=float)
@_runtime
def cmd_edit(image_path, labels_path, codes_path, script_path, direction_path, alpha, segments,
             reproject, out_dir, space, steps, lr, band_radius, seed, gen_seed, poisson, poisson_tol):
    """Apply latent-space edits: a script of steps, or one direction with --alpha."""
    t0 = time.time()
    if script_path is None and (direction_path is None or alpha is None):
        raise click.UsageError("provide --script, or --direction with --alpha")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    image = load_image(image_path)
    labels = load_label_map(labels_path, image.shape)
    gen = new_generator(GeneratorConfig(seed=gen_seed))
    cfg = ProjectionConfig(
        space=space_from_name(space), steps=steps, learning_rate=lr,
        band_radius=band_radius, seed=seed,
    )
    if script_path is not None:
        script = load_script(script_path)
    else:
        script = EditScript(
            steps=(
                EditStep(
                    direction=load_direction(direction_path),
                    alpha=alpha,
                    segment_ids=_parse_segments(segments),
                    reproject=reproject,
                ),
            )
        )
    initial = None
    inputs = {"image": image_path, "labels": labels_path}
    if codes_path is not None:
        obj = json.loads(Path(codes_path).read_text(encoding="utf-8"))
        initial = {p.segment_id: p for p in projections_from_obj(obj, gen)}
        inputs["codes"] = codes_path
    if script_path is not None:
        inputs["script"] = script_path
    if direction_path is not None:
        inputs["direction"] = direction_path

    final, cache = edit_incremental_with_state(
        gen, image, labels, script, cfg, _stitch_config(poisson, poisson_tol), initial=initial
    )
    edited_path = out / "edited.png"
    codes_out = out / "codes.json"
    save_image(final, edited_path)
    ordered = [cache[k] for k in sorted(cache)]
    _dump_json(codes_out, projections_to_obj(ordered, cfg, gen))
    config = dict(config_to_obj(cfg), poisson=poisson, poisson_tol=poisson_tol, gen_seed=gen_seed,
                  reproject=reproject, segments=segments, alpha=alpha)
    _write_manifest(out, "edit", config, inputs, [edited_path, codes_out], gen_seed, t0)
    click.echo(f"applied {len(script.steps)} step(s) -> {edited_path}")


@main.command("refine")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--segment", "segment_id", required=True, type=int)
@click.option("--rendered", "rendered_path", type=click.Path(exists=True, dir_okay=False),
              help="Segment reconstruction PNG; omit to synthesize from --codes.")
@click.option("--codes", "codes_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--dt", default=0.45, type=float)
@click.option("--iters", default=60, type=int)
@click.option("--smooth-radius", default=1, type=int)
@click.option("--max-growth", default=8, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--gen-seed", default=7, type=int)
@_runtime
def cmd_refine(image_path, labels_path, segment_id, rendered_path, codes_path, dt, iters,
               smooth_radius, max_growth, out_dir, gen_seed):
    """Grow one segment's boundary away from badly reconstructed pixels."""
    t0 = time.time()
    if rendered_path is None and codes_path is None:
        raise click.UsageError("provide --rendered or --codes")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    image = load_image(image_path)
    labels = load_label_map(labels_path, image.shape)
    inputs = {"image": image_path, "labels": labels_path}
    if rendered_path is not None:
        rendered = load_image(rendered_path)
        inputs["rendered"] = rendered_path
    else:
        gen = new_generator(GeneratorConfig(seed=gen_seed))
        obj = json.loads(Path(codes_path).read_text(encoding="utf-8"))
        by_id = {p.segment_id: p for p in projections_from_obj(obj, gen)}
        if segment_id not in by_id:
            raise EditError(f"codes file has no segment {segment_id}")
        rendered = render_projection(gen, by_id[segment_id])
        inputs["codes"] = codes_path

    params = RefineParams(dt=dt, iterations=iters, smooth_radius=smooth_radius, max_growth=max_growth)
    refined = refine_segment(labels, segment_id, image, rendered, params)

    labels_out = out / "labels.png"
    overlay_out = out / "overlay.png"
    field_out = out / "stopping.png"
    save_label_map(refined, labels_out)
    overlay = image.data.copy()
    before = inner_boundary(mask_of(labels, segment_id)).bits
    after = inner_boundary(mask_of(refined, segment_id)).bits
    overlay[before] = (1.0, 0.0, 0.0)
    overlay[after] = (1.0, 1.0, 0.0)
    from .image import ImageBuffer
    save_image(ImageBuffer(overlay), overlay_out)
    f = stopping_function(image, rendered, smooth_radius)
    from PIL import Image as PILImage
    PILImage.fromarray(quantize_to_bytes(np.repeat(f.f[:, :, None], 3, axis=2))[:, :, 0], mode="L").save(field_out)

    config = {"segment": segment_id, "dt": dt, "iters": iters, "smooth_radius": smooth_radius,
              "max_growth": max_growth, "gen_seed": gen_seed}
    _write_manifest(out, "refine", config, inputs, [labels_out, overlay_out, field_out], gen_seed, t0)
    grown = int(mask_of(refined, segment_id).pixel_count - mask_of(labels, segment_id).pixel_count)
    click.echo(f"segment {segment_id} grew by {grown} pixel(s) -> {labels_out}")


@main.command("compare")
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--space", default="W", type=click.Choice(["W", "WPlus", "SSpace"]))
@click.option("--seeds", default="0,1,2", help="Comma-separated projection seeds.")
@click.option("--steps", default=200, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--gen-seed", default=7, type=int)
@_runtime
def cmd_compare(image_path, labels_path, space, seeds, steps, out_dir, gen_seed):
    """Segmented vs global projection: per-seed MSE table and win rate."""
    t0 = time.time()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    image = load_image(image_path)
    labels = load_label_map(labels_path, image.shape)
    gen = new_generator(GeneratorConfig(seed=gen_seed))
    seed_list = [int(s) for s in seeds.split(",") if s.strip()]
    if not seed_list:
        raise click.UsageError("no seeds given")

    editable = labels.labels > 0
    rows = []
    for s in seed_list:
        cfg = ProjectionConfig(space=space_from_name(space), steps=steps, seed=s)
        projs = project_all(gen, image, labels, cfg)
        from .image import compose

        hard = compose([(p.segment_id, render_projection(gen, p)) for p in projs], labels, image)
        mse_seg = float(((hard.data - image.data)[editable] ** 2).mean())
        glob = project_global(gen, image, cfg)
        glob_img = render_projection(gen, glob)
        mse_glob = float(((glob_img.data - image.data)[editable] ** 2).mean())
        rows.append((s, mse_seg, mse_glob))

    csv_path = out / "compare.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "mse_segmented", "mse_global"])
        for s, a, b in rows:
            writer.writerow([s, repr(a), repr(b)])
    wins = sum(1 for _, a, b in rows if a < b)
    md_path = out / "summary.md"
    lines = [
        "# Segmented vs global projection",
        "",
        "| seed | segmented MSE | global MSE | winner |",
        "| --- | --- | --- | --- |",
    ]
    for s, a, b in rows:
        lines.append(f"| {s} | {a:.6e} | {b:.6e} | {'segmented' if a < b else 'global'} |")
    lines += ["", f"Segmented wins {wins}/{len(rows)} (win rate {wins / len(rows):.2f})."]
    md_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_manifest(out, "compare", {"space": space, "seeds": seed_list, "steps": steps, "gen_seed": gen_seed},
                    {"image": image_path, "labels": labels_path}, [csv_path, md_path], gen_seed, t0)
    click.echo(f"segmented wins {wins}/{len(rows)}")


@main.command("serve")
@click.option("--port", default=8750, type=int)
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", "labels_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--state-dir", envvar="SEGEDIT_STATE_DIR", type=click.Path(file_okay=False))
@click.option("--ui-dir", type=click.Path(file_okay=False, exists=True),
              help="Serve the browser UI (frontend/ after npm run build) at /.")
@click.option("--gen-seed", default=7, type=int)
@_runtime
def cmd_serve(port, image_path, labels_path, state_dir, ui_dir, gen_seed):
    """Serve the interactive editing API until interrupted."""
    from .server import run_server

    try:
        run_server(port=port, image_path=image_path, labels_path=labels_path,
                   state_dir=state_dir, gen_seed=gen_seed, ui_dir=ui_dir)
    except OSError as e:
        click.echo(f"error: cannot bind port {port}: {e}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
