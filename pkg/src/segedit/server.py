"""HTTP backend for the interactive editing UI.

One session per process: a working image, a label map, per-segment codes and
an undo stack. Long operations (project / edit / refine) run as a single
in-flight background job polled at /api/job/{id}; everything else answers
synchronously. All domain math happens here so the browser never computes
anything the CLI could not reproduce.

State-changing actions are appended to a journal (JSON lines); replaying the
journal against a fresh session reproduces the final composite bit-exactly.
"""

from __future__ import annotations

import base64
import io
import json
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .editing import apply_direction, direction_from_obj, render_projection
from .generator import GeneratorConfig, new_generator, space_from_name
from .image import ImageBuffer, LabelMap, background_mask, compose, load_image, mask_of, quantized, save_image
from .levelset import CFLError, RefineError, RefineParams, refine_segment
from .poisson import StitchConfig, stitch_composite
from .projection import ProjectionConfig, SegmentProjection, project_segment, projections_from_obj, projections_to_obj

UNDO_LIMIT = 32


def _png_bytes(img: ImageBuffer) -> bytes:
    buf = io.BytesIO()
    save_image(img, buf)
    return buf.getvalue()


def _label_png_bytes(labels: LabelMap) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(labels.labels.astype(np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


@dataclass
class Job:
    id: str
    kind: str
    state: str = "queued"  # queued | running | done | error
    step: int = 0
    steps: int = 0
    error: Optional[str] = None


@dataclass
class Snapshot:
    image: ImageBuffer
    labels: Optional[LabelMap]
    label_bytes: Optional[bytes]
    codes: dict


@dataclass
class Session:
    gen: object
    image: ImageBuffer
    labels: Optional[LabelMap] = None
    label_bytes: Optional[bytes] = None  # exact bytes last uploaded, for byte-exact echo
    codes: dict = field(default_factory=dict)
    preview: Optional[ImageBuffer] = None
    undo_stack: list = field(default_factory=list)
    journal: list = field(default_factory=list)
    state_dir: Optional[Path] = None

    def snapshot(self):
        self.undo_stack.append(Snapshot(self.image, self.labels, self.label_bytes, dict(self.codes)))
        if len(self.undo_stack) > UNDO_LIMIT:
            self.undo_stack.pop(0)

    def record(self, action: str, params: dict):
        self.journal.append({"action": action, "params": params})
        if self.state_dir is not None:
            with open(self.state_dir / "journal.jsonl", "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"action": action, "params": params}, sort_keys=True) + "\n")

    def persist(self):
        if self.state_dir is None:
            return
        self.state_dir.mkdir(parents=True, exist_ok=True)
        (self.state_dir / "image.png").write_bytes(_png_bytes(self.image))
        if self.labels is not None:
            (self.state_dir / "labels.png").write_bytes(self.label_bytes or _label_png_bytes(self.labels))
        if self.codes:
            cfg = ProjectionConfig(seed=0)
            obj = projections_to_obj([self.codes[k] for k in sorted(self.codes)], cfg, self.gen)
            (self.state_dir / "codes.json").write_text(json.dumps(obj, sort_keys=True), encoding="utf-8")


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        self.status = status
        super().__init__(message)


class SessionServer:
    """Owns the session, the lock, and the single in-flight job."""

    def __init__(self, gen, image: ImageBuffer, labels: Optional[LabelMap] = None,
                 state_dir: Optional[str] = None):
        self.lock = threading.RLock()
        self.session = Session(gen=gen, image=image, labels=labels,
                               label_bytes=_label_png_bytes(labels) if labels is not None else None,
                               state_dir=Path(state_dir) if state_dir else None)
        if self.session.state_dir is not None:
            self.session.state_dir.mkdir(parents=True, exist_ok=True)
            self.session.persist()
        self.jobs: dict[str, Job] = {}
        self.active_job: Optional[str] = None

    # --- job machinery ---------------------------------------------------------

    def start_job(self, kind: str, steps: int, work) -> Job:
        with self.lock:
            if self.active_job is not None and self.jobs[self.active_job].state in ("queued", "running"):
                raise ApiError(409, "a job is already running")
            job = Job(id=uuid.uuid4().hex[:12], kind=kind, steps=steps)
            self.jobs[job.id] = job
            self.active_job = job.id

        def runner():
            job.state = "running"
            try:
                work(job)
                job.state = "done"
            except Exception as e:  # surfaced through the job endpoint
                job.error = str(e)
                job.state = "error"

        threading.Thread(target=runner, daemon=True).start()
        return job

    # --- handlers ----------------------------------------------------------------

    def get_image(self) -> bytes:
        with self.lock:
            return _png_bytes(self.session.image)

    def get_labels(self) -> bytes:
        with self.lock:
            if self.session.labels is None:
                raise ApiError(404, "no label map uploaded")
            if self.session.label_bytes is not None:
                return self.session.label_bytes
            return _label_png_bytes(self.session.labels)

    def put_labels(self, body: bytes, journal: bool = True) -> dict:
        try:
            img = Image.open(io.BytesIO(body))
            img.load()
        except (OSError, UnidentifiedImageError):
            raise ApiError(400, "body is not a PNG") from None
        if img.mode != "L":
            raise ApiError(400, f"label map must be 8-bit grayscale, got mode {img.mode!r}")
        arr = np.asarray(img, dtype=np.int32)
        with self.lock:
            if arr.shape != self.session.image.shape:
                raise ApiError(400, f"label dims {arr.shape} do not match image {self.session.image.shape}")
            try:
                labels = LabelMap(arr)
            except Exception as e:
                raise ApiError(400, f"invalid partition: {e}") from None
            self.session.snapshot()
            self.session.labels = labels
            self.session.label_bytes = bytes(body)
            self.session.codes = {}
            self.session.preview = None
            if journal:
                self.session.record("set_labels", {"png_b64": base64.b64encode(body).decode("ascii")})
            self.session.persist()
            return {"segment_count": labels.segment_count}

    def _proj_cfg(self, params: dict) -> ProjectionConfig:
        return ProjectionConfig(
            space=space_from_name(params.get("space", "W")),
            steps=int(params.get("steps", 200)),
            seed=int(params.get("seed", 0)),
            band_radius=int(params.get("band_radius", 3)),
        )

    def post_project(self, params: dict) -> Job:
        with self.lock:
            if self.session.labels is None:
                raise ApiError(400, "upload a label map first")
            labels = self.session.labels
            image = self.session.image
        cfg = self._proj_cfg(params)
        gen = self.session.gen
        n = labels.segment_count
        if n < 1:
            raise ApiError(400, "label map has no segments")

        def work(job: Job):
            excluded = background_mask(labels)

            def tick(_):
                job.step += 1

            results = {}
            for k in range(1, n + 1):
                results[k] = project_segment(
                    gen, image, mask_of(labels, k), cfg,
                    segment_id=k, exclude=excluded, progress=tick,
                )
            with self.lock:
                self.session.snapshot()
                self.session.codes = results
                self.session.preview = None
                self.session.record("project", dict(params))
                self.session.persist()

        return self.start_job("project", steps=n * cfg.steps, work=work)

    def post_edit(self, params: dict) -> Job:
        try:
            direction = direction_from_obj(params["direction"])
            alpha = float(params["alpha"])
        except Exception as e:
            raise ApiError(400, f"bad edit request: {e}") from None
        reproject = bool(params.get("reproject", True))
        segments = params.get("segments", "ALL")
        with self.lock:
            if self.session.labels is None:
                raise ApiError(400, "upload a label map first")
            labels = self.session.labels
            image = self.session.image
            codes = dict(self.session.codes)
        ids = tuple(range(1, labels.segment_count + 1)) if segments == "ALL" else tuple(int(s) for s in segments)
        bad = [k for k in ids if not 1 <= k <= labels.segment_count]
        if bad or not ids:
            raise ApiError(400, f"invalid segment ids {bad or list(ids)}")
        cfg = self._proj_cfg(params)
        gen = self.session.gen
        missing = [k for k in range(1, labels.segment_count + 1) if k not in codes]
        reprojected = [k for k in ids if reproject or k not in codes]
        total = cfg.steps * len(set(missing) | set(reprojected))

        def work(job: Job):
            excluded = background_mask(labels)

            def tick(_):
                job.step += 1

            local = dict(codes)
            for k in sorted(set(missing) | set(reprojected)):
                local[k] = project_segment(
                    gen, image, mask_of(labels, k), cfg,
                    segment_id=k, exclude=excluded, progress=tick,
                )
            unedited = dict(local)
            for k in ids:
                local[k] = replace(local[k], code=apply_direction(local[k].code, direction, alpha, gen))
            pieces = [(k, render_projection(gen, local[k])) for k in sorted(local)]
            composite = compose(pieces, labels, image)
            stitched = quantized(stitch_composite(composite, pieces, labels))
            with self.lock:
                if reproject:
                    # commit: the stitched composite becomes the working image
                    self.session.snapshot()
                    self.session.image = stitched
                    self.session.codes = local
                    self.session.preview = None
                    self.session.record("edit", dict(params))
                    self.session.persist()
                else:
                    # preview: cache fresh (pre-edit) projections, leave the image alone
                    self.session.preview = stitched
                    self.session.codes = unedited

        return self.start_job("edit", steps=total, work=work)

    def post_refine(self, params: dict) -> Job:
        try:
            segment = int(params["segment"])
            dt = float(params["dt"])
            iters = int(params["iters"])
        except (KeyError, TypeError, ValueError) as e:
            raise ApiError(400, f"bad refine request: {e}") from None
        with self.lock:
            if self.session.labels is None:
                raise ApiError(400, "upload a label map first")
            if segment not in self.session.codes:
                raise ApiError(400, f"segment {segment} has no projected code yet")
            labels = self.session.labels
            image = self.session.image
            proj = self.session.codes[segment]
        gen = self.session.gen

        def work(job: Job):
            rendered = render_projection(gen, proj)
            refine_params = RefineParams(
                dt=dt, iterations=iters,
                smooth_radius=int(params.get("smooth_radius", 1)),
                max_growth=int(params.get("max_growth", 8)),
            )
            refined = refine_segment(labels, segment, image, rendered, refine_params)
            job.step = iters
            with self.lock:
                self.session.snapshot()
                self.session.labels = refined
                self.session.label_bytes = None  # server-modified; re-encode on demand
                self.session.preview = None
                self.session.record("refine", dict(params))
                self.session.persist()

        return self.start_job("refine", steps=iters, work=work)

    def get_composite(self, poisson: bool, preview: bool = False) -> bytes:
        with self.lock:
            if preview and self.session.preview is not None:
                return _png_bytes(self.session.preview)
            if self.session.labels is None or not self.session.codes:
                raise ApiError(409, "project segments before requesting a composite")
            labels = self.session.labels
            image = self.session.image
            codes = dict(self.session.codes)
        gen = self.session.gen
        pieces = [(k, render_projection(gen, codes[k])) for k in sorted(codes)]
        composite = compose(pieces, labels, image)
        if poisson:
            composite = stitch_composite(composite, pieces, labels)
        return _png_bytes(composite)

    def post_undo(self) -> dict:
        with self.lock:
            if not self.session.undo_stack:
                raise ApiError(409, "nothing to undo")
            snap = self.session.undo_stack.pop()
            self.session.image = snap.image
            self.session.labels = snap.labels
            self.session.label_bytes = snap.label_bytes
            self.session.codes = snap.codes
            self.session.preview = None
            self.session.record("undo", {})
            self.session.persist()
            return {"depth": len(self.session.undo_stack)}

    def get_job(self, job_id: str) -> dict:
        job = self.jobs.get(job_id)
        if job is None:
            raise ApiError(404, "unknown job")
        out = {"state": job.state, "progress": {"step": job.step, "steps": job.steps}}
        if job.error:
            out["error"] = job.error
        return out

    def get_journal(self) -> dict:
        with self.lock:
            return {"entries": list(self.session.journal)}


_MIME = {".html": "text/html", ".js": "text/javascript", ".css": "text/css",
         ".json": "application/json", ".png": "image/png", ".map": "application/json"}


class _Handler(BaseHTTPRequestHandler):
    server_version = "segedit"
    api: SessionServer  # set by make_server
    ui_dir: Optional[Path] = None  # static files for the browser UI

    def log_message(self, *args):  # tests stay quiet
        pass

    def _send(self, status: int, body: bytes, content_type: str):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _json(self, status: int, obj: dict):
        self._send(status, json.dumps(obj).encode("utf-8"), "application/json")

    def _png(self, body: bytes):
        self._send(200, body, "image/png")

    def _body(self) -> bytes:
        length = int(self.headers.get("Content-Length", 0))
        return self.rfile.read(length) if length else b""

    def _dispatch(self, method: str):
        path, _, query = self.path.partition("?")
        params = {}
        for part in query.split("&"):
            if "=" in part:
                k, _, v = part.partition("=")
                params[k] = v
        try:
            route = (method, path)
            if route == ("GET", "/api/health"):
                return self._json(200, {"status": "ok"})
            if route == ("GET", "/api/image"):
                return self._png(self.api.get_image())
            if route == ("GET", "/api/labels"):
                return self._png(self.api.get_labels())
            if path == "/api/labels" and method in ("PUT", "POST"):
                return self._json(200, self.api.put_labels(self._body()))
            if route == ("POST", "/api/project"):
                job = self.api.post_project(json.loads(self._body() or b"{}"))
                return self._json(202, {"job": job.id})
            if route == ("POST", "/api/edit"):
                job = self.api.post_edit(json.loads(self._body() or b"{}"))
                return self._json(202, {"job": job.id})
            if route == ("POST", "/api/refine"):
                job = self.api.post_refine(json.loads(self._body() or b"{}"))
                return self._json(202, {"job": job.id})
            if route == ("GET", "/api/composite"):
                poisson = params.get("poisson", "true").lower() not in ("false", "0", "no")
                preview = params.get("preview", "false").lower() in ("true", "1", "yes")
                return self._png(self.api.get_composite(poisson, preview))
            if route == ("POST", "/api/undo"):
                return self._json(200, self.api.post_undo())
            if method == "GET" and path.startswith("/api/job/"):
                return self._json(200, self.api.get_job(path.rsplit("/", 1)[-1]))
            if route == ("GET", "/api/journal"):
                return self._json(200, self.api.get_journal())
            if method == "GET" and not path.startswith("/api/") and self.ui_dir is not None:
                return self._static(path)
            return self._json(404, {"error": "not found"})
        except ApiError as e:
            return self._json(e.status, {"error": str(e)})
        except (CFLError, RefineError) as e:
            return self._json(400, {"error": str(e)})
        except json.JSONDecodeError:
            return self._json(400, {"error": "body is not valid JSON"})

    def _static(self, path: str):
        rel = "index.html" if path == "/" else path.lstrip("/")
        target = (self.ui_dir / rel).resolve()
        if not str(target).startswith(str(self.ui_dir.resolve())) or not target.is_file():
            return self._json(404, {"error": "not found"})
        mime = _MIME.get(target.suffix, "application/octet-stream")
        return self._send(200, target.read_bytes(), mime)

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PUT(self):
        self._dispatch("PUT")


def make_server(port: int, image: ImageBuffer, gen, labels: Optional[LabelMap] = None,
                state_dir: Optional[str] = None, ui_dir: Optional[str] = None) -> ThreadingHTTPServer:
    api = SessionServer(gen, image, labels=labels, state_dir=state_dir)
    handler = type("BoundHandler", (_Handler,), {
        "api": api,
        "ui_dir": Path(ui_dir) if ui_dir else None,
    })
    return ThreadingHTTPServer(("127.0.0.1", port), handler)


def run_server(port: int, image_path, labels_path=None, state_dir=None, gen_seed: int = 7, ui_dir=None):
    image = load_image(image_path)
    labels = None
    if labels_path is not None:
        from .image import load_label_map

        labels = load_label_map(labels_path, image.shape)
    gen = new_generator(GeneratorConfig(seed=gen_seed))
    server = make_server(port, image, gen, labels=labels, state_dir=state_dir, ui_dir=ui_dir)
    print(f"serving on http://127.0.0.1:{server.server_address[1]}/api/health", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
