"""Image and segmentation data model: buffers, label maps, masks, composition.

Pixel data is float64 in [0, 1] internally and 8-bit at the PNG boundary
(clamp then round-half-up), so file round-trips are bit-stable. All types
freeze their arrays after validation and every operation returns new values,
which makes them safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError


class ImageIOError(Exception):
    """File unreadable, unwritable, or not an 8-bit PNG we accept."""


class LabelMapError(Exception):
    """Label map violates the partition contract (dims, range, contiguity)."""


class MaskError(Exception):
    """Mask precondition violated (empty mask, segment id out of range)."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ImageBuffer:
    """H x W x 3 float image with every value finite and in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        # copy so freezing never mutates a caller's array
        d = np.array(self.data, dtype=np.float64)
        if d.ndim != 3 or d.shape[2] != 3:
            raise ValueError(f"image data must be (H, W, 3), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("image data contains non-finite values")
        if d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("image data outside [0, 1]")
        object.__setattr__(self, "data", _frozen(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]


@dataclass(frozen=True)
class BinaryMask:
    """Per-pixel boolean region of interest with a cached true-pixel count."""

    bits: np.ndarray
    pixel_count: int = field(init=False)

    def __post_init__(self):
        b = np.array(self.bits, dtype=bool)
        if b.ndim != 2:
            raise ValueError(f"mask must be 2-D, got {b.shape}")
        object.__setattr__(self, "bits", _frozen(b))
        object.__setattr__(self, "pixel_count", int(b.sum()))

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel segment labels 0..n forming a partition; 0 is the untouched region."""

    labels: np.ndarray
    segment_count: int = field(init=False)

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise ValueError(f"labels must be 2-D, got {lab.shape}")
        if not np.issubdtype(lab.dtype, np.integer):
            raise LabelMapError("labels must be integers")
        if lab.min() < 0:
            raise LabelMapError("negative label")
        lab = lab.astype(np.int32)
        n = int(lab.max()) if lab.size else 0
        present = np.unique(lab)
        missing = sorted(set(range(1, n + 1)) - set(int(v) for v in present))
        if missing:
            raise LabelMapError(f"non-contiguous labels: missing {missing}")
        object.__setattr__(self, "labels", _frozen(lab))
        object.__setattr__(self, "segment_count", n)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


def load_image(path) -> ImageBuffer:
    """Read an 8-bit RGB or grayscale PNG, mapping bytes to [0, 1] by v/255."""
    try:
        img = Image.open(path)
        img.load()
    except (OSError, UnidentifiedImageError) as e:
        raise ImageIOError(f"unreadable image file {path}: {e}") from None
    if img.mode == "L":
        img = img.convert("RGB")
    if img.mode != "RGB":
        raise ImageIOError(f"unsupported image mode {img.mode!r} in {path} (need 8-bit RGB or grayscale)")
    data = np.asarray(img, dtype=np.float64) / 255.0
    return ImageBuffer(data)


def quantize_to_bytes(data: np.ndarray) -> np.ndarray:
    """The file-boundary rule: clamp to [0, 1], then round-half-up to 8 bits."""
    clamped = np.clip(np.asarray(data, dtype=np.float64), 0.0, 1.0)
    # floor(x + 0.5) is round-half-up; np.round would round half to even
    return np.floor(clamped * 255.0 + 0.5).astype(np.uint8)


def quantized(img: ImageBuffer) -> ImageBuffer:
    """Snap to the 8-bit grid (k/255 values), exactly what a PNG round-trip yields."""
    return ImageBuffer(quantize_to_bytes(img.data) / 255.0)


def save_image(img: ImageBuffer, path) -> None:
    """Write an 8-bit RGB PNG; bytes are round(255*v) after clamping to [0, 1]."""
    try:
        Image.fromarray(quantize_to_bytes(img.data), mode="RGB").save(path, format="PNG")
    except OSError as e:
        raise ImageIOError(f"cannot write {path}: {e}") from None


def load_label_map(path, expected_dims: tuple[int, int]) -> LabelMap:
    """Read an 8-bit grayscale PNG whose pixel value is the segment label."""
    try:
        img = Image.open(path)
        img.load()
    except (OSError, UnidentifiedImageError) as e:
        raise ImageIOError(f"unreadable label map {path}: {e}") from None
    if img.mode != "L":
        raise ImageIOError(f"label map must be 8-bit grayscale, got mode {img.mode!r}")
    lab = np.asarray(img, dtype=np.int32)
    if lab.shape != tuple(expected_dims):
        raise LabelMapError(f"label map dims {lab.shape} do not match expected {tuple(expected_dims)}")
    return LabelMap(lab)


def save_label_map(labels: LabelMap, path) -> None:
    """Write the label map as an 8-bit grayscale PNG (value = label id)."""
    if labels.segment_count > 255:
        raise LabelMapError("label id exceeds 8-bit grayscale range")
    try:
        Image.fromarray(labels.labels.astype(np.uint8), mode="L").save(path, format="PNG")
    except OSError as e:
        raise ImageIOError(f"cannot write {path}: {e}") from None


def mask_of(labels: LabelMap, k: int) -> BinaryMask:
    """Mask of pixels owned by segment k (1 <= k <= n)."""
    if not 1 <= k <= labels.segment_count:
        raise MaskError(f"segment id {k} out of range 1..{labels.segment_count}")
    return BinaryMask(labels.labels == k)


def background_mask(labels: LabelMap) -> BinaryMask:
    """Mask of label-0 pixels (copied back from the original, never optimized)."""
    return BinaryMask(labels.labels == 0)


def _disk_offsets(radius: int) -> list[tuple[int, int]]:
    r = int(radius)
    return [
        (dy, dx)
        for dy in range(-r, r + 1)
        for dx in range(-r, r + 1)
        if dy * dy + dx * dx <= r * r
    ]


def dilate(mask: BinaryMask, radius: int) -> BinaryMask:
    """Morphological dilation with a Euclidean disk; radius 0 is the identity."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return mask
    h, w = mask.shape
    src = mask.bits
    out = np.zeros((h, w), dtype=bool)
    for dy, dx in _disk_offsets(radius):
        ys0, ys1 = max(0, -dy), min(h, h - dy)
        xs0, xs1 = max(0, -dx), min(w, w - dx)
        out[ys0 + dy : ys1 + dy, xs0 + dx : xs1 + dx] |= src[ys0:ys1, xs0:xs1]
    return BinaryMask(out)


def erode(mask: BinaryMask, radius: int) -> BinaryMask:
    """Euclidean-disk erosion (pixels outside the image count as false)."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return mask
    inverted = BinaryMask(~mask.bits)
    return BinaryMask(~dilate(inverted, radius).bits)


def inner_boundary(mask: BinaryMask) -> BinaryMask:
    """Mask pixels with at least one in-image 4-neighbor outside the mask.

    Off-image neighbors do not count: the image frame is not a segment
    boundary.
    """
    b = mask.bits
    padded = np.pad(b, 1, mode="edge")
    interior = b & padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    return BinaryMask(b & ~interior)


def compose(
    pieces: list[tuple[int, ImageBuffer]],
    labels: LabelMap,
    original: ImageBuffer,
) -> ImageBuffer:
    """Assemble the per-segment pieces into one image.

    Each pixel takes its value from the piece that owns its (undilated) label;
    label-0 pixels are substituted back from the original. Hard cut, no
    blending - seams are the stitching module's job.
    """
    n = labels.segment_count
    ids = [sid for sid, _ in pieces]
    if sorted(ids) != list(range(1, n + 1)):
        raise ValueError(f"pieces must cover segment ids 1..{n} exactly once, got {sorted(ids)}")
    if original.shape != labels.shape:
        raise ValueError("original dims do not match label map")
    out = original.data.copy()
    for sid, piece in pieces:
        if piece.shape != labels.shape:
            raise ValueError(f"piece {sid} dims do not match label map")
        sel = labels.labels == sid
        out[sel] = piece.data[sel]
    return ImageBuffer(out)
