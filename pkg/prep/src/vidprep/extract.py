"""Frame extraction from video containers and image-sequence directories.

Sources decode to grayscale via the ITU-R 601 luma weights, optionally
shrink to a longest-edge cap, and resample onto a fixed output grid of
floor(duration * fps) frames.  The mean absolute difference between
consecutive frames is computed here so downstream tools can read it
without touching pixel data.
"""

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from vidprep.errors import DecodeError
from vidprep.formats import FrameClip, clip_diffs

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")

# ITU-R 601 luma weights for R, G, B.
_LUMA_RGB = np.array([0.299, 0.587, 0.114], dtype=np.float64)


@dataclass(frozen=True)
class ExtractionJob:
    """One source to turn into a frame archive.

    source: a video file, or a directory of images treated as an
      already-sampled sequence (sorted by file name).
    fps: output sampling rate; None keeps the source grid.
    source_fps: native rate of the source.  Required for image
      directories; for video files it overrides the container header,
      which some formats misreport.
    max_edge: cap on the longer image edge; larger frames shrink with
      area averaging before anything else is computed.
    keep_pixels: when False the archive stores only the difference
      series, which is enough for boundary detection.
    """

    source: str
    fps: float | None = None
    source_fps: float | None = None
    max_edge: int | None = None
    keep_pixels: bool = True


def rgb_to_luma(rgb: np.ndarray) -> np.ndarray:
    """Convert an (h, w, 3) RGB uint8 image to grayscale uint8.

    Uses 0.299 R + 0.587 G + 0.114 B computed in f64 with ties rounded
    to even, so the mapping is exact and platform independent.
    """
    arr = np.asarray(rgb, dtype=np.float64)
    y = arr @ _LUMA_RGB
    return np.clip(np.rint(y), 0, 255).astype(np.uint8)


def _shrink(gray: np.ndarray, max_edge: int | None) -> np.ndarray:
    h, w = gray.shape
    edge = max(h, w)
    if max_edge is None or edge <= max_edge:
        return gray
    scale = max_edge / edge
    nh = max(1, round(h * scale))
    nw = max(1, round(w * scale))
    return cv2.resize(gray, (nw, nh), interpolation=cv2.INTER_AREA)


def _rational(fps: float) -> tuple[int, int]:
    frac = Fraction(fps).limit_denominator(1_000_000)
    if frac <= 0:
        raise DecodeError(f"frame rate must be positive, got {fps}")
    return frac.numerator, frac.denominator


def resample_indices(src_count: int, src_fps: float, out_fps: float) -> list[int]:
    """Map an output grid of floor(duration * out_fps) frames to source indices.

    Output frame t reads source frame floor(t * src_fps / out_fps); the
    arithmetic is exact rationals so grid sizes never drift by one.
    """
    src = Fraction(src_fps).limit_denominator(1_000_000)
    out = Fraction(out_fps).limit_denominator(1_000_000)
    count = int(Fraction(src_count) * out / src)
    return [min(src_count - 1, int(Fraction(t) * src / out)) for t in range(count)]


def _decode_video(path: Path, max_edge: int | None) -> tuple[list[np.ndarray], float]:
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise DecodeError(f"cannot open video container {path}")
    try:
        header_fps = float(cap.get(cv2.CAP_PROP_FPS) or 0.0)
        frames = []
        while True:
            ok, frame = cap.read()
            if not ok:
                break
            if frame.ndim == 3:
                # OpenCV decodes BGR; reverse to RGB for the luma weights.
                gray = rgb_to_luma(frame[:, :, ::-1])
            else:
                gray = frame.astype(np.uint8)
            frames.append(_shrink(gray, max_edge))
    finally:
        cap.release()
    if not frames:
        raise DecodeError(f"no frames decoded from container {path}")
    return frames, header_fps


def _decode_image_dir(path: Path, max_edge: int | None) -> list[np.ndarray]:
    files = sorted(
        p for p in path.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES
    )
    if not files:
        raise DecodeError(f"no image files found in directory {path}")
    frames = []
    shape = None
    for p in files:
        try:
            with Image.open(p) as img:
                gray = rgb_to_luma(np.asarray(img.convert("RGB")))
        except OSError as exc:
            raise DecodeError(f"cannot decode image {p}: {exc}") from exc
        gray = _shrink(gray, max_edge)
        if shape is None:
            shape = gray.shape
        elif gray.shape != shape:
            raise DecodeError(
                f"{p}: size {gray.shape} differs from first frame {shape}"
            )
        frames.append(gray)
    return frames


def extract_frames(job: ExtractionJob) -> FrameClip:
    """Decode a job's source and return the sampled clip.

    Raises DecodeError when the source cannot be opened, decodes to
    zero frames, or is too short for even one output frame.
    """
    src = Path(job.source)
    if src.is_dir():
        frames = _decode_image_dir(src, job.max_edge)
        if job.source_fps is None:
            raise DecodeError(
                f"image directory {src} has no inherent rate; pass source_fps"
            )
        src_fps = job.source_fps
    elif src.is_file():
        frames, header_fps = _decode_video(src, job.max_edge)
        src_fps = job.source_fps if job.source_fps is not None else header_fps
        if src_fps <= 0:
            raise DecodeError(
                f"container {src} reports no frame rate; pass source_fps"
            )
    else:
        raise DecodeError(f"source {src} does not exist")

    if job.fps is not None and abs(job.fps - src_fps) > 1e-9:
        indices = resample_indices(len(frames), src_fps, job.fps)
        if not indices:
            raise DecodeError(
                f"{src}: {len(frames)} frames at {src_fps} fps is shorter than "
                f"one output frame at {job.fps} fps"
            )
        frames = [frames[i] for i in indices]
        out_fps = job.fps
    else:
        out_fps = src_fps

    pixels = np.stack(frames).astype(np.uint8)
    diffs = clip_diffs(pixels)
    num, den = _rational(out_fps)
    if job.keep_pixels:
        return FrameClip(fps_num=num, fps_den=den, pixels=pixels, diffs=diffs)
    return FrameClip(
        fps_num=num, fps_den=den, diffs=diffs,
        count=pixels.shape[0], height=pixels.shape[1], width=pixels.shape[2],
    )
