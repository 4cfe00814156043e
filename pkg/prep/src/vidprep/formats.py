"""Readers and writers for the interchange files consumed by the scoring pipeline.

Frame archive ("PSFR"):
  magic "PSFR", u32 version=1, u32 count, u16 height, u16 width,
  u8 flags, u32 fps_num, u32 fps_den, all little-endian.
  flag bit 0: raw u8 grayscale pixels, count*height*width bytes.
  flag bit 1: little-endian f64 difference series, count-1 values,
  stored after the pixel block.  Other flag bits are invalid.

Embedding sheet ("PSEM"):
  magic "PSEM", u32 version=1, u32 count, u32 dim, then count*dim
  little-endian f32 values row-major, then a u16 byte length followed
  by that many bytes of UTF-8 encoder tag.

Annotations and summaries are JSON; see write_annotation_file and
read_summary_file for the field lists.
"""

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from vidprep.errors import FormatError

ARCHIVE_MAGIC = b"PSFR"
SHEET_MAGIC = b"PSEM"
LAYOUT_VERSION = 1

_ARCHIVE_HEADER = struct.Struct("<4sIIHHBII")
_SHEET_HEADER = struct.Struct("<4sIII")


def _replace_file(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class FrameClip:
    """Grayscale frames sampled on a fixed grid, with their difference series.

    pixels is uint8 with shape (count, height, width).  diffs holds the
    mean absolute pixel difference between consecutive frames, length
    count-1, and may be omitted for annotation-only archives.
    """

    fps_num: int
    fps_den: int
    pixels: np.ndarray | None = None
    diffs: np.ndarray | None = None
    count: int = field(default=0)
    height: int = field(default=0)
    width: int = field(default=0)

    def __post_init__(self):
        if self.fps_num <= 0 or self.fps_den <= 0:
            raise FormatError(f"frame rate must be positive, got {self.fps_num}/{self.fps_den}")
        if self.pixels is not None:
            px = np.ascontiguousarray(np.asarray(self.pixels, dtype=np.uint8))
            if px.ndim != 3:
                raise FormatError(f"pixels must be (count, height, width), got shape {px.shape}")
            object.__setattr__(self, "pixels", px)
            object.__setattr__(self, "count", px.shape[0])
            object.__setattr__(self, "height", px.shape[1])
            object.__setattr__(self, "width", px.shape[2])
        if self.count < 1:
            raise FormatError("a clip needs at least one frame")
        if self.diffs is not None:
            dd = np.ascontiguousarray(np.asarray(self.diffs, dtype=np.float64))
            if dd.shape != (self.count - 1,):
                raise FormatError(
                    f"difference series has {dd.shape} values, expected {self.count - 1}"
                )
            object.__setattr__(self, "diffs", dd)

    @property
    def fps(self) -> float:
        return self.fps_num / self.fps_den

    @property
    def duration_s(self) -> float:
        return self.count * self.fps_den / self.fps_num


def clip_diffs(pixels: np.ndarray) -> np.ndarray:
    """Mean absolute difference between consecutive grayscale frames.

    Args:
      pixels: uint8 array of shape (count, height, width).

    Returns:
      float64 array of length count-1.  Sums of integer-valued
      differences are exact in f64, so the result does not depend on
      accumulation order.
    """
    px = np.asarray(pixels, dtype=np.uint8)
    if px.shape[0] < 2:
        return np.zeros(0, dtype=np.float64)
    steps = np.abs(px[1:].astype(np.float64) - px[:-1].astype(np.float64))
    return steps.mean(axis=(1, 2), dtype=np.float64)


def write_frame_archive(clip: FrameClip, path) -> None:
    """Serialize a clip to the binary frame-archive layout."""
    if clip.pixels is None and clip.diffs is None:
        raise FormatError("refusing to write an archive with no payload")
    flags = (1 if clip.pixels is not None else 0) | (2 if clip.diffs is not None else 0)
    parts = [
        _ARCHIVE_HEADER.pack(
            ARCHIVE_MAGIC, LAYOUT_VERSION, clip.count, clip.height, clip.width,
            flags, clip.fps_num, clip.fps_den,
        )
    ]
    if clip.pixels is not None:
        parts.append(clip.pixels.tobytes())
    if clip.diffs is not None:
        parts.append(clip.diffs.astype("<f8").tobytes())
    _replace_file(path, b"".join(parts))


def read_frame_archive(path) -> FrameClip:
    """Parse a binary frame archive back into a FrameClip."""
    raw = Path(path).read_bytes()
    if len(raw) < _ARCHIVE_HEADER.size:
        raise FormatError(f"{path}: shorter than the archive header")
    magic, version, count, height, width, flags, fps_num, fps_den = _ARCHIVE_HEADER.unpack_from(raw)
    if magic != ARCHIVE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != LAYOUT_VERSION:
        raise FormatError(f"{path}: unsupported archive version {version}")
    if flags & ~0x3:
        raise FormatError(f"{path}: unknown flag bits {flags:#x}")
    offset = _ARCHIVE_HEADER.size
    pixels = None
    diffs = None
    if flags & 1:
        n = count * height * width
        if len(raw) < offset + n:
            raise FormatError(f"{path}: pixel block truncated")
        pixels = np.frombuffer(raw, dtype=np.uint8, count=n, offset=offset).reshape(
            count, height, width
        ).copy()
        offset += n
    if flags & 2:
        n = (count - 1) * 8
        if len(raw) < offset + n:
            raise FormatError(f"{path}: difference block truncated")
        diffs = np.frombuffer(raw, dtype="<f8", count=count - 1, offset=offset).astype(np.float64)
        offset += n
    if len(raw) != offset:
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes")
    if pixels is None:
        return FrameClip(
            fps_num=fps_num, fps_den=fps_den, diffs=diffs,
            count=count, height=height, width=width,
        )
    return FrameClip(fps_num=fps_num, fps_den=fps_den, pixels=pixels, diffs=diffs)


@dataclass(frozen=True)
class EmbeddingSheet:
    """Per-frame embedding rows plus the tag of the encoder that made them.

    An empty tag is legal on the wire; the export path always sets one.
    """

    rows: np.ndarray
    tag: str = ""

    def __post_init__(self):
        rows = np.ascontiguousarray(np.asarray(self.rows, dtype=np.float32))
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
            raise FormatError(f"rows must be a nonempty 2-d matrix, got shape {rows.shape}")
        object.__setattr__(self, "rows", rows)


def write_embedding_sheet(sheet: EmbeddingSheet, path) -> None:
    """Serialize an embedding matrix to the binary sheet layout."""
    count, dim = sheet.rows.shape
    tag = sheet.tag.encode("utf-8")
    if len(tag) > 0xFFFF:
        raise FormatError("encoder tag longer than 65535 bytes")
    payload = (
        _SHEET_HEADER.pack(SHEET_MAGIC, LAYOUT_VERSION, count, dim)
        + sheet.rows.astype("<f4").tobytes()
        + struct.pack("<H", len(tag))
        + tag
    )
    _replace_file(path, payload)


def read_embedding_sheet(path) -> EmbeddingSheet:
    """Parse a binary embedding sheet."""
    raw = Path(path).read_bytes()
    if len(raw) < _SHEET_HEADER.size:
        raise FormatError(f"{path}: shorter than the sheet header")
    magic, version, count, dim = _SHEET_HEADER.unpack_from(raw)
    if magic != SHEET_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != LAYOUT_VERSION:
        raise FormatError(f"{path}: unsupported sheet version {version}")
    offset = _SHEET_HEADER.size
    n = count * dim * 4
    if len(raw) < offset + n + 2:
        raise FormatError(f"{path}: row block truncated")
    rows = np.frombuffer(raw, dtype="<f4", count=count * dim, offset=offset).reshape(count, dim)
    offset += n
    (tag_len,) = struct.unpack_from("<H", raw, offset)
    offset += 2
    if len(raw) != offset + tag_len:
        raise FormatError(f"{path}: tag block has wrong length")
    tag = raw[offset:offset + tag_len].decode("utf-8")
    return EmbeddingSheet(rows=rows.copy(), tag=tag)


def write_annotation_file(
    path,
    video_id: str,
    fps: float,
    n_frames: int,
    users: list,
    segments=None,
    oracle_budget_frames=None,
    queries=None,
) -> None:
    """Write reference annotations for one video as JSON.

    Args:
      users: list of per-annotator dicts, each either
        {"keyshots": [[start, end], ...]} with half-open frame intervals
        or {"frame_scores": [...], "scale": [lo, hi]} with one score per
        frame.
      segments: optional temporal segmentation [[start, end], ...]
        covering the video, used by keyshot evaluation protocols.
      oracle_budget_frames: optional per-video summary budget.
      queries: optional list of {"text": ..., "class": ...} dicts.
    """
    if n_frames < 1:
        raise FormatError(f"{video_id}: n_frames must be positive, got {n_frames}")
    if not users:
        raise FormatError(f"{video_id}: at least one annotator is required")
    out_users = []
    for i, user in enumerate(users):
        if "keyshots" in user:
            shots = [[int(s), int(e)] for s, e in user["keyshots"]]
            for s, e in shots:
                if not (0 <= s < e <= n_frames):
                    raise FormatError(f"{video_id}: user {i} keyshot [{s}, {e}) out of range")
            out_users.append({"keyshots": shots})
        elif "frame_scores" in user:
            scores = [float(v) for v in user["frame_scores"]]
            if len(scores) != n_frames:
                raise FormatError(
                    f"{video_id}: user {i} has {len(scores)} scores for {n_frames} frames"
                )
            lo, hi = user.get("scale", (1.0, 5.0))
            out_users.append({"frame_scores": scores, "scale": [float(lo), float(hi)]})
        else:
            raise FormatError(f"{video_id}: user {i} has neither keyshots nor frame_scores")
    doc = {
        "version": LAYOUT_VERSION,
        "video_id": video_id,
        "fps": float(fps),
        "n_frames": int(n_frames),
        "users": out_users,
    }
    if segments is not None:
        segs = [[int(s), int(e)] for s, e in segments]
        for s, e in segs:
            if not (0 <= s < e <= n_frames):
                raise FormatError(f"{video_id}: segment [{s}, {e}) out of range")
        doc["segments"] = segs
    if oracle_budget_frames is not None:
        doc["oracle_budget_frames"] = int(oracle_budget_frames)
    if queries is not None:
        doc["queries"] = [
            {"text": str(q["text"]), "class": str(q["class"])} for q in queries
        ]
    _replace_file(path, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def read_summary_file(path) -> dict:
    """Load a summary mask JSON and return its fields.

    The file carries version, video_id, protocol, budget_frames,
    n_frames, and half-open frame intervals.
    """
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != LAYOUT_VERSION:
        raise FormatError(f"{path}: unsupported summary version {doc.get('version')!r}")
    for key in ("video_id", "n_frames", "intervals"):
        if key not in doc:
            raise FormatError(f"{path}: missing field {key!r}")
    n = int(doc["n_frames"])
    intervals = [(int(s), int(e)) for s, e in doc["intervals"]]
    for s, e in intervals:
        if not (0 <= s < e <= n):
            raise FormatError(f"{path}: interval [{s}, {e}) out of range for {n} frames")
    doc["intervals"] = intervals
    return doc
