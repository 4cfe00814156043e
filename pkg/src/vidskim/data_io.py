"""Canonical in-memory types and on-disk formats shared by all pipeline stages.

Binary formats (all multi-byte values little-endian):

  frame store ("PSFR"):
    magic "PSFR", u32 version=1, u32 count, u16 height, u16 width,
    u8 flags (bit0 pixels present, bit1 diffs present),
    u32 fps_num, u32 fps_den,
    then count*height*width u8 pixels (if flagged),
    then (count-1) f64 inter-frame differences (if flagged).

  embedding matrix ("PSEM"):
    magic "PSEM", u32 version=1, u32 count, u32 dim,
    then count*dim f32 rows,
    then u16 tag_len + UTF-8 encoder tag (tag block optional on read).

Everything else is UTF-8 JSON with an explicit "version" field.
"""
from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import InvariantError, MagicError, SchemaError, TruncatedError, VersionError

FRAMESTORE_MAGIC = b"PSFR"
EMBEDDING_MAGIC = b"PSEM"
FORMAT_VERSION = 1

_PSFR_HEADER = struct.Struct("<4sIIHHBII")
_PSEM_HEADER = struct.Struct("<4sIII")

SCORE_STAGES = ("scene_raw", "scene_norm", "frame_smoothed", "frame_weight", "frame_final")


def write_atomic(path: str | Path, data: bytes) -> None:
    """Write bytes via a temp file + rename so interrupted runs never leave partials."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_json(path: str | Path, obj, compact: bool = False) -> None:
    """Serialize deterministically (sorted keys) and write atomically.

    compact=True drops whitespace, for files holding large score arrays.
    """
    if compact:
        text = json.dumps(obj, separators=(",", ":"), sort_keys=True)
    else:
        text = json.dumps(obj, indent=2, sort_keys=True)
    write_atomic(path, (text + "\n").encode("utf-8"))


def load_json(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected a JSON object at the top level")
    return obj


def _require_version(obj: dict, path) -> None:
    if obj.get("version") != FORMAT_VERSION:
        raise VersionError(f"{path}: field 'version' must be {FORMAT_VERSION}, got {obj.get('version')!r}")


@dataclass(frozen=True)
class FrameStore:
    """Grayscale frames and/or a precomputed inter-frame difference series.

    Either ``pixels`` (count x height x width uint8) or ``diff_series``
    (count-1 nonnegative float64) must be present.
    """

    fps_num: int
    fps_den: int
    count: int
    height: int
    width: int
    pixels: np.ndarray | None = None
    diff_series: np.ndarray | None = None

    def __post_init__(self):
        if self.fps_num <= 0 or self.fps_den <= 0:
            raise InvariantError(f"fps must be positive, got {self.fps_num}/{self.fps_den}")
        if self.count < 1:
            raise InvariantError(f"frame count must be >= 1, got {self.count}")
        if self.pixels is None and self.diff_series is None:
            raise InvariantError("at least one of pixels/diff_series must be present")
        if self.pixels is not None:
            px = np.ascontiguousarray(np.asarray(self.pixels, dtype=np.uint8))
            if px.shape != (self.count, self.height, self.width):
                raise InvariantError(
                    f"pixels shape {px.shape} does not match (count, height, width)="
                    f"{(self.count, self.height, self.width)}"
                )
            if self.height < 1 or self.width < 1:
                raise InvariantError("height and width must be >= 1 when pixels are present")
            object.__setattr__(self, "pixels", px)
        if self.diff_series is not None:
            diffs = np.ascontiguousarray(np.asarray(self.diff_series, dtype=np.float64))
            if diffs.shape != (self.count - 1,):
                raise InvariantError(
                    f"diff_series length {diffs.shape[0] if diffs.ndim == 1 else diffs.shape}"
                    f" must equal count-1 = {self.count - 1}"
                )
            if diffs.size and (not np.all(np.isfinite(diffs)) or np.any(diffs < 0)):
                raise InvariantError("diff_series values must be finite and nonnegative")
            object.__setattr__(self, "diff_series", diffs)

    @property
    def fps(self) -> float:
        return self.fps_num / self.fps_den

    @property
    def duration_s(self) -> float:
        return self.count / self.fps

    @staticmethod
    def fps_to_rational(fps: float) -> tuple[int, int]:
        frac = Fraction(fps).limit_denominator(1_000_000)
        return frac.numerator, frac.denominator


def save_frame_store(store: FrameStore, path: str | Path) -> None:
    flags = (1 if store.pixels is not None else 0) | (2 if store.diff_series is not None else 0)
    header = _PSFR_HEADER.pack(
        FRAMESTORE_MAGIC, FORMAT_VERSION, store.count, store.height, store.width,
        flags, store.fps_num, store.fps_den,
    )
    parts = [header]
    if store.pixels is not None:
        parts.append(store.pixels.tobytes())
    if store.diff_series is not None:
        parts.append(store.diff_series.astype("<f8").tobytes())
    write_atomic(path, b"".join(parts))


def load_frame_store(path: str | Path) -> FrameStore:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _PSFR_HEADER.size:
        raise TruncatedError(f"{path}: file shorter than the frame-store header")
    magic, version, count, height, width, flags, fps_num, fps_den = _PSFR_HEADER.unpack_from(raw)
    if magic != FRAMESTORE_MAGIC:
        raise MagicError(f"{path}: bad magic {magic!r}, expected {FRAMESTORE_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported frame-store version {version}")
    if flags & ~0x3:
        raise SchemaError(f"{path}: unknown flag bits set: {flags:#x}")
    offset = _PSFR_HEADER.size
    pixels = None
    diffs = None
    if flags & 1:
        n = count * height * width
        if len(raw) < offset + n:
            raise TruncatedError(f"{path}: pixel payload truncated ({len(raw) - offset} of {n} bytes)")
        pixels = np.frombuffer(raw, dtype=np.uint8, count=n, offset=offset).reshape(count, height, width)
        offset += n
    if flags & 2:
        n = (count - 1) * 8
        if len(raw) < offset + n:
            raise TruncatedError(f"{path}: diff payload truncated ({len(raw) - offset} of {n} bytes)")
        diffs = np.frombuffer(raw, dtype="<f8", count=count - 1, offset=offset).astype(np.float64)
        offset += n
    if len(raw) != offset:
        raise SchemaError(f"{path}: {len(raw) - offset} trailing bytes after declared payload")
    try:
        return FrameStore(
            fps_num=fps_num, fps_den=fps_den, count=count, height=height, width=width,
            pixels=pixels.copy() if pixels is not None else None, diff_series=diffs,
        )
    except InvariantError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Per-frame visual embedding vectors (count x dim float32)."""

    rows: np.ndarray
    encoder_tag: str = ""

    def __post_init__(self):
        rows = np.ascontiguousarray(np.asarray(self.rows, dtype=np.float32))
        if rows.ndim != 2:
            raise InvariantError(f"embedding rows must be 2-D, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise InvariantError("embedding rows contain NaN or Inf entries")
        object.__setattr__(self, "rows", rows)

    @property
    def count(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


def save_embeddings(emb: EmbeddingMatrix, path: str | Path) -> None:
    header = _PSEM_HEADER.pack(EMBEDDING_MAGIC, FORMAT_VERSION, emb.count, emb.dim)
    tag = emb.encoder_tag.encode("utf-8")
    if len(tag) > 0xFFFF:
        raise InvariantError("encoder_tag longer than 65535 bytes")
    payload = emb.rows.astype("<f4").tobytes()
    write_atomic(path, header + payload + struct.pack("<H", len(tag)) + tag)


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _PSEM_HEADER.size:
        raise TruncatedError(f"{path}: file shorter than the embedding header")
    magic, version, count, dim = _PSEM_HEADER.unpack_from(raw)
    if magic != EMBEDDING_MAGIC:
        raise MagicError(f"{path}: bad magic {magic!r}, expected {EMBEDDING_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported embedding version {version}")
    offset = _PSEM_HEADER.size
    n = count * dim * 4
    if len(raw) < offset + n:
        raise TruncatedError(f"{path}: row payload truncated ({len(raw) - offset} of {n} bytes)")
    rows = np.frombuffer(raw, dtype="<f4", count=count * dim, offset=offset).reshape(count, dim)
    offset += n
    tag = ""
    if len(raw) > offset:
        if len(raw) < offset + 2:
            raise TruncatedError(f"{path}: encoder-tag block truncated")
        (tag_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        if len(raw) < offset + tag_len:
            raise TruncatedError(f"{path}: encoder-tag bytes truncated")
        tag = raw[offset:offset + tag_len].decode("utf-8")
        offset += tag_len
        if len(raw) != offset:
            raise SchemaError(f"{path}: {len(raw) - offset} trailing bytes after encoder tag")
    try:
        return EmbeddingMatrix(rows=rows.copy(), encoder_tag=tag)
    except InvariantError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class SceneSet:
    """Ordered [start, end) intervals that partition the frame axis exactly."""

    boundaries: tuple[tuple[int, int], ...]

    def __post_init__(self):
        bounds = tuple((int(s), int(e)) for s, e in self.boundaries)
        if not bounds:
            raise InvariantError("a scene set must contain at least one scene")
        if bounds[0][0] != 0:
            raise InvariantError(f"first scene must start at frame 0, got {bounds[0][0]}")
        for i, (s, e) in enumerate(bounds):
            if e <= s:
                raise InvariantError(f"scene {i} is empty or reversed: [{s}, {e})")
            if i and s != bounds[i - 1][1]:
                raise InvariantError(
                    f"scene {i} starts at {s} but scene {i - 1} ends at {bounds[i - 1][1]}"
                )
        object.__setattr__(self, "boundaries", bounds)

    @property
    def n_frames(self) -> int:
        return self.boundaries[-1][1]

    def __len__(self) -> int:
        return len(self.boundaries)

    def lengths(self) -> list[int]:
        return [e - s for s, e in self.boundaries]


def save_scene_set(scenes: SceneSet, path: str | Path, video_id: str = "",
                   tau_star: float | None = None) -> None:
    obj = {
        "version": FORMAT_VERSION,
        "video_id": video_id,
        "boundaries": [[s, e] for s, e in scenes.boundaries],
    }
    if tau_star is not None:
        obj["tau_star"] = tau_star
    save_json(path, obj)


def load_scene_set(path: str | Path) -> SceneSet:
    obj = load_json(path)
    _require_version(obj, path)
    bounds = obj.get("boundaries")
    if not isinstance(bounds, list):
        raise SchemaError(f"{path}: field 'boundaries' must be a list")
    try:
        return SceneSet(tuple((int(s), int(e)) for s, e in bounds))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: field 'boundaries' malformed: {exc}") from exc
    except InvariantError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class ScoreTrack:
    """Per-scene or per-frame importance values at one pipeline stage."""

    stage: str
    values: np.ndarray

    def __post_init__(self):
        if self.stage not in SCORE_STAGES:
            raise InvariantError(f"unknown score stage {self.stage!r}, expected one of {SCORE_STAGES}")
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if vals.ndim != 1 or vals.size == 0:
            raise InvariantError("score values must be a non-empty 1-D vector")
        if not np.all(np.isfinite(vals)):
            raise InvariantError("score values must be finite")
        if self.stage == "scene_raw":
            if not np.all(vals == np.round(vals)):
                raise InvariantError("scene_raw scores must be integers")
            if np.any(vals < 1) or np.any(vals > 100):
                raise InvariantError("scene_raw scores must lie in [1, 100]")
        else:
            eps = 1e-9
            if np.any(vals < -eps) or np.any(vals > 1 + eps):
                raise InvariantError(f"{self.stage} scores must lie in [0, 1]")
        object.__setattr__(self, "values", vals)


def save_score_track(track: ScoreTrack, path: str | Path, video_id: str = "") -> None:
    save_json(path, {
        "version": FORMAT_VERSION,
        "video_id": video_id,
        "stage": track.stage,
        "values": [float(v) for v in track.values],
    })


def load_score_track(path: str | Path) -> ScoreTrack:
    obj = load_json(path)
    _require_version(obj, path)
    stage = obj.get("stage")
    values = obj.get("values")
    if not isinstance(values, list):
        raise SchemaError(f"{path}: field 'values' must be a list")
    try:
        return ScoreTrack(stage=stage, values=np.asarray(values, dtype=np.float64))
    except InvariantError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


@dataclass(frozen=True, eq=False)
class UserAnnotation:
    """One user's reference: either keyshot intervals or a per-frame score vector."""

    keyshots: tuple[tuple[int, int], ...] | None = None
    frame_scores: np.ndarray | None = None
    scale: tuple[float, float] = (1.0, 5.0)

    def __eq__(self, other):
        if not isinstance(other, UserAnnotation):
            return NotImplemented
        if self.keyshots is not None or other.keyshots is not None:
            return self.keyshots == other.keyshots
        return (tuple(self.scale) == tuple(other.scale)
                and np.array_equal(self.frame_scores, other.frame_scores))

    def __post_init__(self):
        if (self.keyshots is None) == (self.frame_scores is None):
            raise InvariantError("a user annotation needs exactly one of keyshots/frame_scores")
        if self.keyshots is not None:
            shots = tuple((int(s), int(e)) for s, e in self.keyshots)
            prev_end = -1
            for i, (s, e) in enumerate(shots):
                if e <= s or s < 0:
                    raise InvariantError(f"keyshot {i} is empty or negative: [{s}, {e})")
                if s < prev_end:
                    raise InvariantError(f"keyshot {i} overlaps or disorders the previous one")
                prev_end = e
            object.__setattr__(self, "keyshots", shots)
        if self.frame_scores is not None:
            scores = np.ascontiguousarray(np.asarray(self.frame_scores, dtype=np.float64))
            lo, hi = self.scale
            if scores.ndim != 1:
                raise InvariantError("frame_scores must be a 1-D vector")
            if scores.size and (np.any(scores < lo) or np.any(scores > hi)):
                raise InvariantError(f"frame_scores outside declared range [{lo}, {hi}]")
            object.__setattr__(self, "frame_scores", scores)

    def mask(self, n_frames: int) -> np.ndarray:
        """Binary per-frame selection for keyshot-style annotations."""
        if self.keyshots is None:
            raise InvariantError("mask() requires a keyshot-style annotation")
        out = np.zeros(n_frames, dtype=bool)
        for s, e in self.keyshots:
            out[s:e] = True
        return out


@dataclass(frozen=True)
class Query:
    text: str
    query_class: str = ""


@dataclass(frozen=True)
class DatasetAnnotations:
    """Reference annotations for one video, plus optional evaluation structure."""

    video_id: str
    fps: float
    n_frames: int
    users: tuple[UserAnnotation, ...]
    segments: tuple[tuple[int, int], ...] | None = None
    oracle_budget_frames: int | None = None
    queries: tuple[Query, ...] = ()

    def __post_init__(self):
        if self.fps <= 0:
            raise InvariantError(f"fps must be positive, got {self.fps}")
        if self.n_frames < 1:
            raise InvariantError(f"n_frames must be >= 1, got {self.n_frames}")
        if not self.users:
            raise InvariantError("annotations must include at least one user")
        for i, user in enumerate(self.users):
            if user.frame_scores is not None and user.frame_scores.shape[0] != self.n_frames:
                raise InvariantError(
                    f"user {i}: frame_scores length {user.frame_scores.shape[0]}"
                    f" does not cover n_frames={self.n_frames}"
                )
            if user.keyshots is not None and user.keyshots and user.keyshots[-1][1] > self.n_frames:
                raise InvariantError(
                    f"user {i}: keyshot end {user.keyshots[-1][1]} exceeds n_frames={self.n_frames}"
                )
        if self.segments is not None:
            try:
                SceneSet(self.segments)
            except InvariantError as exc:
                raise InvariantError(f"segments: {exc}") from exc
            if self.segments[-1][1] != self.n_frames:
                raise InvariantError(
                    f"segments end at {self.segments[-1][1]} but n_frames={self.n_frames}"
                )
            object.__setattr__(self, "segments", tuple((int(s), int(e)) for s, e in self.segments))
        if self.oracle_budget_frames is not None and not 0 < self.oracle_budget_frames <= self.n_frames:
            raise InvariantError(
                f"oracle_budget_frames {self.oracle_budget_frames} outside (0, {self.n_frames}]"
            )


def save_annotations(ann: DatasetAnnotations, path: str | Path) -> None:
    users = []
    for user in ann.users:
        if user.keyshots is not None:
            users.append({"keyshots": [[s, e] for s, e in user.keyshots]})
        else:
            users.append({
                "frame_scores": [float(v) for v in user.frame_scores],
                "scale": [float(user.scale[0]), float(user.scale[1])],
            })
    obj = {
        "version": FORMAT_VERSION,
        "video_id": ann.video_id,
        "fps": float(ann.fps),
        "n_frames": int(ann.n_frames),
        "users": users,
    }
    if ann.segments is not None:
        obj["segments"] = [[s, e] for s, e in ann.segments]
    if ann.oracle_budget_frames is not None:
        obj["oracle_budget_frames"] = int(ann.oracle_budget_frames)
    if ann.queries:
        obj["queries"] = [{"text": q.text, "class": q.query_class} for q in ann.queries]
    save_json(path, obj, compact=True)


def load_annotations(path: str | Path) -> DatasetAnnotations:
    obj = load_json(path)
    _require_version(obj, path)
    for name, kind in (("video_id", str), ("n_frames", int), ("users", list)):
        if not isinstance(obj.get(name), kind):
            raise SchemaError(f"{path}: field '{name}' missing or not a {kind.__name__}")
    fps = obj.get("fps")
    if not isinstance(fps, (int, float)) or not math.isfinite(fps):
        raise SchemaError(f"{path}: field 'fps' missing or not a finite number")
    n_frames = obj["n_frames"]
    users = []
    for i, raw in enumerate(obj["users"]):
        if not isinstance(raw, dict):
            raise SchemaError(f"{path}: users[{i}] must be an object")
        try:
            if "keyshots" in raw:
                users.append(UserAnnotation(keyshots=tuple(tuple(p) for p in raw["keyshots"])))
            elif "frame_scores" in raw:
                scale = tuple(raw.get("scale", (1.0, 5.0)))
                scores = np.asarray(raw["frame_scores"], dtype=np.float64)
                if scores.shape != (n_frames,):
                    raise SchemaError(
                        f"{path}: users[{i}].frame_scores has length {scores.shape[0] if scores.ndim == 1 else '?'}"
                        f", expected n_frames={n_frames}"
                    )
                users.append(UserAnnotation(frame_scores=scores, scale=scale))
            else:
                raise SchemaError(f"{path}: users[{i}] needs 'keyshots' or 'frame_scores'")
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: users[{i}] malformed: {exc}") from exc
        except InvariantError as exc:
            raise SchemaError(f"{path}: users[{i}]: {exc}") from exc
    segments = None
    if "segments" in obj:
        try:
            segments = tuple(tuple(p) for p in obj["segments"])
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: field 'segments' malformed: {exc}") from exc
    queries = tuple(
        Query(text=q.get("text", ""), query_class=q.get("class", ""))
        for q in obj.get("queries", ())
    )
    try:
        return DatasetAnnotations(
            video_id=obj["video_id"], fps=float(fps), n_frames=n_frames,
            users=tuple(users), segments=segments,
            oracle_budget_frames=obj.get("oracle_budget_frames"), queries=queries,
        )
    except InvariantError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def load_dataset(directory: str | Path) -> dict[str, DatasetAnnotations]:
    """Load every *.json annotation file in a directory, keyed by video_id."""
    directory = Path(directory)
    out: dict[str, DatasetAnnotations] = {}
    for path in sorted(directory.glob("*.json")):
        if path.name == "splits.json":
            continue
        ann = load_annotations(path)
        if ann.video_id in out:
            raise SchemaError(f"{path}: duplicate video_id {ann.video_id!r} in dataset")
        out[ann.video_id] = ann
    if not out:
        raise SchemaError(f"{directory}: no annotation files found")
    return out
