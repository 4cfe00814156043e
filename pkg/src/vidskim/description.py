"""Frame sampling, batching, and caption stitching into scene and video texts."""

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .backends import CachedBackend, caption
from .data_io import FORMAT_VERSION, load_json, save_json
from .errors import InvariantError, SchemaError, StageError, VidskimError

CAPTION_PROMPT = "Describe this video in detail"
CONTINUATION_MARKER = "The video continues: "
DEFAULT_BATCH_SIZE = 80
SAMPLING_POLICY = {"rate_fps": 1, "policy": "middle-of-second"}

# Opening phrase a caption model tends to emit for the first moments it sees;
# only the phrase itself is dropped so the rest of the sentence survives.
_LEADING_OPENER = re.compile(
    r"^The\s+(?:video|scene)\s+(?:begins|starts|opens)\b[\s,:]*", re.IGNORECASE
)
_SENTENCE_END = re.compile(r"[.!?]")
_CLOSER_WORDS = re.compile(r"\b(?:ends|concludes)\b", re.IGNORECASE)


def sample_frames(start: int, end: int, fps: float) -> list[int]:
    """Pick the middle frame of each whole second inside [start, end).

    A range shorter than one second yields its single middle frame.
    """
    start = int(start)
    end = int(end)
    if end <= start:
        raise InvariantError(f"frame range [{start}, {end}) is empty")
    if fps <= 0:
        raise InvariantError(f"fps must be positive, got {fps}")
    half = int(math.floor(fps / 2.0))
    out = []
    second = 0
    # one index per whole second; the epsilon absorbs float noise in fps*k
    while (second + 1) * fps <= (end - start) + 1e-9:
        second_start = start + int(math.floor(second * fps))
        out.append(min(second_start + half, end - 1))
        second += 1
    if not out:
        out.append((start + end) // 2)
    return out


def make_batches(indices, batch_size: int = DEFAULT_BATCH_SIZE) -> list[list[int]]:
    """Split indices into consecutive chunks; the last chunk may be short."""
    if batch_size < 1:
        raise InvariantError(f"batch size must be >= 1, got {batch_size}")
    seq = [int(i) for i in indices]
    return [seq[i:i + batch_size] for i in range(0, len(seq), batch_size)]


def _strip_leading_opener(text: str) -> str:
    return _LEADING_OPENER.sub("", text, count=1).lstrip()


def _strip_trailing_closer(text: str) -> str:
    """Drop a final sentence that wraps up the clip, keeping at least one sentence."""
    stripped = text.rstrip()
    ends = [m.end() for m in _SENTENCE_END.finditer(stripped)]
    if ends and ends[-1] >= len(stripped):
        last_start = ends[-2] if len(ends) >= 2 else 0
    elif ends:
        last_start = ends[-1]
    else:
        last_start = 0
    if last_start > 0 and _CLOSER_WORDS.search(stripped[last_start:]):
        return stripped[:last_start].rstrip()
    return stripped


def describe_range(batches, frames, backend, role: str = "scene",
                   prompt: str = CAPTION_PROMPT,
                   temperature: float | None = None) -> str:
    """Caption each batch and stitch the texts into one continuous description.

    Batches after the first are rewritten to begin with the continuation
    marker; batches before the last lose a trailing wrap-up sentence.
    """
    batches = list(batches)
    if not batches:
        raise InvariantError("describe_range requires at least one batch")
    last = len(batches) - 1
    parts = []
    for bi, batch in enumerate(batches):
        try:
            text = caption(batch, frames, prompt, backend, temperature)
        except VidskimError as exc:
            raise StageError(f"{role} batch {bi}: {exc}") from exc
        text = text.strip()
        if not text:
            raise StageError(f"{role} batch {bi}: backend returned an empty caption")
        if bi > 0:
            text = CONTINUATION_MARKER + _strip_leading_opener(text)
        if bi < last:
            text = _strip_trailing_closer(text)
        parts.append(text)
    return " ".join(parts)


@dataclass(frozen=True)
class DescriptionSet:
    """One stitched text per scene plus a single full-video text."""

    scene_texts: tuple[str, ...]
    video_text: str
    batch_size: int = DEFAULT_BATCH_SIZE
    sampling: dict = field(default_factory=lambda: dict(SAMPLING_POLICY))

    def __post_init__(self):
        object.__setattr__(self, "scene_texts", tuple(str(t) for t in self.scene_texts))
        if not self.scene_texts:
            raise InvariantError("a description set needs at least one scene text")
        for i, text in enumerate(self.scene_texts):
            if not text.strip():
                raise InvariantError(f"scene {i} has an empty description")
        if not str(self.video_text).strip():
            raise InvariantError("video description is empty")
        if self.batch_size < 1:
            raise InvariantError(f"batch size must be >= 1, got {self.batch_size}")


def describe_all(scenes, frames, backend, cache=None,
                 batch_size: int = DEFAULT_BATCH_SIZE,
                 prompt: str = CAPTION_PROMPT,
                 temperature: float | None = None) -> DescriptionSet:
    """Describe every scene and the whole video through one backend.

    When a cache is given all caption calls are routed through it, so a warm
    rerun touches the backend zero times.
    """
    if cache is not None:
        backend = CachedBackend(backend, cache)
    fps = frames.fps
    scene_texts = []
    for si, (start, end) in enumerate(scenes.boundaries):
        batches = make_batches(sample_frames(start, end, fps), batch_size)
        try:
            scene_texts.append(describe_range(
                batches, frames, backend, role="scene",
                prompt=prompt, temperature=temperature))
        except StageError as exc:
            raise StageError(f"scene {si}: {exc}") from exc
    video_batches = make_batches(sample_frames(0, frames.count, fps), batch_size)
    video_text = describe_range(video_batches, frames, backend, role="video",
                                prompt=prompt, temperature=temperature)
    return DescriptionSet(scene_texts=tuple(scene_texts), video_text=video_text,
                          batch_size=batch_size)


def save_description_set(path: str | Path, descs: DescriptionSet) -> None:
    save_json(path, {
        "version": FORMAT_VERSION,
        "video_text": descs.video_text,
        "scene_texts": list(descs.scene_texts),
        "sampling": descs.sampling,
        "batch_size": descs.batch_size,
    })


def load_description_set(path: str | Path) -> DescriptionSet:
    obj = load_json(path)
    version = obj.get("version")
    if version != FORMAT_VERSION:
        raise SchemaError(f"{path}: unsupported version {version!r}")
    for key in ("video_text", "scene_texts", "batch_size"):
        if key not in obj:
            raise SchemaError(f"{path}: missing field '{key}'")
    if not isinstance(obj["scene_texts"], list):
        raise SchemaError(f"{path}: field 'scene_texts' must be a list")
    try:
        return DescriptionSet(
            scene_texts=tuple(obj["scene_texts"]),
            video_text=obj["video_text"],
            batch_size=int(obj["batch_size"]),
            sampling=obj.get("sampling", dict(SAMPLING_POLICY)),
        )
    except InvariantError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
