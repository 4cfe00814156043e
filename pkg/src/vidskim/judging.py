"""Scene-importance prompting, reply parsing, and score-matrix assembly."""

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backends import CachedBackend
from .data_io import FORMAT_VERSION, load_json, save_json
from .errors import (BackendError, InvariantError, SchemaError,
                     ScoreParseError, StageError)

JUDGE_TEMPERATURE = 0.5

_OPENING = (
    "You are tasked with evaluating the importance of a specific scene within "
    "a larger video, considering its role in the overall narrative and message "
    "of the video. I've provided two descriptions below: one for the entire "
    "video and one for the specific scene (part) within that video. Your goal "
    "is to assess how critical this particular segment is to the understanding "
    "or development of the video's main themes, messages, or emotional impact."
)

_QUERY_PREAMBLE = (
    "The user has provided the following content preference to guide the "
    "summarization:"
)

_QUERY_GUIDANCE = (
    "When assigning a score, consider how well the scene aligns with this "
    "preference. Scenes that closely match or contradict the user's intent "
    "should be scored accordingly, reflecting their relevance or irrelevance "
    "to the desired summary focus. If the scene is not clearly related to "
    "this preference, assign a score based on the default scale and criteria "
    "below."
)

_SCALE = (
    "Assign an importance score on a scale of 1 to 100, based on how crucial "
    "it is to the overall video. The scale is defined as follows: * 1-20: "
    "Minimally important (contributes very little to the overall theme or "
    "message) * 21-40: Somewhat important (offers limited context or details "
    "that support the main theme) * 41-60: Moderately important (provides "
    "useful context or details that support the main theme) * 61-80: Quite "
    "important (adds significant context or detail that enhances "
    "understanding of the main theme) * 81-100: Highly important (crucial to "
    "understanding or conveying the main message of the video)"
)

_CRITERIA = (
    "When evaluating, focus on the core narrative or emotional impact of the "
    "video. Only assign high scores (80+) to the segments that directly drive "
    "the main theme or message forward. Be critical and biased towards giving "
    "low scores to segments that do not add significant value to the overall "
    "narrative or theme. The distribution of high scores should be low and "
    "reserved for only the most crucial moments in the video. The video "
    "should be summarized briefly, so please evaluate whether the scene is "
    "critical to include in the summary of the video, based on its "
    "contribution to the core message. Prioritize scenes that are essential "
    "for a concise summary and omit secondary or supporting moments unless "
    "they provide meaningful context."
)

_SINGLE_FORMAT = (
    "Answer with the single line 'SCORE: <integer 1-100>' and nothing else."
)

_SCORE_MARKER = re.compile(r"SCORE\s*:\s*(-?\d+)", re.IGNORECASE)
_STANDALONE_INT = re.compile(r"(?<![\w.\-])(\d{1,3})(?!\w)(?!\.\d)")
_QUERY_LINE = re.compile(r"^\s*Q?(\d+)\s*:\s*(-?\d+)\s*$",
                         re.IGNORECASE | re.MULTILINE)


@dataclass(frozen=True)
class JudgeRequest:
    """Everything one importance-scoring call needs."""

    video_text: str
    scene_text: str
    queries: tuple[str, ...] = ()
    temperature: float = JUDGE_TEMPERATURE

    def __post_init__(self):
        object.__setattr__(self, "queries", tuple(str(q) for q in self.queries))
        if not str(self.video_text).strip():
            raise InvariantError("video description is empty")
        if not str(self.scene_text).strip():
            raise InvariantError("scene description is empty")
        for i, q in enumerate(self.queries):
            if not q.strip():
                raise InvariantError(f"query {i} is empty")
        if not 0.0 <= self.temperature <= 1.0:
            raise InvariantError(f"temperature {self.temperature} outside [0, 1]")


def _multi_format(n_queries: int) -> str:
    return (f"Answer with exactly {n_queries} lines, one per user query in "
            "order, each of the form 'Qk: <integer 1-100>' where k is the "
            "query number, and nothing else.")


def build_prompt(req: JudgeRequest) -> str:
    """Assemble the full judging prompt for one scene."""
    parts = [_OPENING]
    if len(req.queries) == 1:
        parts.append(f"{_QUERY_PREAMBLE}\n\nUser Query: {req.queries[0]} "
                     f"{_QUERY_GUIDANCE} {_SCALE}")
    elif req.queries:
        lines = "\n".join(f"User Query {k}: {q}"
                          for k, q in enumerate(req.queries, 1))
        parts.append(f"{_QUERY_PREAMBLE}\n\n{lines}\n\n{_QUERY_GUIDANCE} {_SCALE}")
    else:
        parts.append(_SCALE)
    parts.append(_CRITERIA)
    parts.append(f"Video Description: {req.video_text}\n"
                 f"Scene Description: {req.scene_text}")
    if len(req.queries) > 1:
        parts.append(_multi_format(len(req.queries)))
    else:
        parts.append(_SINGLE_FORMAT)
    return "\n\n".join(parts)


def parse_score(reply: str) -> int:
    """Extract one integer score from a reply.

    The last 'SCORE:' marker wins; a marker value outside 1..100 is an error,
    never silently fixed. Without a marker the last standalone integer in
    range is accepted.
    """
    markers = _SCORE_MARKER.findall(reply)
    if markers:
        value = int(markers[-1])
        if not 1 <= value <= 100:
            raise ScoreParseError(f"marker score {value} outside 1..100",
                                  reply=reply)
        return value
    in_range = [int(m) for m in _STANDALONE_INT.findall(reply)
                if 1 <= int(m) <= 100]
    if in_range:
        return in_range[-1]
    raise ScoreParseError("no parsable score in reply", reply=reply)


def parse_multi_scores(reply: str, n_queries: int) -> list[int]:
    """Extract one score per query from numbered 'Qk: <integer>' lines.

    The leading Q is optional; a repeated query number keeps its last value.
    """
    if n_queries < 1:
        raise InvariantError(f"need at least one query, got {n_queries}")
    found = {}
    for match in _QUERY_LINE.finditer(reply):
        k = int(match.group(1))
        if not 1 <= k <= n_queries:
            continue
        value = int(match.group(2))
        if not 1 <= value <= 100:
            raise ScoreParseError(f"query {k} score {value} outside 1..100",
                                  reply=reply)
        found[k] = value
    missing = [k for k in range(1, n_queries + 1) if k not in found]
    if missing:
        raise ScoreParseError(f"reply missing scores for queries {missing}",
                              reply=reply, missing=missing)
    return [found[k] for k in range(1, n_queries + 1)]


@dataclass(frozen=True, eq=False)
class SceneScores:
    """Integer importance matrix, one row per scene, one column per query."""

    matrix: np.ndarray
    queries: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "queries", tuple(str(q) for q in self.queries))
        matrix = np.asarray(self.matrix)
        if matrix.ndim != 2:
            raise InvariantError(f"score matrix must be 2-D, got {matrix.ndim}-D")
        if matrix.shape[0] < 1:
            raise InvariantError("score matrix needs at least one scene row")
        expected = max(1, len(self.queries))
        if matrix.shape[1] != expected:
            raise InvariantError(
                f"score matrix has {matrix.shape[1]} columns, expected {expected}")
        if not np.issubdtype(matrix.dtype, np.integer):
            if not np.all(matrix == np.floor(matrix)):
                raise InvariantError("scores must be integers")
        matrix = matrix.astype(np.int64)
        if matrix.size and (matrix.min() < 1 or matrix.max() > 100):
            raise InvariantError("scores must lie in [1, 100]")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def n_scenes(self) -> int:
        return self.matrix.shape[0]

    def column(self, j: int = 0) -> np.ndarray:
        return self.matrix[:, j]

    def __eq__(self, other):
        if not isinstance(other, SceneScores):
            return NotImplemented
        return (self.queries == other.queries
                and np.array_equal(self.matrix, other.matrix))


def _chat(backend, prompt: str, temperature: float) -> str:
    return backend.chat([{"role": "user", "content": prompt}], temperature)


def score_scenes(descs, query: str | None, backend, cache=None,
                 temperature: float = JUDGE_TEMPERATURE) -> SceneScores:
    """Score every scene against the video, optionally steered by one query."""
    if cache is not None:
        backend = CachedBackend(backend, cache)
    queries = () if query is None or not str(query).strip() else (str(query),)
    scores = []
    for si, scene_text in enumerate(descs.scene_texts):
        req = JudgeRequest(video_text=descs.video_text, scene_text=scene_text,
                           queries=queries, temperature=temperature)
        prompt = build_prompt(req)
        try:
            scores.append(parse_score(_chat(backend, prompt, temperature)))
        except ScoreParseError as exc:
            raise ScoreParseError(f"scene {si}: {exc}", reply=exc.reply,
                                  missing=exc.missing) from exc
        except BackendError as exc:
            raise StageError(f"scene {si}: {exc}") from exc
    matrix = np.asarray(scores, dtype=np.int64)[:, None]
    return SceneScores(matrix=matrix, queries=queries)


def score_scenes_multi_query(descs, queries, backend, cache=None,
                             temperature: float = JUDGE_TEMPERATURE) -> SceneScores:
    """Score every scene against all queries with one backend call per scene."""
    queries = tuple(str(q) for q in queries)
    if not queries:
        raise InvariantError("multi-query scoring needs at least one query")
    if cache is not None:
        backend = CachedBackend(backend, cache)
    rows = []
    for si, scene_text in enumerate(descs.scene_texts):
        req = JudgeRequest(video_text=descs.video_text, scene_text=scene_text,
                           queries=queries, temperature=temperature)
        prompt = build_prompt(req)
        try:
            reply = _chat(backend, prompt, temperature)
            if len(queries) == 1:
                rows.append([parse_score(reply)])
            else:
                rows.append(parse_multi_scores(reply, len(queries)))
        except ScoreParseError as exc:
            raise ScoreParseError(f"scene {si}: {exc}", reply=exc.reply,
                                  missing=exc.missing) from exc
        except BackendError as exc:
            raise StageError(f"scene {si}: {exc}") from exc
    return SceneScores(matrix=np.asarray(rows, dtype=np.int64), queries=queries)


def save_scene_scores(path: str | Path, scores: SceneScores) -> None:
    save_json(path, {
        "version": FORMAT_VERSION,
        "queries": list(scores.queries),
        "matrix": scores.matrix.tolist(),
    })


def load_scene_scores(path: str | Path) -> SceneScores:
    obj = load_json(path)
    version = obj.get("version")
    if version != FORMAT_VERSION:
        raise SchemaError(f"{path}: unsupported version {version!r}")
    for key in ("queries", "matrix"):
        if key not in obj:
            raise SchemaError(f"{path}: missing field '{key}'")
    if not isinstance(obj["queries"], list):
        raise SchemaError(f"{path}: field 'queries' must be a list")
    try:
        matrix = np.asarray(obj["matrix"], dtype=np.int64)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: field 'matrix' malformed: {exc}") from exc
    try:
        return SceneScores(matrix=matrix, queries=tuple(obj["queries"]))
    except InvariantError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
