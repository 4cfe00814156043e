"""Run configuration: one JSON file carrying every pipeline constant."""

from dataclasses import dataclass, field, fields
from pathlib import Path

from .backends import BackendConfig
from .data_io import load_json, save_json
from .description import CAPTION_PROMPT, CONTINUATION_MARKER
from .errors import InvariantError, SchemaError
from .scoring import ClusterSpec, NormSpec
from .summarization import PROTOCOLS

EVAL_PROTOCOLS = ("summe", "tvsum", "vidsum_reason", "qfvs")


@dataclass
class PipelinePaths:
    """Workspace locations; relative entries resolve against the config file."""

    frames: str | None = None
    embeddings: str | None = None
    annotations: str | None = None
    work: str = "work"
    cache: str | None = None
    fixtures: str | None = None
    splits: str | None = None

    def resolved(self, base: Path) -> "PipelinePaths":
        def fix(value):
            if value is None:
                return None
            p = Path(value)
            return str(p if p.is_absolute() else base / p)

        return PipelinePaths(**{f.name: fix(getattr(self, f.name))
                                for f in fields(PipelinePaths)})


def _default_backend() -> BackendConfig:
    return BackendConfig(kind="fixture")


@dataclass
class PipelineConfig:
    """Every knob of the pipeline, JSON-serializable with full defaults."""

    paths: PipelinePaths = field(default_factory=PipelinePaths)
    caption_backend: BackendConfig = field(default_factory=_default_backend)
    judge_backend: BackendConfig = field(default_factory=_default_backend)
    norm: NormSpec = field(default_factory=NormSpec)
    cluster: ClusterSpec = field(default_factory=ClusterSpec)

    # segmentation
    min_scene_len_s: float = 2.0
    refine_min_frames: int = 150
    threshold_min: float = 5.0
    threshold_max: float = 95.0
    threshold_delta: float = 2.0

    # description
    sample_rate_fps: int = 1
    batch_size: int = 80
    caption_prompt: str = CAPTION_PROMPT
    continuation_marker: str = CONTINUATION_MARKER

    # judging
    judge_temperature: float = 0.5
    queries: tuple = ()
    query_index: int = 0

    # scoring
    sigma: float | None = None
    w_seconds: float | None = None
    short_video_s: float = 108.0

    # summarization + evaluation
    summary_protocol: str = "keyshot15"
    eval_protocol: str = "tvsum"
    budget_fraction: float = 0.15
    fragment_fraction: float = 0.03
    fragment_budget: float = 0.36
    shot_seconds: float = 5.0

    seed: int = 0
    strict_fixtures: bool = True
    record: bool = False

    def __post_init__(self):
        object.__setattr__(self, "queries", tuple(str(q) for q in self.queries))
        if self.summary_protocol not in PROTOCOLS:
            raise InvariantError(
                f"unknown summary protocol {self.summary_protocol!r}; "
                f"choose one of {PROTOCOLS}")
        if self.eval_protocol not in EVAL_PROTOCOLS:
            raise InvariantError(
                f"unknown eval protocol {self.eval_protocol!r}; "
                f"choose one of {EVAL_PROTOCOLS}")
        if self.batch_size < 1:
            raise InvariantError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.judge_temperature <= 1.0:
            raise InvariantError(
                f"judge_temperature {self.judge_temperature} outside [0, 1]")
        if self.sigma is not None and not 0.0 <= self.sigma <= 1.0:
            raise InvariantError(f"sigma {self.sigma} outside [0, 1]")
        if self.w_seconds is not None and self.w_seconds <= 0:
            raise InvariantError(f"w_seconds must be positive, got {self.w_seconds}")
        if self.query_index < 0:
            raise InvariantError(f"query_index must be >= 0, got {self.query_index}")


_NESTED = {
    "paths": PipelinePaths,
    "caption_backend": BackendConfig,
    "judge_backend": BackendConfig,
    "norm": NormSpec,
    "cluster": ClusterSpec,
}


def _build(cls, obj, where):
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object, got {type(obj).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise SchemaError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**obj)
    except InvariantError as exc:
        raise SchemaError(f"{where}: {exc}") from exc


def config_from_dict(obj: dict, where: str = "config") -> PipelineConfig:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object, got {type(obj).__name__}")
    known = {f.name for f in fields(PipelineConfig)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise SchemaError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for key, value in obj.items():
        if key in _NESTED:
            kwargs[key] = _build(_NESTED[key], value, f"{where}.{key}")
        else:
            kwargs[key] = value
    try:
        return PipelineConfig(**kwargs)
    except InvariantError as exc:
        raise SchemaError(f"{where}: {exc}") from exc


def config_to_dict(cfg: PipelineConfig) -> dict:
    out = {}
    for f in fields(PipelineConfig):
        value = getattr(cfg, f.name)
        if f.name in _NESTED:
            out[f.name] = {g.name: getattr(value, g.name)
                           for g in fields(_NESTED[f.name])}
        elif isinstance(value, tuple):
            out[f.name] = list(value)
        else:
            out[f.name] = value
    return out


def load_config(path: str | Path) -> PipelineConfig:
    """Read a config file and resolve its relative paths against its location."""
    path = Path(path)
    cfg = config_from_dict(load_json(path), where=str(path))
    cfg.paths = cfg.paths.resolved(path.parent)
    return cfg


def save_config(cfg: PipelineConfig, path: str | Path) -> None:
    save_json(path, config_to_dict(cfg))
