"""Capture language-model traffic from pipeline runs into a replay file.

The scoring pipeline is driven strictly through its command line: each
requested stage runs as a subprocess with recording turned on, and the
pipeline appends every request digest and reply to the fixtures file.
A workspace recorded this way replays byte-for-byte with the backends
switched to fixture mode.
"""

import shutil
import subprocess
import sys

from vidprep.errors import PrepError

_PIPELINE_MODULE = "vidskim.cli"
_PIPELINE_SCRIPT = "vidskim"


def pipeline_command() -> list[str]:
    """Command prefix for the scoring pipeline, preferring the console script."""
    script = shutil.which(_PIPELINE_SCRIPT)
    if script:
        return [script]
    return [sys.executable, "-m", _PIPELINE_MODULE]


def record_stage(
    config_path, stage: str, fixtures_path=None,
    videos=(), extra_args=(), timeout_s: float = 1800.0,
) -> str:
    """Run one pipeline stage with live recording enabled.

    Args:
      config_path: pipeline config whose backends point at a live server.
      stage: pipeline subcommand to run, e.g. "describe" or "judge".
      fixtures_path: replay file to append to; None keeps the config's.
      videos: optional video ids to restrict the run to.
      extra_args: passed through to the stage verbatim.
      timeout_s: kill the subprocess after this long.

    Returns the combined output of the run.

    Raises PrepError when the pipeline exits nonzero, with its output
    attached.
    """
    cmd = pipeline_command() + [stage, "--config", str(config_path), "--record"]
    if fixtures_path is not None:
        cmd += ["--fixtures", str(fixtures_path)]
    for vid in videos:
        cmd += ["--video", vid]
    cmd += list(extra_args)
    try:
        proc = subprocess.run(
            cmd, capture_output=True, text=True, timeout=timeout_s,
        )
    except FileNotFoundError as exc:
        raise PrepError(f"scoring pipeline is not installed: {exc}") from exc
    except subprocess.TimeoutExpired as exc:
        raise PrepError(f"recording run timed out after {timeout_s}s") from exc
    output = (proc.stdout or "") + (proc.stderr or "")
    if proc.returncode != 0:
        raise PrepError(
            f"pipeline stage {stage} exited {proc.returncode}:\n{output.strip()}"
        )
    return output


def record_run(config_path, stages=("describe", "judge"), **kwargs) -> str:
    """Record several stages in order and concatenate their output."""
    chunks = [record_stage(config_path, stage, **kwargs) for stage in stages]
    return "".join(chunks)
