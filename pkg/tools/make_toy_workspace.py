"""Build the small committed demo workspace: two synthetic videos with
frames, embeddings, annotations, recorded backend replies, and a config.

Frame blocks are constant-intensity with engineered boundary gaps, so scene
detection is exact and the recorded replies stay stable across rebuilds.

Usage: python3 tools/make_toy_workspace.py [--out fixtures/toy]
"""

import argparse
import hashlib
import shutil
from pathlib import Path

import numpy as np

from vidskim.backends import BackendConfig, FixtureStore, RecordingBackend, request_digest
from vidskim.config import (PipelineConfig, PipelinePaths, load_config,
                            save_config)
from vidskim.data_io import (DatasetAnnotations, EmbeddingMatrix, FrameStore,
                             UserAnnotation, save_annotations, save_embeddings,
                             save_frame_store)
from vidskim.pipeline import discover_videos, run_video

SIZE = 8
EMB_DIM = 16

# block intensity bases; consecutive gaps of 86/90 are cuts at the selected
# threshold, gaps of 55-60 vanish there and glue blocks into longer scenes
TOY_A = {"fps": 8.0, "block_frames": 75,
         "bases": [30, 116, 56, 142, 228, 168, 82, 168]}
TOY_B = {"fps": 10.0, "block_frames": 60,
         "bases": [20, 110, 55, 145, 235, 180, 90, 180, 125, 215]}


def build_frames(spec) -> FrameStore:
    bases = spec["bases"]
    count = spec["block_frames"] * len(bases)
    pixels = np.zeros((count, SIZE, SIZE), dtype=np.uint8)
    for b, base in enumerate(bases):
        s = b * spec["block_frames"]
        pixels[s:s + spec["block_frames"]] = base
    num, den = FrameStore.fps_to_rational(spec["fps"])
    return FrameStore(fps_num=num, fps_den=den, count=count,
                      height=SIZE, width=SIZE, pixels=pixels)


def build_embeddings(video_id: str, count: int) -> EmbeddingMatrix:
    rng = np.random.default_rng([17, count])
    centers = rng.normal(size=(4, EMB_DIM))
    rows = np.empty((count, EMB_DIM), dtype=np.float64)
    for i in range(count):
        center = centers[(i // 30) % len(centers)]
        rows[i] = center + 0.05 * rng.normal(size=EMB_DIM)
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return EmbeddingMatrix(rows=rows.astype(np.float32), encoder_tag="toy-16d")


def build_annotations(video_id: str, fps: float, count: int, block_frames: int,
                      seed: int) -> DatasetAnnotations:
    rng = np.random.default_rng([seed, count])
    users = []
    for _ in range(3):
        shots = []
        cursor = 0
        picked = 0
        budget = int(0.15 * count)
        while picked < budget and cursor < count - 20:
            gap = int(rng.integers(40, 120))
            length = int(rng.integers(20, 50))
            start = min(cursor + gap, count - 10)
            end = min(start + length, count, start + budget - picked)
            if end <= start:
                break
            shots.append((start, end))
            picked += end - start
            cursor = end
        users.append(UserAnnotation(keyshots=tuple(shots)))
    segments = tuple((s, min(s + block_frames, count))
                     for s in range(0, count, block_frames))
    return DatasetAnnotations(video_id=video_id, fps=fps, n_frames=count,
                              users=tuple(users), segments=segments)


class ScriptedLive:
    """Deterministic content-addressed replies for recording."""

    def __init__(self, role: str):
        self.config = BackendConfig(kind="fixture", model=f"toy-{role}")
        self.role = role

    def digest_for(self, messages, temperature=None):
        temp = self.config.temperature if temperature is None else temperature
        return request_digest(self.config.model, temp, messages)

    def chat(self, messages, temperature=None):
        digest = self.digest_for(messages, temperature)
        token = hashlib.sha256(digest.encode()).hexdigest()
        if self.role == "caption":
            return (f"A steady shot of texture {token[:6]} holds the frame "
                    f"while pattern {token[6:10]} drifts past.")
        return f"SCORE: {1 + int(token[:2], 16) % 100}"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="fixtures/toy")
    args = parser.parse_args()
    out = Path(args.out)
    if out.exists():
        shutil.rmtree(out)
    (out / "videos").mkdir(parents=True)
    (out / "embeddings").mkdir()
    (out / "annotations").mkdir()

    specs = {"toy_a": TOY_A, "toy_b": TOY_B}
    for video_id, spec in specs.items():
        frames = build_frames(spec)
        save_frame_store(frames, out / "videos" / f"{video_id}.psfr")
        save_embeddings(build_embeddings(video_id, frames.count),
                        out / "embeddings" / f"{video_id}.psem")
        save_annotations(build_annotations(video_id, spec["fps"], frames.count,
                                           spec["block_frames"], seed=11),
                         out / "annotations" / f"{video_id}.json")

    cfg = PipelineConfig(
        paths=PipelinePaths(frames="videos", embeddings="embeddings",
                            annotations="annotations", work="work",
                            fixtures="replies.jsonl"),
        caption_backend=BackendConfig(kind="fixture", model="toy-caption"),
        judge_backend=BackendConfig(kind="fixture", model="toy-judge"),
        refine_min_frames=50,
        eval_protocol="tvsum",
    )
    save_config(cfg, out / "config.json")

    run_cfg = load_config(out / "config.json")
    store = FixtureStore(out / "replies.jsonl")
    caption = RecordingBackend(ScriptedLive("caption"), store)
    judge = RecordingBackend(ScriptedLive("judge"), store)
    for vid in discover_videos(run_cfg):
        run_video(run_cfg, vid, caption=caption, judge=judge)
    shutil.rmtree(out / "work")
    print(f"workspace written to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
