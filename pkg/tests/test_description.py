"""Frame sampling, batching, and caption-stitching tests."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidskim.backends import (BackendConfig, FixtureBackend, FixtureStore,
                              RecordingBackend, ResponseCache, request_digest)
from vidskim.data_io import FrameStore
from vidskim.description import (CONTINUATION_MARKER, DescriptionSet,
                                 describe_all, describe_range,
                                 load_description_set, make_batches,
                                 sample_frames, save_description_set)
from vidskim.errors import (BackendError, InvariantError, SchemaError,
                            StageError)


class ScriptedBackend:
    """Content-addressed stand-in: the reply is derived from the request digest."""

    def __init__(self, replies=None):
        self.calls = 0
        self.replies = dict(replies or {})
        self.config = BackendConfig(kind="fixture", model="scripted")

    def digest_for(self, messages, temperature=None):
        t = self.config.temperature if temperature is None else temperature
        return request_digest(self.config.model, t, messages)

    def chat(self, messages, temperature=None):
        self.calls += 1
        digest = self.digest_for(messages, temperature)
        if digest in self.replies:
            return self.replies[digest]
        return f"Clip {digest[:8]} plays."


class QueueBackend:
    """Replies popped in call order, for scripting stitch inputs directly."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = 0
        self.config = BackendConfig(kind="fixture", model="queued")

    def digest_for(self, messages, temperature=None):
        t = self.config.temperature if temperature is None else temperature
        return request_digest(self.config.model, t, messages)

    def chat(self, messages, temperature=None):
        self.calls += 1
        return self.replies.pop(0)


def gray_frames(count, fps=1.0, size=4):
    rng = np.random.default_rng(count)
    pixels = rng.integers(0, 256, size=(count, size, size), dtype=np.uint8)
    num, den = FrameStore.fps_to_rational(fps)
    return FrameStore(fps_num=num, fps_den=den, count=count,
                      height=size, width=size, pixels=pixels)


class TestSampleFrames:
    def test_three_seconds_at_30fps(self):
        assert sample_frames(0, 90, 30.0) == [15, 45, 75]

    def test_one_fps_every_frame_is_a_middle(self):
        assert sample_frames(0, 5, 1.0) == [0, 1, 2, 3, 4]

    def test_sub_second_range_yields_middle_frame(self):
        assert sample_frames(0, 10, 30.0) == [5]

    def test_offset_range(self):
        assert sample_frames(60, 150, 30.0) == [75, 105, 135]

    def test_empty_range_rejected(self):
        with pytest.raises(InvariantError):
            sample_frames(5, 5, 30.0)

    def test_nonpositive_fps_rejected(self):
        with pytest.raises(InvariantError):
            sample_frames(0, 10, 0.0)

    def test_fractional_fps(self):
        idx = sample_frames(0, 300, 29.97)
        assert len(idx) == 10
        assert all(0 <= i < 300 for i in idx)
        assert idx == sorted(idx)

    @given(start=st.integers(0, 500), length=st.integers(1, 2000),
           fps=st.floats(0.5, 120.0, allow_nan=False))
    @settings(max_examples=150, deadline=None)
    def test_count_bounded_and_inside_range(self, start, length, fps):
        end = start + length
        idx = sample_frames(start, end, fps)
        assert idx
        assert len(idx) <= math.ceil(length / fps) or len(idx) == 1
        assert all(start <= i < end for i in idx)
        assert idx == sorted(idx)


class TestMakeBatches:
    def test_split_200(self):
        batches = make_batches(range(200))
        assert [len(b) for b in batches] == [80, 80, 40]
        assert batches[0][0] == 0 and batches[2][-1] == 199

    def test_exactly_one_batch(self):
        assert make_batches(range(80)) == [list(range(80))]

    def test_empty(self):
        assert make_batches([]) == []

    def test_order_preserved(self):
        batches = make_batches([9, 3, 7, 1], batch_size=3)
        assert batches == [[9, 3, 7], [1]]

    def test_bad_batch_size(self):
        with pytest.raises(InvariantError):
            make_batches([1, 2], batch_size=0)


class TestDescribeRange:
    def test_single_batch_passes_through(self):
        frames = gray_frames(3)
        backend = QueueBackend(["The video begins with a parade. It ends."])
        text = describe_range([[0, 1, 2]], frames, backend)
        assert text == "The video begins with a parade. It ends."

    def test_three_batch_stitch(self):
        frames = gray_frames(6)
        backend = QueueBackend(["A.", "B.", "C."])
        text = describe_range([[0, 1], [2, 3], [4, 5]], frames, backend)
        assert text == "A. The video continues: B. The video continues: C."

    def test_opener_phrase_replaced_on_later_batches(self):
        frames = gray_frames(4)
        backend = QueueBackend(
            ["A crowd gathers.", "The video begins with a man walking. He waves."])
        text = describe_range([[0, 1], [2, 3]], frames, backend)
        assert text == ("A crowd gathers. The video continues: "
                        "with a man walking. He waves.")

    def test_trailing_closer_dropped_on_non_last_batches(self):
        frames = gray_frames(4)
        backend = QueueBackend(
            ["A dog runs. The scene concludes with a sunset.", "More running."])
        text = describe_range([[0, 1], [2, 3]], frames, backend)
        assert text == "A dog runs. The video continues: More running."

    def test_last_batch_keeps_its_closer(self):
        frames = gray_frames(4)
        backend = QueueBackend(["A dog runs.", "The scene concludes quietly."])
        text = describe_range([[0, 1], [2, 3]], frames, backend)
        assert text.endswith("The video continues: The scene concludes quietly.")

    def test_single_sentence_closer_survives(self):
        frames = gray_frames(4)
        backend = QueueBackend(["The scene concludes.", "Aftermath."])
        text = describe_range([[0, 1], [2, 3]], frames, backend)
        assert text == "The scene concludes. The video continues: Aftermath."

    def test_marker_count_matches_batches(self):
        rng = np.random.default_rng(7)
        words = ["crowd", "street", "market", "river", "music", "lights"]
        for k in range(1, 6):
            frames = gray_frames(2 * k)
            texts = [f"A {words[rng.integers(len(words))]} appears." for _ in range(k)]
            backend = QueueBackend(texts)
            batches = [[2 * i, 2 * i + 1] for i in range(k)]
            text = describe_range(batches, frames, backend)
            assert text.count(CONTINUATION_MARKER) == k - 1

    def test_empty_caption_errors_with_batch_index(self):
        frames = gray_frames(4)
        backend = QueueBackend(["Fine.", "   "])
        with pytest.raises(StageError, match="batch 1"):
            describe_range([[0, 1], [2, 3]], frames, backend)

    def test_backend_failure_carries_batch_index(self):
        class Failing:
            def chat(self, messages, temperature=None):
                raise BackendError("upstream broke")

        frames = gray_frames(2)
        with pytest.raises(StageError, match="scene batch 0"):
            describe_range([[0, 1]], frames, Failing())

    def test_no_batches_rejected(self):
        with pytest.raises(InvariantError):
            describe_range([], gray_frames(2), QueueBackend([]))


class TestDescribeAll:
    def scenes(self):
        from vidskim.data_io import SceneSet
        return SceneSet(((0, 3), (3, 6)))

    def test_two_scenes_plus_video_text(self):
        frames = gray_frames(6, fps=1.0)
        backend = ScriptedBackend()
        descs = describe_all(self.scenes(), frames, backend)
        assert len(descs.scene_texts) == 2
        assert descs.video_text
        assert backend.calls == 3

    def test_deterministic_and_byte_identical(self, tmp_path):
        frames = gray_frames(6, fps=1.0)
        first = describe_all(self.scenes(), frames, ScriptedBackend())
        second = describe_all(self.scenes(), frames, ScriptedBackend())
        assert first == second
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_description_set(a, first)
        save_description_set(b, second)
        assert a.read_bytes() == b.read_bytes()

    def test_warm_cache_skips_backend(self, tmp_path):
        frames = gray_frames(6, fps=1.0)
        backend = ScriptedBackend()
        cache = ResponseCache(tmp_path / "cache")
        cold = describe_all(self.scenes(), frames, backend, cache=cache)
        calls_after_cold = backend.calls
        warm = describe_all(self.scenes(), frames, backend, cache=cache)
        assert backend.calls == calls_after_cold
        assert warm == cold

    def test_record_then_replay_fixture(self, tmp_path):
        from vidskim.data_io import SceneSet
        frames = gray_frames(6, fps=1.0)
        path = tmp_path / "captions.jsonl"
        live = ScriptedBackend()
        recorder = RecordingBackend(live, FixtureStore(path))
        recorded = describe_all(SceneSet(((0, 6),)), frames, recorder)
        replay = FixtureBackend(FixtureStore(path, strict=True), config=live.config)
        replayed = describe_all(SceneSet(((0, 6),)), frames, replay)
        assert replayed == recorded

    def test_sub_second_scene_described(self):
        from vidskim.data_io import SceneSet
        frames = gray_frames(62, fps=30.0)
        backend = ScriptedBackend()
        descs = describe_all(SceneSet(((0, 2), (2, 62))), frames, backend)
        assert len(descs.scene_texts) == 2
        assert all(t.strip() for t in descs.scene_texts)

    def test_scene_error_carries_scene_index(self):
        class FailSecond:
            def __init__(self):
                self.calls = 0

            def chat(self, messages, temperature=None):
                self.calls += 1
                if self.calls == 2:
                    raise BackendError("down")
                return "Fine."

        frames = gray_frames(6, fps=1.0)
        with pytest.raises(StageError, match="scene 1"):
            describe_all(self.scenes(), frames, FailSecond())

    def test_long_scene_batches_in_order(self):
        from vidskim.data_io import SceneSet
        frames = gray_frames(10, fps=1.0)
        backend = QueueBackend(["One.", "Two.", "Three."] + ["Video."] * 4)
        descs = describe_all(SceneSet(((0, 10),)), frames, backend,
                             batch_size=4)
        assert descs.scene_texts[0] == (
            "One. The video continues: Two. The video continues: Three.")


class TestDescriptionSetIO:
    def test_round_trip(self, tmp_path):
        descs = DescriptionSet(scene_texts=("a scene", "another"),
                               video_text="the whole video", batch_size=16)
        path = tmp_path / "descs.json"
        save_description_set(path, descs)
        assert load_description_set(path) == descs

    def test_empty_scene_text_rejected(self):
        with pytest.raises(InvariantError):
            DescriptionSet(scene_texts=("ok", " "), video_text="v")

    def test_empty_video_text_rejected(self):
        with pytest.raises(InvariantError):
            DescriptionSet(scene_texts=("ok",), video_text="")

    def test_bad_version(self, tmp_path):
        descs = DescriptionSet(scene_texts=("a",), video_text="v")
        path = tmp_path / "descs.json"
        save_description_set(path, descs)
        obj = path.read_text().replace('"version": 1', '"version": 9')
        path.write_text(obj)
        with pytest.raises(SchemaError):
            load_description_set(path)

    def test_missing_field(self, tmp_path):
        path = tmp_path / "descs.json"
        path.write_text('{"version": 1, "video_text": "v", "batch_size": 80}')
        with pytest.raises(SchemaError, match="scene_texts"):
            load_description_set(path)
