"""Prompt assembly, score parsing, and scene-scoring tests."""

import hashlib
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidskim.backends import BackendConfig, ResponseCache, request_digest
from vidskim.description import DescriptionSet
from vidskim.errors import (BackendError, InvariantError, SchemaError,
                            ScoreParseError, StageError)
from vidskim.judging import (JudgeRequest, SceneScores, build_prompt,
                             load_scene_scores, parse_multi_scores,
                             parse_score, save_scene_scores, score_scenes,
                             score_scenes_multi_query)


def stable_score(scene_text: str, query: str) -> int:
    digest = hashlib.sha256(f"{scene_text}|{query}".encode()).digest()
    return 1 + digest[0] % 100


class HonestBackend:
    """Parses the prompt it receives and answers from a fixed scoring rule."""

    def __init__(self):
        self.calls = 0
        self.config = BackendConfig(kind="fixture", model="honest")

    def digest_for(self, messages, temperature=None):
        t = self.config.temperature if temperature is None else temperature
        return request_digest(self.config.model, t, messages)

    def chat(self, messages, temperature=None):
        self.calls += 1
        prompt = messages[0]["content"]
        scene = re.search(r"Scene Description: (.*)", prompt).group(1)
        numbered = re.findall(r"User Query (\d+): (.*)", prompt)
        if numbered:
            return "\n".join(f"{k}: {stable_score(scene, q)}" for k, q in numbered)
        single = re.search(r"User Query: (.*?) When assigning a score", prompt,
                           re.DOTALL)
        query = single.group(1) if single else ""
        return f"SCORE: {stable_score(scene, query)}"


class ReplyBackend:
    """Maps scene text to a canned reply; unknown scenes get a default."""

    def __init__(self, by_scene, default="SCORE: 50"):
        self.by_scene = dict(by_scene)
        self.default = default
        self.calls = 0
        self.config = BackendConfig(kind="fixture", model="canned")

    def digest_for(self, messages, temperature=None):
        t = self.config.temperature if temperature is None else temperature
        return request_digest(self.config.model, t, messages)

    def chat(self, messages, temperature=None):
        self.calls += 1
        prompt = messages[0]["content"]
        scene = re.search(r"Scene Description: (.*)", prompt).group(1)
        return self.by_scene.get(scene, self.default)


def three_scene_descs():
    return DescriptionSet(scene_texts=("scene one", "scene two", "scene three"),
                          video_text="a short film about three things")


class TestBuildPrompt:
    def req(self, queries=()):
        return JudgeRequest(video_text="a parade passes",
                            scene_text="a float with balloons",
                            queries=queries)

    def test_no_query_has_scale_and_no_query_line(self):
        prompt = build_prompt(self.req())
        assert "Assign an importance score on a scale of 1 to 100" in prompt
        assert "User Query:" not in prompt
        assert prompt.startswith("You are tasked with evaluating the importance")

    def test_rubric_buckets_present(self):
        prompt = build_prompt(self.req())
        assert "* 1-20: Minimally important" in prompt
        assert "* 81-100: Highly important" in prompt

    def test_descriptions_substituted(self):
        prompt = build_prompt(self.req())
        assert "Video Description: a parade passes" in prompt
        assert "Scene Description: a float with balloons" in prompt

    def test_answer_format_appended(self):
        prompt = build_prompt(self.req())
        assert prompt.endswith(
            "Answer with the single line 'SCORE: <integer 1-100>' and nothing else.")

    def test_single_query_block(self):
        prompt = build_prompt(self.req(queries=("focus on dogs",)))
        assert "User Query: focus on dogs" in prompt
        assert "The user has provided the following content preference" in prompt
        assert "SCORE: <integer 1-100>" in prompt

    def test_query_block_precedes_scale(self):
        prompt = build_prompt(self.req(queries=("focus on dogs",)))
        assert (prompt.index("User Query: focus on dogs")
                < prompt.index("Assign an importance score"))

    def test_multi_query_numbered_block_and_format(self):
        prompt = build_prompt(self.req(queries=("dogs", "cats", "birds")))
        assert "User Query 1: dogs" in prompt
        assert "User Query 2: cats" in prompt
        assert "User Query 3: birds" in prompt
        assert "exactly 3 lines" in prompt
        assert "'Qk: <integer 1-100>'" in prompt
        assert "User Query:" not in prompt

    def test_pure_substitution(self):
        req = self.req(queries=("dogs",))
        assert build_prompt(req) == build_prompt(req)

    def test_distinct_requests_distinct_prompts(self):
        base = build_prompt(self.req())
        assert build_prompt(JudgeRequest("a parade passes", "other scene")) != base
        assert build_prompt(JudgeRequest("other video", "a float with balloons")) != base
        assert build_prompt(self.req(queries=("dogs",))) != base


class TestJudgeRequest:
    def test_empty_video_text_rejected(self):
        with pytest.raises(InvariantError):
            JudgeRequest(video_text=" ", scene_text="x")

    def test_empty_scene_text_rejected(self):
        with pytest.raises(InvariantError):
            JudgeRequest(video_text="x", scene_text="")

    def test_empty_query_rejected(self):
        with pytest.raises(InvariantError):
            JudgeRequest(video_text="x", scene_text="y", queries=("ok", " "))

    def test_temperature_range(self):
        with pytest.raises(InvariantError):
            JudgeRequest(video_text="x", scene_text="y", temperature=1.5)


class TestParseScore:
    def test_marker(self):
        assert parse_score("SCORE: 85") == 85

    def test_last_marker_wins(self):
        assert parse_score("I'd say 40, maybe 45. SCORE: 45") == 45

    def test_marker_out_of_range_is_error(self):
        with pytest.raises(ScoreParseError):
            parse_score("SCORE: 0")
        with pytest.raises(ScoreParseError):
            parse_score("SCORE: 101")

    def test_unintelligible_reply_errors_with_raw_text(self):
        with pytest.raises(ScoreParseError) as info:
            parse_score("unintelligible")
        assert info.value.reply == "unintelligible"

    def test_fallback_last_standalone_integer(self):
        assert parse_score("The importance is 62.") == 62
        assert parse_score("First 30 then 70.") == 70

    def test_fallback_skips_out_of_range(self):
        assert parse_score("Rated 300 overall, call it 55.") == 55

    def test_fallback_skips_decimals(self):
        with pytest.raises(ScoreParseError):
            parse_score("pi is 3.14159")

    def test_case_insensitive_marker(self):
        assert parse_score("score: 12") == 12

    @given(st.integers(1, 100))
    @settings(max_examples=100, deadline=None)
    def test_marker_round_trip(self, value):
        assert parse_score(f"SCORE: {value}") == value


class TestParseMultiScores:
    def test_plain_numbered_lines(self):
        assert parse_multi_scores("1: 10\n2: 20\n3: 30", 3) == [10, 20, 30]

    def test_q_prefixed_lines(self):
        assert parse_multi_scores("Q1: 5\nQ2: 6", 2) == [5, 6]

    def test_missing_query_listed(self):
        with pytest.raises(ScoreParseError) as info:
            parse_multi_scores("1: 10\n3: 30", 3)
        assert info.value.missing == [2]

    def test_all_missing(self):
        with pytest.raises(ScoreParseError) as info:
            parse_multi_scores("nothing here", 2)
        assert info.value.missing == [1, 2]

    def test_out_of_range_value(self):
        with pytest.raises(ScoreParseError):
            parse_multi_scores("1: 10\n2: 0", 2)

    def test_duplicate_keeps_last(self):
        assert parse_multi_scores("1: 10\n1: 20\n2: 30", 2) == [20, 30]

    def test_extra_index_ignored(self):
        assert parse_multi_scores("1: 10\n2: 20\n7: 99", 2) == [10, 20]

    def test_needs_a_query(self):
        with pytest.raises(InvariantError):
            parse_multi_scores("1: 10", 0)


class TestSceneScores:
    def test_round_trip(self, tmp_path):
        scores = SceneScores(matrix=np.array([[10, 20], [30, 40]]),
                             queries=("a", "b"))
        path = tmp_path / "scores.json"
        save_scene_scores(path, scores)
        assert load_scene_scores(path) == scores

    def test_no_query_round_trip(self, tmp_path):
        scores = SceneScores(matrix=np.array([[55], [60]]))
        path = tmp_path / "scores.json"
        save_scene_scores(path, scores)
        loaded = load_scene_scores(path)
        assert loaded == scores
        assert loaded.queries == ()

    def test_column_count_must_match_queries(self):
        with pytest.raises(InvariantError):
            SceneScores(matrix=np.array([[1, 2]]), queries=("only one",))

    def test_range_enforced(self):
        with pytest.raises(InvariantError):
            SceneScores(matrix=np.array([[0]]))
        with pytest.raises(InvariantError):
            SceneScores(matrix=np.array([[101]]))

    def test_non_integer_rejected(self):
        with pytest.raises(InvariantError):
            SceneScores(matrix=np.array([[1.5]]))

    def test_bad_version(self, tmp_path):
        path = tmp_path / "scores.json"
        save_scene_scores(path, SceneScores(matrix=np.array([[5]])))
        path.write_text(path.read_text().replace('"version": 1', '"version": 3'))
        with pytest.raises(SchemaError):
            load_scene_scores(path)

    def test_missing_matrix(self, tmp_path):
        path = tmp_path / "scores.json"
        path.write_text('{"version": 1, "queries": []}')
        with pytest.raises(SchemaError, match="matrix"):
            load_scene_scores(path)


class TestScoreScenes:
    def test_fixture_column_in_scene_order(self):
        descs = three_scene_descs()
        backend = ReplyBackend({"scene one": "SCORE: 1",
                                "scene two": "SCORE: 2",
                                "scene three": "SCORE: 3"})
        scores = score_scenes(descs, None, backend)
        assert scores.matrix.shape == (3, 1)
        assert list(scores.column()) == [1, 2, 3]
        assert scores.queries == ()

    def test_blank_query_treated_as_none(self):
        backend = ReplyBackend({})
        scores = score_scenes(three_scene_descs(), "   ", backend)
        assert scores.queries == ()

    def test_query_changes_requests(self):
        backend = HonestBackend()
        descs = three_scene_descs()
        plain = score_scenes(descs, None, backend)
        steered = score_scenes(descs, "focus on dogs", backend)
        assert steered.queries == ("focus on dogs",)
        assert not np.array_equal(plain.matrix, steered.matrix)

    def test_warm_cache_skips_backend(self, tmp_path):
        descs = three_scene_descs()
        backend = HonestBackend()
        cache = ResponseCache(tmp_path / "cache")
        cold = score_scenes(descs, "dogs", backend, cache=cache)
        calls = backend.calls
        warm = score_scenes(descs, "dogs", backend, cache=cache)
        assert backend.calls == calls
        assert warm == cold

    def test_out_of_range_reply_names_scene(self):
        backend = ReplyBackend({"scene one": "SCORE: 10",
                                "scene two": "SCORE: 0"})
        with pytest.raises(ScoreParseError, match="scene 1"):
            score_scenes(three_scene_descs(), None, backend)

    def test_backend_error_names_scene(self):
        class FailThird(ReplyBackend):
            def chat(self, messages, temperature=None):
                if self.calls == 2:
                    raise BackendError("upstream gone")
                return super().chat(messages, temperature)

        backend = FailThird({})
        with pytest.raises(StageError, match="scene 2"):
            score_scenes(three_scene_descs(), None, backend)


class TestScoreScenesMultiQuery:
    def test_row_ordering(self):
        backend = ReplyBackend({}, default="1: 10\n2: 20\n3: 30")
        scores = score_scenes_multi_query(three_scene_descs(),
                                          ["a", "b", "c"], backend)
        assert scores.matrix.shape == (3, 3)
        assert list(scores.matrix[0]) == [10, 20, 30]

    def test_one_call_per_scene_even_with_many_queries(self):
        queries = [f"topic {i}" for i in range(46)]
        descs = DescriptionSet(scene_texts=("only scene",), video_text="v")
        backend = HonestBackend()
        scores = score_scenes_multi_query(descs, queries, backend)
        assert backend.calls == 1
        assert scores.matrix.shape == (1, 46)

    def test_missing_query_error_names_scene_and_indices(self):
        backend = ReplyBackend({}, default="1: 10\n3: 30")
        with pytest.raises(ScoreParseError, match="scene 0") as info:
            score_scenes_multi_query(three_scene_descs(), ["a", "b", "c"],
                                     backend)
        assert info.value.missing == [2]

    def test_matches_column_stacked_single_runs(self):
        descs = three_scene_descs()
        queries = ["about dogs", "about cats"]
        multi = score_scenes_multi_query(descs, queries, HonestBackend())
        stacked = np.column_stack(
            [score_scenes(descs, q, HonestBackend()).column() for q in queries])
        assert np.array_equal(multi.matrix, stacked)

    def test_single_query_matches_score_scenes(self):
        descs = three_scene_descs()
        multi = score_scenes_multi_query(descs, ["about dogs"], HonestBackend())
        single = score_scenes(descs, "about dogs", HonestBackend())
        assert np.array_equal(multi.matrix, single.matrix)

    def test_needs_queries(self):
        with pytest.raises(InvariantError):
            score_scenes_multi_query(three_scene_descs(), [], HonestBackend())

    def test_warm_cache_skips_backend(self, tmp_path):
        descs = three_scene_descs()
        backend = HonestBackend()
        cache = ResponseCache(tmp_path / "cache")
        cold = score_scenes_multi_query(descs, ["a", "b"], backend, cache=cache)
        calls = backend.calls
        warm = score_scenes_multi_query(descs, ["a", "b"], backend, cache=cache)
        assert backend.calls == calls
        assert warm == cold
