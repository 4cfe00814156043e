"""Extraction behavior: luma mapping, sampling grids, and source handling."""

from fractions import Fraction

import cv2
import numpy as np
import pytest

from vidprep.errors import DecodeError
from vidprep.extract import (
    ExtractionJob,
    extract_frames,
    resample_indices,
    rgb_to_luma,
)
from vidprep.formats import clip_diffs, read_frame_archive, write_frame_archive


class TestLuma:
    def test_primary_colors(self):
        img = np.array([[[255, 0, 0], [0, 255, 0], [0, 0, 255]]], dtype=np.uint8)
        assert rgb_to_luma(img).tolist() == [[76, 150, 29]]

    def test_black_and_white(self):
        img = np.array([[[0, 0, 0], [255, 255, 255]]], dtype=np.uint8)
        assert rgb_to_luma(img).tolist() == [[0, 255]]

    def test_gray_is_identity(self):
        vals = np.arange(256, dtype=np.uint8)
        img = np.stack([vals, vals, vals], axis=-1)[None]
        assert np.array_equal(rgb_to_luma(img)[0], vals)


class TestResampleGrid:
    def test_downsample(self):
        idx = resample_indices(100, 10.0, 2.0)
        assert len(idx) == 20
        assert idx[:4] == [0, 5, 10, 15]

    def test_upsample_repeats(self):
        idx = resample_indices(10, 2.0, 4.0)
        assert len(idx) == 20
        assert idx[:4] == [0, 0, 1, 1]

    def test_count_is_floor_of_duration_times_rate(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            src_count = int(rng.integers(1, 500))
            src_fps = float(rng.integers(1, 61))
            out_fps = float(rng.integers(1, 61))
            idx = resample_indices(src_count, src_fps, out_fps)
            want = int(Fraction(src_count) * Fraction(out_fps) / Fraction(src_fps))
            assert len(idx) == want
            assert all(0 <= i < src_count for i in idx)
            assert all(a <= b for a, b in zip(idx, idx[1:]))


class TestImageDirectories:
    def test_extracts_sorted_frames(self, frame_dir_factory):
        d = frame_dir_factory("seq", count=8, height=20, width=30, seed=1)
        clip = extract_frames(ExtractionJob(source=str(d), source_fps=10.0))
        assert clip.count == 8
        assert (clip.height, clip.width) == (20, 30)
        assert clip.fps == pytest.approx(10.0)
        assert np.array_equal(clip.diffs, clip_diffs(clip.pixels))

    def test_needs_declared_rate(self, frame_dir_factory):
        d = frame_dir_factory("seq", count=3)
        with pytest.raises(DecodeError, match="source_fps"):
            extract_frames(ExtractionJob(source=str(d)))

    def test_deterministic_bytes(self, frame_dir_factory, tmp_path):
        d = frame_dir_factory("seq", count=6, seed=4)
        job = ExtractionJob(source=str(d), source_fps=5.0)
        a, b = tmp_path / "a.psfr", tmp_path / "b.psfr"
        write_frame_archive(extract_frames(job), a)
        write_frame_archive(extract_frames(job), b)
        assert a.read_bytes() == b.read_bytes()

    def test_resamples_to_target_rate(self, frame_dir_factory):
        d = frame_dir_factory("seq", count=12, seed=2)
        clip = extract_frames(ExtractionJob(source=str(d), source_fps=6.0, fps=2.0))
        assert clip.count == 4
        assert clip.fps == pytest.approx(2.0)

    def test_mixed_sizes_rejected(self, frame_dir_factory):
        from PIL import Image

        d = frame_dir_factory("seq", count=3, height=10, width=10)
        Image.new("RGB", (11, 10)).save(d / "frame_9999.png")
        with pytest.raises(DecodeError, match="differs"):
            extract_frames(ExtractionJob(source=str(d), source_fps=5.0))

    def test_empty_directory(self, tmp_path):
        d = tmp_path / "empty"
        d.mkdir()
        with pytest.raises(DecodeError, match="no image files"):
            extract_frames(ExtractionJob(source=str(d), source_fps=5.0))

    def test_max_edge_shrinks(self, frame_dir_factory):
        d = frame_dir_factory("seq", count=2, height=40, width=100, seed=3)
        clip = extract_frames(
            ExtractionJob(source=str(d), source_fps=5.0, max_edge=50)
        )
        assert (clip.height, clip.width) == (20, 50)

    def test_diffs_only_archive(self, frame_dir_factory, tmp_path):
        d = frame_dir_factory("seq", count=5, seed=6)
        full = extract_frames(ExtractionJob(source=str(d), source_fps=5.0))
        lean = extract_frames(
            ExtractionJob(source=str(d), source_fps=5.0, keep_pixels=False)
        )
        assert lean.pixels is None
        assert np.array_equal(lean.diffs, full.diffs)
        assert (lean.count, lean.height, lean.width) == (5, full.height, full.width)
        path = tmp_path / "lean.psfr"
        write_frame_archive(lean, path)
        assert read_frame_archive(path).pixels is None


def write_video(path, count=30, height=48, width=64, fps=10.0, seed=0):
    rng = np.random.default_rng(seed)
    writer = cv2.VideoWriter(
        str(path), cv2.VideoWriter_fourcc(*"MJPG"), fps, (width, height),
    )
    assert writer.isOpened()
    for _ in range(count):
        writer.write(rng.integers(0, 256, (height, width, 3)).astype(np.uint8))
    writer.release()


class TestVideoContainers:
    def test_extracts_with_header_rate(self, tmp_path):
        path = tmp_path / "clip.avi"
        write_video(path, count=30, fps=10.0)
        clip = extract_frames(ExtractionJob(source=str(path)))
        assert clip.count == 30
        assert (clip.height, clip.width) == (48, 64)
        assert clip.fps == pytest.approx(10.0)
        assert np.array_equal(clip.diffs, clip_diffs(clip.pixels))

    def test_resample_and_rate_override(self, tmp_path):
        path = tmp_path / "clip.avi"
        write_video(path, count=30, fps=10.0)
        clip = extract_frames(
            ExtractionJob(source=str(path), source_fps=15.0, fps=5.0)
        )
        assert clip.fps == pytest.approx(5.0)
        assert clip.count == 10

    def test_garbage_file(self, tmp_path):
        path = tmp_path / "noise.avi"
        path.write_bytes(b"\x00" * 400)
        with pytest.raises(DecodeError, match="noise.avi"):
            extract_frames(ExtractionJob(source=str(path)))

    def test_missing_source(self, tmp_path):
        with pytest.raises(DecodeError, match="does not exist"):
            extract_frames(ExtractionJob(source=str(tmp_path / "gone.avi")))
