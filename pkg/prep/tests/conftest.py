"""Shared fixtures for the preparation toolkit tests."""

import numpy as np
import pytest
from PIL import Image

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    label = getattr(item.function, "_acceptance_label", None)
    if label is None:
        return
    if rep.when == "call":
        _RESULTS[label] = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
    elif rep.failed:
        _RESULTS[label] = "FAIL"
    elif rep.when == "setup" and rep.skipped:
        _RESULTS.setdefault(label, "SKIP")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance")
    for label, status in _RESULTS.items():
        terminalreporter.write_line(f"[acceptance] {label}: {status}")


@pytest.fixture
def frame_dir_factory(tmp_path):
    """Build a directory of RGB PNG frames from a seeded generator."""

    def build(name, count, height=32, width=48, seed=0):
        rng = np.random.default_rng(seed)
        d = tmp_path / name
        d.mkdir()
        base = rng.integers(0, 256, size=(height, width, 3))
        for i in range(count):
            # drift a base image so consecutive diffs vary but stay small
            arr = np.clip(
                base + rng.integers(-40, 41, size=base.shape) + 3 * i, 0, 255
            ).astype(np.uint8)
            Image.fromarray(arr, mode="RGB").save(d / f"frame_{i:04d}.png")
        return d

    return build
