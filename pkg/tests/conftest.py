import functools
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from orchardtrack.simulator import SceneConfig, generate_scene  # noqa: E402


@functools.lru_cache(maxsize=None)
def cached_scene(**overrides):
    return generate_scene(SceneConfig(**overrides))


@pytest.fixture(scope="session")
def default_scene():
    return cached_scene(seed=0)


@pytest.fixture(scope="session")
def small_scene():
    return cached_scene(seed=3, n_spheres=40, n_frames=80)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid or rep.when != "call":
                continue
            name = nodeid.split("::test_criterion_")[1]
            number, _, title = name.partition("_")
            lines.append((int(number), f"criterion {number} {'PASS' if outcome == 'passed' else 'FAIL'}: {title.replace('_', ' ')}"))
    if lines:
        terminalreporter.section("acceptance")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
