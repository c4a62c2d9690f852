import json

import pytest

from blogspace.ingest import parse_event_log
from blogspace.synthgen import SynthConfig, generate


def ev(id, type, user, post, ts, parent=None):
    rec = {"id": id, "type": type, "user": user, "post": post, "ts": ts}
    if parent is not None:
        rec["parent"] = parent
    return json.dumps(rec)


def log_from(*lines, lenient=False):
    return parse_event_log("\n".join(lines), lenient=lenient)


@pytest.fixture(scope="session")
def planted():
    """Default 4-group planted log (about 5e4 events)."""
    return generate(SynthConfig(seed=11))


@pytest.fixture(scope="session")
def small_synth():
    return generate(SynthConfig(n_groups=2, users_per_group=10, posts_per_group=5, horizon=4000, seed=3))


# acceptance lines, printed together at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
