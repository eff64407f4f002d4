import pytest

from synth import build_fixture, write_config
from curate.config import load_config
from curate.pipeline import run


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """The 60-clip synthetic corpus, built once per session."""
    return build_fixture(tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="session")
def corpus_run(corpus):
    cfg = load_config(write_config(corpus, name="shared.ini", out="out-shared"))
    return cfg, run(cfg)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" in props and rep.when == "call":
                rows.append((props["criterion"], "PASS" if outcome == "passed" else "FAIL", props.get("detail", "")))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, detail in sorted(rows):
        terminalreporter.write_line(f"[{status}] criterion {number:>2}: {detail}")
