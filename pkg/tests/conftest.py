import numpy as np
import pytest

import edgegram as eg
from edgegram.corpus import worklist_from_tokens

# Acceptance criteria register their verdicts here; the terminal summary
# hook prints one line per criterion at the end of the run.
ACCEPTANCE_LINES: list[tuple[int, str, bool]] = []


def record_acceptance(number: int, description: str, passed: bool) -> None:
    ACCEPTANCE_LINES.append((number, description, passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, description, passed in sorted(ACCEPTANCE_LINES):
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} [{verdict}] {description}")


@pytest.fixture
def tiny_vocab():
    tokens = ["red", "blue", "green", "red", "blue", "red"] * 10
    return eg.build_vocabulary(tokens, min_count=1)


@pytest.fixture
def small_corpus():
    """A 4k-token synthetic corpus with its vocabulary and work list."""
    rng = np.random.default_rng(11)
    toks = [f"t{i}" for i in rng.integers(0, 60, size=4000)]
    vocab = eg.build_vocabulary(toks, min_count=1)
    worklist = worklist_from_tokens(toks, vocab)
    return vocab, worklist
