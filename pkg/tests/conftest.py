import numpy as np
import pytest

from turbolora.codec import ImageMatrix


def nonzero_image(rows, cols, seed=0):
    """Random image whose every row has at least one nonzero pixel."""
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(rows, cols), dtype=np.uint8)
    pixels[:, 0] = rng.integers(1, 256, size=rows, dtype=np.uint8)
    return ImageMatrix(pixels)


@pytest.fixture
def image225():
    return nonzero_image(225, 225, seed=2020)


ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail=""):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(".")[0].split()[-1])):
            terminalreporter.write_line(line)
