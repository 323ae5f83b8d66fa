import numpy as np
import pytest


def disk_rgb(size=256, radius=100, center=None, color=(200, 160, 60), prong=None):
    """Flat-colored disk on a black background, optionally with a rectangular prong."""
    cx, cy = center if center is not None else (size / 2 - 0.5, size / 2 - 0.5)
    y, x = np.mgrid[0:size, 0:size]
    disk = (x - cx) ** 2 + (y - cy) ** 2 <= radius ** 2
    img = np.zeros((size, size, 3), dtype=np.uint8)
    img[disk] = color
    if prong is not None:
        r0, r1, c0, c1 = prong
        img[r0:r1, c0:c1] = color
    return img, disk


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS, line

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(line(n))
