import sys
from pathlib import Path

import pytest
from hypothesis import settings, strategies as st

from detfusion.boxes import BoundingBox, Detection

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"


@st.composite
def boxes(draw, lo=-100.0, hi=100.0, min_size=1.0, max_size=100.0):
    x = draw(st.floats(lo, hi))
    y = draw(st.floats(lo, hi))
    w = draw(st.floats(min_size, max_size))
    h = draw(st.floats(min_size, max_size))
    return BoundingBox(x, y, x + w, y + h)


def det(x0, y0, x1, y1, conf=0.9, cat=1, image=0):
    return Detection(BoundingBox(float(x0), float(y0), float(x1), float(y1)), cat, conf, image)


@pytest.fixture
def data_dir():
    return DATA


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
