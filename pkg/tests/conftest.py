from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qaforge.corpus import Passage

SUPER_BOWL_TEXT = (
    "Super Bowl 50 was an American football game to determine the champion of the "
    "National Football League (NFL) for the 2015 season. The American Football "
    "Conference (AFC) champion Denver Broncos defeated the National Football "
    "Conference (NFC) champion Carolina Panthers 24-10 to earn their third Super "
    "Bowl title. The game was played on February 7, 2016, at Levi's Stadium in the "
    "San Francisco Bay Area at Santa Clara, California."
)


@pytest.fixture
def super_bowl_passage() -> Passage:
    return Passage(id="sb50#0", title="Super Bowl 50", text=SUPER_BOWL_TEXT, source="squad_train", split="train")


@pytest.fixture
def tiny_passage() -> Passage:
    return Passage(id="p1", title="t", text="alpha bravo charlie delta echo", source="external")
