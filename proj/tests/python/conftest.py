import sys
from pathlib import Path

import pytest

from tpc.preprocess import ToolProfile, load_mapping

HERE = Path(__file__).parent
TOOLS = HERE / "fake_tools"
DATA = HERE / "data"


def make_profiles(bad_word=None):
    en = load_mapping(DATA / "en_ptb.map")
    fr = load_mapping(DATA / "fr_ftb.map")
    py = sys.executable
    extra = [bad_word] if bad_word else []
    return {
        "src_dependency": ToolProfile("fake-dep-en", "1.0", (py, str(TOOLS / "dependency.py"), "en", *extra), "ptb", en),
        "tgt_dependency": ToolProfile("fake-dep-fr", "1.0", (py, str(TOOLS / "dependency.py"), "fr"), "ftb", fr),
        "src_constituency": ToolProfile("fake-cons-en", "2.1", (py, str(TOOLS / "constituency.py"), "en"), "ptb", en),
        "tgt_constituency": ToolProfile("fake-cons-fr", "2.1", (py, str(TOOLS / "constituency.py"), "fr"), "ftb", fr),
        "aligner": ToolProfile("fake-align", "0.3", (py, str(TOOLS / "aligner.py")), "", {}),
    }


@pytest.fixture
def profiles():
    return make_profiles()


@pytest.fixture
def data_dir():
    return DATA
