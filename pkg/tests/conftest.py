import sys
from pathlib import Path

import hypothesis
import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

hypothesis.settings.register_profile(
    "suite", max_examples=40, deadline=None, derandomize=True
)
hypothesis.settings.load_profile("suite")

from jaqs import load_space_spec  # noqa: E402

SHIPPED = ("bert", "vit", "beit3", "ofa_resnet50")


@pytest.fixture(scope="session")
def configs_dir():
    return ROOT / "configs"


@pytest.fixture(scope="session")
def shipped_specs(configs_dir):
    return {name: load_space_spec(configs_dir / f"{name}.json") for name in SHIPPED}


@pytest.fixture(scope="session")
def bert_spec(shipped_specs):
    return shipped_specs["bert"]


@pytest.fixture(scope="session")
def resnet_spec(shipped_specs):
    return shipped_specs["ofa_resnet50"]


@pytest.fixture(scope="session")
def tiny_spec():
    return load_space_spec(ROOT / "tests" / "data" / "tiny.json")
