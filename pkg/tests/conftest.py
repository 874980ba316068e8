import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

REPO_ROOT = Path(__file__).resolve().parent.parent
EXAMPLES_DIR = REPO_ROOT / "examples"
FIXTURES_DIR = Path(__file__).resolve().parent / "fixtures"


@pytest.fixture
def repo_root() -> Path:
    return REPO_ROOT


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES_DIR


def basic_scenario_doc(**overrides) -> dict:
    """A 3-node network: coordinator, actuator 1 (endpoint 1), display 2."""
    doc = {
        "pan_id": 1,
        "nodes": [
            {"role": "coordinator"},
            {"role": "actuator", "addr": 1, "endpoints": [1]},
            {"role": "display_monitor", "addr": 2},
        ],
        "beacon_interval_us": None,
        "silence_threshold_us": None,
        "duration_us": 1_000_000,
    }
    doc.update(overrides)
    return doc


def make_scenario(**overrides):
    from monitomation import load_scenario

    return load_scenario(json.dumps(basic_scenario_doc(**overrides)))
