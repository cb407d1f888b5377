from pathlib import Path

import hypothesis
import numpy as np
import pytest

from structbound.config import Config, ScenarioConfig
from structbound.model import Scenario, scenario_from_config

np.seterr(all="warn")

hypothesis.settings.register_profile("default", max_examples=25, deadline=None)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False, deadline=None)
hypothesis.settings.load_profile("default")

SCENARIO_DIR = Path(__file__).parents[2] / "scenarios"

# A short, coarse Lamb system: node at b1, absorbing far end.
LAMB_TEXT = """
[interior]
mass_matrix = 1.0
stiffness_matrix = 1.0
b1 = 0.0
b2 = 10.0
n_cells = 200

[boundary.b1]
mass = 1.0
hooke = 1.0

[boundary.b2]
semi_infinite = true

[interaction.b1]
kind = rigid

[time]
t_end = 6.0

[initial]
field_kind = gaussian
field_width = 1.0
outgoing = true

[output]
stride = 5
"""

CLOSED_TEXT = """
[interior]
mass_matrix = 1.0
stiffness_matrix = 1.0
b1 = 0.0
b2 = 1.0
n_cells = 40

[boundary.b1]
mass = 1.0
hooke = 1.0

[boundary.b2]
mass = 1.0
hooke = 1.0

[interaction.b1]
kind = spring
k_tilde = 10.0

[interaction.b2]
kind = spring
k_tilde = 10.0

[time]
t_end = 2.0
dt = 0.001

[initial]
field_kind = sine_mode
field_mode = 1
field_amplitude = 0.1

[output]
stride = 10
"""


def scenario_from_text(text: str, name: str = "test", **overrides) -> Scenario:
    document = ScenarioConfig.from_text(text)
    for dotted_key, value in overrides.items():
        document.override(dotted_key.replace("__", "."), value)
    return scenario_from_config(document, name=name)


@pytest.fixture
def lamb_scenario() -> Scenario:
    return scenario_from_text(LAMB_TEXT, name="lamb")


@pytest.fixture
def closed_scenario() -> Scenario:
    return scenario_from_text(CLOSED_TEXT, name="closed")


@pytest.fixture
def write_scenario(tmp_path):
    def write(text: str, name: str = "scenario") -> Path:
        path = tmp_path / f"{name}.conf"
        path.write_text(text)
        return path
    return write


@pytest.fixture
def config(tmp_path) -> Config:
    config = Config()
    config.out = str(tmp_path / "output")
    config.workers = 1
    return config
