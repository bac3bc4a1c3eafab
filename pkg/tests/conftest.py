import sys

import numpy as np
import pytest

from ptav.bench.synth import parse_script, synth_generate

TELEPORT_SCRIPT = """
width = 320
height = 240
frames = 150
target = 100,100,24,24
texture_seed = 1
event: translate start=0 end=150 vx=0.6 vy=0.3
event: teleport at=60 dx=40 dy=0
"""

SMOOTH_SCRIPT = """
width = 320
height = 240
frames = {frames}
target = 100,100,32,32
texture_seed = 1
event: translate start=0 end={frames} vx=0.4 vy=0.2
"""


def smooth_sequence(frames=60, seed=0):
    return synth_generate(parse_script(SMOOTH_SCRIPT.format(frames=frames)), seed=seed)


@pytest.fixture(scope="session")
def teleport_seq():
    return synth_generate(parse_script(TELEPORT_SCRIPT), seed=0)


@pytest.fixture(scope="session")
def smooth_seq():
    return smooth_sequence(60)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
