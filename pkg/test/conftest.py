# ***************************************
# |docname| - pytest fixtures for testing
# ***************************************
#
# ``conftest.py`` is the standard file for defining **fixtures**
# for `pytest <https://docs.pytest.org/en/stable/fixture.html>`_.
# The fixtures here build small scenes, configs and freshly initialized networks, so individual tests stay fast.
#
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8
# <http://www.python.org/dev/peps/pep-0008/#imports>`_.
#
# Standard library
# ----------------
import io

# Third-party imports
# -------------------
import coverage
import numpy as np
import pytest

# Local imports
# -------------
# Start code coverage here. The imports below load code that must be covered.
cov = coverage.Coverage()
cov.start()

# These all need a ``noqa: E402`` comment, since they come after the statements above.
from jointfield.config import RunConfig  # noqa: E402
from jointfield.pipeline import TrainState  # noqa: E402
from jointfield.synth import generate_scene  # noqa: E402


# Pytest setup
# ============
# Add `command-line options <http://doc.pytest.org/en/latest/example/parametrize.html#generating-parameters-combinations-depending-on-command-line>`_.
def pytest_addoption(parser):
    # The acceptance runs (overfit round-trip, generalization smoke, the many-scene energy trace) take minutes each.
    parser.addoption(
        "--runslow",
        action="store_true",
        help="Run the long acceptance tests marked slow.",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# Code coverage
# -------------
# Output a coverage report when testing is done. See the `docs <https://docs.pytest.org/en/latest/reference.html#_pytest.hookspec>`__.pytest_terminal_summary.
def pytest_terminal_summary(terminalreporter):
    cov.stop()
    cov.save()
    f = io.StringIO()
    cov.report(file=f, include=["*/jointfield/*"])
    terminalreporter.write(f.getvalue())


# Data
# ====
@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# A 48x48 scene: large enough for 35x35 patches and a 3-level pyramid.
@pytest.fixture
def scene():
    return generate_scene(5, 48, 48, "scene_test")


# A config sized for quick tests: narrow networks, few steps.
@pytest.fixture
def small_config():
    return RunConfig(
        height=48,
        width=48,
        width_divisor=8,
        levels=2,
        inner_iters=2,
        epochs=1,
        global_batch_size=2,
        phase_steps=1,
        batch_size=2,
        rounds=1,
        num_scenes=2,
        augment=False,
    )


@pytest.fixture
def small_state(small_config):
    return TrainState.create(small_config)
