import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import default_generator


@pytest.fixture(scope="session")
def gen():
    return default_generator()


@pytest.fixture(scope="session")
def res(gen):
    return gen.config.output_resolution
