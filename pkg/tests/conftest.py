import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from annuflow.grid import make_annulus


@pytest.fixture(scope="session")
def grid64():
    return make_annulus(1.0, 2.0, 64, 128)


@pytest.fixture(scope="session")
def grid32():
    return make_annulus(1.0, 2.0, 32, 64)


@pytest.fixture(scope="session")
def grid_radial128():
    # fine radial resolution, coarse angular: radial test solutions only
    return make_annulus(1.0, 2.0, 128, 16)
