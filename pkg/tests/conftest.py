import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from flowlab.grid_space import DomainSpec, build_domain


@pytest.fixture(scope="session")
def square_16():
    return build_domain(DomainSpec("square", h=1 / 16))


@pytest.fixture(scope="session")
def square_margin():
    # 5x5 Y square inside an ambient margin; outer ring of the square is Boundary
    return build_domain(DomainSpec("square", h=1 / 4, params={"margin": 0.5}))


@pytest.fixture(scope="session")
def holed_square():
    return build_domain(
        DomainSpec("square_minus_discs", h=1 / 32,
                   params={"discs": [(0.5, 0.5, 0.25)]})
    )


@pytest.fixture(scope="session")
def pacman_32():
    return build_domain(DomainSpec("pacman", h=1 / 32))


@pytest.fixture(scope="session")
def chain3():
    import numpy as np
    return build_domain(
        DomainSpec("explicit", h=1.0,
                   params={"mask": np.ones((3, 1), dtype=bool).tolist()})
    )
