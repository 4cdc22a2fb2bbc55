import numpy as np
import pytest

from asdglue.neck_glue import eh_body, half_cylinder_body, s4_body

BODY_DT = 0.1
BODY_TMAX = 12.0


def body_grid(dt: float = BODY_DT, t_max: float = BODY_TMAX) -> np.ndarray:
    return dt * np.arange(int(round(t_max / dt)) + 1)


def central_block(field: np.ndarray, frac: float = 0.25, ndim: int = 4) -> np.ndarray:
    """Nodes at least ``frac`` of the box width away from every boundary (active axes only)."""
    idx = []
    for n in field.shape[:ndim]:
        k = int(round(frac * (n - 1)))
        idx.append(slice(k, n - k) if n > 1 else slice(None))
    return field[tuple(idx)]


@pytest.fixture(scope="session")
def eh():
    return eh_body(body_grid())


@pytest.fixture(scope="session")
def cyl2():
    return half_cylinder_body(body_grid(), 2)


@pytest.fixture(scope="session")
def cyl1():
    return half_cylinder_body(body_grid(), 1)


@pytest.fixture(scope="session")
def s4():
    return s4_body(body_grid())
