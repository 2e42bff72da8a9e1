import numpy as np
import pytest
from hypothesis import settings

from clusteriv import Dataset

settings.register_profile("default", max_examples=int(__import__("os").environ.get("HYPO_N", 60)), deadline=None)
settings.load_profile("default")


@pytest.fixture
def four_unit():
    """Two clusters of two: (Z, D, Y) = (0,0,1),(1,1,3) | (0,0,2),(1,1,5)."""
    z = np.array([0.0, 1.0, 0.0, 1.0])
    d = z.copy()
    y = np.array([1.0, 3.0, 2.0, 5.0])
    return Dataset.from_arrays(y, d, z, [0, 0, 1, 1])


@pytest.fixture
def four_unit_csv(tmp_path):
    p = tmp_path / "four.csv"
    p.write_text("y,d,z,g\n1,0,0,A\n3,1,1,A\n2,0,0,B\n5,1,1,B\n", encoding="utf-8")
    return p
