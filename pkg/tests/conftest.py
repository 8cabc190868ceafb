import numpy as np
import pytest

from convreveal.value import tables_for
from convreveal.world import Scenario, Task, load_scenario_file

SCENARIO_DIR = __import__("pathlib").Path(__file__).resolve().parent.parent / "scenarios"


def lattice_scenario(gamma=0.9, n=12, goal=(10.0, 6.0), radius=0.4, tasks=None,
                     convention=None):
    """Unit-spacing grid where every 4-heading unit action lands exactly on a
    lattice point, so value iteration is tabular-exact (no interpolation error)."""
    actions = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    L = float(n - 1)
    if tasks is None:
        tasks = [Task(0, np.array(goal, dtype=float), radius),
                 Task(1, np.array([1.0, 1.0]), radius)]
    return Scenario(
        bounds=(0.0, 0.0, L, L),
        tasks=tasks,
        dt=1.0,
        a_max=1.0,
        blend_beta=0.5,
        gamma=gamma,
        action_set=actions,
        convention_spec=convention or {"type": "cosine", "kappa": 5.0},
        epsilon0=0.1,
        rng_seed=0,
        grid_resolution=n,
        start=(1.0, 1.0),
    )


@pytest.fixture(scope="session")
def study1_close():
    return load_scenario_file(SCENARIO_DIR / "study1_close.yaml")


@pytest.fixture(scope="session")
def study1_far():
    return load_scenario_file(SCENARIO_DIR / "study1_far.yaml")


@pytest.fixture(scope="session")
def study3():
    return load_scenario_file(SCENARIO_DIR / "study3_magnitude.yaml")


@pytest.fixture(scope="session")
def demo_cosine():
    return load_scenario_file(SCENARIO_DIR / "demo_cosine.yaml")


@pytest.fixture(scope="session")
def qtables_close(study1_close):
    return tables_for(study1_close)


@pytest.fixture(scope="session")
def qtables_far(study1_far):
    return tables_for(study1_far)


@pytest.fixture(scope="session")
def qtables_study3(study3):
    return tables_for(study3)


@pytest.fixture(scope="session")
def qtables_cosine(demo_cosine):
    return tables_for(demo_cosine)
