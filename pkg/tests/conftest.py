"""
Pytest fixtures for CoordMech tests
"""

import os
from pathlib import Path

import pytest

# Point the config loader at the repo config before importing modules
REPO_ROOT = Path(__file__).resolve().parent.parent
os.environ.setdefault('COORDMECH_CONFIG', str(REPO_ROOT / 'coordmech_config.txt'))


@pytest.fixture(autouse=True)
def fresh_config():
    """Every test starts from the repo config file"""
    from config_loader import reload_config
    return reload_config(str(REPO_ROOT / 'coordmech_config.txt'))


@pytest.fixture
def longestfirst_scenario():
    from cli import load_scenario
    return load_scenario('longestfirst-cycle')


@pytest.fixture
def randomized_scenario():
    from cli import load_scenario
    return load_scenario('randomized-cycle')


@pytest.fixture
def bcoord_scenario():
    from cli import load_scenario
    return load_scenario('bcoord-cycle')


@pytest.fixture
def two_by_two():
    """Crossed 2x2 instance: each job is fast on one machine, slow on the other"""
    from instance_model import Instance
    return Instance.from_rows([[1, 2], [2, 1]])


@pytest.fixture
def small_instance():
    """3 jobs x 3 machines with one infinite entry"""
    from instance_model import Instance
    return Instance.from_rows([
        ['4', '2', 'inf'],
        ['3/2', '5', '1'],
        ['6', '6', '2.5'],
    ])


@pytest.fixture
def random_instances():
    """Factory for seeded random instances"""
    from analysis import random_instance

    def make(count, n_max=4, m_max=3, seed=0, inf_probability=0.2):
        import numpy as np
        rng = np.random.default_rng(seed)
        return [
            random_instance(int(rng.integers(1, n_max + 1)), int(rng.integers(1, m_max + 1)), rng,
                            inf_probability=inf_probability)
            for _ in range(count)
        ]

    return make


@pytest.fixture
def instance_file(tmp_path, small_instance):
    from instance_model import save_instance
    path = tmp_path / 'instance.json'
    save_instance(small_instance, str(path))
    return path
