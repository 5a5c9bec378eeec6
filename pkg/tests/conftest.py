# tests/conftest.py
"""
Pytest configuration file.
Sets up the Python path for test imports and shared fixtures.
"""
import sys
import os

import pytest

# Add project root to path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)


@pytest.fixture
def sim_cfg():
    """Noise-free collection-rate simulation."""
    from src.core.physics import SimConfig
    return SimConfig(sensor_noise_std=0.0, sensor_quantum=0.0)


@pytest.fixture
def tomato():
    """Robust evaluation object with plastic flow."""
    from src.core.catalog import SEEN_EVAL_OBJECTS
    return SEEN_EVAL_OBJECTS[2]


@pytest.fixture
def raspberry():
    """Delicate evaluation object."""
    from src.core.catalog import SEEN_EVAL_OBJECTS
    return SEEN_EVAL_OBJECTS[1]


@pytest.fixture(scope="session")
def small_corpus():
    """Expert demonstrations on a six-object catalog."""
    from src.agents.expert_agent import GenerationConfig, generate_demonstrations
    from src.core.catalog import sample_object_catalog
    from src.core.physics import SimConfig
    from src.core.rng import make_rng

    gen = GenerationConfig(n_objects=6, per_object_min=3, per_object_max=4)
    catalog = sample_object_catalog(gen.n_objects, make_rng(11, "catalog"))
    episodes, manifest = generate_demonstrations(catalog, SimConfig(), seed=11, gen=gen)
    return catalog, episodes, manifest


@pytest.fixture
def tiny_policy_cfg():
    """Small, fast policy settings."""
    from src.agents.diffusion_agent import PolicyConfig
    return PolicyConfig(
        obs_horizon=2, pred_horizon=4, action_horizon=2, diffusion_steps=10,
        instruction_proj_dim=8, time_embed_dim=8, hidden=(16, 16),
        train_steps=20, batch_size=8, log_every=10,
    )
