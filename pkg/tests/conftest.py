"""Shared fixtures and hypothesis profiles."""
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from duca import ModelConfig, init_model

settings.register_profile(
    "ci", max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("dev", max_examples=25)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "dev"))


@pytest.fixture(scope="session")
def toy_config():
    """The default desk-scale model config."""
    return ModelConfig()


@pytest.fixture(scope="session")
def toy_model(toy_config):
    return init_model(0, toy_config)


@pytest.fixture(scope="session")
def small_config():
    """A two-block model small enough for hand computation."""
    return ModelConfig(depth=2, hidden=8, heads=2, tokens=6, classes=3,
                       mlp_ratio=2.0, max_timesteps=50)


@pytest.fixture(scope="session")
def small_model(small_config):
    return init_model(7, small_config)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
