"""Shared fixtures: small datasets and lightly trained models.

Session scope keeps training costs paid once; the fixtures' seeds are
fixed so every test run sees identical models.
"""

import numpy as np
import pytest

from certspoof.datasets import synthetic_shapes
from certspoof.models import (
    Ensemble,
    TrainingConfig,
    compose_denoised,
    train_denoiser,
    train_noise_augmented,
)


@pytest.fixture(scope="session")
def shapes_small():
    return synthetic_shapes(1000, shape=(32, 32, 3), seed=11, name="fixture-train")


@pytest.fixture(scope="session")
def shapes_eval():
    return synthetic_shapes(120, shape=(32, 32, 3), seed=12, name="fixture-eval")


@pytest.fixture(scope="session")
def shapes_gray():
    return synthetic_shapes(200, shape=(28, 28, 1), seed=13, name="fixture-gray")


@pytest.fixture(scope="session")
def tiny_classifier(shapes_small):
    cfg = TrainingConfig(epochs=3, batch_size=64, learning_rate=2e-3, sigma=0.25, seed=21)
    return train_noise_augmented(shapes_small, cfg)


@pytest.fixture(scope="session")
def tiny_ensemble(shapes_small):
    members = [
        train_noise_augmented(
            shapes_small,
            TrainingConfig(epochs=2, batch_size=64, learning_rate=2e-3, sigma=0.25, seed=31 + i),
        )
        for i in range(2)
    ]
    return Ensemble(members)


@pytest.fixture(scope="session")
def tiny_denoised(shapes_small):
    base = train_noise_augmented(
        shapes_small,
        TrainingConfig(epochs=2, batch_size=64, learning_rate=2e-3, sigma=0.0, seed=41),
    )
    denoiser = train_denoiser(
        shapes_small,
        TrainingConfig(epochs=2, batch_size=64, learning_rate=2e-3, sigma=0.25, seed=42),
    )
    return compose_denoised(base, denoiser)


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)
