"""Shared fixtures: the frozen toy-scale training recipe used by the
acceptance suite, trained once per session."""

import time

import numpy as np
import pytest

import wavediffur as wd
from wavediffur.data import make_synthetic_dataset
from wavediffur.losses import LossWeights
from wavediffur.networks import NetConfig
from wavediffur.trainer import TrainConfig

# paper realness weights transported to [0,1] dynamic range:
# 0.1*255^2 (MSE) : 2*255 (TV)  ->  1 : 0.0784
TOY_WEIGHTS = LossWeights(1.0, 0.0784)
TOY_NET = dict(heads=8, base_width=24, csp_width=24, emb_dim=24)
TOY_SCHED = dict(T=200, beta_min=5e-4, beta_max=0.1)


def toy_schedule():
    return wd.make_schedule(**TOY_SCHED)


def train_toy_models(steps=3000, seed=0):
    train = make_synthetic_dataset(seed=100, n=200, hr_size=32, d=1)
    models = wd.build_models(3, NetConfig(**TOY_NET), seed=seed)
    sched = toy_schedule()
    cfg = TrainConfig(
        steps=steps,
        batch=1,
        lr0=2e-3,
        decay=0.85,
        decay_every=800,
        seed=seed,
        loss_weights=TOY_WEIGHTS,
        optimizer="adam",
        clip_norm=1.0,
        checkpoint_every=0,
    )
    wd.fit(train, models, sched, cfg)
    return models, sched


@pytest.fixture(scope="session")
def toy_trained():
    """Trained x2 model shared by the end-to-end acceptance criteria;
    yields (models, schedule, training wall time in seconds)."""
    t0 = time.time()
    models, sched = train_toy_models()
    return models, sched, time.time() - t0


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
