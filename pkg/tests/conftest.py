import numpy as np
import pytest

from diggan.data import filter_records, split_train_test
from diggan.synth import SynthDatasetSpec, build_records
from diggan.training import TrainConfig, run_curriculum


@pytest.fixture(scope="session")
def toy_records():
    """Small in-memory 4-view dataset: 12 subjects x 4 views x 2 seqs."""
    return build_records(SynthDatasetSpec(n_subjects=12, seed=11))


@pytest.fixture(scope="session")
def toy_split(toy_records):
    return split_train_test(toy_records, 0.5, seed=5)


@pytest.fixture(scope="session")
def toy_train_config():
    return TrainConfig(steps_a=120, steps_b1=120, steps_b2=200, steps_c=300,
                       batch_size=8, pretrain_batch=16, base_channels=8,
                       d_z=32, seed=3, n_views=4)


@pytest.fixture(scope="session")
def toy_model(toy_records, toy_split, toy_train_config):
    """One small trained model shared by the smoke-level behavior tests."""
    train = filter_records(toy_records, toy_split.train_subjects)
    return run_curriculum(toy_train_config, train)


def mini_params(**kw):
    """Miniature networks for fast shape and gradient work."""
    from diggan.networks import init_params

    defaults = dict(d_z=8, n_views=3, image_dims=(16, 12), seed=1,
                    base_channels=4)
    defaults.update(kw)
    return init_params(**defaults)
