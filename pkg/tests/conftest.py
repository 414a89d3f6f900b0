import numpy as np
import pytest

from deeptcsr.hazard_model import FEEDFORWARD, LINEAR, init_params
from deeptcsr.seqdata import Dataset, SequenceRecord


def random_sequence(rng, t, dim=3, censored=None, name="s"):
    if censored is None:
        censored = bool(rng.random() < 0.5)
    return SequenceRecord(name, rng.standard_normal((t, dim)), censored)


def random_dataset(rng, n, dim=3, horizon=8, tmin=1):
    recs = [random_sequence(rng, int(rng.integers(tmin, horizon + 1)), dim, name=f"r{i}")
            for i in range(n)]
    return Dataset(tuple(recs), dim, horizon)


def random_model(rng, arch, dim=3, horizon=8, hidden=5, scale=0.7):
    model = init_params(arch, dim, horizon, hidden=hidden, seed=int(rng.integers(1 << 30)))
    return model.with_params(scale * rng.standard_normal(len(model.params)))


@pytest.fixture
def rng():
    return np.random.default_rng(20241019)


@pytest.fixture(params=[LINEAR, FEEDFORWARD])
def arch(request):
    return request.param
