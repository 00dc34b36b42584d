import numpy as np
import pytest
from hypothesis import settings

from fsnid.ingest import Dataset

settings.register_profile("fsnid", deadline=None, max_examples=40)
settings.load_profile("fsnid")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_dataset(features, labels, names=None, classes=None):
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[:, None]
    labels = np.asarray(labels)
    names = names or tuple(f"f{i}" for i in range(features.shape[1]))
    classes = classes or tuple(str(c) for c in range(int(labels.max()) + 1))
    return Dataset(tuple(names), features, labels, tuple(classes))
