import numpy as np
import pytest

from interclust.model import FeatureVariant, Sample


def make_sample(sid: int, variants, label=None) -> Sample:
    return Sample(
        id=sid,
        variants=tuple(FeatureVariant(values=np.asarray(v, dtype=float)) for v in variants),
        label=label,
    )


def random_samples(rng, n, d, max_variants=5, label_of=None) -> list[Sample]:
    samples = []
    for i in range(n):
        n_var = int(rng.integers(1, max_variants + 1))
        variants = rng.normal(size=(n_var, d))
        samples.append(make_sample(i, variants, label=label_of(i) if label_of else None))
    return samples


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
