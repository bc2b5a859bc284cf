import numpy as np
import pytest

from synchrony.core import InteractionSample, TimeSeries


def random_sample(
    k=2, c=1, t=60, label=0.5, group_id="g0", seed=0
) -> InteractionSample:
    rng = np.random.default_rng(seed)
    parts = tuple(
        tuple(TimeSeries(rng.standard_normal(t)) for _ in range(c))
        for _ in range(k)
    )
    return InteractionSample(parts, label=label, group_id=group_id)


@pytest.fixture
def sample():
    return random_sample()
