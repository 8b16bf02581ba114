import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pemi.scores import AbsoluteResidualScore, LinearModel
from pemi.types import DataSequence

settings.register_profile(
    "pkg", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=50
)
settings.load_profile("pkg")


def make_sequence(rng: np.random.Generator, t: int, d: int = 2, cutoffs: bool = False,
                  n_offline: int = 0) -> DataSequence:
    """A small random sequence; labels are a noisy linear signal."""
    coef = rng.normal(size=d)
    X = rng.normal(size=(t, d))
    Y = X @ coef + rng.normal(size=t)
    kw = {}
    if n_offline:
        Xo = rng.normal(size=(n_offline, d))
        kw.update(offline_x=Xo, offline_y=Xo @ coef + rng.normal(size=n_offline))
    if cutoffs:
        kw.update(cutoffs=rng.normal(size=t - 1), test_cutoff=float(rng.normal()))
        if n_offline:
            kw.update(offline_cutoffs=rng.normal(size=n_offline))
    return DataSequence(x=X[:-1], y=Y[:-1], test_x=X[-1], **kw)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def residual_score(rng) -> AbsoluteResidualScore:
    return AbsoluteResidualScore(model=LinearModel(intercept=0.3, coef=(0.7, -1.1)))
