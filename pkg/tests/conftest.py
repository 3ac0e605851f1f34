import numpy as np
import pytest

from mlgcp.model import ModelParams


@pytest.fixture
def params_p5():
    """Truth values of the five-type, two-factor simulation scenario."""
    alpha = np.array(
        [
            [np.sqrt(0.5), 0.0],
            [1.0, 0.0],
            [-1.0, 1.0],
            [0.0, -1.0],
            [0.0, 0.5],
        ]
    )
    return ModelParams(
        alpha=alpha,
        sigma2=np.ones(5),
        phi=np.array([0.02, 0.1]),
        psi=np.array([0.01, 0.02, 0.02, 0.03, 0.04]),
    )


def random_params(rng, p=None, q=None, alpha_scale=1.0):
    """Random valid parameter state for property tests."""
    p = p if p is not None else int(rng.integers(2, 6))
    q = q if q is not None else int(rng.integers(1, 4))
    return ModelParams(
        alpha=rng.normal(0.0, alpha_scale, size=(p, q)),
        sigma2=rng.uniform(0.0, 2.0, size=p),
        phi=rng.uniform(0.01, 0.2, size=q),
        psi=rng.uniform(0.01, 0.2, size=p),
    )
