import numpy as np
import pytest

from mracsim.lti import Polynomial, TransferFunction
from mracsim.matching import default_lambda0


def _stable_poly(rng, deg, lo=0.3, hi=3.0):
    """Monic polynomial with random roots in the open left half-plane."""
    roots = []
    while len(roots) < deg:
        if deg - len(roots) >= 2 and rng.random() < 0.4:
            a = rng.uniform(lo, hi)
            b = rng.uniform(0.2, hi)
            roots += [complex(-a, b), complex(-a, -b)]
        else:
            roots.append(complex(-rng.uniform(lo, hi), 0.0))
    return np.real(np.poly(np.array(roots))) if deg else np.array([1.0])


def random_siso_problem(rng, n=None, n_max=3):
    """Random minimum-phase stable plant + reference model, relative degree 1.

    Resamples until the plant numerator and denominator roots are clearly
    separated, so the matching system stays well conditioned.
    """
    if n is None:
        n = int(rng.integers(1, n_max + 1))
    while True:
        den = _stable_poly(rng, n)
        num = _stable_poly(rng, n - 1)
        if n == 1:
            break
        dmin = np.min(
            np.abs(np.roots(den)[:, None] - np.roots(num)[None, :])
        )
        if dmin > 0.15:
            break
    plant = TransferFunction(rng.uniform(0.5, 3.0) * rng.choice([-1.0, 1.0]), num, den)

    p_m = int(rng.integers(1, n + 1))
    refmodel = TransferFunction(
        rng.uniform(0.5, 3.0), _stable_poly(rng, p_m - 1), _stable_poly(rng, p_m)
    )
    lambda0 = default_lambda0(n, refmodel.num.degree)
    return plant, refmodel, lambda0, n


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
