import os

# Must precede the first numpy import: small-matrix LAPACK calls dominate
# this suite and OpenBLAS threading slows them ~20x on few-core boxes.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import numpy as np
import pytest

import homcont as hc


def random_hyperbolic(rng, d, gap=0.1):
    """Random hyperbolic d x d matrix with eigenvalue moduli at least gap
    away from 1; mixes real eigenvalues and complex pairs, conjugated by a
    moderately conditioned similarity."""
    blocks = []
    left = d
    while left > 0:
        modulus = rng.choice([rng.uniform(0.15, 1.0 - gap - 0.05), rng.uniform(1.0 + gap + 0.05, 3.0)])
        if left >= 2 and rng.random() < 0.4:
            phi = rng.uniform(0.2, np.pi - 0.2)
            c, s = modulus * np.cos(phi), modulus * np.sin(phi)
            blocks.append(np.array([[c, -s], [s, c]]))
            left -= 2
        else:
            blocks.append(np.array([[modulus * rng.choice([-1.0, 1.0])]]))
            left -= 1
    core = np.zeros((d, d))
    at = 0
    for b in blocks:
        k = b.shape[0]
        core[at:at + k, at:at + k] = b
        at += k
    while True:
        sim = np.eye(d) + 0.3 * rng.standard_normal((d, d))
        if np.linalg.cond(sim) < 20:
            break
    return sim @ core @ np.linalg.inv(sim)


@pytest.fixture(scope="session")
def paper7_linear():
    return hc.paper7_family(hc.Paper7Config(coupling=0.0))


@pytest.fixture(scope="session")
def paper7_perturbed():
    return hc.paper7_family(hc.Paper7Config(coupling=0.1, envelope_scale=5.0))


@pytest.fixture(scope="session")
def grid64():
    return hc.CircleGrid.uniform(64)
