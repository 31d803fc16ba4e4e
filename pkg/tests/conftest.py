import functools
import warnings

import numpy as np
import pytest

from saddlekrylov.problems import gen_random_system
from saddlekrylov.saddle import build_constraint_preconditioner


def rel(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def suite_params():
    """Twenty seeded shapes with n <= 50, m <= 15 and C ranks 0, m/3, m/2 and m."""
    out = []
    for seed in range(20):
        n = 30 + seed
        m = 5 + seed % 11
        p = [0, m // 3, m // 2, m][seed % 4]
        out.append((seed, n, m, p))
    return out


@functools.lru_cache(maxsize=None)
def instance(seed, symmetric=True, b2=False):
    _, n, m, p = suite_params()[seed]
    sys_, G = gen_random_system(n, m, seed, C_rank=p, A_symmetric=symmetric, b2=b2)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        P = build_constraint_preconditioner(G, sys_.B, sys_.C)
    return sys_, G, P, p


@pytest.fixture
def tiny():
    """A = I, B = [1 0], C = [1], b1 = [1, 1]: the exact preconditioner G = A converges in one step."""
    A = np.eye(2)
    B = np.array([[1.0, 0.0]])
    C = np.array([[1.0]])
    return A, B, C
