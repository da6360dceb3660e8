import numpy as np
import pytest

import schrodloc as sl


def make_system(kind="iid", d=1, inv_eps=32, m=4, seed=3, alpha=1.0, beta=None, **kw):
    """One-stop field + assembly helper used across the suite."""
    if beta is None:
        beta = 8.0 * inv_eps ** 2
    grid = sl.GridSpec(d=d, inv_eps=inv_eps, seed=seed)
    if kind == "periodic":
        field = sl.gen_periodic(grid, alpha, beta)
    elif kind == "iid":
        field = sl.gen_iid(grid, alpha, beta, kw.get("p_beta", 0.5))
    elif kind == "tensor":
        field = sl.gen_tensor(grid, alpha, beta, kw.get("p_alpha", 0.4))
    elif kind == "planted":
        field = sl.gen_planted(grid, alpha, beta, kw.get("widths", [2]))
    elif kind == "domino":
        field = sl.gen_domino(grid, alpha, beta)
    elif kind == "constant":
        occ = np.ones(grid.shape, dtype=bool)
        field = sl.PotentialField(grid=grid, occupancy=occ, alpha=alpha, beta=beta, kind="iid")
    else:
        raise ValueError(kind)
    sub = sl.SubgridSpec(grid=grid, m=m)
    return field, sl.assemble(field, sub)


@pytest.fixture(scope="session")
def random_1d():
    """1D i.i.d. field, the workhorse disorder instance of the suite."""
    field, sys = make_system(kind="iid", d=1, inv_eps=64, m=4, seed=3)
    return field, sys


@pytest.fixture(scope="session")
def random_1d_oracle(random_1d):
    _, sys = random_1d
    return sl.dense_oracle(sys, 8)


@pytest.fixture(scope="session")
def periodic_1d():
    field, sys = make_system(kind="periodic", d=1, inv_eps=16, m=4)
    return field, sys


@pytest.fixture(scope="session")
def constant_1d():
    """V identically beta: every analytic quantity is known in closed form."""
    field, sys = make_system(kind="constant", d=1, inv_eps=8, m=4, beta=1024.0)
    return field, sys
