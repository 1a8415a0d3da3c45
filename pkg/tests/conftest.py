import numpy as np
import pytest

from specedge import field, lattice, operator


@pytest.fixture(scope="session")
def unit_interval():
    return lattice.ContinuumShape.box((0.0,), (1.0,))


@pytest.fixture(scope="session")
def unit_square():
    return lattice.ContinuumShape.box((0.0, 0.0), (1.0, 1.0))


def planted_peak(n_sites, peak_rank, peak_height, background, seed=0, noise=0.5):
    """A d=1 planted-peak instance: one tall site over a rough low background."""
    domain = lattice.integer_box((0,), (n_sites - 1,))
    rng = np.random.default_rng(seed)
    values = background + noise * rng.standard_normal(n_sites)
    values[peak_rank] = peak_height
    fld = field.PotentialField.from_values(domain, values)
    return domain, fld


def principal_pair(domain, fld):
    res = operator.top_eigs(operator.assemble(domain, fld), 1)
    return float(res.eigenvalues[0]), res.vectors[:, 0]
