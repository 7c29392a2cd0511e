import numpy as np
import pytest

from fraclab.spectral import FractionalParams, MixedRectangleDomain, build_basis


@pytest.fixture(scope="session")
def frac() -> FractionalParams:
    return FractionalParams(0.75, 2)


@pytest.fixture(scope="session")
def square_domain() -> MixedRectangleDomain:
    # unit square, Dirichlet on the x=0 edge only
    return MixedRectangleDomain((1.0, 1.0), ["x0min"])


@pytest.fixture(scope="session")
def basis16(square_domain):
    return build_basis(square_domain, 16)


@pytest.fixture(scope="session")
def basis64(square_domain):
    return build_basis(square_domain, 64)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


def band_limited(rng, basis, decay=0.1):
    """Random field with geometrically decaying coefficients."""
    from fraclab.spectral import SpectralField

    c = rng.standard_normal(basis.n_modes) * np.exp(-decay * np.arange(basis.n_modes))
    return SpectralField(c)
