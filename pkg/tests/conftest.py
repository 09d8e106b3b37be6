import numpy as np
import pytest

from pqwalk import hamiltonians as ham


@pytest.fixture
def band_example():
    return ham.example_band_4x4()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_hermitian(rng, dim):
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (a + a.conj().T) / 2


@pytest.fixture
def clause_neg():
    # 2-local clause with a negative diagonal entry, exercises the sign widget
    blk = np.array([[0.9, 0.2 + 0.1j, 0, 0.3],
                    [0.2 - 0.1j, -0.7, 0.1, 0],
                    [0, 0.1, 0.4, -0.2j],
                    [0.3, 0, 0.2j, -0.5]], dtype=complex)
    return ham.local_hamiltonian(3, [(0b011, blk)])
