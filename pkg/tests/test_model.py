import numpy as np
import pytest

from dsbc.model import (
    DsbcParams,
    LindbladModel,
    SpinCouplingMatrix,
    boson_only_model,
    build_dsbc_model,
    build_general_spin_hamiltonian,
    build_initial_state,
    build_spin_boson_coupling,
    build_xy_hamiltonian,
    cosine_modulation,
    nearest_neighbour_couplings,
)
from dsbc.operators import SectorError, SpaceSpec, SparseOp, conservation_error

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0, -1.0]).astype(complex)


def site(n, i, local):
    out = np.eye(1)
    for k in range(n):
        out = np.kron(out, local if k == i else np.eye(2))
    return out


def dense_xy(N, J=1.0):
    # J (s+ s- + h.c.) = (J/2)(sx sx + sy sy)
    return sum(
        0.5 * J * (site(N, i, SX) @ site(N, i + 1, SX) + site(N, i, SY) @ site(N, i + 1, SY))
        for i in range(N - 1)
    )


@pytest.mark.parametrize("N", [2, 3, 4])
def test_xy_hamiltonian_matches_pauli_form(N):
    p = DsbcParams(N=N, delta_a=1.0, g=0.1, kappa=0.1, n_s=None, boson_levels=2)
    H = build_xy_hamiltonian(p, p.spin_space).toarray()
    assert np.allclose(H, dense_xy(N))


def test_general_hamiltonian_reduces_to_nearest_neighbour():
    p = DsbcParams(N=4, delta_a=1.0, g=0.1, kappa=0.1, n_s=None)
    a = build_general_spin_hamiltonian(nearest_neighbour_couplings(4)).toarray()
    b = build_xy_hamiltonian(p, p.spin_space).toarray()
    assert np.allclose(a, b)


def test_general_hamiltonian_anisotropic_terms():
    Jx = np.array([[0, 0.3], [0.3, 0]])
    Jy = np.array([[0, 0.1], [0.1, 0]])
    H = build_general_spin_hamiltonian(SpinCouplingMatrix(Jx, Jy)).toarray()
    expected = 0.3 * np.kron(SX, SX) + 0.1 * np.kron(SY, SY)
    assert np.allclose(H, expected)
    with pytest.raises(SectorError):
        build_general_spin_hamiltonian(SpinCouplingMatrix(Jx, Jy), space=SpaceSpec(2, 0, 1))


def test_coupling_matrix_invariants():
    with pytest.raises(ValueError):
        SpinCouplingMatrix(np.array([[0, 1], [2, 0.0]]), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        SpinCouplingMatrix(np.eye(2), np.eye(2))
    c = SpinCouplingMatrix.isotropic(np.array([[0, 1.0], [1.0, 0]]), 0.01)
    assert c.anisotropy() == pytest.approx(0.01)
    assert not c.is_isotropic()
    assert SpinCouplingMatrix.isotropic(np.array([[0, 1.0], [1.0, 0]])).is_isotropic()


def test_edge_field_terms():
    p = DsbcParams(N=3, delta_a=1.0, g=0.1, kappa=0.1, n_s=None, edge_field=1.0)
    H = build_xy_hamiltonian(p, p.spin_space).toarray()
    expected = dense_xy(3) - 0.5 * (site(3, 0, SZ) + site(3, 2, SZ))
    assert np.allclose(H, expected)


def test_spin_boson_coupling_dense():
    p = DsbcParams(N=2, delta_a=1.0, g=0.2, kappa=0.1, n_s=None, boson_levels=3)
    a = np.diag(np.sqrt([1.0, 2.0]), 1)
    g = 0.2 * cosine_modulation(2)
    expected = sum(g[i] * np.kron(site(2, i, SZ), a + a.T) for i in range(2))
    assert np.allclose(build_spin_boson_coupling(p).toarray(), expected)


def test_complex_couplings_build_hermitian_term():
    g = (0.1 * np.exp(0.3j), 0.2 * np.exp(-1.1j))
    p = DsbcParams(N=2, delta_a=1.0, g=1.0, kappa=0.1, n_s=None, boson_levels=3, couplings=g)
    a = np.diag(np.sqrt([1.0, 2.0]), 1)
    expected = sum(np.kron(site(2, i, SZ), g[i] * a + np.conj(g[i]) * a.T) for i in range(2))
    assert np.allclose(build_spin_boson_coupling(p).toarray(), expected)


def test_dsbc_model_structure():
    p = DsbcParams(N=3, delta_a=1.4, g=0.05, kappa=0.07, n_s=None, boson_levels=3)
    model = build_dsbc_model(p, heating_ratio=0.1)
    rates = [r for r, _ in model.jumps]
    assert rates == pytest.approx([0.14, 0.014])
    assert model.conserves_excitations()
    sectored = model.project(1)
    direct = build_dsbc_model(p.replace(n_s=1), heating_ratio=0.1)
    assert sectored.H.allclose(direct.H)
    with pytest.raises(ValueError):
        build_dsbc_model(p, heating_ratio=1.0)


def test_lindblad_model_validation():
    space = SpaceSpec(1)
    with pytest.raises(ValueError):
        LindbladModel(SparseOp(space, np.array([[0, 1], [0, 0]])))
    with pytest.raises(ValueError):
        LindbladModel(SparseOp.zeros(space), ((-1.0, SparseOp.identity(space)),))


def test_boson_only_model():
    m = boson_only_model(0.5, 0.2, 4, 0.1)
    assert m.space == SpaceSpec(0, 4)
    assert [r for r, _ in m.jumps] == pytest.approx([0.4, 0.04])


def test_initial_state_left_block():
    p = DsbcParams(N=3, delta_a=1.0, g=0.1, kappa=0.1, n_s=1)
    rho = build_initial_state(p)
    assert rho.trace() == pytest.approx(1)
    # |udd> is the first sector state; boson in vacuum
    assert rho.data[0, 0] == pytest.approx(1)
    with pytest.raises(SectorError):
        build_initial_state(p, pattern="uud")


def test_conservation_of_full_hamiltonian():
    p = DsbcParams(N=3, delta_a=1.0, g=0.1, kappa=0.1, n_s=None)
    assert conservation_error(build_dsbc_model(p).H) == 0.0


def test_params_validation():
    with pytest.raises(ValueError):
        DsbcParams(N=3, delta_a=1.0, g=0.1, kappa=-0.1)
    with pytest.raises(ValueError):
        DsbcParams(N=3, delta_a=1.0, g=0.1, kappa=0.1, n_s=4)
    with pytest.raises(ValueError):
        DsbcParams(N=3, delta_a=1.0, g=0.1, kappa=0.1, couplings=(0.1,))
