import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsbc.operators import (
    DensityMatrix,
    SectorError,
    SpaceSpec,
    SparseOp,
    StateVector,
    bitstring_to_index,
    boson_matrix,
    boson_op,
    conservation_error,
    embed,
    excitation_number,
    index_to_bitstring,
    partial_trace_boson,
    pauli_op,
    sector_embed_state,
    sector_project,
    sector_project_state,
    sector_states,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0, -1.0]).astype(complex)
UP = np.array([1, 0], dtype=complex)


def dense_site(n, site, local):
    out = np.eye(1)
    for k in range(n):
        out = np.kron(out, local if k == site else np.eye(2))
    return out


def random_hermitian(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return a + a.conj().T


def test_sigma_z_is_plus_one_on_up():
    space = SpaceSpec(1)
    z = pauli_op(space, 0, "z").toarray()
    assert np.allclose(z @ UP, UP)


@pytest.mark.parametrize("which,local", [("x", SX), ("y", SY), ("z", SZ)])
def test_pauli_matches_dense_kron(which, local):
    space = SpaceSpec(3, 2)
    op = pauli_op(space, 1, which).toarray()
    assert np.allclose(op, np.kron(dense_site(3, 1, local), np.eye(2)))


def test_ladder_operators_raise_and_lower():
    space = SpaceSpec(2)
    plus = pauli_op(space, 0, "plus").toarray()
    minus = pauli_op(space, 0, "minus").toarray()
    down_down = np.zeros(4)
    down_down[bitstring_to_index("dd", space)] = 1
    up_down = np.zeros(4)
    up_down[bitstring_to_index("ud", space)] = 1
    assert np.allclose(plus @ down_down, up_down)
    assert np.allclose(minus @ up_down, down_down)
    assert np.allclose(plus @ minus - minus @ plus, pauli_op(space, 0, "z").toarray())


def test_boson_operators_match_sqrt_ladder():
    a = boson_matrix(4, "annihilate").toarray()
    assert np.allclose(np.diag(a, 1), np.sqrt([1, 2, 3]))
    n = boson_matrix(4, "number").toarray()
    assert np.allclose(np.diag(n), [0, 1, 2, 3])
    # truncation: [a, a^dag] = 1 except on the top level
    comm = a @ a.conj().T - a.conj().T @ a
    assert np.allclose(np.diag(comm), [1, 1, 1, -3])


def test_boson_is_least_significant_factor():
    space = SpaceSpec(1, 3)
    a = boson_op(space, "annihilate").toarray()
    assert np.allclose(a, np.kron(np.eye(2), boson_matrix(3, "annihilate").toarray()))


def test_embed_ordering_matches_kron():
    space = SpaceSpec(2, 2)
    op = embed(space, {0: SX, 1: SZ, "boson": np.array([[0, 1], [0, 0]])}).toarray()
    expected = np.kron(np.kron(SX, SZ), np.array([[0, 1], [0, 0]]))
    assert np.allclose(op, expected)


def test_embed_rejects_site_placement_in_sector():
    with pytest.raises(SectorError):
        embed(SpaceSpec(3, 0, 1), {0: SX})


def test_bitstring_round_trip_and_sector_order():
    space = SpaceSpec(4, 0, 2)
    states = sector_states(4, 2)
    assert list(states) == sorted(states)
    for i in range(space.spin_dim):
        assert bitstring_to_index(index_to_bitstring(i, space), space) == i
    assert index_to_bitstring(0, space) == "uudd"
    assert bitstring_to_index("1100", SpaceSpec(4)) == 3


def test_sector_projection_equals_dense_block():
    N = 3
    full = SpaceSpec(N)
    hop = sum(
        dense_site(N, i, (SX + 1j * SY) / 2) @ dense_site(N, i + 1, (SX - 1j * SY) / 2)
        for i in range(N - 1)
    )
    hop = hop + hop.conj().T
    op = SparseOp(full, hop)
    idx = sector_states(N, 1)
    assert np.allclose(sector_project(op, 1).toarray(), hop[np.ix_(idx, idx)])


def test_sector_projection_rejects_non_conserving():
    op = pauli_op(SpaceSpec(2), 0, "x")
    assert conservation_error(op) > 0
    with pytest.raises(SectorError):
        sector_project(op, 1)
    assert sector_project(op, 1, truncate=True).nnz == 0


def test_sectored_pauli_only_z():
    with pytest.raises(SectorError):
        pauli_op(SpaceSpec(3, 0, 1), 0, "x")
    z = pauli_op(SpaceSpec(3, 0, 1), 0, "z").toarray()
    assert np.allclose(np.diag(z), [1, -1, -1])


def test_excitation_number_counts_up_spins():
    space = SpaceSpec(3)
    n = excitation_number(space).toarray()
    for k in range(8):
        assert n[k, k] == index_to_bitstring(k, space).count("u")


def test_partial_trace_matches_loop():
    rng = np.random.default_rng(3)
    space = SpaceSpec(2, 3)
    m = random_hermitian(rng, space.dim)
    m = m @ m
    m /= np.trace(m)
    red = partial_trace_boson(DensityMatrix(space, m)).data
    expected = np.zeros((4, 4), dtype=complex)
    for k in range(3):
        sel = np.arange(4) * 3 + k
        expected += m[np.ix_(sel, sel)]
    assert np.allclose(red, expected)


def test_sector_state_embed_round_trip():
    space = SpaceSpec(4, 0, 2)
    rng = np.random.default_rng(0)
    psi = StateVector.normalized(space, rng.normal(size=space.dim))
    full = sector_embed_state(psi)
    assert full.space == SpaceSpec(4)
    back = sector_project_state(full, 2)
    assert np.allclose(back.data, psi.data)


def test_state_vector_must_be_normalized():
    with pytest.raises(ValueError):
        StateVector(SpaceSpec(1), np.array([1.0, 1.0]))


def test_trace_distance_of_orthogonal_states_is_one():
    space = SpaceSpec(1)
    up = DensityMatrix.from_state(StateVector(space, [1, 0]))
    down = DensityMatrix.from_state(StateVector(space, [0, 1]))
    assert up.trace_distance(down) == pytest.approx(1.0)
    assert up.purity() == pytest.approx(1.0)
    assert DensityMatrix.maximally_mixed(space).purity() == pytest.approx(0.5)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 3), levels=st.sampled_from([0, 2, 3]))
def test_sparse_algebra_matches_dense(seed, n, levels):
    rng = np.random.default_rng(seed)
    space = SpaceSpec(n, levels)
    A = random_hermitian(rng, space.dim)
    B = random_hermitian(rng, space.dim)
    a, b = SparseOp(space, A), SparseOp(space, B)
    assert np.allclose((a @ b).toarray(), A @ B)
    assert np.allclose((a + b * 2.0).toarray(), A + 2 * B)
    assert np.allclose(a.commutator(b).toarray(), A @ B - B @ A)
    assert a.is_hermitian()
    assert np.allclose((a * 1j).dag().toarray(), (1j * A).conj().T)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 5), data=st.data())
def test_sector_dimensions_add_up(n, data):
    total = sum(SpaceSpec(n, 0, k).spin_dim for k in range(n + 1))
    assert total == 2**n
    k = data.draw(st.integers(0, n))
    states = sector_states(n, k)
    assert all(index_to_bitstring(int(s), SpaceSpec(n)).count("u") == k for s in states)


def test_space_validation():
    with pytest.raises(ValueError):
        SpaceSpec(2, 1)
    with pytest.raises(ValueError):
        SpaceSpec(2, 0, 3)
