import numpy as np
import pytest
import scipy.linalg as sla

from dsbc.engine import (
    IntegratorConfig,
    NumericalError,
    TraceGuardError,
    evolve,
    final_state,
    fidelity,
    liouvillian_superoperator,
    steady_state,
)
from dsbc.model import DsbcParams, LindbladModel, boson_only_model, build_dsbc_model, build_initial_state
from dsbc.operators import DensityMatrix, SpaceSpec, SparseOp, StateVector, boson_op
from dsbc.spinwave import target_state


def coherent_state(levels, alpha):
    n = np.arange(levels)
    from math import factorial

    amp = np.array([alpha**k / np.sqrt(factorial(k)) for k in n]) * np.exp(-abs(alpha) ** 2 / 2)
    return amp / np.linalg.norm(amp)


@pytest.mark.parametrize("method", ["expm", "rk45", "rk4"])
def test_damped_oscillator_occupation_decays(method):
    kappa, levels = 0.1, 12
    model = boson_only_model(0.0, kappa, levels)
    space = model.space
    rho0 = DensityMatrix.from_state(StateVector(space, coherent_state(levels, 1.0)))
    times = np.linspace(0, 30, 31)
    cfg = IntegratorConfig(method=method, max_step=0.01 if method == "rk4" else np.inf)
    traj = evolve(model, rho0, times, cfg)
    n0 = traj.observables["boson_occupation"][0]
    assert np.allclose(traj.observables["boson_occupation"], n0 * np.exp(-2 * kappa * times), rtol=1e-6)


def test_two_level_liouvillian_spectrum():
    kappa = 0.3
    space = SpaceSpec(0, 2)
    model = LindbladModel(SparseOp.zeros(space), ((2 * kappa, boson_op(space, "annihilate")),))
    L = liouvillian_superoperator(model).toarray()
    vals = np.sort(np.linalg.eigvals(L).real)
    assert np.allclose(vals, [-2 * kappa, -kappa, -kappa, 0], atol=1e-12)


def test_liouvillian_matches_dense_formula():
    rng = np.random.default_rng(1)
    space = SpaceSpec(1, 2)
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    H = A + A.conj().T
    J = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    model = LindbladModel(SparseOp(space, H), ((0.7, SparseOp(space, J)),))
    rho = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    expected = -1j * (H @ rho - rho @ H) + 0.7 * (
        J @ rho @ J.conj().T - 0.5 * (J.conj().T @ J @ rho + rho @ J.conj().T @ J)
    )
    out = liouvillian_superoperator(model) @ rho.reshape(-1, order="F")
    assert np.allclose(out.reshape(4, 4, order="F"), expected)


def _small_model():
    p = DsbcParams(N=3, delta_a=np.sqrt(2), g=0.05, kappa=0.05, n_s=1, boson_levels=3)
    return p, build_dsbc_model(p), build_initial_state(p)


def test_integrators_agree():
    p, model, rho0 = _small_model()
    times = np.linspace(0, 40, 5)
    target = target_state(p)
    ref = evolve(model, rho0, times, IntegratorConfig(method="expm"), target)
    for cfg in (
        IntegratorConfig(method="rk45", rel_tol=1e-10, abs_tol=1e-12),
        IntegratorConfig(method="rk4", max_step=0.02),
    ):
        other = evolve(model, rho0, times, cfg, target)
        assert np.allclose(other.observables["fidelity"], ref.observables["fidelity"], atol=1e-7)


def test_expm_matches_dense_exponential():
    p, model, rho0 = _small_model()
    L = liouvillian_superoperator(model).toarray()
    v = sla.expm(L * 17.0) @ rho0.data.reshape(-1, order="F")
    rho = final_state(model, rho0, 17.0)
    assert np.allclose(rho.data, v.reshape(rho0.data.shape, order="F"), atol=1e-11)


def test_trace_guard_raises():
    _, model, rho0 = _small_model()
    with pytest.raises(TraceGuardError):
        evolve(model, rho0, [0, 50], IntegratorConfig(method="rk4", max_step=1.0, trace_guard=1e-14))


def test_rk4_needs_step_and_unknown_method():
    with pytest.raises(ValueError):
        IntegratorConfig(method="rk4")
    with pytest.raises(ValueError):
        IntegratorConfig(method="euler")


def test_physicality_is_tracked():
    _, model, rho0 = _small_model()
    traj = evolve(model, rho0, np.linspace(0, 100, 11), IntegratorConfig(method="expm"))
    assert traj.observables["trace_error"].max() < 1e-10
    assert traj.observables["hermiticity_error"].max() < 1e-10
    assert traj.observables["min_eigenvalue"].min() > -1e-10


def test_superoperator_cap():
    _, model, _ = _small_model()
    with pytest.raises(NumericalError):
        liouvillian_superoperator(model, max_dim=10)


def test_steady_state_of_damped_oscillator_is_thermal():
    kappa, zeta, levels = 0.2, 0.25, 30
    ss = steady_state(boson_only_model(0.0, kappa, levels, zeta))
    assert ss.null_dim == 1
    pops = np.real(np.diag(ss.rho.data))
    assert np.allclose(pops[:8], (1 - zeta) * zeta ** np.arange(8), atol=1e-10)


def test_steady_state_sector_populations_survive():
    p = DsbcParams(N=2, delta_a=2.0, g=0.1, kappa=0.1, n_s=None, boson_levels=3)
    ss = steady_state(build_dsbc_model(p))
    assert ss.null_dim >= 3
    assert set(ss.sector_states) == {0, 1, 2}
    for rho in ss.sector_states.values():
        assert rho.trace() == pytest.approx(1)


def test_excitation_number_is_conserved_in_full_space():
    p = DsbcParams(N=3, delta_a=np.sqrt(2), g=0.05, kappa=0.05, n_s=None, boson_levels=3)
    model = build_dsbc_model(p, heating_ratio=0.1)
    rng = np.random.default_rng(2)
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    psi /= np.linalg.norm(psi)
    spin = np.outer(psi, psi.conj())
    vac = np.zeros((3, 3))
    vac[0, 0] = 1
    rho0 = DensityMatrix(model.space, np.kron(spin, vac))
    rho = final_state(model, rho0, 60.0)
    # up is bit 0, so the up count is 3 minus the set bits
    ups = np.array([3 - bin(k).count("1") for k in range(8)])
    red = rho.data.reshape(8, 3, 8, 3).trace(axis1=1, axis2=3)
    for n in range(4):
        sel = ups == n
        assert np.real(np.trace(red[np.ix_(sel, sel)])) == pytest.approx(
            np.sum(np.abs(psi[sel]) ** 2), abs=1e-10
        )


def test_filling_symmetry_of_error():
    errs = {}
    for n_s in (1, 3):
        p = DsbcParams(N=4, delta_a=1.0, g=0.05, kappa=0.05, n_s=n_s, boson_levels=3)
        rho = final_state(build_dsbc_model(p), build_initial_state(p), 200.0)
        errs[n_s] = 1 - fidelity(rho, target_state(p, "ground"))
    assert errs[1] == pytest.approx(errs[3], abs=1e-9)


def test_fully_polarized_sector_is_stationary():
    p = DsbcParams(N=3, delta_a=1.0, g=0.05, kappa=0.05, n_s=3, boson_levels=3)
    model = build_dsbc_model(p)
    rho = final_state(model, build_initial_state(p), 500.0)
    assert fidelity(rho, target_state(p, "ground")) == pytest.approx(1, abs=1e-12)


def test_fidelity_checks_space():
    with pytest.raises(ValueError):
        fidelity(DensityMatrix.maximally_mixed(SpaceSpec(2)), StateVector(SpaceSpec(1), [1, 0]))
    rho = DensityMatrix.maximally_mixed(SpaceSpec(1, 2))
    assert fidelity(rho, StateVector(SpaceSpec(1), [1, 0])) == pytest.approx(0.5)
