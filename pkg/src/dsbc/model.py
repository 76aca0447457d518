"""Builders for the damped spin-boson chain and its variants.

All energies and rates are in units of the nearest-neighbour coupling ``J``.

The oscillator damping is written in the literature as
``kappa (a rho a^dag - a^dag a rho) + h.c.``; in standard Lindblad form
``gamma (L rho L^dag - {L^dag L, rho}/2)`` this is a jump ``a`` with rate
``gamma = 2 kappa``.  :class:`LindbladModel` always stores standard rates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .operators import (
    HERMITIAN_TOL,
    DensityMatrix,
    SectorError,
    SpaceSpec,
    SparseOp,
    StateVector,
    bitstring_to_index,
    boson_matrix,
    conservation_error,
    lift_spin_op,
    sector_project,
)

__all__ = [
    "DsbcParams",
    "LindbladModel",
    "SpinCouplingMatrix",
    "cosine_modulation",
    "nearest_neighbour_couplings",
    "build_xy_hamiltonian",
    "build_general_spin_hamiltonian",
    "build_spin_boson_coupling",
    "build_dsbc_model",
    "build_initial_state",
    "boson_only_model",
    "spin_state_vector",
]


def cosine_modulation(n_spins: int, q_g: float | None = None) -> np.ndarray:
    """Site profile ``cos(q_g i)`` for ``i = 1..N``; default ``q_g = pi/(N+1)``."""
    if q_g is None:
        q_g = np.pi / (n_spins + 1)
    return np.cos(q_g * np.arange(1, n_spins + 1))


@dataclass(frozen=True)
class DsbcParams:
    """Parameters of a damped spin-boson chain.

    Parameters
    ----------
    N : int
        Number of spins.
    delta_a : float
        Oscillator detuning; positive values select cooling transitions.
    g : float
        Spin-boson coupling amplitude.
    kappa : float
        Oscillator damping rate (literature convention, standard rate is ``2 kappa``).
    J : float
        Nearest-neighbour XY coupling, 1 by default.
    boson_levels : int
        Oscillator truncation.
    n_s : int or None
        Excitation sector to work in, or None for the full spin space.
    q_g : float or None
        Modulation wavevector of the default cosine profile.
    modulation : callable or None
        Alternative site profile ``f(N) -> array``; ``g_i = g * f(N)[i]``.
    couplings : sequence or None
        Explicit (possibly complex) ``g_i``; overrides ``g``/``modulation``.
    edge_field : float
        Transverse field on the two edge spins in units of ``J``.  The W-like
        variant uses ``edge_field=1``, i.e. ``-(J/2)(sigma^z_1 + sigma^z_N)``.
    field : float
        Homogeneous transverse field ``mu``, adding ``-(mu/2) sum_i sigma^z_i``.
    """

    N: int
    delta_a: float
    g: float
    kappa: float
    J: float = 1.0
    boson_levels: int = 3
    n_s: int | None = 1
    q_g: float | None = None
    modulation: Callable[[int], np.ndarray] | None = field(default=None, compare=False)
    couplings: Sequence[complex] | None = field(default=None, compare=False)
    edge_field: float = 0.0
    field: float = 0.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if self.boson_levels < 2:
            raise ValueError("boson_levels must be at least 2")
        if self.n_s is not None and not 0 <= self.n_s <= self.N:
            raise ValueError("n_s outside [0, N]")
        if self.couplings is not None and len(self.couplings) != self.N:
            raise ValueError("couplings must have one entry per spin")

    @property
    def space(self) -> SpaceSpec:
        return SpaceSpec(self.N, self.boson_levels, self.n_s)

    @property
    def spin_space(self) -> SpaceSpec:
        return SpaceSpec(self.N, 0, self.n_s)

    @property
    def g_i(self) -> np.ndarray:
        if self.couplings is not None:
            return np.asarray(self.couplings, dtype=complex)
        if self.modulation is not None:
            profile = np.asarray(self.modulation(self.N), dtype=float)
        else:
            profile = cosine_modulation(self.N, self.q_g)
        return self.g * profile

    @property
    def transverse_fields(self) -> np.ndarray:
        mu = np.full(self.N, self.field * self.J, dtype=float)
        mu[0] += self.edge_field * self.J
        mu[-1] += self.edge_field * self.J
        return mu

    def replace(self, **changes) -> "DsbcParams":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian plus ``(rate, L)`` pairs in standard Lindblad form."""

    H: SparseOp
    jumps: tuple[tuple[float, SparseOp], ...] = ()

    def __post_init__(self):
        jumps = tuple((float(r), L) for r, L in self.jumps)
        object.__setattr__(self, "jumps", jumps)
        err = self.H.hermiticity_error()
        if err > HERMITIAN_TOL:
            raise ValueError(f"Hamiltonian not Hermitian (error {err:.3g})")
        for rate, L in jumps:
            if rate < 0:
                raise ValueError("jump rates must be non-negative")
            if L.space != self.H.space:
                raise ValueError("jump operator lives on a different space")

    @property
    def space(self) -> SpaceSpec:
        return self.H.space

    def conserves_excitations(self, tol: float = 1e-12) -> bool:
        if self.space.sector is not None:
            return True
        ops = [self.H] + [L for _, L in self.jumps]
        return all(conservation_error(op) <= tol for op in ops)

    def project(self, n_s: int) -> "LindbladModel":
        """Restrict an excitation-conserving model to one sector."""
        return LindbladModel(
            sector_project(self.H, n_s),
            tuple((r, sector_project(L, n_s)) for r, L in self.jumps),
        )


@dataclass(frozen=True, eq=False)
class SpinCouplingMatrix:
    """Pair couplings of ``sum_{i<j} Jx_ij sx_i sx_j + Jy_ij sy_i sy_j``.

    Each unordered pair is counted once, so an isotropic pair with
    ``Jx = Jy = c`` hops with amplitude ``2c``.
    """

    Jx: np.ndarray
    Jy: np.ndarray

    def __post_init__(self):
        for name in ("Jx", "Jy"):
            m = np.array(getattr(self, name), dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError(f"{name} must be square")
            if not np.allclose(m, m.T, atol=1e-14, rtol=0):
                raise ValueError(f"{name} must be symmetric")
            if np.any(np.diag(m) != 0):
                raise ValueError(f"{name} must have zero diagonal")
            m.setflags(write=False)
            object.__setattr__(self, name, m)
        if self.Jx.shape != self.Jy.shape:
            raise ValueError("Jx and Jy differ in shape")

    @property
    def n_spins(self) -> int:
        return self.Jx.shape[0]

    def is_isotropic(self, tol: float = 0.0) -> bool:
        return bool(np.max(np.abs(self.Jx - self.Jy), initial=0.0) <= tol)

    def anisotropy(self) -> float:
        """Largest ``(Jx - Jy)/(Jx + Jy)`` over the coupled pairs."""
        tot = self.Jx + self.Jy
        mask = np.abs(tot) > 0
        if not mask.any():
            return 0.0
        ratio = (self.Jx - self.Jy)[mask] / tot[mask]
        return float(ratio[np.argmax(np.abs(ratio))])

    @classmethod
    def isotropic(cls, J: np.ndarray, anisotropy: float = 0.0) -> "SpinCouplingMatrix":
        """``Jx = J (1 + a)``, ``Jy = J (1 - a)`` so that ``(Jx-Jy)/(Jx+Jy) = a``."""
        J = np.asarray(J, dtype=float)
        return cls(J * (1.0 + anisotropy), J * (1.0 - anisotropy))


def nearest_neighbour_couplings(n_spins: int, J: float = 1.0) -> SpinCouplingMatrix:
    """Pair couplings ``J/2`` reproducing the hopping ``J (s+ s- + h.c.)``."""
    m = np.zeros((n_spins, n_spins))
    idx = np.arange(n_spins - 1)
    m[idx, idx + 1] = m[idx + 1, idx] = J / 2
    return SpinCouplingMatrix(m, m.copy())


# -- spin-factor operators (unsectored, no boson) ------------------------------

_UP_DOWN = sp.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex))
_SZ = sp.csr_matrix(np.diag([1.0, -1.0]).astype(complex))
_SX = sp.csr_matrix(np.array([[0, 1], [1, 0]], dtype=complex))
_SY = sp.csr_matrix(np.array([[0, -1j], [1j, 0]], dtype=complex))


def _local(n_spins: int, ops: dict[int, sp.csr_matrix]) -> sp.csr_matrix:
    out = sp.identity(1, dtype=complex, format="csr")
    eye = sp.identity(2, dtype=complex, format="csr")
    for k in range(n_spins):
        out = sp.kron(out, ops.get(k, eye), format="csr")
    return out


def _hopping(n_spins: int, i: int, j: int) -> sp.csr_matrix:
    """``s+_i s-_j + s-_i s+_j`` on the full spin space."""
    m = _local(n_spins, {i: _UP_DOWN, j: _UP_DOWN.T.tocsr()})
    return (m + m.conj().T).tocsr()


def _finish(spin_matrix: sp.csr_matrix, space: SpaceSpec, truncate: bool = False) -> SparseOp:
    """Project a full-spin-space matrix to ``space`` and lift it onto the boson."""
    op = SparseOp(SpaceSpec(space.n_spins), spin_matrix)
    if space.sector is not None:
        op = sector_project(op, space.sector, truncate=truncate)
    return lift_spin_op(op, space)


def _field_term(n_spins: int, mu: np.ndarray) -> sp.csr_matrix:
    out = sp.csr_matrix((2**n_spins, 2**n_spins), dtype=complex)
    for i, m in enumerate(mu):
        if m != 0:
            out = out - (m / 2) * _local(n_spins, {i: _SZ})
    return out


def build_xy_hamiltonian(params: DsbcParams, space: SpaceSpec | None = None) -> SparseOp:
    """Open XY chain ``sum_i J (s+_i s-_{i+1} + h.c.)`` plus transverse fields.

    The operator lives on ``params.space`` unless another space with the same
    spin count is given (e.g. the spin-only factor).
    """
    space = params.space if space is None else space
    N = params.N
    m = sp.csr_matrix((2**N, 2**N), dtype=complex)
    for i in range(N - 1):
        m = m + params.J * _hopping(N, i, i + 1)
    m = m + _field_term(N, params.transverse_fields)
    return _finish(m, space)


def build_general_spin_hamiltonian(
    coupling: SpinCouplingMatrix,
    transverse_field: Sequence[float] | None = None,
    space: SpaceSpec | None = None,
) -> SparseOp:
    """``sum_{i<j} (Jx sx sx + Jy sy sy) - sum_i (mu_i/2) sz_i``.

    Raises :class:`SectorError` when a sectored space is requested for an
    anisotropic coupling, which does not conserve the excitation number.
    """
    N = coupling.n_spins
    space = SpaceSpec(N) if space is None else space
    if space.n_spins != N:
        raise ValueError("space and coupling matrix disagree on n_spins")
    if space.sector is not None and not coupling.is_isotropic():
        raise SectorError(
            "anisotropic XY couplings mix excitation sectors; use an unsectored space"
        )
    m = sp.csr_matrix((2**N, 2**N), dtype=complex)
    for i in range(N):
        for j in range(i + 1, N):
            jx, jy = coupling.Jx[i, j], coupling.Jy[i, j]
            if jx == 0 and jy == 0:
                continue
            if jx == jy:
                m = m + 2 * jx * _hopping(N, i, j)
            else:
                m = m + jx * _local(N, {i: _SX, j: _SX})
                m = m + jy * _local(N, {i: _SY, j: _SY})
    if transverse_field is not None:
        m = m + _field_term(N, np.asarray(transverse_field, dtype=float))
    return _finish(m, space)


def spin_coupling_operator(params: DsbcParams, space: SpaceSpec | None = None) -> SparseOp:
    """``sum_i g_i sigma^z_i`` on the spin factor (real part of complex g_i)."""
    space = params.spin_space if space is None else space
    return _sigma_z_sum(params.N, np.real(params.g_i), space)


def _sigma_z_sum(N: int, coeffs: np.ndarray, space: SpaceSpec) -> SparseOp:
    states = np.arange(2**N)
    diag = np.zeros(2**N, dtype=complex)
    for i, c in enumerate(coeffs):
        if c != 0:
            diag += c * np.where((states >> (N - 1 - i)) & 1, -1.0, 1.0)
    return _finish(sp.diags(diag, format="csr"), space)


def build_spin_boson_coupling(params: DsbcParams) -> SparseOp:
    """``sum_i sigma^z_i (g_i a + g_i^* a^dag)``; for real ``g_i`` this is
    ``sum_i g_i sigma^z_i (a + a^dag)``."""
    space = params.space
    g = params.g_i
    a = boson_matrix(space.boson_levels, "annihilate")
    re = _sigma_z_sum(params.N, g.real, params.spin_space)
    out = SparseOp(space, sp.kron(re.matrix, a + a.T, format="csr"))
    if np.any(g.imag != 0):
        im = _sigma_z_sum(params.N, g.imag, params.spin_space)
        out = out + SparseOp(space, sp.kron(im.matrix, 1j * (a - a.T), format="csr"))
    return out


def build_dsbc_model(
    params: DsbcParams,
    heating_ratio: float = 0.0,
    spin_hamiltonian: SparseOp | None = None,
) -> LindbladModel:
    """Full damped spin-boson chain as a :class:`LindbladModel`.

    Jumps are ``a`` with standard rate ``2 kappa`` and, for a heating ratio
    ``zeta > 0``, ``a^dag`` with rate ``2 zeta kappa``.  ``spin_hamiltonian``
    replaces the nearest-neighbour XY term (e.g. long-range ion couplings);
    it must live on ``params.space``.
    """
    if not 0 <= heating_ratio < 1:
        raise ValueError("heating ratio must satisfy 0 <= zeta < 1")
    space = params.space
    H_s = build_xy_hamiltonian(params) if spin_hamiltonian is None else spin_hamiltonian
    if H_s.space != space:
        raise ValueError("spin Hamiltonian lives on a different space")
    a = SparseOp(
        space,
        sp.kron(
            sp.identity(space.spin_dim, dtype=complex),
            boson_matrix(space.boson_levels, "annihilate"),
            format="csr",
        ),
    )
    H = a.dag() @ a * params.delta_a + H_s + build_spin_boson_coupling(params)
    jumps = []
    if params.kappa > 0:
        jumps.append((2 * params.kappa, a))
        if heating_ratio > 0:
            jumps.append((2 * heating_ratio * params.kappa, a.dag()))
    return LindbladModel(H, tuple(jumps))


def boson_only_model(
    delta_a: float, kappa: float, levels: int, heating_ratio: float = 0.0
) -> LindbladModel:
    """A single damped oscillator (no spins)."""
    space = SpaceSpec(0, levels)
    a = SparseOp(space, boson_matrix(levels, "annihilate"))
    jumps = [(2 * kappa, a)]
    if heating_ratio > 0:
        jumps.append((2 * heating_ratio * kappa, a.dag()))
    return LindbladModel(a.dag() @ a * delta_a, tuple(jumps))


def _pattern(N: int, n_s: int, pattern: str) -> str:
    if pattern in ("left-block", "left"):
        return "u" * n_s + "d" * (N - n_s)
    return pattern


def spin_state_vector(space: SpaceSpec, bits: str) -> StateVector:
    """Product spin state from an up/down pattern, on the spin factor of ``space``."""
    spin_space = space.spin_space()
    v = np.zeros(spin_space.dim, dtype=complex)
    v[bitstring_to_index(bits, spin_space)] = 1.0
    return StateVector(spin_space, v)


def build_initial_state(
    params: DsbcParams,
    n_s: int | None = None,
    pattern: str = "left-block",
    boson_state: int = 0,
) -> DensityMatrix:
    """Product state ``|pattern><pattern| (x) |n><n|``.

    ``pattern`` is ``"left-block"`` (the first ``n_s`` spins up) or an
    explicit up/down string such as ``"udd"``.
    """
    if n_s is None:
        n_s = params.n_s
    if n_s is None:
        if pattern in ("left-block", "left"):
            raise ValueError("left-block pattern needs n_s")
        n_s = sum(ch in "u1" for ch in pattern)
    if params.n_s is not None and n_s != params.n_s:
        raise SectorError(f"n_s={n_s} differs from the model sector {params.n_s}")
    if not 0 <= n_s <= params.N:
        raise ValueError("n_s outside [0, N]")
    bits = _pattern(params.N, n_s, pattern)
    if sum(ch in "u1" for ch in bits) != n_s:
        raise SectorError(f"pattern {bits!r} does not carry {n_s} excitations")
    space = params.space
    spin = spin_state_vector(space, bits).data
    boson = np.zeros(space.boson_dim, dtype=complex)
    boson[boson_state] = 1.0
    psi = StateVector(space, np.kron(spin, boson))
    return DensityMatrix.from_state(psi)
