"""Spin-wave ladder, structured-reservoir rates and the effective spin master equation.

For ``|g| << kappa`` the damped oscillator can be eliminated, leaving a
Lindblad equation on the spins whose jump operators move excitations one rung
along the spin-wave ladder.  Rates follow the Lorentzian spectral density

    J_a(w) = (kappa/pi) |g|^2 / (kappa^2 + (w - delta_a)^2)

so downward jumps of energy ``D`` are weighted by ``2 pi J_a(D)`` and upward
ones by ``2 pi J_a(-D)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .model import DsbcParams, LindbladModel, build_xy_hamiltonian, spin_coupling_operator
from .operators import SectorError, SpaceSpec, SparseOp, StateVector, sector_project, sector_project_state

__all__ = [
    "SpinWaveBasis",
    "TransitionGroup",
    "EffectiveModel",
    "GroupingError",
    "spin_wave_energies",
    "spin_wave_state",
    "w_like_state",
    "transition_frequencies",
    "group_transitions",
    "spectral_density",
    "ladder_ratio",
    "single_excitation_ladder",
    "fermionic_ladder_operators",
    "xy_ground_state",
    "chemical_potential_for_filling",
    "build_effective_model",
    "target_state",
]


class GroupingError(ValueError):
    """Transition frequencies cannot be partitioned at the requested tolerance."""


def spin_wave_energies(N: int, J: float = 1.0) -> np.ndarray:
    """``eps_n = 2 J cos(pi n / (N+1))`` for ``n = 1..N`` (descending for J > 0)."""
    n = np.arange(1, N + 1)
    return 2 * J * np.cos(np.pi * n / (N + 1))


def _mode_amplitudes(N: int, n: int) -> np.ndarray:
    q = np.pi * n / (N + 1)
    return np.sqrt(2.0 / (N + 1)) * np.sin(q * np.arange(1, N + 1))


@dataclass(frozen=True)
class SpinWaveBasis:
    """Single-excitation eigenbasis of the open XY chain."""

    N: int
    J: float = 1.0

    @property
    def wavevectors(self) -> np.ndarray:
        return np.pi * np.arange(1, self.N + 1) / (self.N + 1)

    @property
    def energies(self) -> np.ndarray:
        return spin_wave_energies(self.N, self.J)

    @property
    def modes(self) -> np.ndarray:
        """Column ``n-1`` holds the site amplitudes of ``|q_n>``."""
        return np.column_stack([_mode_amplitudes(self.N, n) for n in range(1, self.N + 1)])

    @property
    def transitions(self) -> np.ndarray:
        return transition_frequencies(self.energies)


def spin_wave_state(N: int, n: int) -> StateVector:
    """``|q_n> = sqrt(2/(N+1)) sum_i sin(q_n i) |i>`` in the one-excitation sector."""
    if not 1 <= n <= N:
        raise IndexError(f"spin-wave index {n} outside [1, {N}]")
    return StateVector.normalized(SpaceSpec(N, 0, 1), _mode_amplitudes(N, n))


def w_like_state(N: int) -> StateVector:
    """``(|1> - |2> + |3> - ...)/sqrt(N)``, the ground state of the edge-field chain."""
    if N < 2:
        raise ValueError("W-like state needs N >= 2")
    signs = (-1.0) ** np.arange(N)
    return StateVector.normalized(SpaceSpec(N, 0, 1), signs)


def transition_frequencies(energies: Sequence[float]) -> np.ndarray:
    """Gaps ``Delta_n = eps_n - eps_{n+1}`` between neighbouring levels."""
    e = np.asarray(energies, dtype=float)
    if np.any(np.diff(e) > 0):
        raise ValueError("energies must be sorted in descending order")
    return e[:-1] - e[1:]


@dataclass(frozen=True, eq=False)
class TransitionGroup:
    """Degenerate transitions sharing one frequency.

    ``members`` holds the 1-based ladder indices ``n``; ``plus`` climbs and
    ``minus`` descends the ladder once operators have been attached.
    """

    frequency: float
    members: tuple[int, ...]
    plus: SparseOp | None = None
    minus: SparseOp | None = None


def group_transitions(deltas: Sequence[float], tol: float = 1e-9) -> list[TransitionGroup]:
    """Partition frequencies into groups of (numerically) equal values.

    Groups are sorted by frequency.  A chain of nearby values that spans more
    than ``tol`` cannot be split unambiguously and raises :class:`GroupingError`.
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    d = np.asarray(deltas, dtype=float)
    order = np.argsort(d, kind="stable")
    groups: list[list[int]] = []
    for k in order:
        if groups and d[k] - d[groups[-1][-1]] <= tol:
            groups[-1].append(k)
        else:
            groups.append([k])
    out = []
    for members in groups:
        vals = d[members]
        if vals.max() - vals.min() > tol:
            raise GroupingError(
                f"frequencies {np.sort(vals)} chain together beyond tol={tol}; "
                "choose a different tolerance"
            )
        out.append(
            TransitionGroup(float(vals.mean()), tuple(int(m) + 1 for m in sorted(members)))
        )
    return out


def spectral_density(omega, g: complex, kappa: float, delta_a: float):
    """Lorentzian ``(kappa/pi) |g|^2 / (kappa^2 + (omega - delta_a)^2)``."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    omega = np.asarray(omega, dtype=float)
    out = (kappa / np.pi) * abs(g) ** 2 / (kappa**2 + (omega - delta_a) ** 2)
    return float(out) if out.ndim == 0 else out


def ladder_ratio(n: int, delta_a: float, kappa: float, deltas: Sequence[float]) -> float:
    """``r_n = |xi_n^+| / |xi_n^-|`` with ``xi_n^pm = kappa / (kappa + i(delta_a pm Delta_n))``.

    ``r_n -> 0`` when ``delta_a ~ +Delta_n`` (descending jumps dominate) and
    ``r_n -> inf`` when ``delta_a ~ -Delta_n``.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    dn = float(deltas[n - 1])
    up = abs(kappa / (kappa + 1j * (delta_a + dn)))
    down = abs(kappa / (kappa + 1j * (delta_a - dn)))
    return up / down


# -- ladder operators ----------------------------------------------------------

def single_excitation_ladder(N: int) -> list[SparseOp]:
    """``L_n^+ = |q_n><q_{n+1}|`` for ``n = 1..N-1`` in the one-excitation sector."""
    space = SpaceSpec(N, 0, 1)
    modes = SpinWaveBasis(N).modes
    return [
        SparseOp(space, np.outer(modes[:, n - 1], modes[:, n]))
        for n in range(1, N)
    ]


def _fermion_annihilators(N: int) -> list[sp.csr_matrix]:
    """Jordan-Wigner ``c_i = prod_{j<i} (-sigma^z_j) sigma^-_i`` (up = occupied)."""
    minus_z = sp.csr_matrix(np.diag([-1.0, 1.0]).astype(complex))
    lower = sp.csr_matrix(np.array([[0, 0], [1, 0]], dtype=complex))
    eye = sp.identity(2, dtype=complex, format="csr")
    out = []
    for i in range(N):
        m = sp.identity(1, dtype=complex, format="csr")
        for k in range(N):
            m = sp.kron(m, minus_z if k < i else lower if k == i else eye, format="csr")
        out.append(m)
    return out


def _mode_annihilators(N: int) -> list[sp.csr_matrix]:
    """``c_{q_n} = N sum_i sin(q_n i) c_i`` for ``n = 1..N``."""
    sites = _fermion_annihilators(N)
    modes = SpinWaveBasis(N).modes
    return [
        sum((modes[i, n] * sites[i] for i in range(N)), sp.csr_matrix(sites[0].shape, dtype=complex))
        for n in range(N)
    ]


def fermionic_ladder_operators(N: int, n_s: int) -> list[SparseOp]:
    """``L_{f,n}^+ = c^dag_{q_n} c_{q_{n+1}}`` restricted to the ``n_s`` sector."""
    cq = _mode_annihilators(N)
    full = SpaceSpec(N)
    return [
        sector_project(SparseOp(full, cq[n - 1].conj().T @ cq[n]), n_s)
        for n in range(1, N)
    ]


def xy_ground_state(N: int, n_s: int, sign: int = 1) -> StateVector:
    """Many-body ground state of ``H(J, mu)`` at filling ``n_s`` in the sector basis.

    ``sign=+1`` fills the ``n_s`` lowest spin-wave orbitals (``q_N`` downward);
    ``sign=-1`` fills the highest ones, the ground state of ``H(-J, -mu)``.
    """
    if not 0 <= n_s <= N:
        raise ValueError("n_s outside [0, N]")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    cq = _mode_annihilators(N)
    vac = np.zeros(2**N, dtype=complex)
    vac[-1] = 1.0  # all spins down
    orbitals = range(N, N - n_s, -1) if sign == 1 else range(1, n_s + 1)
    psi = vac
    for n in orbitals:
        psi = cq[n - 1].conj().T @ psi
    full = StateVector.normalized(SpaceSpec(N), psi)
    return sector_project_state(full, n_s)


def chemical_potential_for_filling(N: int, n_s: int, J: float = 1.0) -> float:
    """Midpoint ``(eps_{N-n_s+1} + eps_{N-n_s})/2`` of the levels at the Fermi edge."""
    if not 1 <= n_s <= N - 1:
        raise ValueError("filling must lie in [1, N-1] to straddle two levels")
    eps = spin_wave_energies(N, J)
    return 0.5 * (eps[N - n_s] + eps[N - n_s - 1])


def target_state(params: DsbcParams, kind: str = "ground") -> StateVector:
    """Stationary target in the spin sector of ``params``.

    ``kind`` is ``"ground"`` (cooling target, ``|q_N>`` for one excitation),
    ``"highest"`` (heating target), or ``"w"`` (W-like state).
    """
    n_s = params.n_s
    if n_s is None:
        raise ValueError("targets are defined per excitation sector")
    if kind == "w":
        if n_s != 1:
            raise SectorError("the W-like target lives in the one-excitation sector")
        return w_like_state(params.N)
    if kind in ("ground", "highest"):
        return xy_ground_state(params.N, n_s, 1 if kind == "ground" else -1)
    raise ValueError(f"unknown target kind {kind!r}")


# -- effective master equation -------------------------------------------------

@dataclass(frozen=True, eq=False)
class EffectiveModel:
    """Boson-free spin model: ``H_eff`` plus ``(weight, jump)`` terms."""

    H_eff: SparseOp
    terms: tuple[tuple[float, SparseOp], ...]
    groups: tuple[TransitionGroup, ...] = ()

    def to_lindblad(self) -> LindbladModel:
        return LindbladModel(self.H_eff, self.terms)

    def with_equal_weights(self, weight: float | None = None) -> "EffectiveModel":
        """Flat-spectrum limit: every jump gets the same weight (default: their mean)."""
        if weight is None:
            weight = float(np.mean([w for w, _ in self.terms])) if self.terms else 0.0
        return EffectiveModel(self.H_eff, tuple((weight, L) for _, L in self.terms), self.groups)


def _lamb_coefficient(omega: float, kappa: float, delta_a: float) -> float:
    # imaginary part of the one-sided bath correlation, per unit |g|^2
    return (omega - delta_a) / (kappa**2 + (omega - delta_a) ** 2)


def build_effective_model(
    params: DsbcParams,
    n_s: int | None = None,
    tol: float = 1e-9,
    lamb_shift: bool = True,
    method: str = "ladder",
) -> EffectiveModel:
    """Adiabatically eliminate the damped oscillator.

    ``method="ladder"`` uses the collective spin-wave jump operators, valid
    for the default ``cos(pi i/(N+1))`` modulation without edge fields.
    ``method="secular"`` decomposes the actual coupling operator in the
    eigenbasis of the spin Hamiltonian and works for any modulation or field.
    """
    n_s = params.n_s if n_s is None else n_s
    if n_s is None:
        raise ValueError("the effective model is built per excitation sector")
    if params.kappa <= 0:
        raise ValueError("kappa must be positive")
    if abs(params.g) > 0.5 * params.kappa:
        warnings.warn(
            "effective model assumes |g| << kappa; results may be inaccurate",
            stacklevel=2,
        )
    p = params.replace(n_s=n_s)
    if method == "ladder":
        return _ladder_model(p, tol, lamb_shift)
    if method == "secular":
        return _secular_model(p, tol, lamb_shift)
    raise ValueError(f"unknown method {method!r}")


def _ladder_model(params: DsbcParams, tol: float, lamb_shift: bool) -> EffectiveModel:
    N, n_s = params.N, params.n_s
    space = params.spin_space
    H = build_xy_hamiltonian(params, space)
    if N < 2 or n_s in (0, N):
        return EffectiveModel(H, ())
    raising = single_excitation_ladder(N) if n_s == 1 else fermionic_ladder_operators(N, n_s)
    deltas = transition_frequencies(spin_wave_energies(N, params.J))
    g2 = abs(params.g) ** 2
    terms = []
    groups = []
    for grp in group_transitions(deltas, tol):
        plus = SparseOp.zeros(space)
        for n in grp.members:
            plus = plus + raising[n - 1]
        minus = plus.dag()
        groups.append(TransitionGroup(grp.frequency, grp.members, plus, minus))
        w = grp.frequency
        down = 2 * np.pi * spectral_density(w, params.g, params.kappa, params.delta_a)
        up = 2 * np.pi * spectral_density(-w, params.g, params.kappa, params.delta_a)
        terms.append((down, minus))
        terms.append((up, plus))
        if lamb_shift:
            H = H + (plus @ minus) * (g2 * _lamb_coefficient(w, params.kappa, params.delta_a))
            H = H + (minus @ plus) * (g2 * _lamb_coefficient(-w, params.kappa, params.delta_a))
    H = (H + H.dag()) * 0.5
    return EffectiveModel(H, tuple(terms), tuple(groups))


def _secular_model(params: DsbcParams, tol: float, lamb_shift: bool) -> EffectiveModel:
    space = params.spin_space
    H = build_xy_hamiltonian(params, space)
    S = spin_coupling_operator(params, space).toarray()
    energies, vecs = np.linalg.eigh(H.toarray())
    S_eig = vecs.conj().T @ S @ vecs
    # omega_ab = E_b - E_a: energy released by the jump |a><b|
    omega = energies[None, :] - energies[:, None]
    mask = np.abs(S_eig) > 1e-14
    freqs = omega[mask]
    terms = []
    H_out = H
    for grp in group_transitions(freqs, tol) if freqs.size else []:
        sel = mask & (np.abs(omega - grp.frequency) <= max(tol, 1e-12))
        A = vecs @ np.where(sel, S_eig, 0) @ vecs.conj().T
        op = SparseOp(space, A)
        rate = 2 * params.kappa / (params.kappa**2 + (grp.frequency - params.delta_a) ** 2)
        terms.append((rate, op))
        if lamb_shift:
            H_out = H_out + (op.dag() @ op) * _lamb_coefficient(
                grp.frequency, params.kappa, params.delta_a
            )
    H_out = (H_out + H_out.dag()) * 0.5
    return EffectiveModel(H_out, tuple(terms))
