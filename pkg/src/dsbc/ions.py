"""Trapped-ion realization of the damped spin-boson chain.

Lengths are measured in ``ell = (e^2 / 4 pi eps0 m omega_z^2)^(1/3)`` with
``m`` the system-ion mass, so the axial potential reads
``V = sum_i z_i^2 / 2 + sum_{i<j} 1/|z_i - z_j|`` in units of ``m omega_z^2 ell^2``.
Laboratory frequencies are ordinary frequencies in kHz; the common ``2 pi``
drops out of every quantity handed to the chain model, which is expressed in
units of the mean nearest-neighbour hopping between system ions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants

from .model import DsbcParams, LindbladModel, SpinCouplingMatrix, build_dsbc_model, build_general_spin_hamiltonian
from .operators import SpaceSpec, StateVector, sector_embed_state
from .spinwave import xy_ground_state

logger = logging.getLogger(__name__)

__all__ = [
    "IonChainConfig",
    "IonChainDerived",
    "ChainInstabilityError",
    "ResonanceError",
    "IonDsbc",
    "equilibrium_positions",
    "normal_modes",
    "spin_couplings",
    "axial_force",
    "derive",
    "build_ion_dsbc_model",
    "tune_axial",
    "balance_raman",
    "length_scale_um",
    "dipolar_exponent",
    "derived_report",
]

NEWTON_TOL = 1e-12
FORCE_VALIDITY_WARN = 0.1
GAP_WARN = 0.2


class ChainInstabilityError(ValueError):
    """The linear crystal is not a stable configuration."""


class ResonanceError(ValueError):
    """A Raman beatnote sits exactly on a motional mode."""


@dataclass(frozen=True)
class IonChainConfig:
    """Laboratory inputs of the trapped-ion chain.

    Trap, Raman and axial frequencies are ordinary frequencies in kHz.
    ``raman_detuning_*`` is the beatnote detuning from the transverse
    centre-of-mass sideband, so mode ``n`` sees ``delta + omega_n - omega_com``.
    ``k_z`` is the axial wavevector in units of ``1/ell``; ``None`` fits it so
    that the system ions sample ``pi i/(N+1)``.
    """

    n_system: int = 4
    n_cool: int = 2
    cool_sites: tuple[int, ...] | None = None
    mass: float = 171.0
    cool_mass: float | None = None
    trap_x: float = 10_000.0
    trap_y: float = 10_500.0
    trap_z: float = 1_000.0
    eta_x: float = 0.1
    eta_y: float = 0.1
    eta_z: float = 0.1
    rabi_x: float = 5_000.0
    rabi_y: float = 5_000.0
    raman_detuning_x: float = 10_000.0
    raman_detuning_y: float = 10_000.0
    rabi_z: float = 10.0
    k_z: float | None = None
    phi_z: float | None = None
    axial_detuning: float = 1.0
    wave: str = "standing"
    cooling_rate: float = 0.15
    heating_ratio: float = 0.0

    def __post_init__(self):
        if self.n_system < 1 or self.n_cool < 0:
            raise ValueError("need at least one system ion and a non-negative cooling count")
        for name in ("mass", "trap_x", "trap_y", "trap_z", "eta_x", "eta_y", "eta_z"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.cool_mass is not None and not self.cool_mass > 0:
            raise ValueError("cool_mass must be positive")
        if self.trap_x == self.trap_y:
            raise ValueError("transverse trap frequencies must differ")
        if not 0 <= self.heating_ratio < 1:
            raise ValueError("heating ratio must satisfy 0 <= zeta < 1")
        if self.cooling_rate < 0:
            raise ValueError("cooling rate must be non-negative")
        if self.wave not in ("standing", "traveling"):
            raise ValueError("wave must be 'standing' or 'traveling'")
        sites = self.cooling_sites
        if len(set(sites)) != self.n_cool or any(not 0 <= s < self.n_total for s in sites):
            raise ValueError("cooling sites must be distinct chain positions")

    @property
    def n_total(self) -> int:
        return self.n_system + self.n_cool

    @property
    def cooling_sites(self) -> tuple[int, ...]:
        """Chain positions (0-based, left to right) of the cooling ions."""
        if self.cool_sites is not None:
            return tuple(sorted(self.cool_sites))
        left = (self.n_cool + 1) // 2
        right = self.n_cool - left
        return tuple(range(left)) + tuple(range(self.n_total - right, self.n_total))

    @property
    def system_sites(self) -> tuple[int, ...]:
        cool = set(self.cooling_sites)
        return tuple(i for i in range(self.n_total) if i not in cool)

    @property
    def relative_masses(self) -> np.ndarray:
        mu = np.ones(self.n_total)
        if self.cool_mass is not None:
            mu[list(self.cooling_sites)] = self.cool_mass / self.mass
        return mu

    def replace(self, **changes) -> "IonChainConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Frequencies (kHz) and mass-weighted orthonormal mode columns of one axis."""

    frequencies: np.ndarray
    vectors: np.ndarray


@dataclass(frozen=True, eq=False)
class IonChainDerived:
    positions: np.ndarray
    modes: dict[str, ModeSet]
    lamb_dicke: dict[str, np.ndarray]
    couplings_khz: dict[str, np.ndarray]
    J_unit: float
    coupling: SpinCouplingMatrix
    force: np.ndarray
    k_z: float
    phi_z: float
    delta_a: float
    kappa: float
    force_ratio: float
    gap_ratio: float


def length_scale_um(mass_amu: float, trap_z_khz: float) -> float:
    """``ell`` in micrometres for a given ion mass and axial frequency."""
    m = mass_amu * constants.atomic_mass
    w = 2 * np.pi * trap_z_khz * 1e3
    ell = (constants.e**2 / (4 * np.pi * constants.epsilon_0 * m * w**2)) ** (1 / 3)
    return ell * 1e6


# -- crystal ------------------------------------------------------------------

def _gradient(z: np.ndarray) -> np.ndarray:
    d = z[:, None] - z[None, :]
    np.fill_diagonal(d, np.inf)
    return z - np.sum(np.sign(d) / d**2, axis=1)


def _coulomb_curvature(z: np.ndarray) -> np.ndarray:
    """``K_ij = 1/|z_i - z_j|^3`` off the diagonal, zero on it."""
    d = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(d, np.inf)
    return 1.0 / d**3


def _axial_hessian(z: np.ndarray) -> np.ndarray:
    K = _coulomb_curvature(z)
    return np.diag(1.0 + 2.0 * K.sum(axis=1)) - 2.0 * K


def equilibrium_positions(config: IonChainConfig | int, max_iter: int = 100) -> np.ndarray:
    """Axial equilibrium of the linear crystal in units of ``ell``, ascending.

    The static axial confinement is species independent, so only the ion
    count matters.
    """
    n = config if isinstance(config, int) else config.n_total
    if n == 1:
        return np.zeros(1)
    # Uniform-density guess with the known N^{1/3}-ish span, then Newton.
    z = np.linspace(-1.0, 1.0, n) * (0.8 * n ** 0.56 + 0.2)
    for _ in range(max_iter):
        grad = _gradient(z)
        if np.linalg.norm(grad) <= NEWTON_TOL:
            return z
        step = np.linalg.solve(_axial_hessian(z), grad)
        scale = 1.0
        # Damp steps that would reorder ions.
        while np.any(np.diff(z - scale * step) <= 0):
            scale /= 2
        z = z - scale * step
    grad = _gradient(z)
    if np.linalg.norm(grad) <= NEWTON_TOL:
        return z
    raise RuntimeError(f"Newton iteration did not converge (|grad| = {np.linalg.norm(grad):.3g})")


def _mass_weighted_modes(hessian: np.ndarray, mu: np.ndarray, axis: str, descending: bool):
    w = 1.0 / np.sqrt(mu)
    vals, vecs = np.linalg.eigh(hessian * w[:, None] * w[None, :])
    if vals[0] <= 0:
        bad = int(np.argmin(vals))
        raise ChainInstabilityError(
            f"{axis} mode {bad} has squared frequency {vals[bad]:.3g}: linear chain unstable"
        )
    order = np.argsort(vals)[::-1] if descending else np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    # Fix the sign so the largest component of each mode is positive.
    signs = np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])])
    return np.sqrt(vals), vecs * signs


def normal_modes(config: IonChainConfig, positions: np.ndarray | None = None) -> dict[str, ModeSet]:
    """Normal modes along ``x``, ``y`` (descending) and ``z`` (ascending)."""
    z = equilibrium_positions(config) if positions is None else np.asarray(positions, float)
    mu = config.relative_masses
    K = _coulomb_curvature(z)
    out = {}
    freq, vecs = _mass_weighted_modes(_axial_hessian(z), mu, "z", descending=False)
    out["z"] = ModeSet(freq * config.trap_z, vecs)
    for axis, trap in (("x", config.trap_x), ("y", config.trap_y)):
        # Radial pseudopotential stiffness scales as 1/m.
        beta2 = (trap / config.trap_z) ** 2 / mu
        T = np.diag(beta2 - K.sum(axis=1)) + K
        freq, vecs = _mass_weighted_modes(T, mu, axis, descending=True)
        out[axis] = ModeSet(freq * config.trap_z, vecs)
    return out


def _lamb_dicke(config: IonChainConfig, axis: str, modes: ModeSet) -> np.ndarray:
    """``eta_in``: Lamb-Dicke factor of ion ``i`` in mode ``n`` including the mode amplitude."""
    eta = getattr(config, f"eta_{axis}")
    trap = getattr(config, f"trap_{axis}")
    mu = config.relative_masses
    return eta * np.sqrt(trap / modes.frequencies)[None, :] * modes.vectors / np.sqrt(mu)[:, None]


def _axis_couplings(eta_in: np.ndarray, freqs: np.ndarray, rabi: float, detuning: float):
    """``J_ij = -sum_n F_in F_jn^* / delta_n`` with ``F_in = (i/2) eta_in Omega``.

    Returns the coupling matrix (kHz, zero diagonal) and the largest
    ``|F_in| / |delta_n|`` ratio.
    """
    deltas = detuning + freqs - freqs[0]
    if np.any(deltas == 0):
        raise ResonanceError("Raman beatnote resonant with a motional mode")
    F = 0.5j * eta_in * rabi
    J = -np.real((F / deltas[None, :]) @ F.conj().T)
    np.fill_diagonal(J, 0.0)
    ratio = float(np.max(np.abs(F) / np.abs(deltas)[None, :]))
    return 0.5 * (J + J.T), ratio


def spin_couplings(config: IonChainConfig, modes: dict[str, ModeSet] | None = None):
    """Physical ``J^x``, ``J^y`` (kHz) between system ions.

    The convention is the ordered double sum ``sum_{i,j} J_ij tau_i tau_j``.
    Returns ``(Jx, Jy, validity_ratio)``.
    """
    modes = normal_modes(config) if modes is None else modes
    sys_idx = list(config.system_sites)
    out, ratio = [], 0.0
    for axis in ("x", "y"):
        eta = _lamb_dicke(config, axis, modes[axis])
        J, r = _axis_couplings(
            eta, modes[axis].frequencies,
            getattr(config, f"rabi_{axis}"), getattr(config, f"raman_detuning_{axis}"),
        )
        out.append(J[np.ix_(sys_idx, sys_idx)])
        ratio = max(ratio, r)
    if ratio > FORCE_VALIDITY_WARN:
        logger.warning("state-dependent force not small against detuning (ratio %.3g)", ratio)
    return out[0], out[1], ratio


def _fit_wave(positions: np.ndarray, sys_idx: list[int]) -> tuple[float, float]:
    """Least-squares ``k, phase`` with ``k z_i - phase ~ pi i/(N+1)`` over system ions."""
    z = positions[sys_idx]
    n = len(sys_idx)
    target = np.pi * np.arange(1, n + 1) / (n + 1)
    if n == 1:
        return 0.0, -target[0]
    k, c = np.polyfit(z, target, 1)
    return float(k), float(-c)


def axial_force(config: IonChainConfig, positions: np.ndarray, modes: dict[str, ModeSet]):
    """Centre-of-mass force on the system ions, in kHz, plus ``(k_z, phi_z)``.

    Standing wave: ``F_i = (1/2) eta_1z Omega_z M_i1 sin(phi_z - k z_i)``, with
    ``phi_z`` chosen so that ``sin(phi_z - k z_i) = cos(k z_i - phase)``.
    Traveling wave: uniform magnitude with site phases ``exp(-i (k z_i - phase))``.
    """
    sys_idx = list(config.system_sites)
    k_fit, phase = _fit_wave(positions, sys_idx)
    k = k_fit if config.k_z is None else config.k_z
    phi = phase + np.pi / 2 if config.phi_z is None else config.phi_z
    eta = _lamb_dicke(config, "z", modes["z"])[:, 0]
    amp = 0.5 * eta * config.rabi_z
    if config.wave == "standing":
        F = amp * np.sin(phi - k * positions)
    else:
        F = amp * np.exp(1j * (phi - np.pi / 2 - k * positions))
    return np.asarray(F[sys_idx], dtype=complex), float(k), float(phi)


def derive(config: IonChainConfig) -> IonChainDerived:
    """Run the full crystal-to-chain pipeline."""
    z = equilibrium_positions(config)
    modes = normal_modes(config, z)
    Jx, Jy, ratio = spin_couplings(config, modes)
    n = config.n_system
    if n > 1:
        # Ordered-sum J_ij contributes 4 J_ij to the hopping of each pair.
        nn = np.arange(n - 1)
        J_unit = float(np.mean(2.0 * (Jx[nn, nn + 1] + Jy[nn, nn + 1])))
    else:
        J_unit = 1.0
    if J_unit <= 0:
        raise ValueError("nearest-neighbour hopping is not antiferromagnetic; check detunings")
    coupling = SpinCouplingMatrix(2.0 * Jx / J_unit, 2.0 * Jy / J_unit)
    force, k, phi = axial_force(config, z, modes)
    wz = modes["z"].frequencies
    gap = config.axial_detuning / (wz[1] - wz[0]) if len(wz) > 1 else 0.0
    if gap > GAP_WARN:
        logger.warning("axial detuning is %.3g of the centre-of-mass gap", gap)
    return IonChainDerived(
        positions=z,
        modes=modes,
        lamb_dicke={a: _lamb_dicke(config, a, modes[a]) for a in ("x", "y", "z")},
        couplings_khz={"x": Jx, "y": Jy},
        J_unit=J_unit,
        coupling=coupling,
        force=force,
        k_z=k,
        phi_z=phi,
        delta_a=config.axial_detuning / J_unit,
        kappa=config.cooling_rate / J_unit,
        force_ratio=ratio,
        gap_ratio=float(gap),
    )


def tune_axial(config: IonChainConfig, delta_a: float, g: float, kappa: float) -> IonChainConfig:
    """Set axial detuning, force strength and cooling rate from targets in units of ``J``.

    ``g`` is the peak ``|F_i|`` the force would reach for an ion at the
    antinode, i.e. ``eta_1z Omega_z M_1 / 2`` with ``M_1`` the mean COM amplitude
    of the system ions.
    """
    d = derive(config)
    eta = d.lamb_dicke["z"][list(config.system_sites), 0]
    per_rabi = 0.5 * float(np.mean(np.abs(eta)))
    return config.replace(
        axial_detuning=delta_a * d.J_unit,
        rabi_z=g * d.J_unit / per_rabi,
        cooling_rate=kappa * d.J_unit,
    )


def balance_raman(config: IonChainConfig) -> IonChainConfig:
    """Rescale the ``y`` Rabi frequency so the mean nearest-neighbour ``J^y`` equals ``J^x``."""
    Jx, Jy, _ = spin_couplings(config)
    n = config.n_system
    if n < 2:
        return config
    nn = np.arange(n - 1)
    scale = np.mean(Jx[nn, nn + 1]) / np.mean(Jy[nn, nn + 1])
    return config.replace(rabi_y=config.rabi_y * float(np.sqrt(scale)))


def dipolar_exponent(J: np.ndarray, positions: np.ndarray) -> float:
    """Power-law exponent ``p`` from fitting ``|J_ij| ~ |z_i - z_j|^-p`` over all pairs."""
    i, j = np.triu_indices(J.shape[0], 1)
    dist = np.abs(positions[i] - positions[j])
    slope, _ = np.polyfit(np.log(dist), np.log(np.abs(J[i, j])), 1)
    return float(-slope)


# -- chain model --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IonDsbc:
    """Lindblad model of the ion chain with its target and bookkeeping."""

    model: LindbladModel
    params: DsbcParams
    target: StateVector
    derived: IonChainDerived
    metadata: dict = field(default_factory=dict)


def build_ion_dsbc_model(
    config: IonChainConfig,
    n_s: int,
    boson_levels: int = 5,
    anisotropy: float = 0.0,
    target: str = "ideal",
) -> IonDsbc:
    """Chain model with the dipolar couplings and the centre-of-mass oscillator.

    The raw ``J^x``/``J^y`` are replaced by their mean ``Jbar`` and the
    requested ``anisotropy`` ``a`` is injected as ``Jbar (1 +- a)``; with
    ``a = 0`` the model lives in the ``n_s`` sector, otherwise on the full
    spin space.  ``target`` is ``"ideal"`` (nearest-neighbour XY ground state)
    or ``"dipolar"`` (ground state of the actual isotropic couplings).
    """
    d = derive(config)
    N = config.n_system
    Jbar = 0.5 * (d.coupling.Jx + d.coupling.Jy)
    coupling = SpinCouplingMatrix.isotropic(Jbar, anisotropy)
    sector = n_s if anisotropy == 0 else None
    params = DsbcParams(
        N=N,
        delta_a=d.delta_a,
        g=1.0,
        kappa=d.kappa,
        boson_levels=boson_levels,
        n_s=sector,
        couplings=tuple(d.force / d.J_unit),
    )
    H_s = build_general_spin_hamiltonian(coupling, space=params.space)
    model = build_dsbc_model(params, heating_ratio=config.heating_ratio, spin_hamiltonian=H_s)
    if target == "ideal":
        psi = xy_ground_state(N, n_s)
    elif target == "dipolar":
        h = build_general_spin_hamiltonian(
            SpinCouplingMatrix.isotropic(Jbar), space=SpaceSpec(N, 0, n_s)
        ).toarray()
        _, vecs = np.linalg.eigh(h)
        psi = StateVector.normalized(SpaceSpec(N, 0, n_s), vecs[:, 0])
    else:
        raise ValueError(f"unknown target {target!r}")
    if sector is None:
        psi = sector_embed_state(psi)
    meta = {
        "n_s": n_s,
        "target": target,
        "anisotropy": anisotropy,
        "intrinsic_anisotropy": d.coupling.anisotropy(),
        "mean_phonon_number": config.heating_ratio / (1 - config.heating_ratio),
    }
    return IonDsbc(model, params, psi, d, meta)


def _rounded(x, digits: int = 12):
    a = np.asarray(x)
    if np.iscomplexobj(a):
        if np.all(a.imag == 0):
            a = a.real
        else:
            return {"re": _rounded(a.real, digits), "im": _rounded(a.imag, digits)}
    return np.vectorize(lambda v: float(f"{v:.{digits}g}"), otypes=[float])(a).tolist()


def derived_report(config: IonChainConfig) -> dict:
    """JSON-ready summary of the derived crystal and chain parameters."""
    d = derive(config)
    ell = length_scale_um(config.mass, config.trap_z)
    sys_idx = list(config.system_sites)
    return {
        "units": {"frequency": "kHz", "length": "ell", "ell_um": _rounded(ell)},
        "sites": {"system": sys_idx, "cooling": list(config.cooling_sites)},
        "positions_ell": _rounded(d.positions),
        "positions_um": _rounded(d.positions * ell),
        "modes": {
            axis: {
                "frequencies_khz": _rounded(m.frequencies),
                "vectors": _rounded(m.vectors),
            }
            for axis, m in d.modes.items()
        },
        "couplings_khz": {a: _rounded(J) for a, J in d.couplings_khz.items()},
        "J_unit_khz": _rounded(d.J_unit),
        "hopping_J": _rounded(0.5 * (d.coupling.Jx + d.coupling.Jy) * 2),
        "force_khz": _rounded(d.force),
        "force_J": _rounded(d.force / d.J_unit),
        "k_z_per_ell": _rounded(d.k_z),
        "phi_z": _rounded(d.phi_z),
        "chain": {
            "delta_a": _rounded(d.delta_a),
            "kappa": _rounded(d.kappa),
            "zeta": config.heating_ratio,
            "mean_phonon_number": _rounded(config.heating_ratio / (1 - config.heating_ratio)),
        },
        "monitors": {
            "force_over_detuning": _rounded(d.force_ratio),
            "axial_detuning_over_gap": _rounded(d.gap_ratio),
            "intrinsic_anisotropy": _rounded(d.coupling.anisotropy()),
        },
    }
