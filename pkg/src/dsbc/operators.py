"""Sparse operator algebra over composite spin x boson Hilbert spaces.

Basis ordering
--------------
The spin factor is the most significant factor and the boson factor the
least significant one.  Within the spin factor site 1 (index 0) is the most
significant bit and ``|up>`` has local index 0, so ``sigma_z = diag(+1, -1)``.

A fixed-excitation sector keeps only the spin configurations with ``n_s``
up spins, listed in ascending order of their full-space index (lexicographic
over bitstrings with up = 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Mapping, Sequence, Union

import numpy as np
import scipy.sparse as sp

HERMITIAN_TOL = 1e-10
CONSERVATION_TOL = 1e-12

__all__ = [
    "SpaceSpec",
    "SparseOp",
    "DensityMatrix",
    "StateVector",
    "SectorError",
    "sector_states",
    "bitstring_to_index",
    "index_to_bitstring",
    "pauli_op",
    "boson_op",
    "embed",
    "excitation_number",
    "sector_project",
    "sector_project_state",
    "sector_embed_state",
    "partial_trace_boson",
]


class SectorError(ValueError):
    """Raised when an operator would leave a fixed-excitation sector."""


_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    # |up> = index 0, so sigma^+ = |up><down| sits at (0, 1)
    "plus": np.array([[0, 1], [0, 0]], dtype=complex),
    "minus": np.array([[0, 0], [1, 0]], dtype=complex),
}


@dataclass(frozen=True)
class SpaceSpec:
    """Dimensions of a spin chain optionally tensored with one truncated boson.

    Parameters
    ----------
    n_spins : int
        Number of spin-1/2 sites.
    boson_levels : int
        Truncation of the oscillator; 0 means there is no boson factor.
    sector : int or None
        Fixed number of up spins, or None for the full ``2**n_spins`` space.
    """

    n_spins: int
    boson_levels: int = 0
    sector: int | None = None

    def __post_init__(self):
        if self.n_spins < 0:
            raise ValueError("n_spins must be non-negative")
        if self.boson_levels < 0 or self.boson_levels == 1:
            raise ValueError("boson_levels must be 0 (absent) or >= 2")
        if self.sector is not None and not 0 <= self.sector <= self.n_spins:
            raise ValueError(
                f"sector {self.sector} outside [0, {self.n_spins}]"
            )

    @property
    def spin_dim(self) -> int:
        if self.sector is None:
            return 2**self.n_spins
        return comb(self.n_spins, self.sector)

    @property
    def boson_dim(self) -> int:
        return max(self.boson_levels, 1)

    @property
    def dim(self) -> int:
        return self.spin_dim * self.boson_dim

    @property
    def has_boson(self) -> bool:
        return self.boson_levels > 0

    def spin_space(self) -> "SpaceSpec":
        """The same spin factor without the boson."""
        return SpaceSpec(self.n_spins, 0, self.sector)

    def unsectored(self) -> "SpaceSpec":
        return SpaceSpec(self.n_spins, self.boson_levels, None)

    def with_sector(self, n_s: int | None) -> "SpaceSpec":
        return SpaceSpec(self.n_spins, self.boson_levels, n_s)


def _canonical(matrix) -> sp.csr_matrix:
    m = sp.csr_matrix(matrix, dtype=complex)
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


@dataclass(frozen=True, eq=False)
class SparseOp:
    """Complex sparse matrix tagged with the space it acts on."""

    space: SpaceSpec
    matrix: sp.csr_matrix = field(repr=False)

    def __post_init__(self):
        m = _canonical(self.matrix)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(
                f"matrix shape {m.shape} does not match space dimension "
                f"{self.space.dim}"
            )
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_entries(cls, space: SpaceSpec, entries) -> "SparseOp":
        """Build from ``(row, col, value)`` triplets; duplicates are summed."""
        entries = list(entries)
        if not entries:
            return cls.zeros(space)
        rows, cols, vals = zip(*entries)
        dim = space.dim
        if max(rows) >= dim or max(cols) >= dim or min(rows) < 0 or min(cols) < 0:
            raise IndexError("entry index outside the space dimension")
        m = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=complex)
        return cls(space, m)

    @classmethod
    def identity(cls, space: SpaceSpec) -> "SparseOp":
        return cls(space, sp.identity(space.dim, dtype=complex, format="csr"))

    @classmethod
    def zeros(cls, space: SpaceSpec) -> "SparseOp":
        return cls(space, sp.csr_matrix((space.dim, space.dim), dtype=complex))

    def entries(self) -> list[tuple[int, int, complex]]:
        """Canonical triplets sorted by (row, col)."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [
            (int(coo.row[k]), int(coo.col[k]), complex(coo.data[k]))
            for k in order
        ]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def dag(self) -> "SparseOp":
        return SparseOp(self.space, self.matrix.conj().T)

    def _check(self, other: "SparseOp"):
        if other.space != self.space:
            raise ValueError(f"space mismatch: {self.space} vs {other.space}")

    def __add__(self, other):
        if isinstance(other, SparseOp):
            self._check(other)
            return SparseOp(self.space, self.matrix + other.matrix)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, SparseOp):
            self._check(other)
            return SparseOp(self.space, self.matrix - other.matrix)
        return NotImplemented

    def __neg__(self):
        return SparseOp(self.space, -self.matrix)

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return SparseOp(self.space, self.matrix * scalar)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SparseOp(self.space, self.matrix / scalar)

    def __matmul__(self, other):
        if isinstance(other, SparseOp):
            self._check(other)
            return SparseOp(self.space, self.matrix @ other.matrix)
        return self.matrix @ other

    def commutator(self, other: "SparseOp") -> "SparseOp":
        return self @ other - other @ self

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.matrix.data))) if self.nnz else 0.0

    def hermiticity_error(self) -> float:
        return (self - self.dag()).max_abs()

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return self.hermiticity_error() <= tol

    def allclose(self, other: "SparseOp", atol: float = 1e-12) -> bool:
        self._check(other)
        return (self - other).max_abs() <= atol


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Dense density matrix on a :class:`SpaceSpec`."""

    space: SpaceSpec
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.shape != (self.space.dim, self.space.dim):
            raise ValueError("density matrix shape does not match space")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_state(cls, psi: "StateVector") -> "DensityMatrix":
        v = psi.data
        return cls(psi.space, np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, space: SpaceSpec) -> "DensityMatrix":
        return cls(space, np.eye(space.dim, dtype=complex) / space.dim)

    def trace(self) -> complex:
        return complex(np.trace(self.data))

    def purity(self) -> float:
        return float(np.real(np.vdot(self.data, self.data)))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T)))

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.data + self.data.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    def trace_distance(self, other: "DensityMatrix") -> float:
        diff = self.data - other.data
        diff = 0.5 * (diff + diff.conj().T)
        return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized pure state on a :class:`SpaceSpec`."""

    space: SpaceSpec
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex).reshape(-1)
        if data.shape != (self.space.dim,):
            raise ValueError("state vector length does not match space")
        norm = np.linalg.norm(data)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state vector not normalized (norm={norm!r})")
        object.__setattr__(self, "data", data)

    @classmethod
    def normalized(cls, space: SpaceSpec, data) -> "StateVector":
        data = np.asarray(data, dtype=complex).reshape(-1)
        return cls(space, data / np.linalg.norm(data))

    def overlap(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.data, other.data))


# -- basis bookkeeping -------------------------------------------------------

def sector_states(n_spins: int, n_s: int) -> np.ndarray:
    """Full-space spin indices of the ``n_s`` sector in ascending order."""
    idx = np.arange(2**n_spins)
    # bit = 1 means down, so the number of up spins is n_spins - popcount
    pop = np.array([bin(int(k)).count("1") for k in idx])
    return idx[n_spins - pop == n_s]


def bitstring_to_index(bits: str, space: SpaceSpec) -> int:
    """Spin-basis index of an up/down pattern such as ``"udd"`` or ``"100"``.

    Characters ``u``/``1`` mark up spins and ``d``/``0`` mark down spins.
    In a sectored space the index is the position inside the sector.
    """
    if len(bits) != space.n_spins:
        raise ValueError("bitstring length differs from n_spins")
    full = 0
    ups = 0
    for ch in bits:
        if ch in "u1":
            b = 0
            ups += 1
        elif ch in "d0":
            b = 1
        else:
            raise ValueError(f"invalid spin character {ch!r}")
        full = (full << 1) | b
    if space.sector is None:
        return full
    if ups != space.sector:
        raise SectorError(
            f"pattern {bits!r} has {ups} excitations, sector is {space.sector}"
        )
    states = sector_states(space.n_spins, space.sector)
    return int(np.searchsorted(states, full))


def index_to_bitstring(index: int, space: SpaceSpec) -> str:
    """Inverse of :func:`bitstring_to_index` using ``u``/``d`` characters."""
    if space.sector is not None:
        index = int(sector_states(space.n_spins, space.sector)[index])
    n = space.n_spins
    return "".join(
        "d" if (index >> (n - 1 - k)) & 1 else "u" for k in range(n)
    )


# -- builders ----------------------------------------------------------------

def _site_matrix(n_spins: int, site: int, local: np.ndarray) -> sp.csr_matrix:
    left = sp.identity(2**site, dtype=complex, format="csr")
    right = sp.identity(2 ** (n_spins - site - 1), dtype=complex, format="csr")
    return sp.kron(sp.kron(left, sp.csr_matrix(local)), right, format="csr")


def _with_boson(space: SpaceSpec, spin_matrix, boson_matrix=None) -> sp.csr_matrix:
    if not space.has_boson:
        return sp.csr_matrix(spin_matrix)
    if boson_matrix is None:
        boson_matrix = sp.identity(space.boson_levels, dtype=complex)
    return sp.kron(spin_matrix, boson_matrix, format="csr")


def pauli_op(space: SpaceSpec, site: int, which: str) -> SparseOp:
    """Single-site Pauli or ladder operator embedded in ``space``.

    In a sectored space only ``which="z"`` is admissible; excitation-changing
    products must be built in the full space and passed through
    :func:`sector_project`.
    """
    if not 0 <= site < space.n_spins:
        raise IndexError(f"site {site} out of range for {space.n_spins} spins")
    if which not in _PAULI:
        raise ValueError(f"unknown Pauli operator {which!r}")
    if space.sector is not None:
        if which != "z":
            raise SectorError(
                f"sigma_{which} leaves the n_s={space.sector} sector; build it "
                "in the full space and project a conserving combination"
            )
        states = sector_states(space.n_spins, space.sector)
        shift = space.n_spins - 1 - site
        diag = np.where((states >> shift) & 1, -1.0, 1.0).astype(complex)
        return SparseOp(space, _with_boson(space, sp.diags(diag)))
    return SparseOp(
        space, _with_boson(space, _site_matrix(space.n_spins, site, _PAULI[which]))
    )


def boson_matrix(levels: int, which: str) -> sp.csr_matrix:
    """Truncated oscillator matrix on its own ``levels``-dimensional space."""
    a = sp.diags(np.sqrt(np.arange(1, levels, dtype=float)), 1, format="csr")
    a = a.astype(complex)
    if which == "annihilate":
        return a
    if which == "create":
        return a.T.tocsr()
    if which == "number":
        return (a.T @ a).tocsr()
    raise ValueError(f"unknown boson operator {which!r}")


def boson_op(space: SpaceSpec, which: str) -> SparseOp:
    """Creation, annihilation or number operator of the boson factor."""
    if space.boson_levels < 2:
        raise ValueError("space has no boson factor")
    spin_id = sp.identity(space.spin_dim, dtype=complex, format="csr")
    return SparseOp(
        space, sp.kron(spin_id, boson_matrix(space.boson_levels, which), format="csr")
    )


Placement = Union[np.ndarray, sp.spmatrix]


def embed(space: SpaceSpec, placements: Mapping[Union[int, str], Placement]) -> SparseOp:
    """Kronecker-embed local operators into ``space``.

    ``placements`` maps factor keys to matrices: an integer site index
    (2x2 matrix, unsectored spaces only), ``"spins"`` (an operator on the
    whole spin factor, of size ``space.spin_dim``) or ``"boson"``.
    Unspecified factors carry the identity.
    """
    sites = {k: v for k, v in placements.items() if isinstance(k, (int, np.integer))}
    unknown = set(placements) - set(sites) - {"spins", "boson"}
    if unknown:
        raise ValueError(f"unknown factor keys {sorted(map(str, unknown))}")
    if sites and "spins" in placements:
        raise ValueError("site placements overlap the 'spins' placement")
    if "boson" in placements and not space.has_boson:
        raise ValueError("space has no boson factor")

    if "spins" in placements:
        spin = sp.csr_matrix(placements["spins"], dtype=complex)
        if spin.shape != (space.spin_dim, space.spin_dim):
            raise ValueError("spin placement has the wrong dimension")
    else:
        if sites and space.sector is not None:
            raise SectorError("site placements require an unsectored space")
        factors = []
        for k in range(space.n_spins):
            m = sites.pop(k, None)
            if m is None:
                factors.append(sp.identity(2, dtype=complex, format="csr"))
            else:
                m = sp.csr_matrix(m, dtype=complex)
                if m.shape != (2, 2):
                    raise ValueError(f"site {k} placement must be 2x2")
                factors.append(m)
        if sites:
            raise IndexError(f"sites {sorted(sites)} out of range")
        if space.sector is not None:
            spin = sp.identity(space.spin_dim, dtype=complex, format="csr")
        else:
            spin = sp.identity(1, dtype=complex, format="csr")
            for f in factors:
                spin = sp.kron(spin, f, format="csr")

    boson = None
    if space.has_boson:
        boson = placements.get("boson")
        if boson is not None:
            boson = sp.csr_matrix(boson, dtype=complex)
            if boson.shape != (space.boson_levels,) * 2:
                raise ValueError("boson placement has the wrong dimension")
    return SparseOp(space, _with_boson(space, spin, boson))


def excitation_number(space: SpaceSpec) -> SparseOp:
    """Total number of up spins, ``sum_i (sigma^z_i + 1)/2``."""
    if space.sector is not None:
        return SparseOp.identity(space) * space.sector
    total = SparseOp.zeros(space)
    for i in range(space.n_spins):
        total = total + pauli_op(space, i, "z")
    return (total + SparseOp.identity(space) * space.n_spins) * 0.5


def conservation_error(op: SparseOp) -> float:
    """Max entry of ``[op, N_exc]``; zero for excitation-conserving operators."""
    return op.commutator(excitation_number(op.space)).max_abs()


def _sector_selector(space: SpaceSpec, n_s: int) -> sp.csr_matrix:
    """Isometry columns picking the sector states (including the boson)."""
    states = sector_states(space.n_spins, n_s)
    b = space.boson_dim
    rows = (states[:, None] * b + np.arange(b)[None, :]).reshape(-1)
    cols = np.arange(rows.size)
    return sp.csr_matrix(
        (np.ones(rows.size, dtype=complex), (rows, cols)),
        shape=(space.dim, rows.size),
    )


def sector_project(op: SparseOp, n_s: int, truncate: bool = False) -> SparseOp:
    """Restrict an operator on an unsectored space to the ``n_s`` sector.

    Raises :class:`SectorError` if ``op`` does not conserve the excitation
    number, unless ``truncate=True`` asks for the plain block ``P op P``.
    """
    if op.space.sector is not None:
        raise ValueError("operator is already sectored")
    if not 0 <= n_s <= op.space.n_spins:
        raise ValueError(f"sector {n_s} outside [0, {op.space.n_spins}]")
    if not truncate:
        err = conservation_error(op)
        if err > CONSERVATION_TOL:
            raise SectorError(
                f"operator does not conserve excitations (|[op, N]| = {err:.3g})"
            )
    sel = _sector_selector(op.space, n_s)
    return SparseOp(op.space.with_sector(n_s), sel.T @ op.matrix @ sel)


def sector_project_state(psi: StateVector, n_s: int) -> StateVector:
    """Express a state supported in the ``n_s`` sector in the sector basis."""
    sel = _sector_selector(psi.space, n_s)
    sub = sel.T @ psi.data
    if abs(np.linalg.norm(sub) - 1.0) > 1e-10:
        raise SectorError("state has weight outside the requested sector")
    return StateVector.normalized(psi.space.with_sector(n_s), sub)


def sector_embed_state(psi: StateVector) -> StateVector:
    """Inverse of :func:`sector_project_state`: back to the unsectored basis."""
    if psi.space.sector is None:
        return psi
    sel = _sector_selector(psi.space.unsectored(), psi.space.sector)
    return StateVector(psi.space.unsectored(), sel @ psi.data)


def partial_trace_boson(rho: DensityMatrix) -> DensityMatrix:
    """Trace out the boson factor, leaving the spin density matrix."""
    space = rho.space
    if not space.has_boson:
        raise ValueError("space has no boson factor")
    s, b = space.spin_dim, space.boson_levels
    reduced = np.einsum("ikjk->ij", rho.data.reshape(s, b, s, b))
    return DensityMatrix(space.spin_space(), reduced)


def kron_spaces(spin_op: SparseOp, boson: np.ndarray | sp.spmatrix, space: SpaceSpec) -> SparseOp:
    """``spin_op`` (on the spin-only factor) tensored with a boson matrix."""
    if spin_op.space != space.spin_space():
        raise ValueError("spin operator does not live on the spin factor of space")
    return SparseOp(space, sp.kron(spin_op.matrix, sp.csr_matrix(boson), format="csr"))


def lift_spin_op(spin_op: SparseOp, space: SpaceSpec) -> SparseOp:
    """Spin-only operator tensored with the boson identity of ``space``."""
    return kron_spaces(spin_op, sp.identity(space.boson_dim, dtype=complex), space)


def spin_sum(space: SpaceSpec, coefficients: Sequence[float], which: str = "z") -> SparseOp:
    """``sum_i c_i sigma^which_i`` on ``space``."""
    total = SparseOp.zeros(space)
    for i, c in enumerate(coefficients):
        if c != 0:
            total = total + pauli_op(space, i, which) * c
    return total
