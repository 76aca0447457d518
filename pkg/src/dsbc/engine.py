"""Time evolution, steady states and fidelities for :class:`LindbladModel`.

Density matrices are vectorized column-first, ``vec(A rho B) = (B^T kron A) vec(rho)``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .model import LindbladModel
from .operators import DensityMatrix, SpaceSpec, StateVector, partial_trace_boson, sector_states

logger = logging.getLogger(__name__)

__all__ = [
    "IntegratorConfig",
    "SimTrajectory",
    "SteadyStateResult",
    "NumericalError",
    "TraceGuardError",
    "liouvillian_superoperator",
    "evolve",
    "final_state",
    "steady_state",
    "fidelity",
]

DEFAULT_MAX_SUPER_DIM = 2_000_000
DENSE_EXPM_DIM = 1024
TRUNCATION_LIMIT = 1e-4


class NumericalError(RuntimeError):
    """A simulation violated a numerical guard or failed to converge."""


class TraceGuardError(NumericalError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    """Integration settings.

    ``method`` is ``"rk45"`` (adaptive Dormand-Prince 4(5)), ``"rk4"``
    (fixed step ``max_step``) or ``"expm"`` (exact superoperator exponential).
    """

    method: str = "rk45"
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = np.inf
    trace_guard: float = 1e-6
    max_super_dim: int = DEFAULT_MAX_SUPER_DIM
    early_stop: bool = False
    early_stop_window: float = 50.0
    early_stop_tol: float = 1e-8
    truncation_guard: bool = False
    store_states: bool = False

    def __post_init__(self):
        if self.method not in ("rk45", "rk4", "expm"):
            raise ValueError(f"unknown integration method {self.method!r}")
        if self.rel_tol <= 0 or self.abs_tol <= 0 or self.trace_guard <= 0:
            raise ValueError("tolerances must be positive")
        if self.method == "rk4" and not np.isfinite(self.max_step):
            raise ValueError("fixed-step RK4 needs a finite max_step")


@dataclass
class SimTrajectory:
    """Sampled observables of one run.

    ``observables`` always holds ``trace_error``, ``hermiticity_error`` and
    ``min_eigenvalue``; ``fidelity`` when a target was given and
    ``boson_occupation``/``top_population`` when the space has a boson.
    """

    times: np.ndarray
    observables: dict[str, np.ndarray]
    states: list[DensityMatrix] | None = None
    flags: list[str] = field(default_factory=list)
    failed: bool = False

    def final(self, name: str) -> float:
        return float(self.observables[name][-1])


@dataclass
class SteadyStateResult:
    """Stationary state(s) of a Liouvillian.

    ``rho`` is the trace-one null vector when the null space is
    one-dimensional.  For excitation-conserving models with several steady
    states ``sector_states`` maps each sector to its own stationary state.
    """

    rho: DensityMatrix | None
    null_dim: int
    residual: float
    sector_states: dict[int, DensityMatrix] = field(default_factory=dict)


def liouvillian_superoperator(
    model: LindbladModel, max_dim: int = DEFAULT_MAX_SUPER_DIM
) -> sp.csr_matrix:
    """Sparse generator ``L`` with ``vec(d rho/dt) = L vec(rho)``."""
    d = model.space.dim
    if d * d > max_dim:
        raise NumericalError(
            f"superoperator dimension {d * d} exceeds the cap {max_dim}"
        )
    eye = sp.identity(d, dtype=complex, format="csr")
    H = model.H.matrix
    L = -1j * (sp.kron(eye, H) - sp.kron(H.T, eye))
    for rate, J in model.jumps:
        if rate == 0:
            continue
        Jm = J.matrix
        JdJ = (Jm.conj().T @ Jm).tocsr()
        L = L + rate * (
            sp.kron(Jm.conj(), Jm) - 0.5 * sp.kron(eye, JdJ) - 0.5 * sp.kron(JdJ.T, eye)
        )
    L = sp.csr_matrix(L)
    L.sum_duplicates()
    L.eliminate_zeros()
    return L


def _vec(rho: np.ndarray) -> np.ndarray:
    return rho.reshape(-1, order="F")


def _unvec(v: np.ndarray, d: int) -> np.ndarray:
    return v.reshape(d, d, order="F")


def _trace_row(d: int) -> np.ndarray:
    row = np.zeros(d * d, dtype=complex)
    row[:: d + 1] = 1.0
    return row


class _Observer:
    def __init__(self, space: SpaceSpec, target: StateVector | None):
        self.space = space
        self.target = target
        if target is not None and target.space != space.spin_space():
            raise ValueError("target must live on the spin factor of the model space")
        if space.has_boson:
            b = space.boson_levels
            self.n_diag = np.tile(np.arange(b, dtype=float), space.spin_dim)
            self.top_mask = np.tile(np.arange(b) == b - 1, space.spin_dim)
        self.rows: dict[str, list[float]] = {}

    def record(self, rho: np.ndarray) -> dict[str, float]:
        diag = np.real(np.diag(rho))
        tr = np.trace(rho)
        herm = 0.5 * (rho + rho.conj().T)
        out = {
            "trace_error": float(abs(tr - 1.0)),
            "hermiticity_error": float(np.max(np.abs(rho - rho.conj().T))),
            "min_eigenvalue": float(np.linalg.eigvalsh(herm)[0]),
        }
        if self.space.has_boson:
            out["boson_occupation"] = float(self.n_diag @ diag)
            out["top_population"] = float(diag[self.top_mask].sum())
        if self.target is not None:
            out["fidelity"] = fidelity(DensityMatrix(self.space, rho), self.target)
        for k, v in out.items():
            self.rows.setdefault(k, []).append(v)
        return out


def _propagate_expm(L: sp.csr_matrix, v0: np.ndarray, times: np.ndarray):
    n = L.shape[0]
    if n <= DENSE_EXPM_DIM:
        Ld = L.toarray()
        cache: dict[float, np.ndarray] = {}
        v = v0
        yield v
        for dt in np.diff(times):
            key = float(dt)
            if key not in cache:
                cache[key] = la.expm(Ld * dt)
            v = cache[key] @ v
            yield v
    else:
        v = v0
        yield v
        for dt in np.diff(times):
            v = spla.expm_multiply(L * dt, v) if dt > 0 else v
            yield v


def _propagate_rk45(L, v0, times, cfg: IntegratorConfig):
    sol = solve_ivp(
        lambda t, y: L @ y,
        (times[0], times[-1]),
        v0,
        method="RK45",
        t_eval=times,
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
        max_step=cfg.max_step,
    )
    if not sol.success:
        raise NumericalError(f"integration failed: {sol.message}")
    for k in range(len(times)):
        yield sol.y[:, k]


def _propagate_rk4(L, v0, times, cfg: IntegratorConfig):
    v = v0
    yield v
    for t0, t1 in zip(times[:-1], times[1:]):
        span = t1 - t0
        steps = max(1, int(np.ceil(span / cfg.max_step - 1e-12)))
        h = span / steps
        for _ in range(steps):
            k1 = L @ v
            k2 = L @ (v + 0.5 * h * k1)
            k3 = L @ (v + 0.5 * h * k2)
            k4 = L @ (v + h * k3)
            v = v + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        yield v


def evolve(
    model: LindbladModel,
    rho0: DensityMatrix,
    times,
    config: IntegratorConfig | None = None,
    target: StateVector | None = None,
) -> SimTrajectory:
    """Integrate the master equation and sample observables on ``times``.

    Raises :class:`TraceGuardError` when the trace drifts beyond
    ``config.trace_guard``; the trace is never renormalized.
    """
    cfg = config or IntegratorConfig()
    if rho0.space != model.space:
        raise ValueError("initial state and model live on different spaces")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) < 0):
        raise ValueError("times must be a non-empty ascending grid")
    d = model.space.dim
    L = liouvillian_superoperator(model, cfg.max_super_dim)
    v0 = _vec(rho0.data)
    if cfg.method == "expm":
        stream = _propagate_expm(L, v0, times)
    elif cfg.method == "rk4":
        stream = _propagate_rk4(L, v0, times, cfg)
    else:
        stream = _propagate_rk45(L, v0, times, cfg)

    obs = _Observer(model.space, target)
    states = [] if cfg.store_states else None
    flags: list[str] = []
    sampled = []
    window_start = None
    for t, v in zip(times, stream):
        rho = _unvec(v, d)
        row = obs.record(rho)
        sampled.append(t)
        if states is not None:
            states.append(DensityMatrix(model.space, rho.copy()))
        if row["trace_error"] > cfg.trace_guard:
            raise TraceGuardError(
                f"trace error {row['trace_error']:.3g} exceeds guard "
                f"{cfg.trace_guard:.3g} at t={t:g}"
            )
        top = row.get("top_population", 0.0)
        if top > TRUNCATION_LIMIT and "truncation" not in flags:
            flags.append("truncation")
            msg = f"top boson level population {top:.3g} exceeds {TRUNCATION_LIMIT:g} at t={t:g}"
            if cfg.truncation_guard:
                raise NumericalError(msg)
            logger.info(msg)
        if cfg.early_stop and target is not None:
            fid = obs.rows["fidelity"]
            if window_start is None:
                window_start = len(fid) - 1
            while times[window_start] < t - cfg.early_stop_window:
                window_start += 1
            window = fid[window_start:]
            if t - times[0] >= cfg.early_stop_window and max(window) - min(window) < cfg.early_stop_tol:
                flags.append("early_stop")
                break
    return SimTrajectory(
        times=np.asarray(sampled),
        observables={k: np.asarray(v) for k, v in obs.rows.items()},
        states=states,
        flags=flags,
    )


def final_state(
    model: LindbladModel, rho0: DensityMatrix, t: float, config: IntegratorConfig | None = None
) -> DensityMatrix:
    """State at time ``t`` (no intermediate sampling)."""
    cfg = config or IntegratorConfig(method="expm")
    traj = evolve(model, rho0, [0.0, t], IntegratorConfig(**{**cfg.__dict__, "store_states": True}))
    return traj.states[-1]


def _null_space_dense(L: np.ndarray, tol: float):
    u, s, vh = np.linalg.svd(L)
    scale = max(s[0], 1.0)
    null = vh[s <= tol * scale].conj().T
    return null, s


def _normalize_null_vector(v: np.ndarray, d: int) -> np.ndarray:
    rho = _unvec(v, d)
    rho = rho / np.trace(rho)
    return 0.5 * (rho + rho.conj().T)


def steady_state(
    model: LindbladModel,
    config: IntegratorConfig | None = None,
    null_tol: float = 1e-9,
    dense_limit: int = 1600,
) -> SteadyStateResult:
    """Stationary state from the null space of the Liouvillian."""
    cfg = config or IntegratorConfig()
    if not model.jumps:
        raise ValueError("steady state of a purely Hamiltonian model is degenerate")
    d = model.space.dim
    L = liouvillian_superoperator(model, cfg.max_super_dim)
    n = d * d
    if n <= dense_limit:
        null, _ = _null_space_dense(L.toarray(), null_tol)
        null_dim = null.shape[1]
        if null_dim == 0:
            raise NumericalError("Liouvillian has no null vector within tolerance")
        rho = None
        sectors: dict[int, DensityMatrix] = {}
        if null_dim == 1:
            rho = _normalize_null_vector(null[:, 0], d)
        elif model.space.sector is None and model.space.n_spins > 0 and model.conserves_excitations():
            for n_s in range(model.space.n_spins + 1):
                sub = steady_state(model.project(n_s), cfg, null_tol, dense_limit)
                if sub.rho is not None:
                    sectors[n_s] = _embed_sector_state(sub.rho, model.space, n_s)
        else:
            # project the trace functional onto the null space for a canonical pick
            tr = _trace_row(d) @ null
            v = null @ tr.conj()
            if abs(_trace_row(d) @ v) > 1e-12:
                rho = _normalize_null_vector(v, d)
        res = float(np.linalg.norm(L @ _vec(rho))) if rho is not None else 0.0
        dm = DensityMatrix(model.space, rho) if rho is not None else None
        return SteadyStateResult(dm, null_dim, res, sectors)

    # large models: replace one equation by the trace condition
    A = L.tolil()
    A[0, :] = _trace_row(d)
    b = np.zeros(n, dtype=complex)
    b[0] = 1.0
    v = spla.spsolve(A.tocsc(), b)
    rho = _normalize_null_vector(v, d)
    res = float(np.linalg.norm(L @ _vec(rho)))
    try:
        vals = spla.eigs(L, k=min(4, n - 2), sigma=0, return_eigenvectors=False)
        null_dim = int(np.sum(np.abs(vals) <= null_tol * max(1.0, spla.norm(L, 1))))
    except Exception as exc:  # ARPACK can fail on defective spectra
        warnings.warn(f"null-space dimension estimate failed: {exc}", stacklevel=2)
        null_dim = 1
    return SteadyStateResult(DensityMatrix(model.space, rho), max(null_dim, 1), res)


def _embed_sector_state(rho: DensityMatrix, space: SpaceSpec, n_s: int) -> DensityMatrix:
    states = sector_states(space.n_spins, n_s)
    b = space.boson_dim
    rows = (states[:, None] * b + np.arange(b)[None, :]).reshape(-1)
    full = np.zeros((space.dim, space.dim), dtype=complex)
    full[np.ix_(rows, rows)] = rho.data
    return DensityMatrix(space, full)


def fidelity(rho: DensityMatrix, target: StateVector) -> float:
    """``|<psi| rho_s |psi>|`` with the boson traced out first."""
    if rho.space.has_boson:
        rho = partial_trace_boson(rho)
    if rho.space != target.space:
        raise ValueError("target and state live on different spin spaces")
    psi = target.data
    return float(abs(np.vdot(psi, rho.data @ psi)))
