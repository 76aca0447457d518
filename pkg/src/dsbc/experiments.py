"""Figure-style experiments and parameter sweeps.

Every experiment expands its grid into independent points, evaluates them
(optionally in worker processes) and returns rows in grid order, so the
output never depends on the worker count.
"""

from __future__ import annotations

import math
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .config import ExperimentConfig
from .engine import IntegratorConfig, evolve, fidelity, final_state, steady_state
from .ions import balance_raman, build_ion_dsbc_model, derived_report, tune_axial
from .model import DsbcParams, build_dsbc_model, build_initial_state, build_xy_hamiltonian
from .output import ResultRow, Table
from .spinwave import (
    ladder_ratio,
    spin_wave_energies,
    target_state,
    transition_frequencies,
)

__all__ = [
    "ExperimentResult",
    "run_fidelity_dynamics",
    "run_detuning_coupling_sweep",
    "run_scaling",
    "run_ground_state_scaling",
    "run_heating_sweep",
    "run_anisotropy_sweep",
    "run_steady_state",
    "run_ion_report",
    "run_experiment",
    "search_grid",
    "parallel_map",
]

SQRT2 = math.sqrt(2.0)

# Defaults per experiment.  Energies are in units of J.
DYNAMICS_PAIRS = ((0.06, 0.06), (0.01, 0.1), (0.075, 0.0075))
SWEEP_DELTA_A = tuple(np.linspace(0.0, 2.8, 41))
SWEEP_G = tuple(np.logspace(-3, math.log10(0.3), 41))
SEARCH_G = tuple(np.logspace(-3, math.log10(0.3), 9))
SEARCH_DELTA_POINTS = 9
ION_DELTA_A, ION_G, ION_KAPPA = 1.0, 0.15, 0.15
HEATING_ZETA = (0.0, 0.05, 0.1, 0.15, 0.2)
ANISOTROPY = (0.0, 1e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1)


@dataclass
class ExperimentResult:
    name: str
    rows: list[ResultRow]
    tables: list[Table] = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def parallel_map(fn: Callable, tasks: Sequence, workers: int = 1) -> list:
    """Order-preserving map, in-process for one worker."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


RK4_STEP = 0.05


def _integrator(method: str) -> IntegratorConfig:
    if method == "rk4":
        return IntegratorConfig(method="rk4", max_step=RK4_STEP)
    return IntegratorConfig(method=method)


def _target(params: DsbcParams, kind: str):
    if kind == "w":
        return target_state(params, "w")
    return target_state(params, "ground")


def _params(N, n_s, delta_a, g, kappa, levels, target) -> DsbcParams:
    return DsbcParams(
        N=int(N), delta_a=float(delta_a), g=float(g), kappa=float(kappa),
        boson_levels=int(levels), n_s=int(n_s),
        edge_field=1.0 if target == "w" else 0.0,
    )


def _ideal_point(task) -> tuple[float, float, float, float]:
    """``(fidelity, asymptotic fidelity, trace error, wall time)`` of one chain run."""
    N, n_s, delta_a, g, kappa, levels, t_f, target, asymptotic, method = task
    t0 = time.perf_counter()
    p = _params(N, n_s, delta_a, g, kappa, levels, target)
    model = build_dsbc_model(p)
    psi = _target(p, target)
    rho = final_state(model, build_initial_state(p), t_f, _integrator(method))
    f = fidelity(rho, psi)
    trace_err = abs(rho.trace() - 1.0)
    f_inf = math.nan
    if asymptotic:
        ss = steady_state(model)
        if ss.rho is not None:
            f_inf = fidelity(ss.rho, psi)
    return f, f_inf, float(trace_err), time.perf_counter() - t0


def _levels(cfg: ExperimentConfig, default: int) -> int:
    return cfg.boson_levels if cfg.boson_levels is not None else default


def _kappas(cfg: ExperimentConfig, g: float) -> Sequence[float]:
    return (g,) if cfg.kappa is None else cfg.kappa


# -- dynamics -----------------------------------------------------------------

def _dynamics_point(task):
    N, delta_a, g, kappa, levels, t_f, samples, target, method = task
    p = _params(N, 1, delta_a, g, kappa, levels, target)
    traj = evolve(
        build_dsbc_model(p), build_initial_state(p),
        np.linspace(0.0, t_f, samples), _integrator(method), _target(p, target),
    )
    return traj.times, traj.observables["fidelity"], traj.observables["trace_error"]


def run_fidelity_dynamics(cfg: ExperimentConfig) -> ExperimentResult:
    """Error versus time for several ``(g, kappa)`` pairs at resonance."""
    N = cfg.N[0] if cfg.N else 3
    delta_a = cfg.delta_a[0] if cfg.delta_a else SQRT2
    pairs = cfg.pairs or DYNAMICS_PAIRS
    levels = _levels(cfg, 3)
    tasks = [(N, delta_a, g, k, levels, cfg.t_f, cfg.samples, cfg.target, cfg.method) for g, k in pairs]
    rows = []
    for (g, k), (times, fid, tr) in zip(pairs, parallel_map(_dynamics_point, tasks, cfg.workers)):
        for t, f, e in zip(times, fid, tr):
            rows.append(ResultRow(
                (("N", N), ("delta_a", float(delta_a)), ("g", float(g)), ("kappa", float(k)), ("t", float(t))),
                float(f), trace_error=float(e),
            ))
    return ExperimentResult("dynamics", rows)


# -- detuning/coupling sweep --------------------------------------------------

def run_detuning_coupling_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    """Finite-time (and optionally asymptotic) fidelity over ``Delta_a x g``."""
    N = cfg.N[0] if cfg.N else 3
    n_s = cfg.n_s[0] if cfg.n_s else 1
    das = cfg.delta_a or SWEEP_DELTA_A
    gs = cfg.g or SWEEP_G
    levels = _levels(cfg, 3)
    keys, tasks = [], []
    for da in das:
        for g in gs:
            for k in _kappas(cfg, g):
                keys.append((da, g, k))
                tasks.append((N, n_s, da, g, k, levels, cfg.t_f, cfg.target, cfg.asymptotic, cfg.method))
    rows = []
    for (da, g, k), (f, f_inf, tr, wall) in zip(keys, parallel_map(_ideal_point, tasks, cfg.workers)):
        rows.append(ResultRow(
            (("N", N), ("n_s", n_s), ("target", cfg.target), ("delta_a", float(da)),
             ("g", float(g)), ("kappa", float(k))),
            f, f_inf, tr, wall,
        ))
    return ExperimentResult("sweep", rows)


# -- grid-optimized scaling ---------------------------------------------------

def delta_window(N: int, n_s: int, target: str, window: float, points: int) -> np.ndarray:
    """Detuning grid spanning the relevant transition frequencies +- ``window``."""
    if target == "w":
        p = _params(N, 1, 0.0, 0.0, 1.0, 2, "w")
        eps = np.sort(np.linalg.eigvalsh(build_xy_hamiltonian(p, p.spin_space).toarray()))[::-1]
        deltas = -np.diff(eps)
    else:
        deltas = transition_frequencies(spin_wave_energies(N))
    deltas = deltas[deltas > 1e-9]
    return np.linspace((1 - window) * deltas.min(), (1 + window) * deltas.max(), points)


def search_grid(cfg: ExperimentConfig, N: int, n_s: int, target: str):
    """The documented coarse ``(g, kappa, Delta_a)`` grid for one chain/filling."""
    gs = cfg.g or SEARCH_G
    das = cfg.delta_a or tuple(delta_window(N, n_s, target, cfg.window, SEARCH_DELTA_POINTS))
    return [(g, k, da) for g in gs for k in _kappas(cfg, g) for da in das]


def _optimize(cfg: ExperimentConfig, cases: list[tuple[int, int]], target: str, levels: int):
    """Best grid point per ``(N, n_s)``; ties resolve to the first in grid order."""
    tasks, owners = [], []
    for case in cases:
        for g, k, da in search_grid(cfg, *case, target):
            tasks.append((case[0], case[1], da, g, k, levels, cfg.t_f, target, False, cfg.method))
            owners.append(case)
    results = parallel_map(_ideal_point, tasks, cfg.workers)
    best: dict[tuple[int, int], tuple] = {}
    for case, task, res in zip(owners, tasks, results):
        if case not in best or res[0] > best[case][1][0]:
            best[case] = (task, res)
    return best


def run_scaling(cfg: ExperimentConfig) -> ExperimentResult:
    """Optimized single-excitation error versus ``N`` plus the ladder-ratio table."""
    Ns = cfg.N or tuple(range(2, 11))
    target = "w" if cfg.target == "w" else "spin-wave"
    levels = _levels(cfg, 4)
    best = _optimize(cfg, [(N, 1) for N in Ns], target, levels)
    rows = []
    for N in Ns:
        task, (f, _, tr, wall) = best[(N, 1)]
        rows.append(ResultRow(
            (("N", N), ("target", target), ("g", float(task[3])), ("kappa", float(task[4])),
             ("delta_a", float(task[2]))),
            f, trace_error=tr, wall_time=wall,
        ))
    N_r = max(Ns) if max(Ns) >= 3 else 3
    deltas = transition_frequencies(spin_wave_energies(N_r))
    mid = deltas[N_r // 2 - 1]
    table = []
    for sign in (1, -1):
        for n in range(1, N_r):
            table.append((N_r, sign * float(mid), float(cfg.ratio_kappa), n,
                          float(deltas[n - 1]), ladder_ratio(n, sign * mid, cfg.ratio_kappa, deltas)))
    ratios = Table("ratios", ("N", "delta_a", "kappa", "n", "transition", "ratio"), tuple(table))
    return ExperimentResult("scaling", rows, [ratios])


def run_ground_state_scaling(cfg: ExperimentConfig) -> ExperimentResult:
    """Optimized ground-state error for every filling ``1 <= n_s <= N-1``."""
    Ns = cfg.N or tuple(range(2, 7))
    levels = _levels(cfg, 3)
    cases = [(N, n_s) for N in Ns for n_s in (cfg.n_s or range(1, N)) if 1 <= n_s <= N - 1]
    best = _optimize(cfg, cases, "ground", levels)
    rows, summary = [], []
    for N in Ns:
        errs = {}
        for case in [c for c in cases if c[0] == N]:
            task, (f, _, tr, wall) = best[case]
            row = ResultRow(
                (("N", N), ("n_s", case[1]), ("g", float(task[3])), ("kappa", float(task[4])),
                 ("delta_a", float(task[2]))),
                f, trace_error=tr, wall_time=wall,
            )
            rows.append(row)
            errs[case[1]] = row.error
        if errs:
            worst = max(errs, key=lambda s: (errs[s], -s))
            bestn = min(errs, key=lambda s: (errs[s], s))
            summary.append((N, float(np.mean(list(errs.values()))), bestn, errs[bestn], worst, errs[worst]))
    table = Table("summary", ("N", "mean_error", "best_n_s", "best_error", "worst_n_s", "worst_error"),
                  tuple(summary))
    return ExperimentResult("ground-state", rows, [table])


# -- trapped-ion sweeps -------------------------------------------------------

def _ion_base(cfg: ExperimentConfig, **extra):
    base = balance_raman(cfg.ion_config(**extra))
    if {"axial_detuning", "rabi_z", "cooling_rate"} & set(cfg.ion):
        return base
    return tune_axial(base, ION_DELTA_A, ION_G, ION_KAPPA)


def _ion_point(task):
    config, n_s, levels, anisotropy, t_f, target, method = task
    t0 = time.perf_counter()
    ion = build_ion_dsbc_model(config, n_s, boson_levels=levels, anisotropy=anisotropy,
                               target="ideal" if target in ("spin-wave", "ground", "ideal") else target)
    rho = final_state(ion.model, build_initial_state(ion.params, n_s=n_s), t_f, _integrator(method))
    return fidelity(rho, ion.target), float(abs(rho.trace() - 1.0)), time.perf_counter() - t0


def _ion_fillings(cfg: ExperimentConfig, n_system: int):
    return cfg.n_s or tuple(range(1, n_system))


def run_heating_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    """Fidelity versus heating ratio for standing and traveling forces.

    Panels: standing wave at ``t_f``, and both wave types at ``t_f / 10``.
    """
    zetas = cfg.zeta or HEATING_ZETA
    levels = _levels(cfg, 5)
    panels = (("standing", cfg.t_f), ("standing", cfg.t_f / 10), ("traveling", cfg.t_f / 10))
    keys, tasks = [], []
    for wave, t_f in panels:
        base = _ion_base(cfg, wave=wave)
        for n_s in _ion_fillings(cfg, base.n_system):
            for z in zetas:
                keys.append((wave, t_f, n_s, z))
                tasks.append((base.replace(heating_ratio=float(z)), n_s, levels, 0.0, t_f, cfg.target, cfg.method))
    rows = []
    for (wave, t_f, n_s, z), (f, tr, wall) in zip(keys, parallel_map(_ion_point, tasks, cfg.workers)):
        rows.append(ResultRow(
            (("wave", wave), ("t_f", float(t_f)), ("n_s", n_s), ("zeta", float(z)),
             ("mean_phonon_number", float(z) / (1 - float(z)))),
            f, trace_error=tr, wall_time=wall,
        ))
    return ExperimentResult("heating", rows)


def run_anisotropy_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    """Fidelity versus ``(Jx - Jy)/(Jx + Jy)`` with a traveling-wave force at ``t_f / 10``."""
    values = cfg.anisotropy or ANISOTROPY
    levels = _levels(cfg, 5)
    t_f = cfg.t_f / 10
    base = _ion_base(cfg, **({"wave": "traveling"} if "wave" not in cfg.ion else {}))
    z = cfg.zeta[0] if cfg.zeta else 0.0
    base = base.replace(heating_ratio=float(z))
    keys, tasks = [], []
    for n_s in _ion_fillings(cfg, base.n_system):
        for a in values:
            keys.append((n_s, a))
            tasks.append((base, n_s, levels, float(a), t_f, cfg.target, cfg.method))
    rows = []
    for (n_s, a), (f, tr, wall) in zip(keys, parallel_map(_ion_point, tasks, cfg.workers)):
        rows.append(ResultRow(
            (("wave", base.wave), ("t_f", float(t_f)), ("zeta", float(z)), ("n_s", n_s), ("anisotropy", float(a))),
            f, trace_error=tr, wall_time=wall,
        ))
    return ExperimentResult("anisotropy", rows)


# -- steady states and reports ------------------------------------------------

def _steady_point(task):
    N, n_s, delta_a, g, kappa, levels, target = task
    t0 = time.perf_counter()
    p = _params(N, n_s, delta_a, g, kappa, levels, target)
    ss = steady_state(build_dsbc_model(p))
    f = fidelity(ss.rho, _target(p, target)) if ss.rho is not None else math.nan
    return f, ss.null_dim, ss.residual, time.perf_counter() - t0


def run_steady_state(cfg: ExperimentConfig) -> ExperimentResult:
    """Asymptotic fidelity from the Liouvillian null space."""
    Ns = cfg.N or (3,)
    das = cfg.delta_a or (SQRT2,)
    gs = cfg.g or (0.06,)
    levels = _levels(cfg, 3)
    keys, tasks = [], []
    for N in Ns:
        for n_s in (cfg.n_s or (1,)):
            for da in das:
                for g in gs:
                    for k in _kappas(cfg, g):
                        keys.append((N, n_s, da, g, k))
                        tasks.append((N, n_s, da, g, k, levels, cfg.target))
    rows = []
    for (N, n_s, da, g, k), (f, null_dim, res, wall) in zip(keys, parallel_map(_steady_point, tasks, cfg.workers)):
        if math.isnan(f):
            f = 0.0
        rows.append(ResultRow(
            (("N", N), ("n_s", n_s), ("delta_a", float(da)), ("g", float(g)), ("kappa", float(k)),
             ("null_dim", int(null_dim)), ("residual_ok", bool(res <= 1e-8))),
            f, asymptotic_fidelity=f, wall_time=wall,
        ))
    return ExperimentResult("steady-state", rows)


def run_ion_report(cfg: ExperimentConfig) -> ExperimentResult:
    """Derived crystal parameters of the configured chain (no dynamics)."""
    base = _ion_base(cfg)
    return ExperimentResult("ion-report", [], extra={"report": derived_report(base)})


RUNNERS = {
    "dynamics": run_fidelity_dynamics,
    "sweep": run_detuning_coupling_sweep,
    "scaling": run_scaling,
    "ground-state": run_ground_state_scaling,
    "heating": run_heating_sweep,
    "anisotropy": run_anisotropy_sweep,
    "steady-state": run_steady_state,
    "ion-report": run_ion_report,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.experiment](cfg)
