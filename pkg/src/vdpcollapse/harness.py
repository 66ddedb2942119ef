"""Sweep orchestration and persistence for the figure-data experiments.

Every run writes one JSON envelope (resolved config, provenance, per-point
summaries), flat CSV files whose columns are documented in
``data/csv_schema.json``, and a gnuplot script. Points are independent; a
failing point is marked in the record and its siblings still run.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .classical import (
    NoTransitionError,
    death_high,
    death_low,
    delta_c_meanfield_classical,
    delta_c_pair,
    steady_amplitude,
)
from .evolve import steady_state, top_level_population
from .hilbert import make_space, number, partial_trace
from .liouvillian import SystemParams, build_global, build_pair
from .meanfield import MeanFieldConfig, frequency_grid, solve_selfconsistent
from .observables import mandel_q, mean_phonon, wigner
from .stochastic import ensemble_mean_square

logger = logging.getLogger(__name__)

EXPERIMENTS = ("pair-map", "noisy-compare", "meanfield-map", "meanfield-cut", "size-scaling", "wigner")
THREADS_ENV = "VDP_THREADS"


class InadequateCutoff(RuntimeError):
    def __init__(self, message: str, cutoff: int, tail: float):
        super().__init__(message)
        self.cutoff = cutoff
        self.tail = tail


def default_cutoff(kappa: float, G: float = 1.0) -> int:
    """Per-regime Fock cutoff; always validated by the tail check afterwards."""
    k = kappa / G
    if k >= 50:
        return 3
    if k >= 1:
        return 6
    if k >= 0.15:
        return 12
    if k >= 0.04:
        return 24
    return int(math.ceil(round(1.2 / k, 9)))


def escalated_cutoff(cutoff: int) -> int:
    return cutoff + max(1, cutoff // 3)


@dataclass
class SweepConfig:
    experiment: str
    kappa: list = field(default_factory=lambda: [0.2])
    V: list = field(default_factory=lambda: [3.0])
    delta: list = field(default_factory=lambda: [5.0])
    N: list = field(default_factory=lambda: [2])
    G: float = 1.0
    cutoff: Optional[int] = None
    tail_tol: float = 1e-4
    escalate: bool = True
    max_block: int = 200_000
    # stochastic ensemble
    delta_noisy: Optional[list] = None
    n_traj: int = 1000
    sde_dt: float = 1e-3
    t_transient: float = 100.0
    t_average: float = 100.0
    # mean field
    mf_N: int = 100
    mf_dt: float = 0.01
    mf_t_max: float = 2000.0
    mf_tol: float = 1e-9
    collapse_threshold: float = 1e-4
    # wigner
    points: list = field(default_factory=lambda: [[8.0, 1.0], [3.0, 5.0]])
    wigner_extent: list = field(default_factory=lambda: [-5.0, 5.0, -5.0, 5.0])
    wigner_resolution: int = 101
    seed: int = 0
    threads: Optional[int] = None
    out: Optional[str] = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        for name in ("kappa", "V", "delta", "N", "points"):
            val = getattr(self, name)
            if not isinstance(val, (list, tuple)):
                val = [val]
            if len(val) == 0:
                raise ValueError(f"grid {name!r} is empty")
            setattr(self, name, list(val))
        if self.delta_noisy is not None and not isinstance(self.delta_noisy, (list, tuple)):
            self.delta_noisy = [self.delta_noisy]
        if self.delta_noisy is not None and len(self.delta_noisy) == 0:
            raise ValueError("grid 'delta_noisy' is empty")
        if self.n_traj < 2:
            raise ValueError("n_traj must be at least 2")

    def resolved(self) -> "SweepConfig":
        """Copy with environment-dependent defaults filled in."""
        threads = self.threads
        if threads is None:
            threads = int(os.environ.get(THREADS_ENV, "1"))
        return replace(self, threads=max(1, threads))

    def cutoff_for(self, kappa: float) -> int:
        return self.cutoff if self.cutoff is not None else default_cutoff(kappa, self.G)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path, **overrides) -> "SweepConfig":
        with open(path) as fh:
            data = json.load(fh)
        data.update(overrides)
        return cls.from_dict(data)


@dataclass
class RunRecord:
    config: dict
    points: list
    summary: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    def payload(self) -> dict:
        """Numeric content only; identical across reruns with the same config."""
        return {"config": self.config, "points": self.points, "summary": self.summary}

    def to_dict(self) -> dict:
        return {**self.payload(), "provenance": self.provenance, "files": self.files}

    def failed(self) -> list:
        return [p for p in self.points if p.get("status") != "ok"]


# --- persistence --------------------------------------------------------------


@lru_cache(maxsize=1)
def csv_schema() -> dict:
    with resources.files("vdpcollapse").joinpath("data/csv_schema.json").open() as fh:
        return json.load(fh)


def _columns(name: str) -> list:
    key = "wigner.csv" if name.startswith("wigner_") else name
    return list(csv_schema()[key]["columns"])


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            return ""
        return f"{float(v):.10e}"
    return str(v)


def write_csv(path: Path, name: str, rows: list[dict]) -> None:
    cols = _columns(name)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in cols])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


GNUPLOT = {
    "pair-map": """set datafile separator ','
set key autotitle columnhead
set xlabel 'Delta/G'; set ylabel 'V/G'
set view map
set multiplot layout 1,2
splot 'pair_map.csv' using 2:1:3 with image title '<n_1>'
splot 'pair_map.csv' using 2:1:5 with image title 'Q_1'
unset multiplot
plot 'boundaries.csv' using 1:2 with lines, '' using 1:3 with lines, '' using 1:4 with lines dashtype 2
""",
    "noisy-compare": """set datafile separator ','
set key autotitle columnhead
set xlabel 'Delta/G'; set ylabel 'phonon number'
plot 'noisy_compare.csv' using 1:2 with lines title 'quantum', \\
     '' using 1:3 with lines dashtype 2 title 'noiseless', \\
     'noisy_ensemble.csv' using 1:2:3 with yerrorbars title 'noisy ensemble'
""",
    "meanfield-map": """set datafile separator ','
set key autotitle columnhead
set xlabel 'Delta/G'; set ylabel 'V/G'
set view map
splot 'meanfield_map.csv' using 2:1:5 with image title 'n_mf'
set contour base; set cntrparam levels discrete 1e-4; unset surface
splot 'meanfield_map.csv' using 2:1:6 with lines title '|A|'
plot 'meanfield_boundary.csv' using 2:1 with lines dashtype 2 title 'classical boundary'
""",
    "meanfield-cut": """set datafile separator ','
set key autotitle columnhead
set xlabel 'Delta/G'; set ylabel 'n_mf'
plot for [k in system("tail -n +2 meanfield_cut.csv | cut -d, -f1 | sort -u")] \\
     'meanfield_cut.csv' using ($1==k+0 ? $2 : NaN):5 with linespoints title 'kappa/G='.k
set xlabel 'kappa/G'; set ylabel 'gap'
plot 'meanfield_gap.csv' using 1:4 with linespoints
""",
    "size-scaling": """set datafile separator ','
set key autotitle columnhead
set logscale xy
set xlabel 'N'; set ylabel 'nbar - nbar_mf'
plot 'size_scaling.csv' using 1:4 with linespoints, 1/x title 'N^-1'
""",
    "wigner": """set datafile separator ','
set view map
set size ratio -1
set xlabel 'Re alpha'; set ylabel 'Im alpha'
# one file per point; replace the name below
splot 'wigner_V8_D1_osc1.csv' using 1:2:3 with image
""",
}


def _write_outputs(record: RunRecord, out: Path, tables: dict[str, list[dict]]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, rows in tables.items():
        write_csv(out / name, name, rows)
        record.files.append(name)
    script = GNUPLOT.get(record.config["experiment"])
    if script:
        (out / "plot.gp").write_text(script)
        record.files.append("plot.gp")
    record.files.append("run.json")
    with open(out / "run.json", "w") as fh:
        json.dump(_jsonable(record.to_dict()), fh, indent=2, sort_keys=True)


# --- point workers ---------------------------------------------------------------


def _map(fn: Callable, tasks: list, threads: int) -> list:
    """Apply ``fn`` to each task, on a process pool when ``threads > 1``; order is kept."""
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def _guarded(fn: Callable, task) -> dict:
    try:
        out = fn(task)
        out.setdefault("status", "ok")
        return out
    except InadequateCutoff as exc:
        return {"status": "inadequate-cutoff", "error": str(exc), "cutoff": exc.cutoff, "tail": exc.tail}
    except Exception as exc:  # noqa: BLE001 - recorded per point, sweep continues
        logger.warning("point %r failed: %s", task, exc)
        return {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}


def with_cutoff_check(solve: Callable[[int], tuple], cutoff: int, tol: float, escalate: bool) -> tuple:
    """Run ``solve(cutoff) -> (result, tail)``; escalate the cutoff once if the tail is too large."""
    result, tail = solve(cutoff)
    if tail < tol:
        return result, cutoff, tail
    if escalate:
        higher = escalated_cutoff(cutoff)
        logger.info("tail %.2e at cutoff %d; retrying at %d", tail, cutoff, higher)
        result, tail = solve(higher)
        if tail < tol:
            return result, higher, tail
        cutoff = higher
    raise InadequateCutoff(f"top-level population {tail:.2e} >= {tol:g} at cutoff {cutoff}", cutoff, tail)


def pair_steady_state(kappa: float, V: float, delta: float, cutoff: int, G: float = 1.0, max_block: int = 200_000):
    spec = make_space(2, cutoff)
    L = build_pair(spec, SystemParams.pair(kappa, V, delta, G), sector=True)
    if L.dim > max_block:
        raise MemoryError(f"pair block of size {L.dim} exceeds max_block={max_block}")
    rho = steady_state(L)
    return rho, top_level_population(rho)


def global_steady_state(kappa: float, V: float, delta: float, N: int, cutoff: int, G: float = 1.0,
                        max_block: int = 200_000):
    spec = make_space(N, cutoff, max_vec_dim=2**31)
    params = SystemParams(kappa=kappa, V=V, omegas=frequency_grid(delta, N).omegas, G=G)
    L = build_global(spec, params, sector=True)
    if L.dim > max_block:
        raise MemoryError(f"N={N} block of size {L.dim} exceeds max_block={max_block}")
    rho = steady_state(L)
    return rho, top_level_population(rho)


def _pair_point(task) -> dict:
    cfg, kappa, V, delta = task
    t0 = time.perf_counter()
    rho, cutoff, tail = with_cutoff_check(
        lambda c: pair_steady_state(kappa, V, delta, c, cfg.G, cfg.max_block),
        cfg.cutoff_for(kappa), cfg.tail_tol, cfg.escalate,
    )
    return {
        "kappa": kappa, "V": V, "delta": delta,
        "n1": mean_phonon(rho, 1), "n2": mean_phonon(rho, 2),
        "q1": mandel_q(rho, 1), "q2": mandel_q(rho, 2),
        "cutoff": cutoff, "tail": tail, "wall": time.perf_counter() - t0,
    }


def _noiseless_point(task) -> dict:
    cfg, kappa, V, delta = task
    res = steady_amplitude(SystemParams.pair(kappa, V, delta, cfg.G))
    return {"delta": delta, "classical_abs2": float(res.mean_square[0]), "classical_status": res.status}


def _noisy_point(task) -> dict:
    cfg, kappa, V, delta, seed = task
    t0 = time.perf_counter()
    stats = ensemble_mean_square(
        SystemParams.pair(kappa, V, delta, cfg.G), n_traj=cfg.n_traj, T_transient=cfg.t_transient,
        T_average=cfg.t_average, dt=cfg.sde_dt, seed=seed,
    )
    return {"delta": delta, **stats.to_dict(), "wall": time.perf_counter() - t0}


def _mf_config(cfg: SweepConfig) -> MeanFieldConfig:
    return MeanFieldConfig(dt=cfg.mf_dt, t_max=cfg.mf_t_max, tol=cfg.mf_tol)


def meanfield_point(kappa: float, V: float, delta: float, N: int, cutoff: int, cfg: MeanFieldConfig, G: float = 1.0):
    params = SystemParams(kappa=kappa, V=V, omegas=frequency_grid(delta, N).omegas, G=G)
    state = solve_selfconsistent(params, N, cutoff, cfg, strict=False)
    return state, float(np.max(state.rhos[:, -1, -1].real))


def _meanfield_point(task) -> dict:
    cfg, kappa, V, delta = task
    t0 = time.perf_counter()
    state, cutoff, tail = with_cutoff_check(
        lambda c: meanfield_point(kappa, V, delta, cfg.mf_N, c, _mf_config(cfg), cfg.G),
        cfg.cutoff_for(kappa), cfg.tail_tol, cfg.escalate,
    )
    return {
        "kappa": kappa, "V": V, "delta": delta, "N": cfg.mf_N, "abs_A": state.abs_A, "n_mean": state.n_mean,
        "converged": bool(state.converged), "residual": state.residual, "cutoff": cutoff, "tail": tail,
        "wall": time.perf_counter() - t0,
    }


def _size_point(task) -> dict:
    cfg, kappa, V, delta, N = task
    t0 = time.perf_counter()
    rho, cutoff, tail = with_cutoff_check(
        lambda c: global_steady_state(kappa, V, delta, N, c, cfg.G, cfg.max_block),
        cfg.cutoff_for(kappa), cfg.tail_tol, cfg.escalate,
    )
    nbar = float(np.mean([rho.expect(number(rho.spec, j)).real for j in range(1, N + 1)]))
    return {"N": N, "nbar": nbar, "cutoff": cutoff, "tail": tail, "wall": time.perf_counter() - t0}


def _label(v: float) -> str:
    return f"{v:g}".replace("-", "m").replace(".", "p")


# --- experiments -------------------------------------------------------------------


def _provenance(cfg: SweepConfig, t0: float) -> dict:
    return {
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "seed": cfg.seed,
        "wall_time": time.perf_counter() - t0,
    }


def _strip_wall(points: list[dict]) -> tuple[list[dict], list]:
    walls = [p.pop("wall", None) for p in points]
    return points, walls


def _finish(cfg: SweepConfig, points: list, summary: dict, tables: dict, t0: float) -> RunRecord:
    points, walls = _strip_wall(points)
    record = RunRecord(_jsonable(cfg.to_dict()), _jsonable(points), _jsonable(summary))
    record.provenance = _provenance(cfg, t0)
    record.provenance["point_wall_times"] = walls
    if cfg.out:
        _write_outputs(record, Path(cfg.out), tables)
    return record


def run_pair_map(cfg: SweepConfig) -> RunRecord:
    cfg = cfg.resolved()
    t0 = time.perf_counter()
    kappa = cfg.kappa[0]
    tasks = [(cfg, kappa, V, d) for V in cfg.V for d in cfg.delta]
    points = _map(_guarded_pair, tasks, cfg.threads)
    for (_, _, V, d), p in zip(tasks, points):
        p.setdefault("V", V)
        p.setdefault("delta", d)
    bounds = [
        {"delta": d, "death_low": death_low(cfg.G), "death_high": death_high(d, cfg.G), "arnold": abs(d)}
        for d in cfg.delta
    ]
    ok = [p for p in points if p["status"] == "ok"]
    summary = {
        "n_points": len(points),
        "n_failed": len(points) - len(ok),
        "max_symmetry_error": max((abs(p["n1"] - p["n2"]) for p in ok), default=None),
    }
    return _finish(cfg, points, summary, {"pair_map.csv": points, "boundaries.csv": bounds}, t0)


def _guarded_pair(t):
    return _guarded(_pair_point, t)


def _guarded_noiseless(t):
    return _guarded(_noiseless_point, t)


def _guarded_noisy(t):
    return _guarded(_noisy_point, t)


def _guarded_meanfield(t):
    return _guarded(_meanfield_point, t)


def _guarded_size(t):
    return _guarded(_size_point, t)


def point_seed(seed: int, index: int) -> int:
    """Deterministic per-point seed, independent of scheduling."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def run_noisy_compare(cfg: SweepConfig) -> RunRecord:
    cfg = cfg.resolved()
    t0 = time.perf_counter()
    kappa, V = cfg.kappa[0], cfg.V[0]
    qtasks = [(cfg, kappa, V, d) for d in cfg.delta]
    quantum = _map(_guarded_pair, qtasks, cfg.threads)
    classical = _map(_guarded_noiseless, qtasks, cfg.threads)
    noisy_deltas = cfg.delta if cfg.delta_noisy is None else cfg.delta_noisy
    ntasks = [(cfg, kappa, V, d, point_seed(cfg.seed, i)) for i, d in enumerate(noisy_deltas)]
    noisy = _map(_guarded_noisy, ntasks, cfg.threads)

    points = []
    for d, q, c in zip(cfg.delta, quantum, classical):
        status = q["status"] if q["status"] != "ok" else c["status"]
        points.append({
            "delta": d, "quantum_n": q.get("n1"), "classical_abs2": c.get("classical_abs2"),
            "classical_status": c.get("classical_status"), "cutoff": q.get("cutoff"), "tail": q.get("tail"),
            "status": status, "error": q.get("error") or c.get("error"), "wall": q.get("wall"),
        })
    ens_rows = []
    for d, n in zip(noisy_deltas, noisy):
        row = {"delta": d, "status": n["status"]}
        if n["status"] == "ok":
            row.update({
                "mean_abs2_1": n["mean"][0], "stderr_1": n["stderr"][0],
                "mean_abs2_2": n["mean"][1], "stderr_2": n["stderr"][1],
                "clamp_fraction": n["clamp_fraction"], "flagged": n["flagged"],
            })
        else:
            row["error"] = n.get("error")
        ens_rows.append(row)

    dc = delta_c_pair(V, cfg.G)
    ok = [p for p in points if p["status"] == "ok"]
    gap_at = None
    if ok:
        gaps = [abs(p["quantum_n"] - p["classical_abs2"]) for p in ok]
        gap_at = ok[int(np.argmax(gaps))]["delta"]
    summary = {"delta_c": dc, "max_gap_delta": gap_at, "ensemble": ens_rows}
    tables = {"noisy_compare.csv": points, "noisy_ensemble.csv": [r for r in ens_rows if r["status"] == "ok"]}
    return _finish(cfg, points, summary, tables, t0)


def _scan_delta_c(deltas, abs_A, threshold) -> Optional[float]:
    """First scanned width with ``|A| < threshold``; None if there is none or the
    scan already starts collapsed."""
    for i, (d, a) in enumerate(zip(deltas, abs_A)):
        if a is not None and a < threshold:
            return d if i > 0 else None
    return None


def run_meanfield(cfg: SweepConfig) -> RunRecord:
    cfg = cfg.resolved()
    t0 = time.perf_counter()
    if cfg.experiment == "meanfield-map":
        kappa = cfg.kappa[0]
        tasks = [(cfg, kappa, V, d) for V in cfg.V for d in cfg.delta]
        points = _map(_guarded_meanfield, tasks, cfg.threads)
        for (_, _, V, d), p in zip(tasks, points):
            p.setdefault("V", V)
            p.setdefault("delta", d)
        boundary = []
        for V in cfg.V:
            try:
                dc = delta_c_meanfield_classical(V, cfg.G)
            except NoTransitionError:
                dc = None
            boundary.append({"V": V, "delta_c": dc})
        summary = {"kappa": kappa, "N": cfg.mf_N, "classical_boundary": boundary}
        tables = {"meanfield_map.csv": points, "meanfield_boundary.csv": boundary}
        return _finish(cfg, points, summary, tables, t0)

    if cfg.experiment != "meanfield-cut":
        raise ValueError(f"run_meanfield does not handle {cfg.experiment!r}")
    V = cfg.V[0]
    tasks = [(cfg, k, V, d) for k in cfg.kappa for d in cfg.delta]
    points = _map(_guarded_meanfield, tasks, cfg.threads)
    for (_, k, _, d), p in zip(tasks, points):
        p.setdefault("kappa", k)
        p.setdefault("delta", d)
    try:
        dc_cl = delta_c_meanfield_classical(V, cfg.G)
    except NoTransitionError:
        dc_cl = None
    gaps = []
    for k in cfg.kappa:
        rows = [p for p in points if p["kappa"] == k]
        dc_mf = _scan_delta_c([p["delta"] for p in rows], [p.get("abs_A") for p in rows], cfg.collapse_threshold)
        gap = None if (dc_mf is None or dc_cl is None) else dc_cl - dc_mf
        plateau = [p["n_mean"] for p in rows if dc_mf is not None and p["delta"] >= dc_mf and p["status"] == "ok"]
        spread = None
        if len(plateau) >= 2:
            spread = (max(plateau) - min(plateau)) / np.mean(plateau)
        gaps.append({"kappa": k, "delta_c_mf": dc_mf, "delta_c_cl": dc_cl, "gap": gap,
                     "plateau_mean": float(np.mean(plateau)) if plateau else None, "plateau_spread": spread})
    summary = {"V": V, "N": cfg.mf_N, "gaps": gaps}
    tables = {"meanfield_cut.csv": points, "meanfield_gap.csv": gaps}
    return _finish(cfg, points, summary, tables, t0)


def loglog_slope(N, diff) -> float:
    return float(np.polyfit(np.log(np.asarray(N, float)), np.log(np.asarray(diff, float)), 1)[0])


def run_size_scaling(cfg: SweepConfig) -> RunRecord:
    cfg = cfg.resolved()
    t0 = time.perf_counter()
    kappa, V, delta = cfg.kappa[0], cfg.V[0], cfg.delta[0]
    tasks = [(cfg, kappa, V, delta, int(N)) for N in cfg.N]
    points = _map(_guarded_size, tasks, cfg.threads)
    for (*_, N), p in zip(tasks, points):
        p.setdefault("N", N)

    floor = _guarded_meanfield((cfg, kappa, V, delta))
    nbar_mf = floor.get("n_mean") if floor["status"] == "ok" else None
    for p in points:
        p["nbar_mf"] = nbar_mf
        if p["status"] == "ok" and nbar_mf is not None:
            p["diff"] = p["nbar"] - nbar_mf
    ok = [p for p in points if p["status"] == "ok" and p.get("diff") is not None]
    slope = coef = None
    if len(ok) >= 2 and all(p["diff"] > 0 for p in ok):
        slope = loglog_slope([p["N"] for p in ok], [p["diff"] for p in ok])
        invN = np.array([1.0 / p["N"] for p in ok])
        coef = float(np.dot(invN, [p["diff"] for p in ok]) / np.dot(invN, invN))
    nbars = [p["nbar"] for p in sorted(ok, key=lambda p: p["N"])]
    summary = {
        "nbar_mf": nbar_mf,
        "mf_floor": {k: floor.get(k) for k in ("status", "cutoff", "tail", "converged", "abs_A", "error")},
        "mf_N": cfg.mf_N,
        "loglog_slope": slope,
        "inverse_N_coefficient": coef,
        "monotone_decreasing": bool(all(a > b for a, b in zip(nbars, nbars[1:]))) if nbars else None,
        "above_meanfield": bool(all(p["diff"] > 0 for p in ok)) if ok else None,
    }
    return _finish(cfg, points, summary, {"size_scaling.csv": points}, t0)


def run_wigner(cfg: SweepConfig) -> RunRecord:
    cfg = cfg.resolved()
    t0 = time.perf_counter()
    kappa = cfg.kappa[0]
    tables = {}
    points = []
    for V, d in cfg.points:
        try:
            rho, cutoff, tail = with_cutoff_check(
                lambda c: pair_steady_state(kappa, V, d, c, cfg.G, cfg.max_block),
                cfg.cutoff_for(kappa), cfg.tail_tol, cfg.escalate,
            )
        except InadequateCutoff as exc:
            points.append({"V": V, "delta": d, "status": "inadequate-cutoff", "error": str(exc)})
            continue
        except Exception as exc:  # noqa: BLE001
            points.append({"V": V, "delta": d, "status": "failed", "error": f"{type(exc).__name__}: {exc}"})
            continue
        for j in (1, 2):
            grid = wigner(partial_trace(rho, j), tuple(cfg.wigner_extent), cfg.wigner_resolution)
            r, prof = grid.radial_profile()
            name = f"wigner_V{_label(V)}_D{_label(d)}_osc{j}.csv"
            tables[name] = [{"x": x, "y": y, "W": grid.values[iy, ix]}
                            for iy, y in enumerate(grid.y) for ix, x in enumerate(grid.x)]
            points.append({
                "V": V, "delta": d, "oscillator": j, "cutoff": cutoff, "tail": tail, "file": name,
                "peak": float(grid.values.max()), "argmax": grid.argmax(), "integral": grid.integral(),
                "radial_peak_radius": float(r[int(np.argmax(prof))]),
                "support_warning": grid.support_warning, "status": "ok",
            })
    return _finish(cfg, points, {"kappa": kappa}, tables, t0)


RUNNERS = {
    "pair-map": run_pair_map,
    "noisy-compare": run_noisy_compare,
    "meanfield-map": run_meanfield,
    "meanfield-cut": run_meanfield,
    "size-scaling": run_size_scaling,
    "wigner": run_wigner,
}


def run(cfg: SweepConfig) -> RunRecord:
    return RUNNERS[cfg.experiment](cfg)
