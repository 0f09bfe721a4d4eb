"""Execute experiment configs and write their artifacts.

Work is split per seed and fanned out over a thread pool whose size comes from
``LYAPNORM_THREADS`` (default 1).  Each seed draws only from its own
counter-based streams and rows are collected in seed order, so the output
files do not depend on the thread count.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..cocycles import AdCocycle, LnsCocycle, operator_norm
from ..errors import CFLError, ConfigError
from ..estimates import estimate_ensemble
from ..flows import (GalerkinStochasticNSE, NoiseSpec, ShearRenewalFlow, TimePeriodicFlow,
                     ZeroFlow, kolmogorov_shear)
from ..geometry import FiniteNorm
from ..lyapunov import (PdeCocycleHandle, leading_spectrum, quotient_volume_growth,
                        regularity_comparison, scan_path, sobolev_finite_norm, top_exponent)
from ..matrix_models import TriangularCocycle
from ..rng import stream_rng
from ..spectral import SpectralGrid
from .config import ExperimentConfig

RESULT_COLUMNS = ["experiment", "seed", "s", "n", "N", "kappa", "nu", "dt", "lambda_hat", "stderr",
                  "sigma_1", "sigma_2", "sigma_3", "sigma_4", "D_bar", "K_delta", "N_delta",
                  "quantity", "value"]
MAX_DT_HALVINGS = 4


def thread_count() -> int:
    raw = os.environ.get("LYAPNORM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"LYAPNORM_THREADS={raw!r} is not an integer") from None
    if n < 1:
        raise ConfigError("LYAPNORM_THREADS must be >= 1")
    return n


def build_model(cfg: ExperimentConfig, grid: SpectralGrid, dt: float):
    m = cfg.model
    if m.name == "zero":
        return ZeroFlow(grid)
    if m.name == "steady-shear":
        return kolmogorov_shear(grid, m.amplitude, m.wavenumber)
    if m.name == "time-periodic":
        return TimePeriodicFlow(grid, m.amplitude, m.period)
    if m.name == "renewal":
        return ShearRenewalFlow(grid, m.amplitude, m.period, m.wavenumber)
    noise = NoiseSpec.smooth(m.forcing_kf, m.sigma_amplitude, m.sigma_decay)
    return GalerkinStochasticNSE(grid, cfg.nu, noise, dt=dt, init=m.init)


class _Solvers:
    """Lazily built (model, cocycle) pairs keyed by (coefficient, dt), shared by workers."""

    def __init__(self, cfg: ExperimentConfig, grid: SpectralGrid, lns: bool):
        self.cfg, self.grid, self.lns = cfg, grid, lns
        self._cache = {}
        self._lock = threading.Lock()

    def get(self, coef: float, dt: float):
        key = (coef, dt)
        with self._lock:
            if key not in self._cache:
                model = build_model(self.cfg, self.grid, dt)
                cls = LnsCocycle if self.lns else AdCocycle
                self._cache[key] = (model, cls(coef, self.grid, model, dt=dt))
            return self._cache[key]


def _with_cfl_retry(fn, dt):
    """Call ``fn(dt)``, halving ``dt`` on CFL violations; returns (result, dt used)."""
    for _ in range(MAX_DT_HALVINGS + 1):
        try:
            return fn(dt), dt
        except CFLError as e:
            last = e
            dt = dt / 2
    raise last


def _map(fn, items, threads):
    if threads == 1 or len(items) == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass
class RunResult:
    rows: list
    records: dict  # seed -> JSON-able per-seed record
    dts: dict = field(default_factory=dict)
    series: list = field(default_factory=list)  # (seed, s, step, value)


def _row(cfg, **kw):
    r = {c: None for c in RESULT_COLUMNS}
    r.update(experiment=cfg.experiment, N=cfg.N, kappa=cfg.kappa, nu=cfg.nu, n=cfg.n)
    r.update(kw)
    return r


def _spun_up(model, seed, spinup):
    st = model.initial_state(seed)
    return model.advance(st, spinup) if spinup > 0 else st


# -- experiments ------------------------------------------------------------------------

def _norm_sweep(cfg: ExperimentConfig, threads: int) -> RunResult:
    grid = SpectralGrid(cfg.N)
    lns = cfg.experiment == "lns-norm-sweep"
    coef = cfg.nu if lns else cfg.kappa
    solvers = _Solvers(cfg, grid, lns)
    norms = [sobolev_finite_norm(grid, s) for s in cfg.s]

    def one(seed):
        def attempt(dt):
            model, coc = solvers.get(coef, dt)
            state = _spun_up(model, seed, cfg.spinup)
            v0 = stream_rng(seed, "vector", 0).standard_normal(coc.dim) * grid.fourier.coord_weights(-1)
            ests = top_exponent(PdeCocycleHandle(coc, state), norms, v0, cfg.n)
            spectra = {}
            if cfg.k > 1:
                for s, nm in zip(cfg.s, norms):
                    spectra[s] = leading_spectrum(PdeCocycleHandle(coc, state), nm, cfg.k, cfg.n,
                                                  seed=seed, resolution=cfg.resolution)
            return ests, spectra
        (ests, spectra), dt = _with_cfl_retry(attempt, cfg.dt)
        rows, series = [], []
        for s, e in zip(cfg.s, ests):
            sig = {}
            if s in spectra:
                sig = {f"sigma_{i + 1}": v for i, v in enumerate(spectra[s].sigma[:4])}
            rows.append(_row(cfg, seed=seed, s=s, dt=dt, lambda_hat=e.value, stderr=e.stderr, **sig))
            series += [(seed, s, j, float(x)) for j, x in enumerate(e.series)]
        rec = {"seed": seed, "dt": dt,
               "top_exponent": {repr(s): {"lambda": e.value, "stderr": e.stderr} for s, e in zip(cfg.s, ests)},
               "spectra": {repr(s): r.to_dict(include_series=False) for s, r in spectra.items()}}
        return rows, rec, dt, series

    out = _map(one, cfg.seeds, threads)
    res = RunResult([], {})
    for seed, (rows, rec, dt, series) in zip(cfg.seeds, out):
        res.rows += rows
        res.records[seed] = rec
        res.dts[seed] = dt
        res.series += series
    return res


def _kappa_scaling(cfg: ExperimentConfig, threads: int) -> RunResult:
    grid = SpectralGrid(cfg.N)
    solvers = _Solvers(cfg, grid, False)

    def one(seed):
        rows, rec, dts = [], {"seed": seed, "norms": []}, {}
        for kap in cfg.kappas:
            def attempt(dt):
                model, coc = solvers.get(kap, dt)
                um, _ = coc.unit_map(_spun_up(model, seed, cfg.spinup))
                out = []
                for s in cfg.s:
                    fwd = operator_norm(um, 0.0, s, iters=cfg.iters, seed=seed)
                    dual = operator_norm(um, -s, 0.0, iters=cfg.iters, seed=seed)
                    out.append((s, fwd, dual))
                return out
            out, dt = _with_cfl_retry(attempt, cfg.dt)
            dts[repr(kap)] = dt
            for s, fwd, dual in out:
                rows.append(_row(cfg, seed=seed, s=s, kappa=kap, dt=dt, quantity="norm_L2_to_Hs", value=fwd.value))
                rows.append(_row(cfg, seed=seed, s=s, kappa=kap, dt=dt, quantity="norm_H-s_to_L2", value=dual.value))
                rec["norms"].append({"kappa": kap, "s": s, "L2_to_Hs": fwd.value, "H-s_to_L2": dual.value,
                                     "rel_change": [fwd.rel_change, dual.rel_change],
                                     "converged": [fwd.converged, dual.converged]})
        return rows, rec, dts

    out = _map(one, cfg.seeds, threads)
    res = RunResult([], {})
    for seed, (rows, rec, dts) in zip(cfg.seeds, out):
        res.rows += rows
        res.records[seed] = rec
        res.dts[seed] = dts
    return res


def _estimates(cfg: ExperimentConfig, threads: int) -> RunResult:
    res = RunResult([], {})
    for seed in cfg.seeds:
        rows = estimate_ensemble(cfg.Ns, cfg.s, cfg.members, seed, cfg.gamma)
        for r in rows:
            for stat in ("max", "mean"):
                res.rows.append(_row(cfg, seed=seed, s=r.s, N=r.N, n=None, kappa=None, nu=None,
                                     quantity=f"{r.quantity}_{stat}",
                                     value=r.max_ratio if stat == "max" else r.mean_ratio))
        res.records[seed] = {"seed": seed, "rows": [r.__dict__ for r in rows]}
    return res


def _matrix_oracle(cfg: ExperimentConfig, threads: int) -> RunResult:
    norms = [FiniteNorm.quadratic(w, name=f"w{j}") for j, w in enumerate(cfg.norm_weights)]
    d = len(cfg.a)

    def one(seed):
        def model():
            return TriangularCocycle(cfg.a, seed, cfg.spread, cfg.offdiag)
        rows, rec = [], {"seed": seed}
        start = int(cfg.n * 0.2)
        oracle = model().birkhoff_exponents(cfg.n, start)
        full = {}
        for j, nm in enumerate(norms):
            r = leading_spectrum(model(), nm, d, cfg.n, seed=seed, resolution=cfg.resolution)
            for i, lam in enumerate(r.lambdas):
                rows.append(_row(cfg, seed=seed, quantity=f"chi_{i + 1}[{nm.name}]", value=lam))
            # Sigma over the whole run, matching the quotient accumulation window
            full[nm.name] = np.cumsum(np.sum(r.series, axis=0) / cfg.n)
            rec[nm.name] = r.to_dict(include_series=False)
        for i, v in enumerate(oracle):
            rows.append(_row(cfg, seed=seed, quantity=f"chi_{i + 1}_oracle", value=float(v)))
        for M in cfg.quotient_index:
            q = quotient_volume_growth(model(), norms[-1], M, cfg.n)
            rows.append(_row(cfg, seed=seed, quantity=f"sigma_M{M}_quotient", value=q.sigma))
            rows.append(_row(cfg, seed=seed, quantity=f"sigma_M{M}_full", value=float(full[norms[-1].name][M - 1])))
            rows.append(_row(cfg, seed=seed, quantity=f"angle_slope_M{M}", value=q.angle_slope))
        return rows, rec

    out = _map(one, cfg.seeds, threads)
    res = RunResult([], {})
    for seed, (rows, rec) in zip(cfg.seeds, out):
        res.rows += rows
        res.records[seed] = rec
    return res


def _regularity(cfg: ExperimentConfig, threads: int) -> RunResult:
    grid = SpectralGrid(cfg.N)
    solvers = _Solvers(cfg, grid, False)
    nB, nV = sobolev_finite_norm(grid, cfg.s_B), sobolev_finite_norm(grid, cfg.s_V)

    def exponent(seed):
        def attempt(dt):
            model, coc = solvers.get(cfg.kappa, dt)
            state = _spun_up(model, seed, cfg.spinup)
            v0 = stream_rng(seed, "vector", 0).standard_normal(coc.dim) * grid.fourier.coord_weights(-1)
            return top_exponent(PdeCocycleHandle(coc, state), nB, v0, cfg.n)
        return _with_cfl_retry(attempt, cfg.dt)

    first = _map(exponent, cfg.seeds, threads)
    lam = float(np.mean([e.value for e, _ in first]))

    def scan(args):
        seed, dt = args
        model, coc = solvers.get(cfg.kappa, dt)
        h = PdeCocycleHandle(coc, _spun_up(model, seed, cfg.spinup))
        sc = scan_path(h, [nB, nV], cfg.horizon, cross=(nB, nV))
        chk = regularity_comparison(sc, nB, nV, lam, cfg.epsilon, cfg.delta)
        dB = float(np.exp(np.max(sc.log_norms[nB.name] - np.arange(cfg.horizon + 1) * (lam + cfg.epsilon))))
        return chk, dB

    second = _map(scan, [(s, dt) for s, (_, dt) in zip(cfg.seeds, first)], threads)
    res = RunResult([], {})
    for seed, (e, dt), (chk, dB) in zip(cfg.seeds, first, second):
        common = dict(seed=seed, dt=dt, s=cfg.s_V, lambda_hat=lam)
        res.rows.append(_row(cfg, **common, D_bar=chk.lhs, K_delta=chk.K_delta, N_delta=chk.N_delta,
                             quantity="rhs", value=chk.rhs))
        res.rows.append(_row(cfg, **common, quantity="holds", value=int(chk.holds)))
        res.rows.append(_row(cfg, **common, quantity="inconclusive", value=int(chk.inconclusive)))
        res.rows.append(_row(cfg, **common, quantity="lambda_seed", value=e.value))
        res.rows.append(_row(cfg, **common, quantity="D_bar_B", value=dB))
        res.records[seed] = {"seed": seed, "dt": dt, "lambda_seed": e.value, "lambda_used": lam,
                             "D_bar_V": chk.lhs, "rhs": chk.rhs, "K_delta": chk.K_delta,
                             "N_delta": chk.N_delta, "inconclusive": chk.inconclusive, "D_bar_B": dB}
        res.dts[seed] = dt
    return res


RUNNERS = {
    "psa-norm-sweep": _norm_sweep,
    "lns-norm-sweep": _norm_sweep,
    "kappa-scaling": _kappa_scaling,
    "estimates-verify": _estimates,
    "matrix-oracle": _matrix_oracle,
    "regularity-compare": _regularity,
}


def run_experiment(cfg: ExperimentConfig, threads: int = None) -> RunResult:
    cfg.validate()
    return RUNNERS[cfg.experiment](cfg, threads or thread_count())


# -- artifacts ----------------------------------------------------------------------------

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    return str(v)


def results_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow([_cell(r[c]) for c in RESULT_COLUMNS])
    return buf.getvalue()


def long_csv(rows) -> str:
    """One (metric, value) pair per line for plotting tools."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", "seed", "s", "N", "kappa", "nu", "metric", "value"])
    metrics = ["lambda_hat", "stderr", "sigma_1", "sigma_2", "sigma_3", "sigma_4", "D_bar", "K_delta", "N_delta"]
    for r in rows:
        key = [_cell(r[c]) for c in ("experiment", "seed", "s", "N", "kappa", "nu")]
        for m in metrics:
            if r[m] is not None:
                w.writerow(key + [m, _cell(r[m])])
        if r["quantity"]:
            w.writerow(key + [r["quantity"], _cell(r["value"])])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _json_safe(o):
    if isinstance(o, float) and not math.isfinite(o):
        return "nan" if math.isnan(o) else ("inf" if o > 0 else "-inf")
    if isinstance(o, dict):
        return {str(k): _json_safe(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_json_safe(v) for v in o]
    return o


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_json_safe(obj), indent=1, default=_json_default) + "\n")


def run(cfg: ExperimentConfig, output=None, threads: int = None) -> Path:
    """Run ``cfg`` and write manifest.json, results.csv, results_long.csv and records/."""
    cfg.validate()
    out = Path(output or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    threads = threads or thread_count()
    t0 = time.perf_counter()
    res = run_experiment(cfg, threads)
    wall = time.perf_counter() - t0
    (out / "results.csv").write_text(results_csv(res.rows))
    (out / "results_long.csv").write_text(long_csv(res.rows))
    files = ["results.csv", "results_long.csv"]
    if res.series:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["seed", "s", "step", "log_growth"])
        w.writerows([(a, _cell(float(b)), c, _cell(d)) for a, b, c, d in res.series])
        (out / "series_long.csv").write_text(buf.getvalue())
        files.append("series_long.csv")
    rec_dir = out / "records"
    rec_dir.mkdir(exist_ok=True)
    for seed, rec in res.records.items():
        name = f"records/seed_{seed:04d}.json"
        write_json(out / name, rec)
        files.append(name)
    (out / "config.toml").write_text(cfg.to_toml())
    files.append("config.toml")
    manifest = {
        "config_hash": cfg.digest(),
        "code_version": __version__,
        "experiment": cfg.experiment,
        "seeds": list(cfg.seeds),
        "dt": {str(k): v for k, v in res.dts.items()},
        "threads": threads,
        "wall_time_s": wall,
        "platform": {"python": platform.python_version(), "numpy": np.__version__},
        "files": files,
        "config": cfg.to_dict(),
    }
    write_json(out / "manifest.json", manifest)
    return out
