"""Aggregate a results directory and evaluate its pass/fail checks."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from ..lyapunov import admissible_q, hill_tail_index
from .config import from_dict
from .runner import RESULT_COLUMNS, write_json

ABS_FLOOR = 1e-8  # differences below this count as agreement even with zero stderr


class MissingResults(Exception):
    pass


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'}" + (f" ({self.detail})" if self.detail else "")


@dataclass
class Report:
    experiment: str
    table: list
    checks: list
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self):
        return {"experiment": self.experiment, "passed": self.passed, "table": self.table,
                "checks": [c.__dict__ for c in self.checks], "info": self.info}

    def render(self) -> str:
        lines = []
        if self.table:
            keys = list(self.table[0])
            lines.append("  ".join(f"{k:>14}" for k in keys))
            for row in self.table:
                lines.append("  ".join(f"{_fmt(row[k]):>14}" for k in keys))
        lines += [c.line() for c in self.checks]
        return "\n".join(lines)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _f(x):
    return float(x) if x not in ("", None) else None


def load_rows(d: Path):
    p = d / "results.csv"
    if not p.is_file() or not (d / "manifest.json").is_file():
        raise MissingResults(f"{d}: results.csv or manifest.json not found")
    with p.open(newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames != RESULT_COLUMNS:
            raise MissingResults(f"{p}: unexpected columns")
        rows = list(rd)
    manifest = json.loads((d / "manifest.json").read_text())
    seeds_done = {int(r["seed"]) for r in rows if r["seed"] != ""}
    missing = set(manifest.get("seeds", [])) - seeds_done
    if not rows or missing:
        raise MissingResults(f"{d}: partial results (missing seeds {sorted(missing)})")
    return rows, manifest


def pooled(values, stderrs):
    """Mean over seeds with its standard error (per-run stderr for a single seed)."""
    v = np.asarray(values, float)
    if v.size == 1:
        return float(v[0]), float(stderrs[0])
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def _sweep(rows, cfg):
    by = {}
    for r in rows:
        by.setdefault(float(r["s"]), []).append(r)
    table, est = [], {}
    for s in sorted(by):
        lam = [float(r["lambda_hat"]) for r in by[s]]
        se = [float(r["stderr"]) for r in by[s]]
        m, e = pooled(lam, se)
        est[s] = (m, e)
        table.append({"s": s, "seeds": len(lam), "lambda_mean": m, "stderr": e,
                      "lambda_min": min(lam), "lambda_max": max(lam)})
    bad = []
    for a, b in combinations(sorted(est), 2):
        diff = abs(est[a][0] - est[b][0])
        tol = 3 * math.hypot(est[a][1], est[b][1]) + ABS_FLOOR
        if not diff <= tol:
            bad.append(f"s={a:g} vs s={b:g}: |diff|={diff:.3g} > {tol:.3g}")
    checks = [Check("norm-independence", not bad, "; ".join(bad))]
    if cfg.experiment == "psa-norm-sweep" and 0.0 in by:
        worst = max(float(r["lambda_hat"]) for r in by[0.0])
        checks.append(Check("dissipation-bound", worst <= -cfg.kappa + 1e-6,
                            f"max lambda(L2)={worst:.6g}, -kappa={-cfg.kappa:g}"))
    return table, checks, {}


def _kappa(rows, cfg):
    by = {}
    for r in rows:
        by.setdefault((r["quantity"], float(r["s"])), {}).setdefault(float(r["kappa"]), []).append(float(r["value"]))
    table, checks = [], []
    for (q, s), d in sorted(by.items()):
        ks = np.array(sorted(d))
        logs = np.array([np.mean(np.log(d[k])) for k in ks])
        slope = float(-np.polyfit(np.log(ks), logs, 1)[0])
        table.append({"quantity": q, "s": s, "slope": slope, "bound": s / 2 + 0.1})
        checks.append(Check(f"kappa-slope {q} s={s:g}", slope <= s / 2 + 0.1,
                            f"slope={slope:.4f}, bound={s / 2 + 0.1:.2f}"))
    return table, checks, {}


def _estimates(rows, cfg):
    by = {}
    for r in rows:
        if r["quantity"].endswith("_max"):
            by.setdefault((int(r["seed"]), r["quantity"][:-4], float(r["s"])), {})[int(r["N"])] = float(r["value"])
    table, bad = [], []
    for (seed, q, s), d in sorted(by.items()):
        Ns = sorted(d)
        for a, b in zip(Ns, Ns[1:]):
            g = d[b] / d[a] - 1
            table.append({"quantity": q, "s": s, "N": f"{a}->{b}", "max_ratio": d[b], "growth": g})
            if not g < 0.05:
                bad.append(f"{q} s={s:g} N {a}->{b}: growth {g:.3%}")
    return table, [Check("refinement-stability", not bad, "; ".join(bad))], {}


def _matrix(rows, cfg):
    tol = cfg.tolerance
    per = {}
    for r in rows:
        per.setdefault(int(r["seed"]), {})[r["quantity"]] = float(r["value"])
    bad = {"oracle": [], "norms": [], "quotient": [], "angle": []}
    d = len(cfg.a)
    names = [f"w{j}" for j in range(len(cfg.norm_weights))]
    table = []
    for seed, q in sorted(per.items()):
        for i in range(1, d + 1):
            o = q[f"chi_{i}_oracle"]
            vals = [q[f"chi_{i}[{nm}]"] for nm in names]
            table.append({"seed": seed, "i": i, "oracle": o, **{nm: v for nm, v in zip(names, vals)}})
            for nm, v in zip(names, vals):
                if not abs(v - o) <= tol:
                    bad["oracle"].append(f"seed {seed} chi_{i}[{nm}]={v:.4f} vs {o:.4f}")
            if not max(vals) - min(vals) <= tol:
                bad["norms"].append(f"seed {seed} chi_{i} spread {max(vals) - min(vals):.3g}")
        for M in cfg.quotient_index:
            a, b = q[f"sigma_M{M}_quotient"], q[f"sigma_M{M}_full"]
            if not abs(a - b) <= tol:
                bad["quotient"].append(f"seed {seed} M={M}: {a:.4f} vs {b:.4f}")
            sl = q[f"angle_slope_M{M}"]
            if not abs(sl) <= tol:
                bad["angle"].append(f"seed {seed} M={M}: slope {sl:.3g}")
    checks = [Check("spectrum-oracle", not bad["oracle"], "; ".join(bad["oracle"])),
              Check("norm-independence", not bad["norms"], "; ".join(bad["norms"])),
              Check("quotient-volume", not bad["quotient"], "; ".join(bad["quotient"])),
              Check("angle-slope", not bad["angle"], "; ".join(bad["angle"]))]
    return table, checks, {}


def q_moments(K, qs):
    lk = np.log(np.maximum(np.asarray(K, float), 1.0))
    return {q: float(np.mean(lk ** q)) for q in qs}


def _regularity(rows, cfg):
    per = {}
    for r in rows:
        per.setdefault(int(r["seed"]), {})[r["quantity"]] = r
    table, viol = [], []
    K = []
    for seed, q in sorted(per.items()):
        main = q["rhs"]
        lhs, rhs = float(main["D_bar"]), float(main["value"])
        K.append(float(main["K_delta"]))
        table.append({"seed": seed, "D_bar_V": lhs, "K_delta": float(main["K_delta"]),
                      "N_delta": int(main["N_delta"]), "rhs": rhs})
        if not int(float(q["holds"]["value"])):
            viol.append(f"seed {seed}: {lhs:.4g} > {rhs:.4g}")
    inconclusive = sum(int(float(q["inconclusive"]["value"])) for q in per.values())
    # tail exponent of log+ K_delta across paths
    p = hill_tail_index(np.log(np.maximum(K, 1.0)))
    qmax = admissible_q(p)
    qs = [q for q in (0.5, 1.0, 2.0) if q < qmax]
    info = {"violations": len(viol), "inconclusive": inconclusive, "hill_p": p, "q_max": qmax,
            "log_plus_K_moments": {repr(q): v for q, v in q_moments(K, qs).items()}}
    checks = [Check("regularity-comparison", not viol, f"{len(viol)} violations over {len(per)} seeds"
                    + ("; " + "; ".join(viol) if viol else ""))]
    return table, checks, info


_AGG = {"psa-norm-sweep": _sweep, "lns-norm-sweep": _sweep, "kappa-scaling": _kappa,
        "estimates-verify": _estimates, "matrix-oracle": _matrix, "regularity-compare": _regularity}


def build_report(d) -> Report:
    d = Path(d)
    if not d.is_dir():
        raise MissingResults(f"{d}: not a directory")
    rows, manifest = load_rows(d)
    cfg = from_dict(manifest["config"])
    table, checks, info = _AGG[cfg.experiment](rows, cfg)
    return Report(cfg.experiment, table, checks, info)


def report(d) -> Report:
    """Build the report for ``d`` and write ``report.json`` next to the results."""
    rep = build_report(d)
    write_json(Path(d) / "report.json", rep.to_dict())
    return rep
