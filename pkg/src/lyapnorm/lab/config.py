"""Experiment configuration files (TOML).

A config is a flat table of experiment settings plus a ``[model]`` table for the
velocity model.  Unknown keys are rejected so typos fail loudly.  See
``docs/formats.md`` for the grammar.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..errors import ConfigError

EXPERIMENTS = ("psa-norm-sweep", "lns-norm-sweep", "kappa-scaling", "estimates-verify",
               "matrix-oracle", "regularity-compare")
MODELS = ("zero", "steady-shear", "time-periodic", "renewal", "stochastic-nse")
KAPPA_FLOOR = 1e-4


@dataclass
class ModelConfig:
    name: str = "renewal"
    amplitude: float = 1.0
    period: float = 1.0
    wavenumber: int = 1
    sigma_amplitude: float = 0.1
    sigma_decay: float = 2.0
    forcing_kf: float = 3.0
    init: str = "stationary"


@dataclass
class ExperimentConfig:
    experiment: str
    N: int = 32
    kappa: Optional[float] = None
    nu: Optional[float] = None
    s: list = field(default_factory=lambda: [-1.0, 0.0, 1.0])
    seeds: list = field(default_factory=lambda: [0])
    n: int = 400
    k: int = 1
    spinup: float = 10.0
    dt: float = 1 / 256
    gamma_prime: float = 2.0
    resolution: float = 0.02
    output: str = "results"
    # regularity-compare
    horizon: int = 100
    epsilon: float = 0.05
    delta: float = 0.05
    s_B: float = 0.0
    s_V: float = 1.0
    # kappa-scaling
    kappas: list = field(default_factory=list)
    iters: int = 60
    # estimates-verify
    Ns: list = field(default_factory=lambda: [32, 64, 128])
    members: int = 32
    gamma: float = 2.5
    # matrix-oracle
    a: list = field(default_factory=lambda: [0.5, 0.1, -0.3, -0.8])
    spread: float = 0.5
    offdiag: float = 1.0
    norm_weights: list = field(default_factory=lambda: [[1.0, 1.0, 1.0, 1.0], [1.0, 3.0, 10.0, 30.0]])
    quotient_index: list = field(default_factory=lambda: [2])
    tolerance: float = 1e-2
    model: ModelConfig = field(default_factory=ModelConfig)

    # -- serialization --------------------------------------------------------
    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: v for k, v in d.items() if v is not None}

    def to_toml(self) -> str:
        d = self.to_dict()
        model = d.pop("model")
        d["model"] = model  # tables must come last
        return tomli_w.dumps(d)

    def digest(self) -> str:
        return hashlib.sha256(self.to_toml().encode()).hexdigest()

    def validate(self) -> "ExperimentConfig":
        validate(self)
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_MODEL_FIELDS = {f.name: f for f in dataclasses.fields(ModelConfig)}
_FLOATS = {"kappa", "nu", "spinup", "dt", "gamma_prime", "resolution", "epsilon", "delta",
           "s_B", "s_V", "gamma", "spread", "offdiag", "tolerance"}
_INTS = {"N", "n", "k", "horizon", "iters", "members"}


def _num(key, v, kind):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {v!r}")
    if kind is int:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError(f"{key}: expected an integer, got {v!r}")
        return int(v)
    return float(v)


def from_dict(d: dict) -> ExperimentConfig:
    d = dict(d)
    unknown = set(d) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "experiment" not in d:
        raise ConfigError("missing required key 'experiment'")
    m = d.pop("model", {}) or {}
    if not isinstance(m, dict):
        raise ConfigError("[model] must be a table")
    bad = set(m) - set(_MODEL_FIELDS)
    if bad:
        raise ConfigError(f"unknown [model] keys: {', '.join(sorted(bad))}")
    mkw = {}
    for k, v in m.items():
        if k in ("name", "init"):
            mkw[k] = str(v)
        elif k == "wavenumber":
            mkw[k] = _num(k, v, int)
        else:
            mkw[k] = _num(k, v, float)
    kw = {}
    for k, v in d.items():
        if k in _FLOATS:
            kw[k] = _num(k, v, float)
        elif k in _INTS:
            kw[k] = _num(k, v, int)
        elif k == "seeds":
            if isinstance(v, int) and not isinstance(v, bool):
                v = list(range(v))
            if not isinstance(v, list):
                raise ConfigError("seeds: expected a list of integers or a count")
            kw[k] = [_num(k, x, int) for x in v]
        elif k in ("s", "kappas", "a"):
            if not isinstance(v, list):
                raise ConfigError(f"{k}: expected a list")
            kw[k] = [_num(k, x, float) for x in v]
        elif k in ("Ns", "quotient_index"):
            if not isinstance(v, list):
                raise ConfigError(f"{k}: expected a list")
            kw[k] = [_num(k, x, int) for x in v]
        elif k == "norm_weights":
            kw[k] = [[_num(k, x, float) for x in row] for row in v]
        else:
            kw[k] = str(v)
    return ExperimentConfig(model=ModelConfig(**mkw), **kw)


def loads(text: str) -> ExperimentConfig:
    try:
        d = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"malformed config: {e}") from None
    return from_dict(d)


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return loads(text)


def _pow2(n):
    return n >= 8 and (n & (n - 1)) == 0


def validate(c: ExperimentConfig) -> None:
    """Raise :class:`ConfigError` with a one-line reason if ``c`` cannot run."""
    if c.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {c.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    if c.model.name not in MODELS:
        raise ConfigError(f"unknown model {c.model.name!r}; choose from {', '.join(MODELS)}")
    if not _pow2(c.N):
        raise ConfigError(f"N={c.N} must be a power of two >= 8")
    if not c.seeds or min(c.seeds) < 0:
        raise ConfigError("seeds must be a nonempty list of non-negative integers")
    if len(set(c.seeds)) != len(c.seeds):
        raise ConfigError("seeds must be distinct")
    nsub = round(1 / c.dt) if c.dt > 0 else 0
    if nsub < 1 or abs(nsub * c.dt - 1) > 1e-12:
        raise ConfigError(f"dt={c.dt} must be 1/m for a positive integer m")
    if c.spinup < 0:
        raise ConfigError("spinup must be >= 0")
    ad = c.experiment in ("psa-norm-sweep", "kappa-scaling", "regularity-compare")
    if ad:
        kappas = c.kappas if c.experiment == "kappa-scaling" else [c.kappa]
        if c.experiment == "kappa-scaling" and len(kappas) < 2:
            raise ConfigError("kappa-scaling needs at least two kappas")
        for kap in kappas:
            if kap is None or not (kap > 0 and math.isfinite(kap)):
                raise ConfigError(f"kappa must be > 0 (got {kap}): the time-one solution "
                                  "operator is compact only with positive diffusivity")
            if kap < KAPPA_FLOOR:
                raise ConfigError(f"kappa={kap} is below {KAPPA_FLOOR}: the diffusive scale is "
                                  "not resolved at this truncation")
        if c.model.name == "stochastic-nse":
            raise ConfigError("advection-diffusion experiments need a prescribed velocity model")
        lo, hi = -c.gamma_prime, c.gamma_prime
    else:
        lo, hi = -c.gamma_prime + 1, c.gamma_prime + 1
    if c.experiment == "lns-norm-sweep":
        if c.nu is None or not (c.nu > 0 and math.isfinite(c.nu)):
            raise ConfigError(f"nu must be > 0 (got {c.nu}): the linearized time-one map is "
                              "compact only with positive viscosity")
        if c.nu < KAPPA_FLOOR:
            raise ConfigError(f"nu={c.nu} is below {KAPPA_FLOOR}: the viscous scale is not resolved")
        if c.model.name != "stochastic-nse":
            raise ConfigError("lns-norm-sweep requires model.name = 'stochastic-nse'")
    if c.experiment in ("psa-norm-sweep", "lns-norm-sweep", "kappa-scaling"):
        if not c.s:
            raise ConfigError("s list is empty")
        for s in c.s:
            if not (lo <= s <= hi):
                raise ConfigError(f"s={s} outside the admissible range [{lo}, {hi}]")
    if c.experiment in ("psa-norm-sweep", "lns-norm-sweep"):
        if c.n < 50:
            raise ConfigError("n must be >= 50 steps")
        if c.k < 1:
            raise ConfigError("k must be >= 1")
        if c.k > 4:
            raise ConfigError("k is capped at 4 (results.csv carries sigma_1..sigma_4)")
    if c.experiment == "regularity-compare":
        if c.horizon < 100:
            raise ConfigError("horizon must be >= 100")
        if not (c.epsilon > 0 and c.delta > 0):
            raise ConfigError("epsilon and delta must be > 0")
        if c.n < 50:
            raise ConfigError("n must be >= 50 steps")
        for s in (c.s_B, c.s_V):
            if not (lo <= s <= hi):
                raise ConfigError(f"s={s} outside the admissible range [{lo}, {hi}]")
    if c.experiment == "kappa-scaling":
        if any(s <= 0 for s in c.s):
            raise ConfigError("kappa-scaling needs positive s")
        if c.iters < 20:
            raise ConfigError("iters must be >= 20")
    if c.experiment == "estimates-verify":
        if len(c.Ns) < 2 or any(not _pow2(x) or x > 128 for x in c.Ns):
            raise ConfigError("Ns must list at least two powers of two up to 128")
        if c.members < 1:
            raise ConfigError("members must be >= 1")
    if c.experiment == "matrix-oracle":
        d = len(c.a)
        if d < 2:
            raise ConfigError("a must list at least two log-diagonal means")
        if any(x < y for x, y in zip(c.a, c.a[1:])):
            raise ConfigError("a must be nonincreasing (the invariant flag depends on it)")
        if len(c.norm_weights) < 2 or any(len(w) != d or min(w) <= 0 for w in c.norm_weights):
            raise ConfigError("norm_weights needs >= 2 rows of positive weights, one per coordinate")
        if any(not 1 <= i < d for i in c.quotient_index):
            raise ConfigError(f"quotient_index entries must lie in [1, {d - 1}]")
        if c.n < 50:
            raise ConfigError("n must be >= 50 steps")
