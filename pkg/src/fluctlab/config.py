"""TOML experiment configuration with strict key and range validation."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

EXPERIMENTS = (
    "scattering_study",
    "effective_convergence",
    "mean_field_convergence",
    "fluctuation_norm",
    "gronwall_diagnostics",
    "ground_state",
)

# section -> allowed keys; top-level scalars live under ""
SCHEMA = {
    "": {"experiment", "seed", "output_dir"},
    "potential": {"kind", "strength", "range"},
    "sweep": {"N", "beta", "ell"},
    "grid": {"box_length", "grid_points", "modes", "n_max_extra", "dimension"},
    "time": {"dt", "t_final", "t_grid"},
    "effective": {"variant", "coupling", "convention", "tol"},
    "initial": {"kind", "width", "kappa", "coefficients"},
    "fluctuations": {"kernel_variant", "fd_step", "schedule_points", "quadratic_dt"},
}

REQUIRED = {
    "scattering_study": {("sweep", "N"), ("sweep", "beta")},
    "effective_convergence": {("sweep", "N"), ("sweep", "beta"), ("time", "dt"), ("time", "t_final")},
    "mean_field_convergence": {("sweep", "N"), ("time", "t_grid")},
    "fluctuation_norm": {("sweep", "N"), ("sweep", "beta"), ("time", "t_grid")},
    "gronwall_diagnostics": {("sweep", "N"), ("sweep", "beta"), ("time", "t_grid")},
    "ground_state": {("effective", "variant")},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    output_dir: str = "results"
    seed: int = 0
    potential: dict = field(default_factory=lambda: {"kind": "smooth_bump", "strength": 1.0, "range": 1.0})
    N_sweep: tuple = ()
    beta: float = 0.0
    ell: Optional[float] = None
    box_length: float = 2 * math.pi
    grid_points: int = 128
    modes: int = 3
    n_max_extra: int = 2
    dimension: int = 1
    dt: float = 1e-3
    t_final: float = 1.0
    t_grid: tuple = ()
    variant: str = "cubic_nls"
    coupling: Optional[float] = None
    convention: str = "paper_functional"
    tol: float = 1e-8
    initial: dict = field(default_factory=lambda: {"kind": "gaussian", "width": 0.8})
    kernel_variant: str = "ell_midpoint"
    fd_step: float = 1e-3
    schedule_points: int = 21
    quadratic_dt: float = 1e-3

    @property
    def ell_value(self) -> float:
        return self.box_length / 4 if self.ell is None else self.ell

    def to_dict(self) -> dict:
        d = asdict(self)
        d["N_sweep"] = list(self.N_sweep)
        d["t_grid"] = list(self.t_grid)
        return d


def _flatten(raw: dict) -> dict:
    flat = {}
    for key, val in raw.items():
        if isinstance(val, dict):
            if key not in SCHEMA or key == "":
                raise ConfigError(f"unknown section [{key}]")
            for sub, v in val.items():
                if sub not in SCHEMA[key]:
                    raise ConfigError(f"unknown key {sub!r} in [{key}]")
                flat[(key, sub)] = v
        else:
            if key not in SCHEMA[""]:
                raise ConfigError(f"unknown top-level key {key!r}")
            flat[("", key)] = val
    return flat


def _num(v, name, lo=None, hi=None, integer=False, lo_open=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name} must be numeric, got {v!r}")
    if integer and (not float(v).is_integer()):
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{name} must be finite")
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigError(f"{name}={v} below allowed minimum {lo}")
    if hi is not None and v > hi:
        raise ConfigError(f"{name}={v} above allowed maximum {hi}")
    return int(v) if integer else float(v)


def parse_config(raw: dict) -> ExperimentConfig:
    flat = _flatten(raw)
    exp = flat.get(("", "experiment"))
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    missing = [f"[{s}] {k}" for s, k in REQUIRED[exp] if (s, k) not in flat]
    if missing:
        raise ConfigError(f"{exp} requires {', '.join(sorted(missing))}")
    kw = {"experiment": exp}
    g = flat.get
    if ("", "seed") in flat:
        kw["seed"] = _num(g(("", "seed")), "seed", 0, integer=True)
    if ("", "output_dir") in flat:
        kw["output_dir"] = str(g(("", "output_dir")))
    pot = {k: v for (s, k), v in flat.items() if s == "potential"}
    if pot:
        kind = pot.get("kind", "smooth_bump")
        if kind not in ("zero", "square_well", "smooth_bump"):
            raise ConfigError(f"unknown potential kind {kind!r}")
        if kind != "zero":
            for key in ("strength", "range"):
                if key not in pot:
                    raise ConfigError(f"[potential] {kind} needs {key!r}")
            _num(pot["strength"], "potential.strength", 0.0)
            _num(pot["range"], "potential.range", 0.0, lo_open=True)
        kw["potential"] = dict(pot, kind=kind)
    if ("sweep", "N") in flat:
        Ns = g(("sweep", "N"))
        if not isinstance(Ns, list) or not Ns:
            raise ConfigError("[sweep] N must be a nonempty list")
        kw["N_sweep"] = tuple(_num(n, "N", 1.0) for n in Ns)
        if len(set(kw["N_sweep"])) != len(kw["N_sweep"]):
            raise ConfigError("[sweep] N has duplicates")
    if ("sweep", "beta") in flat:
        kw["beta"] = _num(g(("sweep", "beta")), "beta", 0.0, 1.0)
    if ("sweep", "ell") in flat:
        kw["ell"] = _num(g(("sweep", "ell")), "ell", 0.0, lo_open=True)
    if ("grid", "box_length") in flat:
        kw["box_length"] = _num(g(("grid", "box_length")), "box_length", 0.0, lo_open=True)
    if ("grid", "grid_points") in flat:
        G = _num(g(("grid", "grid_points")), "grid_points", 2, integer=True)
        if G & (G - 1):
            raise ConfigError("grid_points must be a power of two")
        kw["grid_points"] = G
    if ("grid", "modes") in flat:
        kw["modes"] = _num(g(("grid", "modes")), "modes", 1, integer=True)
    if ("grid", "n_max_extra") in flat:
        kw["n_max_extra"] = _num(g(("grid", "n_max_extra")), "n_max_extra", 1, integer=True)
    if ("grid", "dimension") in flat:
        d = _num(g(("grid", "dimension")), "dimension", 1, 3, integer=True)
        if d not in (1, 3):
            raise ConfigError("dimension must be 1 or 3")
        kw["dimension"] = d
    if ("time", "dt") in flat:
        kw["dt"] = _num(g(("time", "dt")), "dt", 0.0, lo_open=True)
    if ("time", "t_final") in flat:
        kw["t_final"] = _num(g(("time", "t_final")), "t_final", 0.0, lo_open=True)
    if ("time", "t_grid") in flat:
        tg = g(("time", "t_grid"))
        if not isinstance(tg, list) or not tg:
            raise ConfigError("[time] t_grid must be a nonempty list")
        ts = tuple(_num(t, "t_grid entry", 0.0) for t in tg)
        if list(ts) != sorted(set(ts)):
            raise ConfigError("[time] t_grid must be strictly increasing")
        kw["t_grid"] = ts
    if ("effective", "variant") in flat:
        from .effective import VARIANTS

        v = g(("effective", "variant"))
        if v not in VARIANTS:
            raise ConfigError(f"unknown effective variant {v!r}")
        kw["variant"] = v
    if ("effective", "coupling") in flat:
        kw["coupling"] = _num(g(("effective", "coupling")), "coupling", 0.0)
    if ("effective", "convention") in flat:
        c = g(("effective", "convention"))
        if c not in ("paper_functional", "conserved"):
            raise ConfigError(f"unknown energy convention {c!r}")
        kw["convention"] = c
    if ("effective", "tol") in flat:
        kw["tol"] = _num(g(("effective", "tol")), "tol", 0.0, lo_open=True)
    init = {k: v for (s, k), v in flat.items() if s == "initial"}
    if init:
        kind = init.get("kind", "gaussian")
        if kind not in ("gaussian", "von_mises", "modes"):
            raise ConfigError(f"unknown initial kind {kind!r}")
        if kind == "gaussian":
            _num(init.get("width", 0.8), "initial.width", 0.0, lo_open=True)
        if kind == "von_mises":
            _num(init.get("kappa", 1.0), "initial.kappa", 0.0)
        if kind == "modes":
            co = init.get("coefficients")
            if not isinstance(co, list) or not all(isinstance(c, list) and len(c) == 2 for c in co):
                raise ConfigError("[initial] coefficients must be a list of [re, im] pairs")
        kw["initial"] = dict(init, kind=kind)
    if ("fluctuations", "kernel_variant") in flat:
        kv = g(("fluctuations", "kernel_variant"))
        if kv not in ("gp_product", "ell_midpoint"):
            raise ConfigError(f"unknown kernel variant {kv!r}")
        kw["kernel_variant"] = kv
    if ("fluctuations", "fd_step") in flat:
        kw["fd_step"] = _num(g(("fluctuations", "fd_step")), "fd_step", 0.0, 0.1, lo_open=True)
    if ("fluctuations", "schedule_points") in flat:
        kw["schedule_points"] = _num(g(("fluctuations", "schedule_points")), "schedule_points", 2, integer=True)
    if ("fluctuations", "quadratic_dt") in flat:
        kw["quadratic_dt"] = _num(g(("fluctuations", "quadratic_dt")), "quadratic_dt", 0.0, lo_open=True)
    cfg = ExperimentConfig(**kw)
    if exp in ("fluctuation_norm", "gronwall_diagnostics") and cfg.beta >= 1.0:
        raise ConfigError("fluctuation runs need beta < 1")
    if exp == "mean_field_convergence" and cfg.beta != 0.0:
        raise ConfigError("mean_field_convergence runs at beta = 0")
    if cfg.t_grid and exp in ("fluctuation_norm", "gronwall_diagnostics") and cfg.t_grid[0] != 0.0:
        raise ConfigError("fluctuation time grids start at t = 0")
    return cfg


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_bytes()
    try:
        raw = tomllib.loads(text.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parse_config(raw)
