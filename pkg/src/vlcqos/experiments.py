"""Config-driven parameter sweeps written as CSV tables.

Config files are INI-style. Recognised sections and keys::

    [phy]       any PhyConfig field; angles in degrees, power in W or with an
                explicit "mW" suffix (cell_radius defaults to 3 m)
    [source]    gamma, beta: comma lists, zipped pairwise (defaults 0.3 / 0.7)
    [sweep]     theta | theta_db, theta_t | theta_t_db, powers, loads,
                delay_theta_t | delay_theta_t_db
    [bounds]    eps, t_max, optimize_split
    [sim]       frames, seed

List values accept ``a, b, c`` or ``logspace(lo, hi, n)`` / ``linspace(lo, hi, n)``.
``*_db`` keys are converted with ``10**(x/10)`` when the file is parsed.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import io
import json
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .bounds import BoundQuery, UnstableSystem, queue_bound
from .markov import OnOffChain
from .phy import PhyConfig, rate_interval
from .qos import (Infeasible, effective_capacity, max_avg_arrival_rate_for_service,
                  optimize_fixed_rate, reference_max_arrival_rate)

EXPERIMENTS = ("opt-rate-sweep", "effective-capacity-sweep", "max-arrival-sweep",
               "delay-bound-sweep", "validate")


class ConfigError(ValueError):
    """Bad config file; message names the section/key and line when known."""


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    phy: PhyConfig
    sources: tuple[tuple[float, float], ...] = ((0.3, 0.7),)
    thetas: tuple[float, ...] = tuple(np.logspace(-7, 0, 29).tolist())
    theta_ts: tuple[float, ...] = tuple(np.logspace(-7, 0, 29).tolist())
    powers: tuple[float, ...] = (0.2,)
    loads: tuple[float, ...] = (0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.98, 1.0)
    delay_theta_t: float = 1e-4
    eps: float = 1e-3
    t_max: int = 10_000
    optimize_split: bool = False
    frames: int = 10_000_000
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment id {self.experiment!r}")
        for name in ("sources", "thetas", "theta_ts", "powers", "loads"):
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"{name} grid must not be empty")

    def digest(self) -> str:
        """Hash of every field that shapes the table; the output path is excluded."""
        fields = dataclasses.asdict(self)
        fields.pop("out")
        blob = json.dumps(fields, sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------- parsing

_RANGE = re.compile(r"^\s*(logspace|linspace)\s*\(\s*([^,]+),\s*([^,]+),\s*([^)]+)\)\s*$")


def _float_list(text: str) -> list[float]:
    m = _RANGE.match(text)
    if m:
        fn, lo, hi, n = m.groups()
        return [float(v) for v in getattr(np, fn)(float(lo), float(hi), int(n))]
    return [float(tok) for tok in text.replace("\n", ",").split(",") if tok.strip()]


def _power(tok: str) -> float:
    tok = tok.strip()
    low = tok.lower()
    if low.endswith("mw"):
        return float(tok[:-2]) * 1e-3
    if low.endswith("w"):
        return float(tok[:-1])
    return float(tok)


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip().lower()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s, re.I):
            return i
    return None


def parse_config(text: str, experiment: str) -> ExperimentSpec:
    """Build an :class:`ExperimentSpec` from INI text; raises :class:`ConfigError`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    def where(section, key):
        line = _line_of(text, section, key)
        return f"[{section}] {key}" + (f" (line {line})" if line else "")

    def get(section, key, conv, default=None):
        if not cp.has_option(section, key):
            return default
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{where(section, key)}: cannot parse {raw!r}: {exc}") from exc

    phy_fields = {f.name for f in dataclasses.fields(PhyConfig)}
    phy_kwargs = {"cell_radius": 3.0}
    if cp.has_section("phy"):
        for key in cp.options("phy"):
            if key not in phy_fields:
                raise ConfigError(f"{where('phy', key)}: unknown field")
            phy_kwargs[key] = get("phy", key, _power if key == "avg_power" else float)
    try:
        phy = PhyConfig(**phy_kwargs)
    except ValueError as exc:
        raise ConfigError(f"[phy]: {exc}") from exc

    kwargs = {}
    gammas = get("source", "gamma", _float_list, [0.3])
    betas = get("source", "beta", _float_list, [0.7])
    if len(gammas) != len(betas):
        if len(gammas) == 1:
            gammas = gammas * len(betas)
        elif len(betas) == 1:
            betas = betas * len(gammas)
        else:
            raise ConfigError(f"{where('source', 'beta')}: gamma and beta lists differ in length")
    for g, b in zip(gammas, betas):
        try:
            OnOffChain(g, b, 1.0)
        except ValueError as exc:
            raise ConfigError(f"[source]: {exc}") from exc
    kwargs["sources"] = tuple(zip(gammas, betas))

    def theta_field(key):
        lin = get("sweep", key, _float_list)
        db = get("sweep", key + "_db", _float_list)
        if lin is not None and db is not None:
            raise ConfigError(f"{where('sweep', key)}: give either {key} or {key}_db, not both")
        vals = lin if lin is not None else (
            [10.0 ** (v / 10.0) for v in db] if db is not None else None)
        if vals is not None and (not vals or any(not v > 0 for v in vals)):
            raise ConfigError(f"{where('sweep', key)}: values must be positive and non-empty")
        return vals

    for key, name in (("theta", "thetas"), ("theta_t", "theta_ts")):
        vals = theta_field(key)
        if vals is not None:
            kwargs[name] = tuple(sorted(vals))
    dtt = theta_field("delay_theta_t")
    if dtt is not None:
        kwargs["delay_theta_t"] = dtt[0]
    powers = get("sweep", "powers", lambda s: [_power(t) for t in s.split(",") if t.strip()])
    if powers is not None:
        if not powers or any(not p > 0 for p in powers):
            raise ConfigError(f"{where('sweep', 'powers')}: powers must be positive")
        kwargs["powers"] = tuple(sorted(powers))
    loads = get("sweep", "loads", _float_list)
    if loads is not None:
        if not loads or any(not l > 0 for l in loads):
            raise ConfigError(f"{where('sweep', 'loads')}: loads must be positive")
        kwargs["loads"] = tuple(sorted(loads))
    eps = get("bounds", "eps", float)
    if eps is not None:
        if not 0 < eps <= 1:
            raise ConfigError(f"{where('bounds', 'eps')}: must lie in (0, 1]")
        kwargs["eps"] = eps
    t_max = get("bounds", "t_max", int)
    if t_max is not None:
        if t_max < 1:
            raise ConfigError(f"{where('bounds', 't_max')}: must be >= 1")
        kwargs["t_max"] = t_max
    if cp.has_option("bounds", "optimize_split"):
        try:
            kwargs["optimize_split"] = cp.getboolean("bounds", "optimize_split")
        except ValueError as exc:
            raise ConfigError(f"{where('bounds', 'optimize_split')}: {exc}") from exc
    frames = get("sim", "frames", lambda s: int(float(s)))
    if frames is not None:
        kwargs["frames"] = frames
    seed = get("sim", "seed", int)
    if seed is not None:
        kwargs["seed"] = seed
    for section in cp.sections():
        if section not in ("phy", "source", "sweep", "bounds", "sim"):
            raise ConfigError(f"unknown section [{section}]")
    return ExperimentSpec(experiment=experiment, phy=phy, **kwargs)


def load_config(path: str | Path, experiment: str) -> ExperimentSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, experiment)


# ---------------------------------------------------------------- sweeps

@dataclass
class Table:
    columns: Sequence[str]
    rows: list[tuple] = field(default_factory=list)

    def to_csv(self, spec: ExperimentSpec) -> str:
        buf = io.StringIO()
        buf.write(f"# vlcqos {__version__} experiment={spec.experiment} spec-hash={spec.digest()}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(float(v)) if math.isfinite(v) else ("inf" if v > 0 else ("-inf" if v < 0 else "nan"))
    return v


def _pmap(fn: Callable, items: Iterable, threads: int) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _opt_row(args):
    phy, power, theta_t = args
    cfg = phy.with_(avg_power=power)
    iv = rate_interval(cfg)
    opt = optimize_fixed_rate(cfg, theta_t)
    return (theta_t, power, opt.rho_star, opt.p_on_star, iv.rho_min, iv.rho_max)


def run_opt_rate_sweep(spec: ExperimentSpec, threads: int = 1) -> Table:
    tasks = [(spec.phy, p, t) for p in spec.powers for t in spec.theta_ts]
    return Table(("theta_t", "power_w", "rho_star", "p_on_star", "rho_min", "rho_max"),
                 _pmap(_opt_row, tasks, threads))


def _ec_rows(args):
    phy, power, theta_t, thetas = args
    opt = optimize_fixed_rate(phy.with_(avg_power=power), theta_t)
    ec = effective_capacity(opt.service, np.asarray(thetas))
    return [(theta_t, th, power, opt.rho_star, opt.p_on_star, float(v))
            for th, v in zip(thetas, ec)]


def run_ec_sweep(spec: ExperimentSpec, threads: int = 1) -> Table:
    tasks = [(spec.phy, p, tt, spec.thetas) for p in spec.powers for tt in spec.theta_ts]
    rows = [r for block in _pmap(_ec_rows, tasks, threads) for r in block]
    return Table(("theta_t", "theta", "power_w", "rho_star", "p_on_star", "effective_capacity"), rows)


def _delta_or_nan(v):
    return math.nan if isinstance(v, Infeasible) else float(v)


def _arrival_row(args):
    phy, power, (g, b), theta = args
    cfg = phy.with_(avg_power=power)
    opt = optimize_fixed_rate(cfg, theta)
    src = OnOffChain(g, b, 1.0)
    fixed = max_avg_arrival_rate_for_service(src, opt.service, theta)
    ref = reference_max_arrival_rate(src, cfg, theta)
    return (power, g, b, theta, opt.rho_star, opt.p_on_star, _delta_or_nan(fixed), _delta_or_nan(ref))


def run_max_arrival_sweep(spec: ExperimentSpec, threads: int = 1) -> Table:
    tasks = [(spec.phy, p, s, th) for p in spec.powers for s in spec.sources for th in spec.thetas]
    return Table(("power_w", "gamma_s", "beta_s", "theta", "rho_star", "p_on_star",
                  "delta_fixed", "delta_ref"), _pmap(_arrival_row, tasks, threads))


def _delay_row(args):
    phy, power, (g, b), theta_t, load, eps, t_max, split = args
    svc = optimize_fixed_rate(phy.with_(avg_power=power), theta_t).service
    src = OnOffChain(g, b, 1.0).with_avg_rate(load * svc.avg_rate)
    try:
        res = queue_bound(src, svc, BoundQuery.even(eps, t_max=t_max, optimize_split=split))
        q, tau, status = res.q, res.tau, "ok"
    except UnstableSystem:
        q, tau, status = math.inf, math.inf, "unstable"
    return (power, g, b, theta_t, svc.rho, svc.p_on, svc.avg_rate, load,
            src.avg_rate, src.rate_on, eps, q, tau, status)


def run_delay_bound_sweep(spec: ExperimentSpec, threads: int = 1) -> Table:
    tasks = [(spec.phy, p, s, spec.delay_theta_t, ld, spec.eps, spec.t_max, spec.optimize_split)
             for p in spec.powers for s in spec.sources for ld in spec.loads]
    return Table(("power_w", "gamma_s", "beta_s", "theta_t", "rho_star", "p_on_star",
                  "avg_service_rate", "load", "r_avg", "lambda", "eps", "q_bits",
                  "tau_frames", "status"), _pmap(_delay_row, tasks, threads))


def run_validate(spec: ExperimentSpec, threads: int = 1) -> Table:
    from .validation import run_all

    rows = [(r.number, r.name, "PASS" if r.passed else "FAIL", r.measured, r.seconds)
            for r in run_all(frames=spec.frames, seed=spec.seed)]
    svc = optimize_fixed_rate(spec.phy, spec.delay_theta_t).service
    src = OnOffChain(*spec.sources[0], 1.0).with_avg_rate(0.5 * svc.avg_rate)
    res = queue_bound(src, svc, BoundQuery.even(1.0))
    rows.append((10, "eps = 1 gives a zero backlog bound",
                 "PASS" if res.q == 0.0 else "FAIL", f"q={res.q}", 0.0))
    return Table(("check", "name", "status", "measured", "seconds"), rows)


def validation_failed(table: Table) -> bool:
    return any(row[2] != "PASS" for row in table.rows)


RUNNERS = {
    "opt-rate-sweep": run_opt_rate_sweep,
    "effective-capacity-sweep": run_ec_sweep,
    "max-arrival-sweep": run_max_arrival_sweep,
    "delay-bound-sweep": run_delay_bound_sweep,
    "validate": run_validate,
}
