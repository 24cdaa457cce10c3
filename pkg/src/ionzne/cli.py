"""Command-line experiment runner.

Subcommands: calibrate, sweep, vqe, extrapolate, reproduce.  Every run
writes tab-delimited numeric tables, one JSON record per run and a
``manifest.yaml`` into its output directory.  Numeric files never contain
wall-clock values, so a rerun with the same config and seed is
byte-identical; timing lives in the manifest only.

Exit codes: 0 success, 2 validation, 3 budget exhaustion, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import yaml

from . import estimate, pulsesim, qcore, vqe, zne
from .noisescale import FoldMethod, ScaleSchedule
from .pulsesim import NOISE_PROFILES, PROFILES, ChannelCache, NoiseConfig, SimulationError
from .qcore import ValidationError
from .vqe import Budget, BudgetExhausted, Strategy

CONFIG_DIR_ENV = "IONZNE_CONFIG_DIR"
EXIT_OK, EXIT_VALIDATION, EXIT_BUDGET, EXIT_NUMERICAL = 0, 2, 3, 4
COMMANDS = ("calibrate", "sweep", "vqe", "extrapolate")
FIGURES = ("fig2", "fig4a", "fig4b", "fig4c", "fig4d", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10")

# gate -> target entanglement fidelity under the full noise model
FIDELITY_TARGETS = {"MS": 0.985, "MSInverse": 0.985, "MS*MSInverse": 0.981, "R(pi/2)": 0.998, "R(pi)": 0.994}


class ConfigError(ValidationError):
    def __init__(self, msg: str, source: str = "<config>", line: int | None = None):
        self.source, self.line = source, line
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {msg}")


# ---------------------------------------------------------------------------
# YAML with line numbers

def _compose(text: str, source: str) -> tuple[Any, dict[tuple, int]]:
    """Parse YAML and remember the 1-based line of every mapping key and list item."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(e, 'problem', e)}", source,
                          mark.line + 1 if mark else None) from None
    lines: dict[tuple, int] = {}
    constructor = yaml.SafeLoader("")

    def walk(n, path):
        lines.setdefault(path, n.start_mark.line + 1)
        if isinstance(n, yaml.MappingNode):
            out = {}
            for k, v in n.value:
                key = constructor.construct_object(k)
                if key in out:
                    raise ConfigError(f"duplicate key {key!r}", source, k.start_mark.line + 1)
                lines[path + (key,)] = k.start_mark.line + 1
                out[key] = walk(v, path + (key,))
            return out
        if isinstance(n, yaml.SequenceNode):
            return [walk(v, path + (i,)) for i, v in enumerate(n.value)]
        return constructor.construct_object(n)

    if node is None:
        return {}, lines
    return walk(node, ()), lines


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    command: str
    hamiltonian: str = "default"
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    noise_name: str = "full"
    pulse: str = "discrete"
    method: FoldMethod = FoldMethod.MS_AFTER
    schedule: tuple = (0, 1, 2, 3)
    theta: tuple[float, float, float] | None = None
    shots: int | None = 2000
    orders: tuple[int, ...] = ()
    strategies: tuple[Strategy, ...] = (Strategy.OPTIMIZE_THEN_EXTRAPOLATE,)
    budgets: tuple[int, ...] = (28_000,)
    opt_shots: int | None = None
    final_shots: int | None = None
    opt_fraction: float = 0.5
    theta0: float = 0.0
    theta_star: float | str = "optimize"
    seeds: tuple[int, ...] = (0,)
    workers: int = 1
    fock_levels: int = pulsesim.DEFAULT_FOCK
    description: str = ""
    source_dir: str = "."

    # derived helpers
    def scale_schedule(self) -> ScaleSchedule:
        if self.method is FoldMethod.TIME_STRETCH:
            return ScaleSchedule(self.method, factors=tuple(self.schedule))
        return ScaleSchedule(self.method, indices=tuple(self.schedule))

    def hamiltonian_path(self) -> Path:
        if self.hamiltonian == "default":
            return qcore.default_hamiltonian_path()
        p = Path(self.hamiltonian)
        return p if p.is_absolute() else Path(self.source_dir) / p

    def theta_grid(self) -> np.ndarray:
        start, stop, step = self.theta
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return np.round(start + step * np.arange(n), 12)

    def snapshot(self) -> dict:
        """Plain-data form that ``parse_config`` accepts back."""
        d = {
            "experiment": self.experiment,
            "command": self.command,
            "description": self.description,
            "hamiltonian": str(self.hamiltonian_path()) if self.hamiltonian != "default" else "default",
            "noise": self.noise_name if self.noise_name in NOISE_PROFILES else asdict(self.noise),
            "pulse": self.pulse,
            "method": self.method.value,
            "schedule": list(self.schedule),
            "shots": self.shots,
            "orders": list(self.orders),
            "strategies": [s.value for s in self.strategies],
            "budgets": list(self.budgets),
            "opt_shots": self.opt_shots,
            "final_shots": self.final_shots,
            "opt_fraction": self.opt_fraction,
            "theta0": self.theta0,
            "theta_star": self.theta_star,
            "seeds": list(self.seeds),
            "workers": self.workers,
            "fock_levels": self.fock_levels,
        }
        if self.theta is not None:
            d["theta"] = {"start": self.theta[0], "stop": self.theta[1], "step": self.theta[2]}
        return d


_KEYS = set(ExperimentConfig.__dataclass_fields__) - {"noise_name", "source_dir"}


def parse_config(data: Any, lines: dict[tuple, int] | None = None, source: str = "<config>",
                 source_dir: str = ".") -> ExperimentConfig:
    """Validate a plain-data config, reporting the offending line when known."""
    lines = lines or {}

    def fail(msg, *path):
        while path and path not in lines:
            path = path[:-1]
        raise ConfigError(msg, source, lines.get(path) if path else lines.get(()))

    if not isinstance(data, dict):
        fail("top level must be a mapping")
    for k in data:
        if k not in _KEYS:
            fail(f"unknown key {k!r}", k)
    kw: dict[str, Any] = {"source_dir": source_dir}

    def get(key, default=None):
        return data.get(key, default)

    def as_int(v, key, *path, minimum=None, allow_none=False):
        if v is None and allow_none:
            return None
        if isinstance(v, bool) or not isinstance(v, int):
            fail(f"{key} must be an integer, got {v!r}", key, *path)
        if minimum is not None and v < minimum:
            fail(f"{key} must be at least {minimum}, got {v}", key, *path)
        return v

    def as_float(v, key, *path):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            fail(f"{key} must be a finite number, got {v!r}", key, *path)
        return float(v)

    kw["experiment"] = str(get("experiment", "adhoc"))
    command = get("command")
    if command not in COMMANDS:
        fail(f"command must be one of {', '.join(COMMANDS)}, got {command!r}", "command")
    kw["command"] = command
    kw["description"] = str(get("description", ""))

    ham = str(get("hamiltonian", "default"))
    kw["hamiltonian"] = ham
    if ham != "default":
        p = Path(ham) if Path(ham).is_absolute() else Path(source_dir) / ham
        if not p.is_file():
            fail(f"hamiltonian file {str(p)!r} does not exist", "hamiltonian")
        try:
            qcore.load_hamiltonian(p)
        except ValidationError as e:
            fail(f"hamiltonian file rejected: {e}", "hamiltonian")

    noise = get("noise", "full")
    if isinstance(noise, str):
        if noise not in NOISE_PROFILES:
            fail(f"unknown noise profile {noise!r}; known: {', '.join(NOISE_PROFILES)}", "noise")
        kw["noise"], kw["noise_name"] = NOISE_PROFILES[noise], noise
    elif isinstance(noise, dict):
        fields = set(NoiseConfig.__dataclass_fields__)
        for k in noise:
            if k not in fields:
                fail(f"unknown noise field {k!r}", "noise", k)
        vals = {k: as_float(v, "noise", k) for k, v in noise.items()}
        try:
            kw["noise"] = NoiseConfig(**vals)
        except ValidationError as e:
            fail(str(e), "noise")
        kw["noise_name"] = "inline"
    else:
        fail("noise must be a profile name or a mapping of noise fields", "noise")

    pulse = get("pulse", "discrete")
    if pulse not in PROFILES:
        fail(f"unknown pulse profile {pulse!r}; known: {', '.join(PROFILES)}", "pulse")
    kw["pulse"] = pulse

    try:
        method = FoldMethod.parse(str(get("method", "ms-after")))
    except ValidationError as e:
        fail(str(e), "method")
    kw["method"] = method

    sched = get("schedule", [0, 1, 2, 3])
    if not isinstance(sched, list) or not sched:
        fail("schedule must be a non-empty list", "schedule")
    if method is FoldMethod.TIME_STRETCH:
        kw["schedule"] = tuple(as_float(v, "schedule", i) for i, v in enumerate(sched))
    else:
        kw["schedule"] = tuple(as_int(v, "schedule", i, minimum=0) for i, v in enumerate(sched))
    try:
        schedule = (ScaleSchedule(method, factors=kw["schedule"]) if method is FoldMethod.TIME_STRETCH
                    else ScaleSchedule(method, indices=kw["schedule"]))
    except ValidationError as e:
        fail(str(e), "schedule")

    theta = get("theta")
    if theta is not None:
        if not isinstance(theta, dict) or set(theta) != {"start", "stop", "step"}:
            fail("theta must be a mapping with start, stop and step", "theta")
        t = tuple(as_float(theta[k], "theta", k) for k in ("start", "stop", "step"))
        if t[2] <= 0:
            fail("theta step must be positive", "theta", "step")
        if t[1] < t[0]:
            fail("theta stop must not be below start", "theta", "stop")
        kw["theta"] = t
    elif command == "sweep":
        fail("a sweep needs a theta grid", "command")

    kw["shots"] = as_int(get("shots", 2000), "shots", minimum=1, allow_none=True)
    kw["opt_shots"] = as_int(get("opt_shots"), "opt_shots", minimum=1, allow_none=True)
    kw["final_shots"] = as_int(get("final_shots"), "final_shots", minimum=1, allow_none=True)
    kw["opt_fraction"] = as_float(get("opt_fraction", 0.5), "opt_fraction")
    kw["theta0"] = as_float(get("theta0", 0.0), "theta0")
    kw["workers"] = as_int(get("workers", 1), "workers", minimum=1)
    kw["fock_levels"] = as_int(get("fock_levels", pulsesim.DEFAULT_FOCK), "fock_levels", minimum=8)

    orders = get("orders", [])
    if not isinstance(orders, list):
        fail("orders must be a list", "orders")
    kw["orders"] = tuple(as_int(v, "orders", i, minimum=1) for i, v in enumerate(orders))
    for i, m in enumerate(kw["orders"]):
        if m + 1 > len(schedule):
            fail(f"order {m} needs {m + 1} scale factors, schedule has {len(schedule)}", "orders", i)

    strategies = get("strategies", ["c"])
    if not isinstance(strategies, list) or not strategies:
        fail("strategies must be a non-empty list", "strategies")
    parsed = []
    for i, s in enumerate(strategies):
        try:
            parsed.append(Strategy.parse(str(s)))
        except ValidationError as e:
            fail(str(e), "strategies", i)
    kw["strategies"] = tuple(parsed)

    budgets = get("budgets", [28_000])
    if not isinstance(budgets, list) or not budgets:
        fail("budgets must be a non-empty list", "budgets")
    kw["budgets"] = tuple(as_int(v, "budgets", i, minimum=1) for i, v in enumerate(budgets))

    ts = get("theta_star", "optimize")
    if ts != "optimize":
        ts = as_float(ts, "theta_star")
    kw["theta_star"] = ts

    seeds = get("seeds", [0])
    if isinstance(seeds, dict):
        if set(seeds) != {"start", "count"}:
            fail("seeds mapping needs exactly start and count", "seeds")
        start = as_int(seeds["start"], "seeds", "start", minimum=0)
        count = as_int(seeds["count"], "seeds", "count", minimum=1)
        kw["seeds"] = tuple(range(start, start + count))
    elif isinstance(seeds, list) and seeds:
        kw["seeds"] = tuple(as_int(v, "seeds", i, minimum=0) for i, v in enumerate(seeds))
    else:
        fail("seeds must be a non-empty list or a {start, count} mapping", "seeds")

    cfg = ExperimentConfig(**kw)
    # cross-field checks mirroring what the modules would reject later
    if command in ("vqe", "extrapolate") and method is FoldMethod.TIME_STRETCH:
        fail("optimization experiments use a fold method, not time stretching", "method")
    if command == "vqe":
        if len(schedule) < 2:
            fail("extrapolation needs at least two scale factors", "schedule")
        if Strategy.LOW_ORDER_THEN_HIGH_ORDER in cfg.strategies and len(schedule) < 3:
            fail("strategy d needs at least three scale factors", "strategies")
        for i, b in enumerate(cfg.budgets):
            try:
                Budget(b, cfg.opt_shots, cfg.final_shots, cfg.opt_fraction)
            except ValidationError as e:
                fail(str(e), "budgets", i)
    if command == "extrapolate":
        if len(schedule) < 2:
            fail("extrapolation needs at least two scale factors", "schedule")
        if not cfg.orders:
            cfg = replace(cfg, orders=tuple(range(1, len(schedule))))
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", str(path)) from None
    data, lines = _compose(text, str(path))
    return parse_config(data, lines, str(path), str(path.parent))


def resolve_config(name: str) -> Path:
    """A path as given, else a file in the configured directory, else a bundled preset."""
    p = Path(name)
    if p.is_file():
        return p
    candidates = []
    env = os.environ.get(CONFIG_DIR_ENV)
    if env:
        candidates += [Path(env) / name, Path(env) / f"{name}.yaml"]
    for c in candidates:
        if c.is_file():
            return c
    raise ConfigError(f"config {name!r} not found" + (f" (also looked in ${CONFIG_DIR_ENV}={env})" if env else ""))


def preset_path(figure: str) -> Path:
    if figure not in FIGURES:
        raise ValidationError(f"unknown figure id {figure!r}; known: {', '.join(FIGURES)}")
    env = os.environ.get(CONFIG_DIR_ENV)
    if env and (Path(env) / f"{figure}.yaml").is_file():
        return Path(env) / f"{figure}.yaml"
    return Path(str(resources.files("ionzne") / "presets" / f"{figure}.yaml"))


# ---------------------------------------------------------------------------
# output helpers

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    lines = ["\t".join(header)] + ["\t".join(_fmt(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text().splitlines()
    return lines[0].split("\t"), [ln.split("\t") for ln in lines[1:] if ln]


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, cfg: ExperimentConfig | None, files: list[Path], elapsed: float,
                   figure: str | None = None, extra: dict | None = None) -> Path:
    m = {
        "experiment": cfg.experiment if cfg else "calibrate",
        "command": cfg.command if cfg else "calibrate",
        "figure": figure,
        "config": cfg.snapshot() if cfg else None,
        "files": {f.name: _sha256(f) for f in sorted(files)},
        "wall_clock_seconds": round(elapsed, 3),
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if extra:
        m.update(extra)
    p = out / "manifest.yaml"
    p.write_text(yaml.safe_dump(m, sort_keys=False))
    return p


_CACHES: dict[tuple, ChannelCache] = {}


def channel_cache(pulse: str, fock_levels: int = pulsesim.DEFAULT_FOCK) -> ChannelCache:
    key = (pulse, fock_levels)
    if key not in _CACHES:
        _CACHES[key] = ChannelCache(ms_base=PROFILES[pulse], fock_levels=fock_levels)
    return _CACHES[key]


def _pmap(fn: Callable, items: list, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _eps(value: float, sem: float, exact: float) -> tuple[float, float]:
    return estimate.relative_error(estimate.EnergyEstimate(value, sem, 0), exact)


# ---------------------------------------------------------------------------
# commands

def calibration_report(pulse: str = "discrete", noise: NoiseConfig | None = None,
                       fock_levels: int = pulsesim.DEFAULT_FOCK) -> list[dict]:
    """Noiseless infidelity and noisy entanglement fidelity of the five native operations."""
    noise = noise if noise is not None else NoiseConfig()
    ideal_noise = NoiseConfig.noiseless()
    cache = ChannelCache(ms_base=PROFILES[pulse], fock_levels=fock_levels)
    ms = qcore.GateOp(qcore.MS, (0, 1))
    inv = qcore.GateOp(qcore.MS_INV, (0, 1))

    def chans(nz):
        a, b = cache.gate_channel(ms, nz, 2), cache.gate_channel(inv, nz, 2)
        return {
            "MS": (a, qcore.gate_unitary(ms)),
            "MSInverse": (b, qcore.gate_unitary(inv)),
            "MS*MSInverse": (a.then(b), np.eye(4)),
            "R(pi/2)": (pulsesim.simulate_sq_channel(pulsesim.SqPulseParams(math.pi / 2), nz),
                        qcore.rotation(0.0, math.pi / 2)),
            "R(pi)": (pulsesim.simulate_sq_channel(pulsesim.SqPulseParams(math.pi), nz),
                      qcore.rotation(0.0, math.pi)),
        }

    clean, noisy = chans(ideal_noise), chans(noise)
    rows = []
    for name, target in FIDELITY_TARGETS.items():
        ch0, u = clean[name]
        ch1, _ = noisy[name]
        rows.append({
            "gate": name,
            "noiseless_infidelity": 1 - pulsesim.entanglement_fidelity(ch0, u),
            "fidelity": pulsesim.entanglement_fidelity(ch1, u),
            "target": target,
        })
    return rows


def cmd_calibrate(out: Path, pulse: str = "discrete", noise_name: str = "full",
                  noise: NoiseConfig | None = None, fock_levels: int = pulsesim.DEFAULT_FOCK) -> list[Path]:
    noise = noise if noise is not None else NOISE_PROFILES[noise_name]
    rows = calibration_report(pulse, noise, fock_levels)
    cal = pulsesim.calibrate_ms(PROFILES[pulse], fock_levels)
    table = write_table(out / "calibration.tsv", ["gate", "noiseless_infidelity", "fidelity", "target"],
                        [[r["gate"], r["noiseless_infidelity"], r["fidelity"], r["target"]] for r in rows])
    rec = write_json(out / "record.json", {
        "pulse": pulse, "noise": asdict(noise), "fock_levels": fock_levels,
        "coupling_scale": cal.coupling_scale, "calibrated_detuning_khz": cal.sideband_detuning,
        "residual_infidelity": cal.residual_infidelity, "gates": rows,
    })
    for r in rows:
        print(f"{r['gate']:<14} fidelity {100 * r['fidelity']:7.3f}%  target {100 * r['target']:.1f}%  "
              f"noiseless infidelity {r['noiseless_infidelity']:.2e}")
    return [table, rec]


def _sweep_point(args) -> list[tuple]:
    cfg, it, theta = args
    h = qcore.load_hamiltonian(cfg.hamiltonian_path())
    sched = cfg.scale_schedule()
    cache = channel_cache(cfg.pulse, cfg.fock_levels)
    seed = cfg.seeds[0]
    out = []
    for k, c in enumerate(sched.factors):
        circ = sched.circuit(qcore.build_uccsd_ansatz(float(theta)), k)
        e = estimate.measure_circuit_energy(circ, h, cfg.noise, cfg.shots, seed, (it, k), cache)
        out.append((float(theta), float(c), e.mean, e.sem))
    return out


def cmd_sweep(cfg: ExperimentConfig, out: Path) -> list[Path]:
    grid = cfg.theta_grid()
    per_theta = _pmap(_sweep_point, [(cfg, i, t) for i, t in enumerate(grid)], cfg.workers)
    rows = sorted((r for pts in per_theta for r in pts), key=lambda r: (r[1], r[0]))
    files = [write_table(out / "sweep.tsv", ["theta", "c", "mean", "sem"], rows)]
    record = {"experiment": cfg.experiment, "seed": cfg.seeds[0], "config": cfg.snapshot(),
              "points": [dict(zip(("theta", "c", "mean", "sem"), r)) for r in rows]}
    if cfg.orders:
        ext = []
        for pts in per_theta:
            fits = zne.extrapolate_all([(c, m, s) for _, c, m, s in pts], cfg.orders)
            for m, f in fits.items():
                ext.append((pts[0][0], m, f.estimate, f.sem))
        files.append(write_table(out / "extrapolated.tsv", ["theta", "order", "estimate", "sem"], ext))
        record["extrapolations"] = [dict(zip(("theta", "order", "estimate", "sem"), r)) for r in ext]
    files.append(write_json(out / "record.json", record))
    return files


def _vqe_run(args) -> dict:
    cfg, strategy, total, seed = args
    h = qcore.load_hamiltonian(cfg.hamiltonian_path())
    exact = qcore.exact_ground_energy(h)
    budget = Budget(total, cfg.opt_shots, cfg.final_shots, cfg.opt_fraction)
    res = vqe.run_strategy(strategy, h, cfg.noise, cfg.scale_schedule(), budget, seed=seed,
                           cache=channel_cache(cfg.pulse, cfg.fock_levels), theta0=cfg.theta0)
    f = res.final
    eps, sigma = _eps(f.estimate, f.sem, exact)
    return {"strategy": strategy.value, "budget": total, "seed": seed, "exact": exact,
            "eps": eps, "sigma": sigma, "result": res.to_dict()}


def cmd_vqe(cfg: ExperimentConfig, out: Path) -> list[Path]:
    jobs = [(cfg, s, b, seed) for s in cfg.strategies for b in cfg.budgets for seed in cfg.seeds]
    runs = _pmap(_vqe_run, jobs, cfg.workers)
    rec_dir = out / "records"
    rec_dir.mkdir(exist_ok=True)
    files = []
    rows = []
    for r in runs:
        name = f"{r['strategy']}_{r['budget']}_seed{r['seed']}.json"
        files.append(write_json(rec_dir / name, {"experiment": cfg.experiment, "config": cfg.snapshot(), **r}))
        res = r["result"]
        rows.append([r["strategy"], r["budget"], r["seed"], res["theta_star"], res["optimizer_iterations"],
                     res["samples_spent"], res["final"]["estimate"], res["final"]["sem"], r["eps"], r["sigma"]])
    files.append(write_table(out / "runs.tsv", ["strategy", "budget", "seed", "theta_star", "iterations",
                                                "samples_spent", "estimate", "sem", "eps", "sigma"], rows))
    agg = []
    for s in cfg.strategies:
        for b in cfg.budgets:
            sel = [r for r in runs if r["strategy"] == s.value and r["budget"] == b]
            eps = np.array([r["eps"] for r in sel])
            se = float(np.std(eps, ddof=1) / math.sqrt(len(eps))) if len(eps) > 1 else 0.0
            agg.append([s.value, b, len(sel), float(eps.mean()), se, float(np.mean([r["sigma"] for r in sel]))])
    files.append(write_table(out / "aggregate.tsv",
                             ["strategy", "budget", "seeds", "mean_eps", "se_eps", "mean_sigma"], agg))
    for row in agg:
        print(f"strategy {row[0]} budget {row[1]:>6}: mean eps {row[3]:.3f}% +/- {row[4]:.3f}  "
              f"(sigma {row[5]:.3f}%, {row[2]} seeds)")
    return files


def _extrapolate_run(args) -> dict:
    cfg, seed = args
    h = qcore.load_hamiltonian(cfg.hamiltonian_path())
    exact = qcore.exact_ground_energy(h)
    cache = channel_cache(cfg.pulse, cfg.fock_levels)
    sched = cfg.scale_schedule()
    iterations = 0
    if cfg.theta_star == "optimize":
        opt_shots = cfg.opt_shots or 1000
        if cfg.shots is None:
            r = vqe.noiseless_optimum(h, cfg.theta0)
            theta = r.theta
        else:
            counter = iter(range(10**9))

            def objective(t):
                c = qcore.build_uccsd_ansatz(t)
                return estimate.measure_circuit_energy(c, h, cfg.noise, opt_shots, seed,
                                                       (vqe.OPT_STREAM, next(counter)), cache).mean

            r = vqe.minimize_1d(objective, cfg.theta0, noisy=True)
            theta = r.theta
        iterations = r.iterations
    else:
        theta = float(cfg.theta_star)
    post = vqe.post_opt_extrapolation(theta, h, cfg.noise, sched, cfg.shots, seed, cache, cfg.orders)
    return {"seed": seed, "theta_star": theta, "optimizer_iterations": iterations, "exact": exact,
            "points": [(c, e.mean, e.sem) for c, e in post.points],
            "fits": {m: f.to_dict() for m, f in post.fits.items()}}


def cmd_extrapolate(cfg: ExperimentConfig, out: Path) -> list[Path]:
    runs = _pmap(_extrapolate_run, [(cfg, s) for s in cfg.seeds], cfg.workers)
    pts, fits = [], []
    for r in runs:
        for c, m, s in r["points"]:
            pts.append([r["seed"], r["theta_star"], c, m, s])
        c1, m1, s1 = r["points"][0]
        fits.append([r["seed"], 0, m1, s1, *_eps(m1, s1, r["exact"])])
        for order, f in r["fits"].items():
            fits.append([r["seed"], order, f["estimate"], f["sem"], *_eps(f["estimate"], f["sem"], r["exact"])])
    files = [
        write_table(out / "points.tsv", ["seed", "theta_star", "c", "mean", "sem"], pts),
        write_table(out / "fits.tsv", ["seed", "order", "estimate", "sem", "eps", "sigma"], fits),
        write_json(out / "record.json", {"experiment": cfg.experiment, "config": cfg.snapshot(),
                                         "runs": [{**r, "fits": {str(k): v for k, v in r["fits"].items()}}
                                                  for r in runs]}),
    ]
    for row in fits:
        label = "unmitigated" if row[1] == 0 else f"order {row[1]}"
        print(f"seed {row[0]} {label:<12} E = {row[2]:.5f} +/- {row[3]:.5f}  eps {row[4]:.3f}% (sigma {row[5]:.3f}%)")
    return files


RUNNERS = {"sweep": cmd_sweep, "vqe": cmd_vqe, "extrapolate": cmd_extrapolate}


def run_config(cfg: ExperimentConfig, out: Path, figure: str | None = None) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if cfg.command == "calibrate":
        files = cmd_calibrate(out, cfg.pulse, cfg.noise_name, cfg.noise, cfg.fock_levels)
    else:
        files = RUNNERS[cfg.command](cfg, out)
    write_config = out / "config.yaml"
    write_config.write_text(yaml.safe_dump(cfg.snapshot(), sort_keys=False))
    manifest = write_manifest(out, cfg, files, time.perf_counter() - t0, figure)
    return files + [write_config, manifest]


def cmd_reproduce(figure: str, out: Path, overrides: dict) -> list[Path]:
    cfg = apply_overrides(load_config(preset_path(figure)), overrides)
    return run_config(cfg, out, figure)


def apply_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    changes = {}
    if overrides.get("seed") is not None:
        changes["seeds"] = (overrides["seed"],)
    if overrides.get("workers") is not None:
        if overrides["workers"] < 1:
            raise ValidationError("--workers must be at least 1")
        changes["workers"] = overrides["workers"]
    if overrides.get("infinite_shots"):
        if cfg.command == "vqe":
            raise ValidationError("budgeted VQE runs need finite shots; --infinite-shots applies to sweep/extrapolate")
        changes["shots"] = None
    return replace(cfg, **changes)


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ionzne", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"YAML config path or name (searched in ${CONFIG_DIR_ENV})")
    common.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    common.add_argument("--workers", type=int, help="parallel worker processes")
    common.add_argument("--out", default="results", help="output directory (default: results/<experiment>)")
    common.add_argument("--infinite-shots", action="store_true", help="exact expectations instead of sampling")
    sub = parser.add_subparsers(dest="command", required=True)
    cal = sub.add_parser("calibrate", parents=[common], help="gate fidelity report")
    cal.add_argument("--profile", default="discrete", choices=sorted(PROFILES))
    cal.add_argument("--noise", default="full", choices=sorted(NOISE_PROFILES))
    for name, text in (("sweep", "energy landscape per scale factor"),
                       ("vqe", "VQE with extrapolation strategies under a sample budget"),
                       ("extrapolate", "extrapolation at an optimized angle")):
        sub.add_parser(name, parents=[common], help=text)
    rep = sub.add_parser("reproduce", parents=[common], help="run a bundled figure preset")
    rep.add_argument("figure", help=", ".join(FIGURES))
    return parser


def _out_dir(args, default_name: str) -> Path:
    base = Path(args.out)
    return base / default_name if args.out == "results" else base


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "workers": args.workers, "infinite_shots": args.infinite_shots}
    try:
        if args.command == "reproduce":
            files = cmd_reproduce(args.figure, _out_dir(args, args.figure), overrides)
        elif args.command == "calibrate" and not args.config:
            out = _out_dir(args, "calibrate")
            out.mkdir(parents=True, exist_ok=True)
            t0 = time.perf_counter()
            files = cmd_calibrate(out, args.profile, args.noise)
            files.append(write_manifest(out, None, files, time.perf_counter() - t0,
                                        extra={"pulse": args.profile, "noise": args.noise}))
        else:
            if not args.config:
                raise ValidationError(f"{args.command} needs --config")
            cfg = apply_overrides(load_config(resolve_config(args.config)), overrides)
            if cfg.command != args.command:
                raise ConfigError(f"config is for {cfg.command!r}, not {args.command!r}", args.config)
            files = run_config(cfg, _out_dir(args, cfg.experiment))
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except BudgetExhausted as e:
        print(f"budget exhausted: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (SimulationError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    for f in files:
        print(f"wrote {f}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
