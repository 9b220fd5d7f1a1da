"""Command-line job runner.

Subcommands: ``negativity``, ``sweep``, ``convergence``, ``mode``, ``fit`` and
``self-check``. Jobs are described by a TOML file whose sections override the
built-in defaults (aLIGO parameters and noise model, dt = 0.25 ms, T = 0.1 s).

Frequencies in the config are rad/s; any key ending in ``_hz`` is given in Hz
and converted. Example::

    task = "sweep"
    partition = "traced"

    [noise]
    family = "ligo"
    resonances = true
    alpha_f2 = 1.0

    [sweep]
    axes = [{name = "noise.alpha_f1", logspace = [-18, -9, 10]}]
"""

from __future__ import annotations

import argparse
import concurrent.futures
import copy
import csv
import hashlib
import io
import itertools
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .covariance import (
    IntegratorSettings,
    TimeGrid,
    build_covariance,
    save_covariance,
    trace_cavity,
)
from .entanglement import (
    Verdict,
    analyze,
    convergence_scan,
    physicality_lambda,
    ppt_lambda,
    symplectic_spectrum,
    log_negativity,
)
from .model import TWO_PI, SystemParams, aligo_params, free_mass_params
from .quadrature import QuadratureSettings
from .spectra import (
    ALIGO_RESONANCES,
    LigoParam,
    PowerTable,
    Quiet,
    Structural,
    SuspensionOnly,
    Tabulated,
    White,
    fit_noise_model,
    model_to_json,
    read_psd_csv,
)

logger = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "DEFAULT_CONFIG",
    "JobConfig",
    "load_config",
    "build_system",
    "build_noise",
    "evaluate_point",
    "sweep_points",
    "run_sweep",
    "emit_plot_data",
    "self_check",
    "main",
]

TASKS = ("negativity", "sweep", "convergence", "mode", "fit", "self-check")
FLOAT_FMT = "{:.10g}"


class ConfigError(ValueError):
    """Malformed or inconsistent job configuration."""


DEFAULT_CONFIG: dict = {
    "task": "negativity",
    "partition": "full",
    "workers": 1,
    "system": {"preset": "aligo"},
    "noise": {"family": "ligo"},
    "grid": {"dt": 0.25e-3, "duration": 0.1},
    "integrator": {"sampling": "point"},
    "sweep": {"axes": []},
    "convergence": {"dts": [10e-3, 5e-3, 2e-3, 1e-3, 0.5e-3, 0.25e-3, 0.1e-3],
                    "rel_tol": 0.05},
    "fit": {"target": "force", "free": []},
    "output": {"dir": "out", "save_covariance": False},
}

_PARTITION_ALIASES = {"full": "full", "with-cavity": "full", "traced": "traced",
                      "cavity-traced": "traced", "adiabatic": "adiabatic",
                      "adiabatic-no-cavity": "adiabatic"}


def _merge(base, over):
    out = copy.deepcopy(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _hz(section: dict) -> dict:
    """Convert ``*_hz`` keys to rad/s under the bare name."""
    out = {}
    for key, value in section.items():
        if key.endswith("_hz") and isinstance(value, (int, float)):
            out[key[:-3]] = TWO_PI * float(value)
        else:
            out[key] = value
    return out


@dataclass
class JobConfig:
    """Effective job configuration (defaults merged with the file)."""

    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_CONFIG))

    @property
    def task(self):
        return self.data["task"]

    @property
    def partition(self):
        return _PARTITION_ALIASES[self.data["partition"]]

    @property
    def workers(self):
        return int(self.data.get("workers", 1))

    @property
    def out_dir(self):
        return Path(self.data["output"]["dir"])

    def validate(self):
        if self.data["task"] not in TASKS:
            raise ConfigError(f"unknown task {self.data['task']!r}; choose from {TASKS}")
        if self.data["partition"] not in _PARTITION_ALIASES:
            raise ConfigError(f"unknown partition {self.data['partition']!r}")
        if self.task == "sweep":
            axes = self.data["sweep"].get("axes", [])
            if not axes:
                raise ConfigError("a sweep needs at least one axis")
            if len(axes) > 2:
                raise ConfigError("sweeps support one or two axes")
            for axis in axes:
                if not axis_values(axis):
                    raise ConfigError(f"sweep axis {axis.get('name')!r} has no values")
        build_system(self.data)
        build_noise(self.data)
        return self

    def point_hash(self) -> str:
        blob = json.dumps(_hashable(self.data), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _hashable(data):
    # output and runtime settings do not change results
    d = {k: v for k, v in data.items() if k not in ("output", "workers")}
    return d


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> JobConfig:
    data = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        with open(path, "rb") as fh:
            try:
                data = _merge(data, tomllib.load(fh))
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
    if overrides:
        data = _merge(data, overrides)
    return JobConfig(data)


def build_system(data: dict) -> SystemParams:
    sec = _hz(dict(data["system"]))
    preset = sec.pop("preset", "aligo")
    try:
        if preset == "aligo":
            return aligo_params(**sec)
        if preset == "free-mass":
            if "omega_q_over_omega_f" in sec:
                noise = _hz(data["noise"])
                sec["omega_q"] = sec.pop("omega_q_over_omega_f") * float(noise["omega_f"])
            omega_q = sec.pop("omega_q", None)
            if omega_q is None:
                raise ConfigError("free-mass preset needs omega_q (or omega_q_hz)")
            return free_mass_params(omega_q, **sec)
        if preset == "custom":
            return SystemParams(**sec)
    except TypeError as exc:
        raise ConfigError(f"system: {exc}") from None
    raise ConfigError(f"unknown system preset {preset!r}")


def _table(spec):
    if spec is None:
        return None
    if isinstance(spec, str):
        return read_psd_csv(spec)
    spec = dict(spec)
    if "path" in spec:
        t = read_psd_csv(spec.pop("path"))
        return PowerTable(t.frequency, t.psd, **spec)
    return PowerTable(**spec)


def build_noise(data: dict):
    sec = _hz(dict(data["noise"]))
    family = sec.pop("family", "ligo")
    if "x_over_f" in sec:
        sec["omega_x"] = sec.pop("x_over_f") * float(sec["omega_f"])
    try:
        if family == "ligo":
            res = sec.pop("resonances", False)
            return LigoParam(resonances=ALIGO_RESONANCES if res else (), **sec)
        if family == "suspension":
            return SuspensionOnly(**sec)
        if family in ("white", "structural"):
            sec.setdefault("mass", build_system(data).mass)
            return White(**sec) if family == "white" else Structural(**sec)
        if family == "quiet":
            return Quiet()
        if family == "tabulated":
            return Tabulated(force=_table(sec.get("force")), sensing=_table(sec.get("sensing")))
    except TypeError as exc:
        raise ConfigError(f"noise: {exc}") from None
    raise ConfigError(f"unknown noise family {family!r}")


def build_integrator(data: dict) -> IntegratorSettings:
    sec = dict(data["integrator"])
    quad = {k: sec.pop(k) for k in list(sec) if k in QuadratureSettings.__dataclass_fields__}
    try:
        return IntegratorSettings(quadrature=QuadratureSettings(**quad), **sec)
    except TypeError as exc:
        raise ConfigError(f"integrator: {exc}") from None


def build_grid(data: dict) -> TimeGrid:
    g = data["grid"]
    return TimeGrid.from_duration(float(g["duration"]), float(g["dt"]))


def _covariance(data: dict):
    params, noise = build_system(data), build_noise(data)
    grid, integ = build_grid(data), build_integrator(data)
    part = _PARTITION_ALIASES[data["partition"]]
    if part == "traced":
        return trace_cavity(build_covariance(params, noise, grid, "full", integ))
    return build_covariance(params, noise, grid, part, integ)


def _set_path(data: dict, name: str, value):
    keys = name.split(".")
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value


def axis_values(axis: dict) -> List[float]:
    if "values" in axis:
        return [float(v) if isinstance(v, (int, float)) else v for v in axis["values"]]
    if "logspace" in axis:
        lo, hi, n = axis["logspace"]
        return [float(v) for v in np.logspace(lo, hi, int(n))]
    if "linspace" in axis:
        lo, hi, n = axis["linspace"]
        return [float(v) for v in np.linspace(lo, hi, int(n))]
    return []


def _fmt(x):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None
    if isinstance(x, float):
        return float(FLOAT_FMT.format(x))
    return x


def evaluate_point(data: dict) -> dict:
    """Entanglement record for one fully specified configuration."""
    cfg = JobConfig(data)
    record = {"hash": cfg.point_hash(), "grid": data["grid"], "integrator": data["integrator"],
              "partition": _PARTITION_ALIASES[data["partition"]]}
    t0 = time.perf_counter()
    try:
        cs = _covariance(data)
        rep = analyze(cs)
        record.update({"lambda_B": rep.lambda_b, "lambda_N": rep.lambda_n,
                       "nu_min": rep.nu_min, "E_N": rep.log_negativity,
                       "verdict": str(rep.verdict), "eps": rep.eps, "error": None})
    except Exception as exc:  # noqa: BLE001 - failed points are recorded
        logger.warning("point %s failed: %s", record["hash"], exc)
        record.update({"lambda_B": None, "lambda_N": None, "nu_min": None, "E_N": None,
                       "verdict": None, "eps": None, "error": f"{type(exc).__name__}: {exc}"})
    record["seconds"] = time.perf_counter() - t0
    return record


def sweep_points(cfg: JobConfig):
    """Row-major list of ``(axis values, point config)``."""
    axes = cfg.data["sweep"]["axes"]
    names = [a["name"] for a in axes]
    for combo in itertools.product(*(axis_values(a) for a in axes)):
        data = copy.deepcopy(cfg.data)
        data["task"] = "negativity"
        data.pop("sweep", None)
        for name, value in zip(names, combo):
            if name == "partition":
                data["partition"] = value
            else:
                _set_path(data, name, value)
        yield dict(zip(names, combo)), data


def _cache_path(out: Path, h: str) -> Path:
    return out / "cache" / f"{h}.json"


def run_sweep(cfg: JobConfig, force: bool = False) -> List[dict]:
    """Evaluate every sweep point, reusing cached records by hash.

    Records come back in row-major axis order whatever the worker count.
    """
    out = cfg.out_dir
    (out / "cache").mkdir(parents=True, exist_ok=True)
    points = list(sweep_points(cfg))
    records: List[Optional[dict]] = [None] * len(points)
    todo = []
    for i, (axes, data) in enumerate(points):
        h = JobConfig(data).point_hash()
        path = _cache_path(out, h)
        if path.exists() and not force:
            records[i] = json.loads(path.read_text())
        else:
            todo.append(i)
    payload = [points[i][1] for i in todo]
    if cfg.workers > 1 and len(payload) > 1:
        with concurrent.futures.ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(evaluate_point, payload))
    else:
        results = [evaluate_point(d) for d in payload]
    for i, rec in zip(todo, results):
        rec["axes"] = points[i][0]
        if rec["error"] is None:
            _cache_path(out, rec["hash"]).write_text(json.dumps(rec, sort_keys=True))
        records[i] = rec
    return records


def _summary_record(rec: dict) -> dict:
    keys = ("axes", "hash", "lambda_B", "lambda_N", "nu_min", "E_N", "verdict", "error")
    out = {}
    for k in keys:
        if k not in rec:
            continue
        v = rec[k]
        out[k] = {a: _fmt(b) for a, b in v.items()} if isinstance(v, dict) else _fmt(v)
    return out


def write_outputs(cfg: JobConfig, records: Sequence[dict], extra: Optional[dict] = None):
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "records.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, default=str) + "\n")
    counts: Dict[str, int] = {}
    for rec in records:
        key = rec.get("verdict") or "failed"
        counts[key] = counts.get(key, 0) + 1
    summary = {"version": __version__, "task": cfg.task, "config": _hashable(cfg.data),
               "config_hash": cfg.point_hash(), "counts": counts,
               "records": [_summary_record(r) for r in records]}
    if extra:
        summary.update(extra)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return out / "summary.json"


def emit_plot_data(records: Sequence[dict], kind: str = "line") -> str:
    """CSV table for line plots (one axis) or contour grids (two axes).

    Undecidable and failed points get an empty ``E_N`` and a flag.
    """
    if not records:
        return ""
    names = list(records[0]["axes"])
    if kind == "line" and len(names) != 1:
        raise ConfigError("a line table needs exactly one sweep axis")
    if kind == "contour" and len(names) != 2:
        raise ConfigError("a contour table needs exactly two sweep axes")
    rows = list(records)
    if kind == "line":
        rows.sort(key=lambda r: r["axes"][names[0]])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*names, "E_N", "lambda_B", "lambda_N", "verdict", "undecidable"])
    for r in rows:
        verdict = r.get("verdict")
        undecidable = verdict != str(Verdict.ENTANGLED) and verdict != str(Verdict.SEPARABLE)
        en = "" if undecidable or r.get("E_N") is None else FLOAT_FMT.format(r["E_N"])
        lam = ["" if r.get(k) is None else FLOAT_FMT.format(r[k]) for k in ("lambda_B", "lambda_N")]
        writer.writerow([*(r["axes"][n] for n in names), en, *lam,
                         verdict or "failed", int(undecidable)])
    return buf.getvalue()


def self_check(verbose=True) -> bool:
    """Compare the engine with the analytic and Lyapunov oracles."""
    from .oracles import lyapunov_qq, tmsv_covariance
    from .covariance import build_v_qq

    results = []
    p0 = free_mass_params(0.0, cavity_decay=TWO_PI * 100.0)
    grid = TimeGrid(50, 1e-3)
    cs = build_covariance(p0, Quiet(), grid, "full", IntegratorSettings(mech_zero_point=True))
    nu = symplectic_spectrum(cs)
    ok = np.max(np.abs(nu - 1)) < 1e-6 and abs(physicality_lambda(cs)) < 1e-8 \
        and abs(ppt_lambda(cs)) < 1e-8
    results.append(("vacuum", ok))
    for r in (0.1, 0.5, 1.0):
        st = tmsv_covariance(r)
        en = log_negativity(symplectic_spectrum((st.V, st.J), transposed=True))
        results.append((f"tmsv r={r}", abs(en - 2 * r / math.log(2)) < 1e-9))
    p = aligo_params()
    noise = White(TWO_PI * 20.0, TWO_PI * 200.0, p.mass)
    qq = build_v_qq(p, noise)
    ref = lyapunov_qq(p, noise)
    scale = np.abs(ref) + 1e-12 * np.max(np.abs(ref))
    results.append(("lyapunov", bool(np.max(np.abs(qq - ref) / scale) < 0.01)))
    if verbose:
        for name, ok in results:
            print(f"{'PASS' if ok else 'FAIL'} {name}")
    return all(ok for _, ok in results)


def _parser():
    ap = argparse.ArgumentParser(prog="optoent", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="task", required=True)
    for task in TASKS:
        p = sub.add_parser(task)
        p.add_argument("--config", help="TOML job file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int)
        p.add_argument("--force", action="store_true", help="ignore cached results")
        p.add_argument("--dt", type=float, help="bin width, s")
        p.add_argument("--duration", type=float, help="light window T, s")
        p.add_argument("--partition", choices=["traced", "full", "adiabatic"])
        p.add_argument("-v", "--verbose", action="store_true")
        if task == "fit":
            p.add_argument("table", nargs="?", help="CSV with frequency_hz, psd")
    return ap


def _overrides(args) -> dict:
    o: dict = {"task": args.task}
    if args.out:
        o.setdefault("output", {})["dir"] = args.out
    if args.workers:
        o["workers"] = args.workers
    if args.dt:
        o.setdefault("grid", {})["dt"] = args.dt
    if args.duration:
        o.setdefault("grid", {})["duration"] = args.duration
    if args.partition:
        o["partition"] = args.partition
    if getattr(args, "table", None):
        o.setdefault("fit", {})["input"] = args.table
    return o


def _run_negativity(cfg, force, mode=False):
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    cache = _cache_path(out, cfg.point_hash())
    if cache.exists() and not force and not mode:
        rec = json.loads(cache.read_text())
    else:
        t0 = time.perf_counter()
        cs = _covariance(cfg.data)
        rep = analyze(cs, mode=mode)
        rec = {"hash": cfg.point_hash(), "axes": {}, "partition": cfg.partition,
               "grid": cfg.data["grid"], "integrator": cfg.data["integrator"],
               "seconds": time.perf_counter() - t0, "error": None}
        rec.update(rep.to_dict())
        rec["verdict"] = str(rep.verdict)
        if cfg.data["output"].get("save_covariance"):
            save_covariance(cs, out / f"covariance_{cfg.point_hash()}")
        if mode:
            if rep.mode is None:
                raise SystemExit("no PPT-violating eigenvalue: nothing to extract")
            (out / "mode.csv").write_text(rep.mode.to_table())
        cache.parent.mkdir(parents=True, exist_ok=True)
        cache.write_text(json.dumps(rec, sort_keys=True))
    write_outputs(cfg, [rec])
    print(json.dumps(_summary_record(rec), sort_keys=True))
    return 0


def _run_convergence(cfg):
    dts = [float(x) for x in cfg.data["convergence"]["dts"]]
    duration = float(cfg.data["grid"]["duration"])

    def build(dt):
        data = copy.deepcopy(cfg.data)
        data["grid"] = {"dt": dt, "duration": duration}
        return _covariance(data)

    scan = convergence_scan(build, dts, float(cfg.data["convergence"].get("rel_tol", 0.05)))
    records = [{"axes": {"dt": p.dt}, "lambda_B": p.lambda_b, "lambda_N": p.lambda_n,
                "error": p.error,
                "verdict": None if p.error else "n/a"} for p in scan.points]
    write_outputs(cfg, records, {"converged": scan.converged})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dt", "lambda_B", "lambda_N", "error"])
    for p in scan.points:
        w.writerow([p.dt, "" if p.lambda_b is None else FLOAT_FMT.format(p.lambda_b),
                    "" if p.lambda_n is None else FLOAT_FMT.format(p.lambda_n), p.error or ""])
    (cfg.out_dir / "convergence.csv").write_text(buf.getvalue())
    print(json.dumps({"converged": scan.converged}))
    return 0 if any(p.error is None for p in scan.points) else 1


def _run_fit(cfg):
    sec = cfg.data["fit"]
    if "input" not in sec:
        raise ConfigError("fit needs an input table")
    table = read_psd_csv(sec["input"])
    template = build_noise(cfg.data)
    res = fit_noise_model(table, template, sec.get("free", []), sec.get("target", "force"))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    text = model_to_json(res.model, residual=res.residual, fit=res.metadata)
    (cfg.out_dir / "fit.json").write_text(text + "\n")
    print(text)
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.task == "self-check":
            return 0 if self_check() else 1
        cfg.validate()
        if args.task == "negativity":
            return _run_negativity(cfg, args.force)
        if args.task == "mode":
            return _run_negativity(cfg, True, mode=True)
        if args.task == "sweep":
            records = run_sweep(cfg, args.force)
            write_outputs(cfg, records)
            kind = "line" if len(cfg.data["sweep"]["axes"]) == 1 else "contour"
            (cfg.out_dir / f"plot_{kind}.csv").write_text(emit_plot_data(records, kind))
            failed = sum(r["error"] is not None for r in records)
            print(f"{len(records)} points, {failed} failed -> {cfg.out_dir}")
            return 1 if failed == len(records) else 0
        if args.task == "convergence":
            return _run_convergence(cfg)
        if args.task == "fit":
            return _run_fit(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
