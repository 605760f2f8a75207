"""Command-line front end.

    geomflow {simulate,besov,decay,rg,longtime,selftest} --config run.ini [--out DIR] [--jobs N] [--svg]

Configuration files are INI documents with the sections ``grid``, ``flow``,
``stepper``, ``experiment`` and ``output``; unknown sections or keys are
rejected.  Exit codes: 0 success, 1 selftest failure, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime
import hashlib
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .flows import ConstraintError, FlowKind, FlowProblem, NumericalError, StepperConfig, evolve
from .spectral import BoundaryDecayError, Field, make_grid

SCHEMA_VERSION = 1
EXIT_OK, EXIT_SELFTEST, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
SUBCOMMANDS = ("simulate", "besov", "decay", "rg", "longtime", "selftest")


class ConfigError(ValueError):
    pass


# key -> parser; every section is closed
_FLOAT = float
_INT = int


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    return tuple(float(x) for x in str(s).replace(",", " ").split())


def _str(s):
    return str(s).strip()


SCHEMA = {
    "grid": {"d": _INT, "n": _INT, "half_extent": _FLOAT},
    "flow": {"kind": _str, "m": _INT, "base_point": _floats, "q": _FLOAT, "rg_prefactors": _floats},
    "stepper": {
        "dt": _FLOAT,
        "t_end": _FLOAT,
        "dt_relative": _FLOAT,
        "dt_max": _FLOAT,
        "dealias": _bool,
        "sphere_renormalize_every": _INT,
        "snapshot_times": _floats,
        "snapshots_log": _floats,
        "p_user": _FLOAT,
    },
    "experiment": {
        "kind": _str,
        "recipe": _str,
        "eps": _FLOAT,
        "width": _FLOAT,
        "R": _FLOAT,
        "t0": _FLOAT,
        "axis": _INT,
        "p": _floats,
        "norm": _str,
        "j_min": _INT,
        "j_max": _INT,
        "base": _FLOAT,
        "fit_window": _floats,
        "tolerance": _FLOAT,
        "rg_kind": _str,
        "L": _FLOAT,
        "n_steps": _INT,
        "linear": _bool,
        "sobolev_m": _INT,
        "sobolev_r": _FLOAT,
        "inner_snapshots": _INT,
        "delta": _FLOAT,
        "horizon": _FLOAT,
    },
    "output": {"directory": _str, "formats": _str, "name": _str},
}

DEFAULTS = {
    "grid": {"d": 1, "n": 256, "half_extent": 16.0},
    "flow": {"kind": "heat", "m": 1},
    "stepper": {"dt": 0.01, "t_end": 1.0, "dealias": True, "sphere_renormalize_every": 10, "p_user": 4.0},
    "experiment": {},
    "output": {"formats": "csv,json"},
}


def load_config(text: str) -> dict:
    """Parse and validate an INI document into a resolved nested dict."""
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str  # keys are case sensitive ("R", "L")
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc
    resolved = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}] (allowed: {', '.join(SCHEMA)})")
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in section [{sec}]")
            try:
                resolved[sec][key] = SCHEMA[sec][key](raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for [{sec}] {key} = {raw!r}: {exc}") from exc
    return resolved


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=list).encode()).hexdigest()


# ---------------------------------------------------------------------------
# builders


def _grid(cfg):
    g = cfg["grid"]
    try:
        return make_grid(g["d"], g["n"], g["half_extent"])
    except ValueError as exc:
        raise ConfigError(f"[grid]: {exc}") from exc


def _problem(cfg):
    f = cfg["flow"]
    kind = f["kind"]
    m = f.get("m", 1)
    try:
        if kind == "heat":
            # the linear limit of the deviation equation is the heat equation
            e = [0.0] * m
            e[0] = 1.0
            return FlowProblem(FlowKind.DEVIATION_V, m=m, base_point=tuple(e), rg_prefactors=(0.0, 0.0))
        fk = FlowKind.parse(kind)
        kw = {"m": m}
        if "q" in f:
            kw["q"] = f["q"]
        if "rg_prefactors" in f:
            kw["rg_prefactors"] = f["rg_prefactors"]
        if fk in (FlowKind.DEVIATION_V, FlowKind.GRADIENT_W, FlowKind.BIHARMONIC_DEVIATION):
            kw["base_point"] = f.get("base_point") or tuple([1.0] + [0.0] * (m - 1))
        return FlowProblem(fk, **kw)
    except ValueError as exc:
        raise ConfigError(f"[flow]: {exc}") from exc


def _base_point(cfg, problem):
    bp = cfg["flow"].get("base_point")
    if bp is None:
        return None
    bp = np.asarray(bp, dtype=float)
    if bp.shape != (problem.m,):
        raise ConfigError(f"[flow] base_point must have m = {problem.m} entries")
    if abs(np.linalg.norm(bp) - 1.0) > 1e-12:
        raise ConfigError(f"[flow] base_point must be a unit vector, |u*| = {np.linalg.norm(bp):.12g}")
    return bp


def _snapshots(cfg):
    s = cfg["stepper"]
    if "snapshot_times" in s:
        return tuple(s["snapshot_times"])
    if "snapshots_log" in s:
        vals = s["snapshots_log"]
        if len(vals) != 3:
            raise ConfigError("[stepper] snapshots_log needs 't_min t_max per_decade'")
        from .harness import log_schedule

        return log_schedule(vals[0], vals[1], int(vals[2]))
    return (s["t_end"],)


def _stepper(cfg):
    s = cfg["stepper"]
    snaps = _snapshots(cfg)
    try:
        return StepperConfig(
            dt=s["dt"],
            t_end=max(s["t_end"], snaps[-1]),
            dealias=s["dealias"],
            sphere_renormalize_every=s["sphere_renormalize_every"],
            snapshot_times=snaps,
            p_user=s["p_user"],
            dt_relative=s.get("dt_relative"),
            dt_max=s.get("dt_max"),
        )
    except ValueError as exc:
        raise ConfigError(f"[stepper]: {exc}") from exc


_RECIPE_KEYS = ("width", "R", "t0", "axis")


def _data(cfg, grid, problem):
    from .recipes import make_data
    from . import rg

    e = cfg["experiment"]
    recipe = e.get("recipe", "gaussian")
    eps = e.get("eps", 0.01)
    P = _base_point(cfg, problem)
    if recipe in ("heat_profile", "biharmonic_profile"):
        prof = rg.gaussian_profile(grid) if recipe == "heat_profile" else rg.biharmonic_profile(grid)
        comps = problem.state_components(grid.d)
        return Field(grid, eps * np.repeat(prof.values, comps, axis=0), recipe)
    params = {k: e[k] for k in _RECIPE_KEYS if k in e}
    params["m"] = problem.m
    if P is not None:
        params["P"] = P
    try:
        f = make_data(recipe, grid, eps, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[experiment] recipe {recipe!r}: {exc}") from exc
    if f.m != problem.state_components(grid.d):
        raise ConfigError(f"recipe {recipe!r} produced {f.m} components, flow needs {problem.state_components(grid.d)}")
    return f


def _far_value(f: Field):
    return np.asarray(f.values[(slice(None),) + (0,) * f.grid.d])


# ---------------------------------------------------------------------------
# output


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


class Output:
    def __init__(self, directory: Path, name: str, cfg: dict, svg: bool):
        self.dir = directory
        self.name = name
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.svg = svg or "svg" in cfg["output"].get("formats", "")
        self.files = []
        self.dir.mkdir(parents=True, exist_ok=True)

    def csv(self, suffix, rows):
        path = self.dir / f"{self.name}{suffix}.csv"
        buf = io.StringIO()
        buf.write(f"# config_sha256={self.hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        for row in rows:
            w.writerow([_fmt(x) for x in row])
        path.write_text(buf.getvalue())
        self.files.append(path.name)
        return path

    def json(self, suffix, payload):
        path = self.dir / f"{self.name}{suffix}.json"
        doc = {"schema_version": SCHEMA_VERSION, "config_hash": self.hash, "config": self.cfg}
        doc.update(payload)
        path.write_text(json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n")
        self.files.append(path.name)
        return path

    def plot(self, suffix, draw):
        if not self.svg:
            return None
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        matplotlib.rcParams["svg.hashsalt"] = self.hash[:16]
        fig, ax = plt.subplots(figsize=(6, 4))
        draw(ax)
        ax.set_title(f"{self.name}  [{self.hash[:12]}]", fontsize=8)
        fig.tight_layout()
        path = self.dir / f"{self.name}{suffix}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
        self.files.append(path.name)
        return path

    def manifest(self, command, status):
        path = self.dir / f"{self.name}.manifest.json"
        doc = {
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "status": status,
            "config_hash": self.hash,
            "files": sorted(self.files),
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }
        path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _outdir(args, cfg) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get("GEOMFLOW_OUT"):
        return Path(os.environ["GEOMFLOW_OUT"])
    return Path(cfg["output"].get("directory", "geomflow_out"))


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg, out: Output) -> int:
    grid = _grid(cfg)
    problem = _problem(cfg)
    stepper = _stepper(cfg)
    u0 = _data(cfg, grid, problem)
    traj = evolve(problem, u0, stepper)
    m = u0.m
    rows = [["t", "l2", "lp", "linf", "grad_linf", "constraint_violation"] + [f"mass_{i}" for i in range(m)]]
    for t, dg in zip(traj.times, traj.diagnostics):
        rows.append([t, dg["l2"], dg["lp"], dg["linf"], dg["grad_linf"], dg["constraint_violation"]] + dg["mass"])
    out.csv("", rows)
    out.json("", {"kind": "simulate", "problem": problem.describe(), "final": traj.diagnostics[-1], "times": traj.times})

    def draw(ax):
        ts = np.array(traj.times[1:])
        ax.loglog(ts, [dg["linf"] for dg in traj.diagnostics[1:]], label="sup |u|")
        ax.loglog(ts, [max(dg["grad_linf"], 1e-300) for dg in traj.diagnostics[1:]], label="sup |grad u|")
        ax.set_xlabel("t")
        ax.legend()

    out.plot("", draw)
    return EXIT_OK


def _range(cfg, grid):
    from .norms import DyadicRange

    e = cfg["experiment"]
    if "j_min" in e or "j_max" in e:
        try:
            return DyadicRange(e.get("j_min", -8), e.get("j_max", 8), e.get("base", 2.0))
        except ValueError as exc:
            raise ConfigError(f"[experiment] dyadic range: {exc}") from exc
    return DyadicRange.spanning(grid.spacing**2, grid.half_extent**2)


def cmd_besov(cfg, out: Output) -> int:
    from . import norms

    grid = _grid(cfg)
    problem = _problem(cfg)
    u0 = _data(cfg, grid, problem)
    e = cfg["experiment"]
    which = e.get("norm", "besov")
    trange = _range(cfg, grid)
    reports = []
    try:
        for p in e.get("p", (4.0,)):
            if which == "besov":
                reports.append(norms.besov_norm(u0, p, trange))
            elif which == "besov_biharmonic":
                reports.append(norms.besov_norm_biharmonic(u0, p, trange))
            elif which == "carleson":
                reports.append(norms.carleson_bmo(u0, None, trange))
                break
            else:
                raise ConfigError(f"[experiment] norm must be besov, besov_biharmonic or carleson, got {which!r}")
    except BoundaryDecayError:
        raise
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[experiment]: {exc}") from exc
    out.json("", {"kind": "besov", "norm": which, "p": list(e.get("p", (4.0,))), "reports": [r.to_dict() for r in reports]})

    def draw(ax):
        for r in reports:
            ts = [row[0] for row in r.per_sample]
            vs = [max(row[1], 1e-300) for row in r.per_sample]
            ax.loglog(ts, vs, marker=".")
        ax.set_xlabel("t")
        ax.set_ylabel("weighted integrand")

    out.plot("", draw)
    return EXIT_OK


def cmd_decay(cfg, out: Output) -> int:
    from .harness import DecayExperimentSpec, decay_experiment

    grid = _grid(cfg)
    problem = _problem(cfg)
    e = cfg["experiment"]
    s = cfg["stepper"]
    P = _base_point(cfg, problem)
    params = {k: e[k] for k in _RECIPE_KEYS if k in e}
    try:
        spec = DecayExperimentSpec(
            flow=problem,
            grid=grid,
            recipe=e.get("recipe", "gaussian"),
            eps=e.get("eps", 0.01),
            snapshot_times=_snapshots(cfg),
            p_list=tuple(e.get("p", (4.0,))),
            recipe_params=params,
            dt=s["dt"],
            dt_relative=s.get("dt_relative", 0.05),
            dt_max=s.get("dt_max"),
            fit_window=e.get("fit_window"),
            tolerance=e.get("tolerance", 0.05),
            base_point=None if P is None else tuple(P),
        )
    except ValueError as exc:
        raise ConfigError(f"[experiment]: {exc}") from exc
    rep = decay_experiment(spec)
    out.json("", {"kind": "decay", "report": rep.to_dict()})
    names = sorted({k for smp in rep.samples for k in smp.get("values", {})})
    rows = [["t"] + names + ["m_T"]]
    for smp, (_, mT) in zip(rep.samples, rep.m_T):
        rows.append([smp["t"]] + [smp["values"].get(k, 0.0) for k in names] + [mT])
    out.csv("", rows)

    def draw(ax):
        ts = [smp["t"] for smp in rep.samples]
        for k in names:
            ax.loglog(ts, [max(smp["values"].get(k, 0.0), 1e-300) for smp in rep.samples], label=k)
        ax.set_xlabel("t")
        ax.legend(fontsize=7)

    out.plot("", draw)
    if rep.aborted and rep.aborted.startswith("numerical"):
        print(f"error: {rep.aborted}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_rg(cfg, out: Output) -> int:
    from . import rg
    from .spectral import WeightedSobolevSpec

    grid = _grid(cfg)
    e = cfg["experiment"]
    f = cfg["flow"]
    try:
        kind = rg.RGKind.parse(e.get("rg_kind", "HeatV"))
        m = f.get("m", 1)
        sob = None
        if "sobolev_m" in e or "sobolev_r" in e:
            sob = WeightedSobolevSpec(e.get("sobolev_m", 3), e.get("sobolev_r", grid.d / 2 + 1.5))
        rcfg = rg.RGConfig(
            d=grid.d,
            m=m,
            kind=kind,
            L=e.get("L", 2.0),
            n_steps=e.get("n_steps", 6),
            sobolev=sob,
            dt=cfg["stepper"]["dt"],
            inner_snapshots=e.get("inner_snapshots", 4),
            base_point=f.get("base_point"),
            linear=e.get("linear", False),
            delta=e.get("delta", 1.0),
        )
        comps = rcfg.components
        problem = FlowProblem(kind.flow_kind, m=m, base_point=rcfg.base_point)
        v0 = _data(cfg, grid, problem) if kind is not rg.RGKind.HEAT_W else _data_w(cfg, grid, comps)
        rep = rg.run_rg(rcfg, v0)
    except rg.RGDivergence:
        raise
    except ValueError as exc:
        if isinstance(exc, (ConfigError, BoundaryDecayError, ConstraintError)):
            raise
        raise ConfigError(str(exc)) from exc
    out.json("", {"kind": "rg", "report": rep.to_dict()})
    out.csv("", rep.csv_rows())

    def draw(ax):
        n = np.arange(1, len(rep.r) + 1)
        ax.semilogy(n, np.maximum(rep.r, 1e-300), marker="o", label="r_n")
        if rep.dV:
            ax.semilogy(n[1:], np.maximum(rep.dV, 1e-300), marker="s", label="|V_{n+1}-V_n|")
        ax.set_xlabel("n")
        ax.legend()

    out.plot("", draw)
    return EXIT_OK if rep.aborted is None else EXIT_NUMERIC


def _data_w(cfg, grid, comps):
    from .recipes import make_data

    e = cfg["experiment"]
    if e.get("recipe") in ("heat_profile",):
        from . import rg

        return Field(grid, e.get("eps", 0.01) * np.repeat(rg.gaussian_profile(grid).values, comps, axis=0))
    params = {k: e[k] for k in _RECIPE_KEYS if k in e}
    params["m"] = comps
    return make_data(e.get("recipe", "gaussian"), grid, e.get("eps", 0.01), **params)


def cmd_longtime(cfg, out: Output) -> int:
    from .harness import longtime_experiment

    grid = _grid(cfg)
    problem = _problem(cfg)
    u0 = _data(cfg, grid, problem)
    P = _base_point(cfg, problem)
    if P is None:
        P = _far_value(u0) if problem.m != 2 else np.array([1.0, 0.0])
    s = cfg["stepper"]
    T = cfg["experiment"].get("horizon", s["t_end"])
    rep = longtime_experiment(problem, u0, P, T, dt=s["dt"], dt_relative=s.get("dt_relative", 0.05))
    out.json("", {"kind": "longtime", "report": rep.to_dict()})
    rows = [["t", "a", "b", "duhamel"]] + [list(r) for r in zip(rep.times, rep.a, rep.b, rep.duhamel)]
    out.csv("", rows)

    def draw(ax):
        ts = np.array(rep.times) + 1.0
        ax.semilogx(ts, rep.a, label="a(t)")
        ax.semilogx(ts, rep.b, label="b(t)")
        ax.axhline(rep.cap, ls="--", color="k", label="4 C1 eps")
        ax.set_xlabel("1 + t")
        ax.legend()

    out.plot("", draw)
    return EXIT_OK if rep.aborted is None else EXIT_NUMERIC


def cmd_selftest(out_dir: Path, quiet: bool = False) -> int:
    from . import selftest

    results = selftest.run_all()
    lines = selftest.format_table(results)
    if not quiet:
        print("\n".join(lines))
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "results": [{"case": r.name, "passed": r.passed, "detail": r.detail} for r in results],
    }
    (out_dir / "selftest.json").write_text(json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n")
    (out_dir / "selftest.txt").write_text("\n".join(lines) + "\n")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"selftest FAILED: {', '.join(failed)}", file=sys.stderr)
        return EXIT_SELFTEST
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "besov": cmd_besov,
    "decay": cmd_decay,
    "rg": cmd_rg,
    "longtime": cmd_longtime,
}


def run_one(command: str, config_path: str, out_dir: Path, svg: bool) -> int:
    """Run one configured experiment; returns the exit code."""
    try:
        text = Path(config_path).read_text()
    except OSError as exc:
        print(f"error: cannot read config {config_path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(text)
        declared = cfg["experiment"].get("kind")
        if declared is not None and declared != command:
            raise ConfigError(f"[experiment] kind = {declared!r} does not match the subcommand {command!r}")
        name = cfg["output"].get("name", command)
        out = Output(out_dir, name, cfg, svg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code = COMMANDS[command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure at stage {exc.stage}, t = {exc.time}: {exc}", file=sys.stderr)
        code = EXIT_NUMERIC
    except (ConstraintError, BoundaryDecayError, FloatingPointError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.manifest(command, "ok" if code == EXIT_OK else f"exit {code}")
    return code


def _job(args):
    return run_one(*args)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="geomflow", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=SUBCOMMANDS)
    ap.add_argument("--config", action="append", default=[], help="INI configuration (repeat for a sweep)")
    ap.add_argument("--out", help="output directory (overrides GEOMFLOW_OUT and [output] directory)")
    ap.add_argument("--jobs", type=int, default=1, help="parallel jobs for a sweep over several configs")
    ap.add_argument("--svg", action="store_true", help="also write SVG plots")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        out = Path(args.out or os.environ.get("GEOMFLOW_OUT") or "geomflow_out")
        return cmd_selftest(out)
    if not args.config:
        print("config error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if len(args.config) == 1:
        try:
            cfg = load_config(Path(args.config[0]).read_text())
        except (ConfigError, OSError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return run_one(args.command, args.config[0], _outdir(args, cfg), args.svg)
    # sweep: one output subdirectory per config, named after the file
    base = Path(args.out or os.environ.get("GEOMFLOW_OUT") or "geomflow_out")
    jobs = [(args.command, c, base / Path(c).stem, args.svg) for c in args.config]
    from .harness import run_parallel

    codes = run_parallel(_job, jobs, args.jobs)
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
