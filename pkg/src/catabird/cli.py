"""Command-line front end.

Config files are INI-style with [model], [task] and [output] sections and
strict unknown-key rejection (a silently ignored typo in a rate name would
corrupt results).  Numeric output uses repr(), the shortest decimal that
round-trips, and CSV files are comma-separated, LF-terminated UTF-8 with a
header row, so byte-identical reruns are reproducible across platforms.

Subcommands: stationary, transient, first-visit, catastrophe, simulate,
verify, zoo list.  CATABIRD_THREADS caps Monte Carlo parallelism;
CATABIRD_DISABLE_NUMBA=1 selects the pure-numpy kernels.
"""

import argparse
import configparser
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, montecarlo, resolvent, transient
from .model import (ProcessSpec, TimeVaryingSpec, TruncationWindow,
                    ZOO_PRESETS, validate_spec, zoo_preset)

_MODEL_KEYS = {"preset", "r", "xi", "alpha", "beta", "nu", "k", "w_amp",
               "xi_amp", "t0", "alpha_table", "alpha_tail", "beta_table",
               "beta_tail"}
_TASK_KEYS = {"type", "j", "k", "t_grid", "lambda_grid", "n_paths", "seed",
              "tol", "tail_tol", "route", "estimator", "burn_in", "horizon"}
_OUTPUT_KEYS = {"dir", "format"}
_TASKS = ("stationary", "transient", "first-visit", "catastrophe",
          "simulate", "verify")


class ConfigError(ValueError):
    """Config parse or validation failure, with the offending key path."""


@dataclass
class ModelConfig:
    preset: str = ""
    params: dict = field(default_factory=dict)
    r: int = 0
    xi: float = None
    alpha_table: tuple = ()
    alpha_tail: str = "constant"
    beta_table: tuple = ()
    beta_tail: str = "constant"

    def build(self):
        if self.preset:
            return zoo_preset(self.preset, r=self.r, **self.params)
        if not self.alpha_table:
            raise ConfigError("model: need either 'preset' or 'alpha_table'")
        if self.xi is None or self.xi < 0:
            raise ConfigError("model.xi: required (>= 0) for table models")
        birth = _extrapolated(self.alpha_table, self.alpha_tail, self.r,
                              "model.alpha_table")
        death = _extrapolated(self.beta_table or (0.0,), self.beta_tail,
                              self.r + 1, "model.beta_table")
        return ProcessSpec(self.r, birth, death, self.xi, name="table")


def _extrapolated(table, tail_rule, first_state, path):
    """Total rate function from a finite table plus a growth rule."""
    vals = tuple(float(v) for v in table)
    if tail_rule not in ("constant", "arithmetic"):
        raise ConfigError(f"{path.replace('_table', '_tail')}: unknown rule "
                          f"{tail_rule!r} (constant|arithmetic)")
    step = vals[-1] - vals[-2] if (tail_rule == "arithmetic" and len(vals) >= 2) else 0.0

    def rate(n, _v=vals, _s=step, _f=first_state):
        i = n - _f
        if i < len(_v):
            return _v[i]
        return _v[-1] + _s * (i - len(_v) + 1)

    return rate


@dataclass
class TaskConfig:
    type: str = "stationary"
    j: int = 0
    k: int = None
    t_grid: tuple = ()
    lambda_grid: tuple = ()
    n_paths: int = 10000
    seed: int = 42
    tol: float = 1e-8
    tail_tol: float = 1e-10
    route: str = "direct"
    estimator: str = "first-visit"
    burn_in: float = 50.0
    horizon: float = 2000.0


@dataclass
class OutputConfig:
    dir: str = "out"
    format: str = "csv"


@dataclass
class RunConfig:
    model: ModelConfig
    task: TaskConfig
    output: OutputConfig

    def to_text(self) -> str:
        """Canonical re-emission; parse_text(to_text()) == self."""
        lines = ["[model]"]
        m = self.model
        if m.preset:
            lines.append(f"preset = {m.preset}")
            for key in sorted(m.params):
                lines.append(f"{key} = {m.params[key]!r}")
        else:
            lines.append(f"xi = {m.xi!r}")
            lines.append("alpha_table = " + " ".join(repr(v) for v in m.alpha_table))
            lines.append(f"alpha_tail = {m.alpha_tail}")
            if m.beta_table:
                lines.append("beta_table = " + " ".join(repr(v) for v in m.beta_table))
                lines.append(f"beta_tail = {m.beta_tail}")
        lines.append(f"r = {m.r}")
        t = self.task
        lines += ["", "[task]", f"type = {t.type}", f"j = {t.j}"]
        if t.k is not None:
            lines.append(f"k = {t.k}")
        if t.t_grid:
            lines.append("t_grid = " + " ".join(repr(v) for v in t.t_grid))
        if t.lambda_grid:
            lines.append("lambda_grid = " + " ".join(repr(v) for v in t.lambda_grid))
        lines += [f"n_paths = {t.n_paths}", f"seed = {t.seed}",
                  f"tol = {t.tol!r}", f"tail_tol = {t.tail_tol!r}",
                  f"route = {t.route}", f"estimator = {t.estimator}",
                  f"burn_in = {t.burn_in!r}", f"horizon = {t.horizon!r}"]
        o = self.output
        lines += ["", "[output]", f"dir = {o.dir}", f"format = {o.format}", ""]
        return "\n".join(lines)


def _floats(raw, path):
    try:
        return tuple(float(v) for v in raw.split())
    except ValueError as err:
        raise ConfigError(f"{path}: expected space-separated numbers, got {raw!r}") from err


def parse_text(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as err:
        raise ConfigError(f"{source}: {err}") from err
    for section in parser.sections():
        if section not in ("model", "task", "output"):
            raise ConfigError(f"{source}: unknown section [{section}]")
    known = {"model": _MODEL_KEYS, "task": _TASK_KEYS, "output": _OUTPUT_KEYS}
    for section, keys in known.items():
        if parser.has_section(section):
            for key in parser[section]:
                if key not in keys:
                    raise ConfigError(f"{section}.{key}: unknown key")

    m = ModelConfig()
    if parser.has_section("model"):
        sec = parser["model"]
        m.preset = sec.get("preset", "")
        if m.preset and m.preset not in ZOO_PRESETS:
            raise ConfigError(f"model.preset: unknown preset {m.preset!r}")
        m.r = _get_int(sec, "r", 0, "model.r", minimum=0)
        for key in ("alpha", "beta", "nu", "xi", "k", "w_amp", "xi_amp", "t0"):
            if key in sec:
                val = _get_float(sec, key, None, f"model.{key}")
                if key == "xi" and not m.preset:
                    m.xi = val
                    if val < 0:
                        raise ConfigError(f"model.xi: must be >= 0, got {val}")
                    continue
                if key == "xi" and val < 0:
                    raise ConfigError(f"model.xi: must be >= 0, got {val}")
                m.params[key] = val
        if "alpha_table" in sec:
            m.alpha_table = _floats(sec["alpha_table"], "model.alpha_table")
        if "beta_table" in sec:
            m.beta_table = _floats(sec["beta_table"], "model.beta_table")
        m.alpha_tail = sec.get("alpha_tail", "constant")
        m.beta_tail = sec.get("beta_tail", "constant")
        if m.preset and m.alpha_table:
            raise ConfigError("model: give a preset or rate tables, not both")

    t = TaskConfig()
    if parser.has_section("task"):
        sec = parser["task"]
        t.type = sec.get("type", "stationary")
        if t.type not in _TASKS:
            raise ConfigError(f"task.type: unknown task {t.type!r}")
        t.j = _get_int(sec, "j", 0, "task.j", minimum=0)
        t.k = _get_int(sec, "k", None, "task.k", minimum=0) if "k" in sec else None
        if "t_grid" in sec:
            t.t_grid = _floats(sec["t_grid"], "task.t_grid")
            if any(b <= a for a, b in zip(t.t_grid, t.t_grid[1:])):
                raise ConfigError("task.t_grid: must be strictly increasing")
        if "lambda_grid" in sec:
            t.lambda_grid = _floats(sec["lambda_grid"], "task.lambda_grid")
        t.n_paths = _get_int(sec, "n_paths", t.n_paths, "task.n_paths", minimum=100)
        t.seed = _get_int(sec, "seed", t.seed, "task.seed", minimum=0)
        t.tol = _get_float(sec, "tol", t.tol, "task.tol")
        t.tail_tol = _get_float(sec, "tail_tol", t.tail_tol, "task.tail_tol")
        t.route = sec.get("route", "direct")
        t.estimator = sec.get("estimator", "first-visit")
        t.burn_in = _get_float(sec, "burn_in", t.burn_in, "task.burn_in")
        t.horizon = _get_float(sec, "horizon", t.horizon, "task.horizon")

    o = OutputConfig()
    if parser.has_section("output"):
        sec = parser["output"]
        o.dir = sec.get("dir", o.dir)
        o.format = sec.get("format", o.format)
        if o.format not in ("csv", "json"):
            raise ConfigError(f"output.format: csv or json, got {o.format!r}")
    return RunConfig(m, t, o)


def _get_int(sec, key, default, path, minimum=None):
    if key not in sec:
        return default
    try:
        val = int(sec[key])
    except ValueError as err:
        raise ConfigError(f"{path}: expected an integer, got {sec[key]!r}") from err
    if minimum is not None and val < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {val}")
    return val


def _get_float(sec, key, default, path):
    if key not in sec:
        return default
    try:
        return float(sec[key])
    except ValueError as err:
        raise ConfigError(f"{path}: expected a number, got {sec[key]!r}") from err


def parse_config(path) -> RunConfig:
    """Read and validate a config file."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_text(text, source=str(path))


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_summary(outdir: Path, name: str, payload: dict):
    with open(outdir / f"{name}_summary.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _emit(outdir: Path, name: str, header, rows, summary: dict, fmt: str):
    outdir.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        _write_csv(outdir / f"{name}.csv", header, rows)
    else:
        payload = [dict(zip(header, row)) for row in rows]
        with open(outdir / f"{name}.json", "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=float)
            fh.write("\n")
    _write_summary(outdir, name, summary)


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------

def _homogeneous(spec, task_name):
    if isinstance(spec, TimeVaryingSpec):
        raise ConfigError(f"task {task_name!r} supports only time-homogeneous models")
    return spec


def _task_stationary(spec, cfg, outdir):
    spec = _homogeneous(spec, "stationary")
    stat = analysis.stationary_distribution(spec, residual_bound=max(cfg.task.tol * 1e-2, 1e-12))
    rows = [(int(n), q) for n, q in zip(stat.states, stat.q)]
    summary = {"residual": stat.residual, "sum_q": float(stat.q.sum()),
               "window_upper": stat.window.upper, "tail_tol": stat.window.tail_tol}
    _emit(outdir, "stationary", ("n", "q_n"), rows, summary, cfg.output.format)
    return 0


def _task_transient(spec, cfg, outdir):
    t_grid = cfg.task.t_grid or (1.0,)
    j = cfg.task.j
    rows = []
    summary = {"j": j, "route": cfg.task.route, "tol": cfg.task.tol,
               "means": {}, "defects": {}}
    if isinstance(spec, TimeVaryingSpec):
        win = transient.certify_window_tv(spec, j, max(t_grid), cfg.task.tail_tol)
        for t in t_grid:
            dv = transient.nonhomogeneous_transient(spec, j, t, win,
                                                    cfg.task.tol, cfg.task.route)
            rows += [(t, int(n), p) for n, p in zip(dv.states, dv.mass)]
            summary["means"][repr(t)] = dv.mean()
            summary["defects"][repr(t)] = dv.defect
    else:
        win = transient.certify_window(spec, j, max(t_grid), cfg.task.tail_tol)
        for t in t_grid:
            dv = transient.transient_cat(spec, j, t, win, cfg.task.tol,
                                         cfg.task.route)
            rows += [(t, int(n), p) for n, p in zip(dv.states, dv.mass)]
            summary["means"][repr(t)] = dv.mean()
            summary["defects"][repr(t)] = dv.defect
    summary["window_upper"] = win.upper
    _emit(outdir, "transient", ("t", "n", "p"), rows, summary, cfg.output.format)
    return 0


def _task_first_visit(spec, cfg, outdir):
    spec = _homogeneous(spec, "first-visit")
    j = cfg.task.j
    k = cfg.task.k if cfg.task.k is not None else spec.r
    stats = analysis.first_visit_stats(spec, j, k)
    summary = {"j": j, "k": k, "mean": stats.mean, "variance": stats.variance,
               "transform_at_xi": stats.transform_at_xi}
    if cfg.task.lambda_grid:
        rows = [(lam, resolvent.gamma_cat(spec, j, k, lam))
                for lam in cfg.task.lambda_grid]
        header = ("lambda", "gamma")
    else:
        t_grid = cfg.task.t_grid or (0.5, 1.0, 2.0)
        rows = [(t, transient.first_visit_density(spec, j, k, t, tol=cfg.task.tol))
                for t in t_grid]
        header = ("t", "density")
    _emit(outdir, "first_visit", header, rows, summary, cfg.output.format)
    return 0


def _task_catastrophe(spec, cfg, outdir):
    spec = _homogeneous(spec, "catastrophe")
    j = cfg.task.j
    mean = analysis.catastrophe_mean(spec, j)
    lam_grid = cfg.task.lambda_grid or (0.1, 1.0, 5.0)
    rows = [(lam, resolvent.delta_transform(spec, j, lam)) for lam in lam_grid]
    summary = {"j": j, "mean": mean}
    _emit(outdir, "catastrophe", ("lambda", "delta"), rows, summary,
          cfg.output.format)
    return 0


def _task_simulate(spec, cfg, outdir):
    spec = _homogeneous(spec, "simulate")
    t = cfg.task
    est = t.estimator
    if est == "first-visit":
        k = t.k if t.k is not None else spec.r
        res = montecarlo.estimate_first_visit(spec, t.j, k, t.n_paths, t.seed)
        rows = [("mean", res.mean.value, res.mean.se),
                ("variance", res.variance.value, res.variance.se)]
        summary = {"estimator": est, "j": t.j, "k": k, "n_paths": t.n_paths,
                   "seed": t.seed, "n_censored": res.n_censored}
    elif est == "catastrophe":
        res = montecarlo.estimate_catastrophe_time(spec, t.j, t.n_paths, t.seed)
        rows = [("mean", res.mean.value, res.mean.se),
                ("variance", res.variance.value, res.variance.se)]
        summary = {"estimator": est, "j": t.j, "n_paths": t.n_paths,
                   "seed": t.seed, "n_censored": res.n_censored}
    elif est == "stationary":
        res = montecarlo.estimate_stationary(spec, t.j, t.burn_in, t.horizon,
                                             t.seed)
        keep = res.occupancy > 0
        rows = [(f"occupancy_{int(n)}", v, s) for n, v, s in
                zip(res.states[keep], res.occupancy[keep], res.se[keep])]
        summary = {"estimator": est, "j": t.j, "burn_in": t.burn_in,
                   "horizon": t.horizon, "seed": t.seed}
    else:
        raise ConfigError(f"task.estimator: unknown estimator {est!r}")
    _emit(outdir, "simulate", ("quantity", "value", "se"), rows, summary,
          cfg.output.format)
    return 0


def _task_verify(spec, cfg, outdir, echo=print):
    """Cross-route identity suite; exit nonzero iff any check fails."""
    spec = _homogeneous(spec, "verify")
    tol = cfg.task.tol
    lam_grid = cfg.task.lambda_grid or (0.1, 1.0, 10.0)
    r = spec.r
    j = cfg.task.j if cfg.task.j > r else r + 2
    k = cfg.task.k if cfg.task.k is not None else r + 1
    checks = []

    win = transient.certify_window(spec, j, 1.0, cfg.task.tail_tol)
    dev = 0.0
    for t in (0.25, 1.0):
        d1 = transient.transient_cat(spec, j, t, win, tol / 10, "direct")
        d2 = transient.transient_cat(spec, j, t, win, tol / 10, "decomposition")
        dev = max(dev, float(np.abs(d1.mass - d2.mass).max()))
    checks.append(("eq5_decomposition", dev, tol))

    rwin = TruncationWindow(max(256, win.upper), cfg.task.tail_tol)
    dev = 0.0
    for lam in lam_grid:
        a = resolvent.resolvent_cat(spec, j, lam, rwin, "identity")
        b = resolvent.resolvent_cat(spec, j, lam, rwin, "direct")
        scale = float(np.abs(a.values).max())
        dev = max(dev, float(np.abs(a.values - b.values).max()) / scale)
    checks.append(("eq6_resolvent", dev, 1e-10))

    dev = 0.0
    for lam in lam_grid:
        pi_j = resolvent.resolvent_cat(spec, j, lam, rwin).value(k)
        pi_k = resolvent.resolvent_cat(spec, k, lam, rwin).value(k)
        gam = resolvent.gamma_cat(spec, j, k, lam, rwin)
        dev = max(dev, abs(pi_j - gam * pi_k) / abs(pi_j))
    checks.append(("renewal_transform", dev, 1e-10))

    checks.append(("gamma_at_zero",
                   abs(resolvent.gamma_cat(spec, j, k, 0.0) - 1.0), 0.0))

    d1 = transient.taboo_cat_r(spec, j, 0.8, win, tol / 10, "decomposition")
    d2 = transient.taboo_cat_r(spec, j, 0.8, win, tol / 10, "direct")
    checks.append(("eq19_taboo", float(np.abs(d1.mass - d2.mass).max()), 1e-10))

    dev = 0.0
    for lam in lam_grid:
        for n in (r - 1, r, r + 2):
            e1 = resolvent.eta_transform(spec, j, n, lam, rwin)
            e2 = resolvent.eta_transform(spec, j, n, lam, rwin, route="direct")
            dev = max(dev, abs(e1 - e2))
    checks.append(("eq37_eta", dev, 1e-10))

    dev = 0.0
    for lam in lam_grid:
        v1 = resolvent.delta_transform(spec, j, lam, rwin, "eta")
        v2 = resolvent.delta_transform(spec, j, lam, rwin, "gamma")
        dev = max(dev, abs(v1 - v2) / abs(v1))
    checks.append(("eq10_vs_eq45_delta", dev, 1e-10))

    dev16 = dev17 = 0.0
    for t in (0.5, 2.0):
        direct_r = transient.transient_cat(spec, r, t, win, tol / 10)
        rep = analysis.minimum_representation_vector(spec, t, win)
        m = rep.mass.shape[0]
        dev16 = max(dev16, float(np.abs(direct_r.mass[:m] - rep.mass).max()))
        direct_j = transient.transient_cat(spec, j, t, win, tol / 10)
        repj = analysis.general_representation_vector(spec, j, t, win)
        m = repj.mass.shape[0]
        dev17 = max(dev17, float(np.abs(direct_j.mass[:m] - repj.mass).max()))
    checks.append(("eq16_minimum_representation", dev16, 1e-6))
    checks.append(("eq17_general_representation", dev17, 1e-6))

    stat = analysis.stationary_distribution(spec)
    checks.append(("stationary_residual", stat.residual, 1e-10))

    rows = []
    failed = 0
    for name, devv, tolv in checks:
        ok = devv <= tolv
        failed += 0 if ok else 1
        rows.append((name, devv, tolv, "pass" if ok else "FAIL"))
        echo(f"{'PASS' if ok else 'FAIL'} {name}: max deviation {devv:.3e} "
             f"(tolerance {tolv:.1e})")
    summary = {"failed": failed, "total": len(checks)}
    _emit(outdir, "verify", ("check", "max_deviation", "tolerance", "status"),
          rows, summary, cfg.output.format)
    return 0 if failed == 0 else 1


def run_task(cfg: RunConfig) -> int:
    """Dispatch the configured task; returns the process exit status."""
    spec = cfg.model.build()
    if isinstance(spec, ProcessSpec):
        report = validate_spec(spec, TruncationWindow(64))
        if not report.ok:
            state, msg = report.errors[0]
            raise ConfigError(f"model invalid at state {state}: {msg}")
    outdir = Path(cfg.output.dir)
    runner = {
        "stationary": _task_stationary,
        "transient": _task_transient,
        "first-visit": _task_first_visit,
        "catastrophe": _task_catastrophe,
        "simulate": _task_simulate,
        "verify": _task_verify,
    }[cfg.task.type]
    return runner(spec, cfg, outdir)


def _zoo_list():
    print("preset              parameters")
    for name in sorted(ZOO_PRESETS):
        print(f"{name:<19} {', '.join(ZOO_PRESETS[name])} (optional: r)")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="catabird",
        description="Birth-death processes with total catastrophes: "
                    "transient, first-visit, catastrophe and stationary statistics.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _TASKS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--format", choices=("csv", "json"), default=None)
    zoo = sub.add_parser("zoo")
    zoo.add_argument("action", choices=("list",))

    args = parser.parse_args(argv)
    if args.command == "zoo":
        return _zoo_list()
    try:
        cfg = parse_config(args.config)
        cfg.task.type = args.command
        if args.seed is not None:
            cfg.task.seed = args.seed
        if args.out is not None:
            cfg.output.dir = args.out
        if args.format is not None:
            cfg.output.format = args.format
        return run_task(cfg)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as err:
        print(f"error [{type(err).__name__}]: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
