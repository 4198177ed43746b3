"""``ddsolve`` command line: single runs, parameter sweeps and solve-count comparisons.

Configuration comes from an optional flat ``key = value`` file (``--config``);
command-line flags override file values.  A run writes one CSV row per outer
iteration and prints a JSON summary on standard output.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .iteration import MethodKind, contraction_factor, monolithic_solve, run
from .mesh import build_rect_mesh, decompose_lshape, decompose_vertical, trace
from .newton import NewtonConfig, NewtonError
from .problems import PROBLEM_NAMES, get_problem

log = logging.getLogger(__name__)

CSV_HEADER = ["n", "rel_error", "cum_linear_solves", "newton_iters", "update_norm"]
SWEEP_HEADER = ["param", "value", "final_error", "iterations", "linear_solves",
                "contraction_factor", "failed"]
SWEEP_PARAMS = ("s1s2", "h", "gamma", "p")

# near-optimal step parameters per (problem, method)
DEFAULT_STEPS = {
    "semilinear": {"nn": 0.2, "mnn1": 0.19, "mnn2": 0.21},
    "quasilinear-sin": {"nn": 0.2, "mnn1": 0.19, "mnn2": 0.21},
    "laplace": {"nn": 0.2, "mnn1": 0.19, "mnn2": 0.21},
    "p-laplace": {"nn": 0.2, "mnn1": 0.15, "mnn2": 0.2},
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    problem: str = "semilinear"
    method: str = "mnn1"
    h: float = 1 / 32
    width: float = 3.0
    height: float = 2.0
    split: str = "vertical"
    x_split: float = 1.5
    s1: float | None = None
    s2: float | None = None
    max_outer: int = 30
    stop_tol: float = 1e-8
    newton_tol: float = 1e-10
    newton_max: int = 50
    warm_start: bool = True
    gamma: float = 0.1
    p: float = 3.0
    eta0: str = "zero"
    seed: int = 0
    out: str | None = None

    def steps(self) -> tuple[float, float]:
        default = DEFAULT_STEPS.get(self.problem, {}).get(self.method, 0.2)
        s1 = default if self.s1 is None else self.s1
        s2 = default if self.s2 is None else self.s2
        return s1, s2

    def validate(self) -> "ExperimentConfig":
        if self.problem not in PROBLEM_NAMES:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {', '.join(PROBLEM_NAMES)}")
        if self.method not in {m.value for m in MethodKind}:
            raise ConfigError(f"unknown method {self.method!r}; choose from nn, mnn1, mnn2")
        if self.split not in ("vertical", "lshape"):
            raise ConfigError("split must be 'vertical' or 'lshape'")
        if self.eta0 not in ("zero", "exact", "random"):
            raise ConfigError("eta0 must be 'zero', 'exact' or 'random'")
        s1, s2 = self.steps()
        if not (s1 > 0 and s2 > 0):
            raise ConfigError("s1 and s2 must be positive")
        if self.max_outer < 0:
            raise ConfigError("max_outer must be non-negative")
        if self.stop_tol < 0:
            raise ConfigError("stop_tol must be non-negative")
        if self.problem == "p-laplace" and self.p < 2:
            raise ConfigError("p must be at least 2")
        try:
            NewtonConfig(self.newton_tol, self.newton_max, self.warm_start)
            self.decomposition()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def decomposition(self):
        mesh = build_rect_mesh(self.width, self.height, self.h)
        if self.split == "lshape":
            return decompose_lshape(mesh)
        return decompose_vertical(mesh, self.x_split)

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            name = key.strip().replace("-", "_")
            if name not in fields:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[name] = _coerce(name, raw)
        return cls(**kwargs)


_INT_KEYS = {"max_outer", "newton_max", "seed"}
_FLOAT_KEYS = {"h", "width", "height", "x_split", "s1", "s2", "stop_tol", "newton_tol", "gamma", "p"}


def _coerce(name: str, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if name in _INT_KEYS:
            return int(raw)
        if name in _FLOAT_KEYS:
            if raw.lower() in ("", "none", "default"):
                return None
            return _parse_float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    if name == "warm_start":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"bad value for warm_start: {raw!r}")
    return raw


def _parse_float(raw: str) -> float:
    # accept fractions such as 1/32
    if "/" in raw:
        num, den = raw.split("/", 1)
        return float(num) / float(den)
    return float(raw)


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


@dataclass
class RunSummary:
    final_error: float
    iterations: int
    linear_solves: int
    contraction_factor: float | None
    failed: bool
    message: str = ""

    def to_json(self) -> dict:
        return {
            "final_error": _json_float(self.final_error),
            "iterations": self.iterations,
            "linear_solves": self.linear_solves,
            "contraction_factor": self.contraction_factor,
            "failed": self.failed,
        }


def _json_float(x):
    return None if x is None or not math.isfinite(x) else x


def _initial_interface(config: ExperimentConfig, decomp, reference):
    if config.eta0 == "zero":
        return np.zeros(decomp.n_interface)
    if config.eta0 == "exact":
        return trace(decomp, 1, reference[0])
    rng = np.random.default_rng(config.seed)
    return rng.uniform(-1.0, 1.0, decomp.n_interface) * np.max(np.abs(trace(decomp, 1, reference[0])))


def execute(config: ExperimentConfig):
    """Run one experiment; returns ``(RunSummary, IterationTrace | None)``."""
    config.validate()
    problem = get_problem(config.problem, gamma=config.gamma, p=config.p)
    decomp = config.decomposition()
    cfg = NewtonConfig(config.newton_tol, config.newton_max, config.warm_start)
    try:
        reference = monolithic_solve(problem, decomp, cfg=cfg)
    except NewtonError as exc:
        return RunSummary(math.nan, 0, 0, None, True, str(exc)), None
    s1, s2 = config.steps()
    eta0 = _initial_interface(config, decomp, reference)
    tr = run(config.method, problem, decomp, s1=s1, s2=s2, eta0=eta0, max_outer=config.max_outer,
             stop_tol=config.stop_tol, cfg=cfg, reference=reference)
    if not tr.rows:
        return RunSummary(math.nan, 0, 0, None, True, tr.message), tr
    last = tr.rows[-1]
    summary = RunSummary(last.rel_error, last.n, last.cumulative_linear_solves,
                         contraction_factor(tr.errors), tr.failed, tr.message)
    return summary, tr


def write_trace_csv(tr, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in tr.rows if tr is not None else ():
        writer.writerow([r.n, repr(float(r.rel_error)), r.cumulative_linear_solves, r.newton_iters,
                         repr(float(r.update_norm))])


def run_experiment(config: ExperimentConfig) -> RunSummary:
    """Run, write the per-iteration CSV to ``config.out`` (if set), return the summary."""
    summary, tr = execute(config)
    if config.out:
        with open(config.out, "w", newline="") as fh:
            write_trace_csv(tr, fh)
    return summary


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("DDSOLVE_THREADS", "1")))
    except ValueError:
        return 1


def _with_param(base: ExperimentConfig, param: str, value) -> ExperimentConfig:
    if param == "s1s2":
        return dataclasses.replace(base, s1=value, s2=value, out=None)
    return dataclasses.replace(base, **{param: value}, out=None)


def run_sweep(base: ExperimentConfig, param: str, values, out=None) -> list:
    """One summary per value of ``param``, in the given order; failures become rows."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep parameter must be one of {', '.join(SWEEP_PARAMS)}")
    values = list(values)

    def one(value):
        try:
            return execute(_with_param(base, param, value))[0]
        except (ConfigError, ValueError) as exc:
            return RunSummary(math.nan, 0, 0, None, True, str(exc))

    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        summaries = list(pool.map(one, values))
    rows = list(zip(values, summaries))
    if out is not None:
        close = isinstance(out, (str, os.PathLike))
        fh = open(out, "w", newline="") if close else out
        try:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SWEEP_HEADER)
            for value, s in rows:
                writer.writerow([param, value, repr(float(s.final_error)), s.iterations, s.linear_solves,
                                 "" if s.contraction_factor is None else repr(s.contraction_factor),
                                 int(s.failed)])
        finally:
            if close:
                fh.close()
    return rows


def solves_at_threshold(tr, threshold: float):
    """``(n, cumulative solves)`` at the first row with error <= threshold, else ``None``."""
    for r in tr.rows if tr is not None else ():
        if r.rel_error <= threshold:
            return r.n, r.cumulative_linear_solves
    return None


def compare_solve_counts(config_a: ExperimentConfig, config_b: ExperimentConfig,
                         threshold: float = 1e-6) -> dict:
    """Linear solves each run needs to reach ``threshold`` and their ratio (a / b)."""
    report = {"threshold": threshold}
    hits = []
    for key, config in (("a", config_a), ("b", config_b)):
        _, tr = execute(config)
        hit = solves_at_threshold(tr, threshold)
        hits.append(hit)
        report[key] = {
            "method": config.method,
            "reached": hit is not None,
            "iteration": None if hit is None else hit[0],
            "linear_solves": None if hit is None else hit[1],
        }
    a, b = hits
    report["ratio"] = a[1] / b[1] if a is not None and b is not None and b[1] > 0 else None
    return report


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("--problem", choices=PROBLEM_NAMES)
    p.add_argument("--method", choices=[m.value for m in MethodKind])
    p.add_argument("--h", type=str, help="mesh width, e.g. 0.03125 or 1/32")
    p.add_argument("--width", type=float)
    p.add_argument("--height", type=float)
    p.add_argument("--split", choices=["vertical", "lshape"])
    p.add_argument("--x-split", type=float)
    p.add_argument("--s1", type=float)
    p.add_argument("--s2", type=float)
    p.add_argument("--max-outer", type=int)
    p.add_argument("--stop-tol", type=float)
    p.add_argument("--newton-tol", type=float)
    p.add_argument("--newton-max", type=int)
    p.add_argument("--warm-start", choices=["true", "false"])
    p.add_argument("--gamma", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--eta0", choices=["zero", "exact", "random"])
    p.add_argument("--seed", type=int)


_COMMON_KEYS = ["problem", "method", "h", "width", "height", "split", "x_split", "s1", "s2",
                "max_outer", "stop_tol", "newton_tol", "newton_max", "warm_start", "gamma", "p",
                "eta0", "seed"]


def _config_from_args(args, overrides=None) -> ExperimentConfig:
    values = read_config_file(args.config) if args.config else {}
    for key in _COMMON_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    values.update(overrides or {})
    return ExperimentConfig.from_mapping(values).validate()


def _parse_values(text: str) -> list:
    return [_parse_float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddsolve", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one method and write a per-iteration CSV")
    _add_common(p_run)
    p_run.add_argument("--out", help="CSV output path (default: no CSV)")

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep and write a CSV of summaries")
    _add_common(p_sweep)
    p_sweep.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p_sweep.add_argument("--values", required=True, help="comma separated, e.g. 0.1,0.15,0.2")
    p_sweep.add_argument("--out", help="CSV output path (default: stdout)")

    p_cmp = sub.add_parser("compare", help="compare linear solves needed by two methods")
    _add_common(p_cmp)
    p_cmp.add_argument("--method-a", default="nn", choices=[m.value for m in MethodKind])
    p_cmp.add_argument("--method-b", default="mnn2", choices=[m.value for m in MethodKind])
    p_cmp.add_argument("--s-a", type=float, help="s1 = s2 for run a (default: per-method)")
    p_cmp.add_argument("--s-b", type=float, help="s1 = s2 for run b (default: per-method)")
    p_cmp.add_argument("--threshold", type=float, default=1e-6)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            config = _config_from_args(args, {"out": args.out} if args.out else None)
            summary = run_experiment(config)
            print(json.dumps(summary.to_json()))
        elif args.command == "sweep":
            base = _config_from_args(args)
            values = _parse_values(args.values)
            if args.out:
                run_sweep(base, args.param, values, args.out)
            else:
                buf = io.StringIO()
                run_sweep(base, args.param, values, buf)
                sys.stdout.write(buf.getvalue())
        else:
            a = {"method": args.method_a}
            b = {"method": args.method_b}
            if args.s_a is not None:
                a.update(s1=args.s_a, s2=args.s_a)
            if args.s_b is not None:
                b.update(s1=args.s_b, s2=args.s_b)
            report = compare_solve_counts(_config_from_args(args, a), _config_from_args(args, b),
                                          args.threshold)
            print(json.dumps(report))
    except ConfigError as exc:
        print(f"ddsolve: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
