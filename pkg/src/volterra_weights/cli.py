"""Command line front end.

    volterra-weights run JOB.ini [--out DIR] [--tol T] [--quiet]
    volterra-weights dump-defaults KIND

A job file is INI text with a ``[job]`` section naming the kind, an
``[expressions]`` section of expression strings and a ``[parameters]``
section of numbers. ``dump-defaults`` prints a complete template.

Exit status: 0 when the analysis finished with a finite verdict, 2 when it
finished with an infinite / unbounded / rejected verdict, 1 on any error.
"""

from __future__ import annotations

import argparse
import configparser
import io
import math
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import gram, hardy, multiplier
from . import operator as op
from .expr import ExpressionError, parse

THREADS_ENV = "VOLTERRA_WEIGHTS_THREADS"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DIVERGENT = 2

_SEARCH = {"r_min": 1e-6, "r_max": 1e6, "n_r": 200, "golden_iterations": 40,
           "slope_threshold": 0.02}
_SAMPLING = {"center_min": 1e-6, "center_max": 1e6, "n_centers": 60, "length_min": 1e-8,
             "length_max": 1e6, "n_lengths": 60, "cap": 1e6}
_LADDER = {"ladder_x_max": "1e2, 1e3, 1e4", "ladder_n": "512, 1024, 2048",
           "ladder_decades": "10, 15, 20", "rtol": 1e-6, "ladder_rtol": 0.02}

# kind -> (expression defaults, parameter defaults)
DEFAULTS: dict[str, tuple[dict, dict]] = {
    "hardy": ({"v1": "x^(-1)", "u1": "1"}, {"tol": 1e-9, **_SEARCH}),
    "s_k": ({"u": "1", "v": "1", "a_k": "x^(-1)"}, {"k": 0, "tol": 1e-9, **_SEARCH}),
    "doubling": ({"w": "1"}, {"delta": 0.0, **_SAMPLING}),
    "operator": ({"u": "1", "v": "1", "a_0": "x^(-1)"},
                 {"tol": 1e-9, "delta": 0.0, **_SEARCH, **_LADDER}),
    "gram": ({"u": "1"}, {"m": 1, "r_min": 1e-3, "r_max": 1e3, "n_samples": 25, "tol": 1e-13}),
    "multiplier": ({"phi": "exp(-x)", "u": "1", "v": "1"},
                   {"l": 1, "m": 1, "delta": 0.0, "tol": 1e-9, **_SEARCH, **_SAMPLING}),
    "lemma2": ({"phi": "x^2", "g": "x^2"}, {"l": 1, "m": 1, "xs": "0.5, 1, 2, 3", "tol": 1e-13}),
}

_INT_KEYS = {"k", "m", "l", "n_r", "golden_iterations", "n_centers", "n_lengths", "n_samples"}
_LIST_KEYS = {"ladder_x_max", "ladder_n", "ladder_decades", "xs"}
_POSITIVE = {"tol", "rtol", "ladder_rtol", "r_min", "r_max", "center_min", "center_max",
             "length_min", "length_max", "cap"}


class ConfigError(ValueError):
    pass


@dataclass
class JobConfig:
    kind: str
    expressions: dict[str, str]
    params: dict[str, object] = field(default_factory=dict)

    def expr(self, key: str):
        return parse(self.expressions[key])

    def search(self) -> hardy.SearchConfig:
        return hardy.SearchConfig(**{k: self.params[k] for k in _SEARCH})

    def sampling(self) -> hardy.SamplingConfig:
        return hardy.SamplingConfig(**{k: self.params[k] for k in _SAMPLING})

    def ladder(self) -> tuple[op.GridSpec, ...]:
        xs, ns, ds = (self.params[k] for k in ("ladder_x_max", "ladder_n", "ladder_decades"))
        if not len(xs) == len(ns) == len(ds):
            raise ConfigError("ladder_x_max, ladder_n and ladder_decades must have equal length")
        return tuple(op.GridSpec(float(x), int(n), "log", float(d)) for x, n, d in zip(xs, ns, ds))


def _coeff_keys(expressions: dict) -> list[str]:
    keys = sorted((k for k in expressions if re.fullmatch(r"a_\d+", k)), key=lambda k: int(k[2:]))
    if [int(k[2:]) for k in keys] != list(range(len(keys))):
        raise ConfigError("operator coefficients must be a_0, a_1, ... without gaps")
    return keys


def _as_int(text) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"{text!r} is not an integer")
    return int(value)


def _parse_number(key: str, text: str):
    if key in _LIST_KEYS:
        items = [t.strip() for t in str(text).split(",") if t.strip()]
        if not items:
            raise ValueError("empty list")
        return [_as_int(t) for t in items] if key == "ladder_n" else [float(t) for t in items]
    if key in _INT_KEYS:
        return _as_int(text)
    return float(text)


def _line_of(source: str, section: str, key: str) -> int:
    current = None
    for no, line in enumerate(source.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return no
    return 0


def parse_config(text: str, name: str = "<config>") -> JobConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=name)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    if not cp.has_option("job", "kind"):
        raise ConfigError(f"{name}: missing [job] kind")
    kind = cp.get("job", "kind").strip()
    if kind not in DEFAULTS:
        raise ConfigError(f"{name}:{_line_of(text, 'job', 'kind')}: unknown job kind {kind!r}; "
                          f"expected one of {', '.join(DEFAULTS)}")
    expr_defaults, param_defaults = DEFAULTS[kind]

    expressions = dict(cp.items("expressions")) if cp.has_section("expressions") else {}
    if kind != "operator":
        expressions = {**expr_defaults, **expressions}
    elif not any(k.startswith("a_") for k in expressions):
        expressions = {**expr_defaults, **expressions}
    else:
        expressions = {**{k: v for k, v in expr_defaults.items() if not k.startswith("a_")},
                       **expressions}
    for key, source in expressions.items():
        try:
            parse(source)
        except ExpressionError as exc:
            line = _line_of(text, "expressions", key)
            where = f"{name}:{line}" if line else name
            raise ConfigError(f"{where}: expression {key}: {exc}") from None
    if kind == "operator":
        _coeff_keys(expressions)

    params = dict(param_defaults)
    if cp.has_section("parameters"):
        for key, value in cp.items("parameters"):
            if key not in param_defaults:
                raise ConfigError(f"{name}:{_line_of(text, 'parameters', key)}: "
                                  f"unknown parameter {key!r} for job kind {kind!r}")
            params[key] = value
    for key, value in list(params.items()):
        try:
            params[key] = _parse_number(key, value)
        except (TypeError, ValueError):
            raise ConfigError(f"{name}:{_line_of(text, 'parameters', key)}: "
                              f"parameter {key} = {value!r} is not a valid number") from None
        if key in _POSITIVE and not params[key] > 0:
            raise ConfigError(f"{name}: parameter {key} must be positive")
        if key in ("k", "m", "delta") and params[key] < 0:
            raise ConfigError(f"{name}: parameter {key} must be non-negative")
    return JobConfig(kind, expressions, params)


def load_config(path: str | Path) -> JobConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, str(path))


def _format_param(value) -> str:
    if isinstance(value, list):
        return ", ".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: JobConfig) -> str:
    out = io.StringIO()
    out.write(f"[job]\nkind = {cfg.kind}\n\n[expressions]\n")
    for key, value in cfg.expressions.items():
        out.write(f"{key} = {value}\n")
    out.write("\n[parameters]\n")
    for key, value in cfg.params.items():
        out.write(f"{key} = {_format_param(value)}\n")
    return out.getvalue()


def dump_defaults(kind: str) -> str:
    if kind not in DEFAULTS:
        raise ConfigError(f"unknown job kind {kind!r}")
    exprs, params = DEFAULTS[kind]
    return dump_config(parse_config(dump_config(JobConfig(kind, dict(exprs), dict(params)))))


# ------------------------------------------------------------------ CSV

def format_number(x: float) -> str:
    """17 significant digits, exponent without sign padding: 5.0000000000000000e-1."""
    x = float(x)
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    mantissa, exponent = f"{x:.16e}".split("e")
    return f"{mantissa}e{int(exponent)}"


def emit_csv(samples: Sequence[Sequence[float]], path: str | Path,
             header: Sequence[str] = ("r", "value")) -> Path:
    """Write samples with a header row, LF line endings."""
    if len(samples) == 0:
        raise ValueError("refusing to write an empty profile")
    path = Path(path)
    lines = [",".join(header)]
    for row in samples:
        if len(row) != len(header):
            raise ValueError(f"row {row!r} does not match header {header!r}")
        lines.append(",".join(format_number(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


# ----------------------------------------------------------------- jobs

def _fmt(v) -> str:
    v = float(v)
    s = f"{v:.12g}"
    if s.lstrip("-").isdigit():
        s += ".0"
    return s


def _hardy_lines(res: hardy.HardyResult, label: str) -> list[str]:
    lines = [f"{label}: {_fmt(res.supremum)}", f"verdict: {res.verdict}"]
    if res.argmax_r is not None:
        lines.append(f"argmax_r: {_fmt(res.argmax_r)}")
    lines.append(f"boundary_slopes: {_fmt(res.boundary_slopes[0])}, {_fmt(res.boundary_slopes[1])}")
    if res.reason:
        lines.append(f"reason: {res.reason}")
    return lines


def _job_hardy(cfg: JobConfig, out: Path):
    p = cfg.params
    res = hardy.hardy_constant(cfg.expr("v1"), cfg.expr("u1"), cfg.search(), p["tol"])
    emit_csv(res.profile, out / "profile.csv")
    lines = [f"v1 = {cfg.expressions['v1']}", f"u1 = {cfg.expressions['u1']}"]
    lines += _hardy_lines(res, "supremum")
    return lines, res.finite


def _job_s_k(cfg: JobConfig, out: Path):
    p = cfg.params
    # the coefficient may be given as a_k or under its index, e.g. a_0
    key = f"a_{p['k']}" if f"a_{p['k']}" in cfg.expressions else "a_k"
    res = hardy.s_k(cfg.expr("u"), cfg.expr("v"), cfg.expr(key), p["k"], cfg.search(), p["tol"])
    emit_csv(res.profile, out / "profile.csv")
    lines = [f"u = {cfg.expressions['u']}", f"v = {cfg.expressions['v']}",
             f"a_{p['k']} = {cfg.expressions[key]}"]
    lines += _hardy_lines(res, "supremum")
    return lines, res.finite


def _job_doubling(cfg: JobConfig, out: Path):
    rep = hardy.doubling_constant(cfg.expr("w"), cfg.params["delta"], cfg.sampling())
    if rep.evidence:
        emit_csv([(c, h, q) for c, h, q in rep.evidence], out / "evidence.csv",
                 ("center", "length", "ratio"))
    lines = [f"w = {cfg.expressions['w']}", f"delta: {_fmt(rep.delta)}",
             f"constant_estimate: {_fmt(rep.constant_estimate)}",
             f"member: {str(rep.member).lower()}",
             f"worst_interval: center {_fmt(rep.worst_interval[0])}, "
             f"length {_fmt(rep.worst_interval[1])}",
             f"skipped_intervals: {rep.skipped}"]
    return lines, rep.member


def _job_operator(cfg: JobConfig, out: Path):
    p = cfg.params
    coeffs = [cfg.expr(k) for k in _coeff_keys(cfg.expressions)]
    spec = op.OperatorSpec.from_coeffs(coeffs)
    workers = int(os.environ.get(THREADS_ENV, "1") or 1)
    rep = op.splitting_report(spec, cfg.expr("u"), cfg.expr("v"), cfg.search(), cfg.ladder(),
                              p["tol"], p["rtol"], p["ladder_rtol"], p["delta"], workers)
    lines = [f"u = {cfg.expressions['u']}", f"v = {cfg.expressions['v']}"]
    for k, s in enumerate(rep.s_values):
        emit_csv(s.profile, out / f"profile_s{k}.csv")
        lines.append(f"s_{k}: {_fmt(s.supremum)} ({s.verdict})")
    lines.append(f"sum_s: {_fmt(rep.sum_s)}")
    lines.append(f"whole_norm: {_fmt(rep.whole_norm.value)} "
                 f"(converged: {str(rep.whole_norm.converged).lower()})")
    for k, c in enumerate(rep.component_norms):
        lines.append(f"component_norm_{k}: {_fmt(c.value)}")
    emit_csv([(g.x_max, v) for g, v in rep.whole_norm.levels], out / "ladder.csv",
             ("x_max", "norm"))
    if rep.sandwich_upper_ok is not None:
        lines.append(f"sandwich_upper_ok: {str(rep.sandwich_upper_ok).lower()}")
        if rep.lower_ratio is not None:
            lines.append(f"norm_over_sum_s: {_fmt(rep.lower_ratio)}")
    if rep.divergence_slope is not None:
        lines.append(f"divergence_slope: {_fmt(rep.divergence_slope)}")
    if rep.side_conditions is not None:
        for k, ok in rep.side_conditions.items():
            lines.append(f"side_condition a_{k} v in L2(0,r): {str(ok).lower()}")
    return lines, rep.bounded


def _job_gram(cfg: JobConfig, out: Path):
    p = cfg.params
    prof = gram.lemma1_scan(cfg.expr("u"), p["m"], (p["r_min"], p["r_max"]), p["n_samples"],
                            p["tol"])
    emit_csv(prof.samples, out / "gram.csv", ("r", "rho", "sin_theta", "det"))
    lines = [f"u = {cfg.expressions['u']}", f"m: {p['m']}",
             f"inf_ratio: {_fmt(prof.inf_ratio)}", f"suggested_r0: {_fmt(prof.suggested_r0)}",
             f"rho_range: {_fmt(prof.rho.min())} .. {_fmt(prof.rho.max())}"]
    return lines, True


def _job_multiplier(cfg: JobConfig, out: Path):
    p = cfg.params
    prob = multiplier.MultiplierProblem(cfg.expr("phi"), cfg.expr("u"), cfg.expr("v"),
                                        p["l"], p["m"], p["delta"])
    rep = multiplier.multiplier_verdict(prob, cfg.search(), cfg.sampling(), p["tol"])
    lines = [f"phi = {cfg.expressions['phi']}", f"l: {p['l']}", f"m: {p['m']}"]
    for c in rep.cond6:
        lines.append(f"cond6[k={c.k}]: {_fmt(c.value)} ({'finite' if c.finite else 'infinite'})")
    for c in rep.cond7:
        lines.append(f"cond7[k={c.k}]: {_fmt(c.value)} ({'finite' if c.finite else 'infinite'})")
    if rep.cond8 is not None:
        c = rep.cond8
        lines.append(f"cond8: {_fmt(c.value)} ({'finite' if c.finite else 'infinite'})")
    for name, ok in rep.side_conditions.items():
        lines.append(f"side_condition {name}: {str(ok).lower()}")
    lines.append(f"verdict: {'multiplier' if rep.verdict else 'not a multiplier'}")
    return lines, rep.verdict


def _job_lemma2(cfg: JobConfig, out: Path):
    p = cfg.params
    xs = p["xs"]
    lhs, rhs = multiplier.lemma2_sides(cfg.expr("phi"), cfg.expr("g"), p["l"], p["m"], xs,
                                       p["tol"])
    emit_csv(list(zip(xs, lhs, rhs)), out / "lemma2.csv", ("x", "lhs", "rhs"))
    res = float(np.max(np.abs(lhs - rhs)))
    lines = [f"phi = {cfg.expressions['phi']}", f"g = {cfg.expressions['g']}",
             f"l: {p['l']}", f"m: {p['m']}", f"residual: {_fmt(res)}"]
    return lines, True


JOBS = {
    "hardy": _job_hardy,
    "s_k": _job_s_k,
    "doubling": _job_doubling,
    "operator": _job_operator,
    "gram": _job_gram,
    "multiplier": _job_multiplier,
    "lemma2": _job_lemma2,
}


def run(config_path: str | Path, out_dir: str | Path = "out", tol: float | None = None,
        quiet: bool = False) -> int:
    try:
        cfg = load_config(config_path)
        if tol is not None:
            if "tol" not in cfg.params:
                raise ConfigError(f"job kind {cfg.kind!r} takes no tol")
            cfg.params["tol"] = float(tol)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines, finite = JOBS[cfg.kind](cfg, out)
    except Exception as exc:  # every failure maps to exit 1 with its message
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    text = "\n".join([f"job: {cfg.kind}"] + lines) + "\n"
    (out / "report.txt").write_text(text)
    if not quiet:
        sys.stdout.write(text)
    return EXIT_OK if finite else EXIT_DIVERGENT


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="volterra-weights", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the analysis described by a job file")
    p_run.add_argument("config")
    p_run.add_argument("--out", default="out", help="output directory (default: out)")
    p_run.add_argument("--tol", type=float, default=None, help="override the job tolerance")
    p_run.add_argument("--quiet", action="store_true", help="do not echo the report")
    p_dump = sub.add_parser("dump-defaults", help="print a job file template")
    p_dump.add_argument("kind", choices=sorted(DEFAULTS))
    args = parser.parse_args(argv)
    if args.command == "dump-defaults":
        sys.stdout.write(dump_defaults(args.kind))
        return EXIT_OK
    return run(args.config, args.out, args.tol, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
