"""Config-driven command line: flow, monotone, eps-path, and verify runs.

Configs are flat "section.key = value" files with '#' comments.  Every run
echoes its fully resolved configuration into the output directory, writes
series tables and snapshots bit-exactly, and (unless disabled) renders
figure files next to them.

Exit codes: 0 converged, 2 honest non-convergence, 1 error.
"""

from __future__ import annotations

import argparse
import math
import re
import sys
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Sequence

import numpy as np

from .epspath import EpsSchedule, PathAborted, integrability_check, run_path
from .grid import Field, Grid, constant_field, field_stats, make_grid
from .heatflow import (
    SERIES_HEADER,
    FlowConfig,
    TrajectoryRow,
    run_to_steady,
)
from .monotone import elliptic_fixed_point, iterate_chain
from .problem import ProblemData, materialize, parse_coeff
from .serialize import format_float, read_snapshot, write_snapshot, write_table

__all__ = ["RunConfig", "load_config", "run_command", "write_series", "write_snapshot", "main"]

COMMANDS = ("flow", "monotone", "eps-path", "verify")
FORMATS = ("series", "snapshot", "both")

_PI_RE = re.compile(r"^\s*([0-9]*\.?[0-9]*)\s*\*?\s*pi\s*$")

_DEFAULTS = {
    "problem.h": "0",
    "problem.eps": "0",
    "problem.sign": "main",
    "problem.allow_negative_b": "false",
    "flow.dt_init": "0.001",
    "flow.dt_min": "1e-12",
    "flow.dt_max": "1.0",
    "flow.t_max": "10000.0",
    "flow.steady_tol_residual": "1e-09",
    "flow.steady_tol_dudt": "1e-10",
    "flow.record_every": "10",
    "monotone.horizon": "2.0",
    "monotone.steps": "200",
    "monotone.max_iters": "200",
    "monotone.keep_history": "false",
    "epspath.eps_start": "0.1",
    "epspath.eps_factor": "0.5",
    "epspath.eps_count": "9",
    "epspath.refinement_levels": "4",
    "output.dir": "out",
    "output.format": "both",
    "output.plots": "true",
}

_REQUIRED = ("grid.dim", "grid.points", "grid.length", "problem.p", "problem.q",
             "problem.A", "problem.B", "initial.u0")

# keys whose absence means "unset" rather than a default value
_OPTIONAL = ("problem.dim_hint", "flow.omega_shift", "epspath.values")

_KEY_ORDER = (
    "grid.dim", "grid.points", "grid.length",
    "problem.p", "problem.q", "problem.A", "problem.B", "problem.h",
    "problem.eps", "problem.sign", "problem.allow_negative_b", "problem.dim_hint",
    "initial.u0",
    "flow.dt_init", "flow.dt_min", "flow.dt_max", "flow.t_max",
    "flow.steady_tol_residual", "flow.steady_tol_dudt", "flow.record_every",
    "flow.omega_shift",
    "monotone.horizon", "monotone.steps", "monotone.max_iters", "monotone.keep_history",
    "epspath.eps_start", "epspath.eps_factor", "epspath.eps_count",
    "epspath.values", "epspath.refinement_levels",
    "output.dir", "output.format", "output.plots",
)


class ConfigError(ValueError):
    pass


def _parse_number(key: str, text: str, path: str) -> float:
    m = _PI_RE.match(text)
    if m:
        mult = m.group(1)
        return (float(mult) if mult else 1.0) * math.pi
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{path}: {key} = {text!r}: not a number") from None


def _parse_int(key: str, text: str, path: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{path}: {key} = {text!r}: not an integer") from None


def _parse_bool(key: str, text: str, path: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(f"{path}: {key} = {text!r}: expected true or false")


def _parse_list(key: str, text: str, path: str) -> list[str]:
    items = [tok.strip() for tok in text.split(",") if tok.strip()]
    if not items:
        raise ConfigError(f"{path}: {key} = {text!r}: expected a comma-separated list")
    return items


@dataclass
class RunConfig:
    """Fully validated run description plus the resolved key/value entries."""

    source_path: str
    entries: dict[str, str]
    grid: Grid
    problem: ProblemData
    u0: Field
    flow: FlowConfig
    monotone_horizon: float
    monotone_steps: int
    monotone_max_iters: int
    monotone_keep_history: bool
    eps_values: tuple[float, ...]
    eps_refinement_levels: int
    output_dir: str
    output_format: str
    output_plots: bool
    warnings: list[str] = dc_field(default_factory=list)


def _materialize_coeff(key: str, text: str, grid: Grid, base: Path, path: str) -> tuple[Field, str]:
    """Parse + evaluate a coefficient entry; returns the field and the
    canonical entry text (with @file paths made absolute)."""
    raw = text.strip()
    if raw.startswith("@file:"):
        ref = (base / raw[len("@file:"):].strip()).resolve()
        if not ref.exists():
            raise ConfigError(f"{path}: {key}: referenced file {ref} does not exist")
        raw = f"@file:{ref}"
    try:
        spec = parse_coeff(raw)
        fieldval = materialize(spec, grid)
    except ValueError as exc:
        raise ConfigError(f"{path}: {key} = {text!r}: {exc}") from None
    return fieldval, raw


def load_config(path: str | Path) -> RunConfig:
    """Parse, validate, and default a config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    base = path.parent
    pathname = str(path)

    raw: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{pathname}:{lineno}: expected 'section.key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not re.fullmatch(r"[a-z]+\.[A-Za-z_][A-Za-z0-9_]*", key):
            raise ConfigError(f"{pathname}:{lineno}: malformed key {key!r}")
        if key in raw:
            raise ConfigError(f"{pathname}:{lineno}: duplicate key {key!r}")
        raw[key] = value

    known = set(_KEY_ORDER)
    for key in raw:
        if key not in known:
            raise ConfigError(f"{pathname}: unknown key {key!r}")
    for key in _REQUIRED:
        if key not in raw:
            raise ConfigError(f"{pathname}: missing required key {key!r}")

    entries = dict(_DEFAULTS)
    entries.update(raw)

    dim = _parse_int("grid.dim", entries["grid.dim"], pathname)
    points = [_parse_int("grid.points", tok, pathname)
              for tok in _parse_list("grid.points", entries["grid.points"], pathname)]
    lengths = [_parse_number("grid.length", tok, pathname)
               for tok in _parse_list("grid.length", entries["grid.length"], pathname)]
    if len(points) == 1 and dim == 2:
        points = points * 2
    if len(lengths) == 1 and dim == 2:
        lengths = lengths * 2
    try:
        grid = make_grid(dim, points, lengths)
    except ValueError as exc:
        raise ConfigError(f"{pathname}: grid section invalid: {exc}") from None

    p = _parse_number("problem.p", entries["problem.p"], pathname)
    if not p > 1:
        raise ConfigError(
            f"{pathname}: problem.p = {entries['problem.p']}: p must exceed 1 "
            "(the singular reaction term needs p > 1)"
        )
    q = _parse_number("problem.q", entries["problem.q"], pathname)
    eps = _parse_number("problem.eps", entries["problem.eps"], pathname)
    sign_text = entries["problem.sign"].lower()
    if sign_text not in ("main", "appendix"):
        raise ConfigError(f"{pathname}: problem.sign = {sign_text!r}: expected main or appendix")
    sign_b = 1 if sign_text == "main" else -1
    allow_neg = _parse_bool("problem.allow_negative_b", entries["problem.allow_negative_b"], pathname)
    dim_hint = None
    if "problem.dim_hint" in entries:
        dim_hint = _parse_int("problem.dim_hint", entries["problem.dim_hint"], pathname)

    a_field, entries["problem.A"] = _materialize_coeff("problem.A", entries["problem.A"], grid, base, pathname)
    b_field, entries["problem.B"] = _materialize_coeff("problem.B", entries["problem.B"], grid, base, pathname)
    h_field, entries["problem.h"] = _materialize_coeff("problem.h", entries["problem.h"], grid, base, pathname)
    u0_field, entries["initial.u0"] = _materialize_coeff("initial.u0", entries["initial.u0"], grid, base, pathname)

    collected: list[str] = []
    import warnings as _warnings

    with _warnings.catch_warnings(record=True) as caught:
        _warnings.simplefilter("always")
        try:
            problem = ProblemData(
                p=p, q=q, A=a_field, B=b_field, h=h_field, eps=eps,
                sign_b=sign_b, manifold_dim_hint=dim_hint, allow_negative_b=allow_neg,
            )
        except ValueError as exc:
            raise ConfigError(f"{pathname}: problem section invalid: {exc}") from None
    for w in caught:
        collected.append(str(w.message))
        _warnings.warn_explicit(w.message, w.category, pathname, 0)

    if not u0_field.values.min() > 0:
        raise ConfigError(f"{pathname}: initial.u0 must be strictly positive everywhere")

    omega_shift = None
    if "flow.omega_shift" in entries:
        omega_shift = _parse_number("flow.omega_shift", entries["flow.omega_shift"], pathname)
    try:
        flow = FlowConfig(
            dt_init=_parse_number("flow.dt_init", entries["flow.dt_init"], pathname),
            dt_min=_parse_number("flow.dt_min", entries["flow.dt_min"], pathname),
            dt_max=_parse_number("flow.dt_max", entries["flow.dt_max"], pathname),
            t_max=_parse_number("flow.t_max", entries["flow.t_max"], pathname),
            steady_tol_residual=_parse_number(
                "flow.steady_tol_residual", entries["flow.steady_tol_residual"], pathname),
            steady_tol_dudt=_parse_number(
                "flow.steady_tol_dudt", entries["flow.steady_tol_dudt"], pathname),
            record_every=_parse_int("flow.record_every", entries["flow.record_every"], pathname),
            omega_shift=omega_shift,
        )
    except ValueError as exc:
        raise ConfigError(f"{pathname}: flow section invalid: {exc}") from None

    if "epspath.values" in entries:
        eps_values = tuple(
            _parse_number("epspath.values", tok, pathname)
            for tok in _parse_list("epspath.values", entries["epspath.values"], pathname)
        )
    else:
        start = _parse_number("epspath.eps_start", entries["epspath.eps_start"], pathname)
        factor = _parse_number("epspath.eps_factor", entries["epspath.eps_factor"], pathname)
        count = _parse_int("epspath.eps_count", entries["epspath.eps_count"], pathname)
        eps_values = tuple(start * factor**j for j in range(count))

    out_format = entries["output.format"]
    if out_format not in FORMATS:
        raise ConfigError(
            f"{pathname}: output.format = {out_format!r}: expected one of {FORMATS}")

    cfg = RunConfig(
        source_path=pathname,
        entries=entries,
        grid=grid,
        problem=problem,
        u0=u0_field,
        flow=flow,
        monotone_horizon=_parse_number("monotone.horizon", entries["monotone.horizon"], pathname),
        monotone_steps=_parse_int("monotone.steps", entries["monotone.steps"], pathname),
        monotone_max_iters=_parse_int("monotone.max_iters", entries["monotone.max_iters"], pathname),
        monotone_keep_history=_parse_bool(
            "monotone.keep_history", entries["monotone.keep_history"], pathname),
        eps_values=eps_values,
        eps_refinement_levels=_parse_int(
            "epspath.refinement_levels", entries["epspath.refinement_levels"], pathname),
        output_dir=entries["output.dir"],
        output_format=out_format,
        output_plots=_parse_bool("output.plots", entries["output.plots"], pathname),
        warnings=collected,
    )
    _canonicalize_entries(cfg)
    return cfg


_FLOAT_KEYS = {
    "grid.length", "problem.p", "problem.q", "problem.eps",
    "flow.dt_init", "flow.dt_min", "flow.dt_max", "flow.t_max",
    "flow.steady_tol_residual", "flow.steady_tol_dudt", "flow.omega_shift",
    "monotone.horizon", "epspath.eps_start", "epspath.eps_factor",
    "epspath.values",
}


def _canonicalize_entries(cfg: RunConfig) -> None:
    """Rewrite entries so the resolved echo is a fixed point of loading."""
    e = cfg.entries
    for key in list(e):
        if key in _FLOAT_KEYS:
            toks = [format_float(_parse_number(key, t, cfg.source_path))
                    for t in e[key].split(",") if t.strip()]
            e[key] = ",".join(toks)
    e["grid.points"] = ",".join(str(n) for n in cfg.grid.points_per_axis)
    e["grid.length"] = ",".join(format_float(v) for v in cfg.grid.axis_length)
    for key in ("problem.allow_negative_b", "monotone.keep_history", "output.plots"):
        e[key] = "true" if _parse_bool(key, e[key], cfg.source_path) else "false"


def write_resolved_config(cfg: RunConfig, path: str | Path) -> None:
    lines = ["# resolved lichflow configuration"]
    for key in _KEY_ORDER:
        if key in cfg.entries:
            lines.append(f"{key} = {cfg.entries[key]}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_series(records: Sequence[TrajectoryRow], path: str | Path, format: str = "csv") -> None:
    """Write trajectory rows as the delimited series table."""
    if format != "csv":
        raise ValueError(f"unsupported series format {format!r}")
    write_table(path, SERIES_HEADER, (r.astuple() for r in records))


def _say(quiet: bool, msg: str) -> None:
    if not quiet:
        print(f"[lichflow] {msg}")


def _write_summary(path: Path, pairs: list[tuple[str, object]]) -> None:
    lines = []
    for key, val in pairs:
        if isinstance(val, bool):
            text = "true" if val else "false"
        elif isinstance(val, float):
            text = format_float(val)
        else:
            text = str(val)
        lines.append(f"{key} = {text}")
    path.write_text("\n".join(lines) + "\n")


def _cmd_flow(cfg: RunConfig, out: Path, fmt: str, quiet: bool, plots: bool) -> int:
    t0 = time.perf_counter()
    report, record = run_to_steady(cfg.problem, cfg.u0, cfg.flow)
    wall = time.perf_counter() - t0
    if fmt in ("series", "both"):
        write_series(record.rows, out / "series.csv")
    if fmt in ("snapshot", "both"):
        write_snapshot(report.u, out / "solution.snapshot")
    stats = field_stats(report.u)
    _write_summary(out / "summary.txt", [
        ("command", "flow"),
        ("converged", report.converged),
        ("residual_l2", report.residual_l2),
        ("residual_linf", report.residual_linf),
        ("steps", report.steps),
        ("t_final", report.t_final),
        ("dt_final", report.dt_final),
        ("energy_initial", report.energy_initial),
        ("energy_final", report.energy_final),
        ("dissipation_total", report.dissipation_total),
        ("barrier_lower", report.barrier_lower),
        ("barrier_upper", report.barrier_upper),
        ("barrier_violations", report.barrier_violations),
        ("energy_violations", report.energy_violations),
        ("omega", report.omega),
        ("u_min", stats.min),
        ("u_max", stats.max),
        ("u_mean", stats.mean),
        ("wall_time_s", wall),
        ("message", report.message or "ok"),
    ])
    if plots:
        from . import report as _report

        _report.render_flow(out, record, report.u)
    _say(quiet, f"flow: converged={report.converged} residual_linf={report.residual_linf:.3e} "
                f"steps={report.steps} ({wall:.2f}s)")
    return 0 if report.converged else 2


def _cmd_monotone(cfg: RunConfig, out: Path, fmt: str, quiet: bool, plots: bool) -> int:
    t0 = time.perf_counter()
    chain = iterate_chain(
        cfg.problem,
        cfg.u0,
        horizon=cfg.monotone_horizon,
        time_steps=cfg.monotone_steps,
        max_iters=cfg.monotone_max_iters,
        keep_history=cfg.monotone_keep_history,
    )
    wall = time.perf_counter() - t0
    if fmt in ("series", "both"):
        write_table(out / "gap_history.csv", ("k", "gap"),
                    ((float(k), gap) for k, gap in enumerate(chain.gap_history)))
    if fmt in ("snapshot", "both"):
        last = chain.sub_final.n_steps
        write_snapshot(chain.sub_final.slice(last), out / "sub_final.snapshot")
        write_snapshot(chain.super_final.slice(last), out / "super_final.snapshot")
        for k, (s_it, p_it) in enumerate(zip(chain.iterates_sub, chain.iterates_super)):
            write_snapshot(s_it.slice(last), out / f"sub_iter_{k:03d}.snapshot")
            write_snapshot(p_it.slice(last), out / f"super_iter_{k:03d}.snapshot")
    _write_summary(out / "summary.txt", [
        ("command", "monotone"),
        ("converged", chain.converged),
        ("iterations", chain.iterations),
        ("ordering_violations", chain.ordering_violations),
        ("worst_violation", chain.worst_violation),
        ("gap_final", chain.gap_history[-1]),
        ("omega", chain.omega),
        ("barrier_lower", chain.barrier.lower),
        ("barrier_upper", chain.barrier.upper),
        ("wall_time_s", wall),
    ])
    if plots:
        from . import report as _report

        _report.render_chain(out, chain)
    _say(quiet, f"monotone: converged={chain.converged} gap={chain.gap_history[-1]:.3e} "
                f"violations={chain.ordering_violations} ({wall:.2f}s)")
    return 0 if chain.converged else 2


def _cmd_eps_path(cfg: RunConfig, out: Path, fmt: str, quiet: bool, plots: bool) -> int:
    t0 = time.perf_counter()
    integ = integrability_check(cfg.problem.B, cfg.problem.q, cfg.eps_refinement_levels)
    if integ.verdict != "finite":
        _say(quiet, f"integrability check: {integ.verdict} (slope {integ.slope:.3g}); "
                    "proceeding with warning")
    schedule = EpsSchedule(cfg.eps_values, cfg.flow)
    try:
        path_report = run_path(cfg.problem, schedule, cfg.u0)
    except PathAborted as exc:
        _say(quiet, f"eps-path aborted: {exc}")
        partial = exc.partial
        _write_summary(out / "summary.txt", [
            ("command", "eps-path"),
            ("converged", False),
            ("completed_solves", len(partial.fields)),
            ("message", str(exc)),
        ])
        return 1
    wall = time.perf_counter() - t0

    if fmt in ("series", "both"):
        rows = []
        for j, (eps, rep, triple) in enumerate(
            zip(path_report.eps_values, path_report.reports, path_report.bounds)
        ):
            gap = path_report.gaps[j] if j < len(path_report.gaps) else math.nan
            rows.append((eps, triple.l2_sq, triple.grad_sq, triple.dissipation,
                         gap, rep.residual_l2, rep.residual_linf))
        write_table(
            out / "path.csv",
            ("eps", "int_u_sq", "int_grad_sq", "dissipation", "gap_to_next",
             "residual_l2", "residual_linf"),
            rows,
        )
    if fmt in ("snapshot", "both"):
        for j, fld in enumerate(path_report.fields):
            write_snapshot(fld, out / f"eps_{j:02d}.snapshot")
        if path_report.limit_field is not None:
            write_snapshot(path_report.limit_field, out / "limit.snapshot")

    all_converged = all(r.converged for r in path_report.reports)
    _write_summary(out / "summary.txt", [
        ("command", "eps-path"),
        ("converged", all_converged),
        ("bounds_ok", path_report.bounds_ok),
        ("integrability_verdict", integ.verdict),
        ("integrability_slope", integ.slope),
        ("limit_residual_l2", path_report.limit_residual.l2),
        ("limit_residual_linf", path_report.limit_residual.linf),
        ("wall_time_s", wall),
        ("flags", "; ".join(path_report.flags) or "none"),
    ])
    if plots:
        from . import report as _report

        _report.render_path(out, path_report)
    _say(quiet, f"eps-path: converged={all_converged} "
                f"limit residual_linf={path_report.limit_residual.linf:.3e} ({wall:.2f}s)")
    return 0 if all_converged else 2


def _mms_case(n: int) -> tuple[ProblemData, np.ndarray]:
    """Manufactured steady state 2 + cos(x)/2 with p = q = 2 and B = 1."""
    grid = make_grid(1, [n], [2.0 * math.pi])
    x = grid.coordinates(0)
    ustar = 2.0 + 0.5 * np.cos(x)
    a_vals = ustar**2 * (0.5 * np.cos(x) + ustar**2)
    pd = ProblemData(
        p=2.0, q=2.0, A=Field(grid, a_vals), B=constant_field(grid, 1.0)
    )
    return pd, ustar


def _cmd_verify(cfg: RunConfig, out: Path, fmt: str, quiet: bool, plots: bool) -> int:
    t0 = time.perf_counter()
    sizes = (32, 64, 128)
    errors_flow = []
    errors_fp = []
    for n in sizes:
        pd, ustar = _mms_case(n)
        guess = constant_field(pd.grid, 2.0)
        rep_flow, _ = run_to_steady(pd, guess, FlowConfig(t_max=5000.0))
        rep_fp = elliptic_fixed_point(pd, guess)
        if not (rep_flow.converged and rep_fp.converged):
            _say(quiet, f"verify: solver did not converge at n = {n}")
            return 2
        errors_flow.append(float(np.abs(rep_flow.u.values - ustar).max()))
        errors_fp.append(float(np.abs(rep_fp.u.values - ustar).max()))
    hs = np.array([2.0 * math.pi / n for n in sizes])
    order_flow = float(np.polyfit(np.log(hs), np.log(errors_flow), 1)[0])
    order_fp = float(np.polyfit(np.log(hs), np.log(errors_fp), 1)[0])

    # closed-form constant steady state: A/B = 16 with p = q = 2 gives 2
    grid = make_grid(1, [128], [2.0 * math.pi])
    pd_const = ProblemData(
        p=2.0, q=2.0, A=constant_field(grid, 16.0), B=constant_field(grid, 1.0)
    )
    rep_const, _ = run_to_steady(pd_const, constant_field(grid, 1.0), FlowConfig(t_max=5000.0))
    const_err = float(np.abs(rep_const.u.values - 2.0).max())
    wall = time.perf_counter() - t0

    if fmt in ("series", "both"):
        write_table(
            out / "mms.csv",
            ("n", "h", "err_flow_linf", "err_fixed_point_linf"),
            [(float(n), h, ef, eq) for n, h, ef, eq in zip(sizes, hs, errors_flow, errors_fp)],
        )
    ok = (
        abs(order_flow - 2.0) <= 0.2
        and abs(order_fp - 2.0) <= 0.2
        and const_err <= 1e-8
        and rep_const.converged
    )
    _write_summary(out / "summary.txt", [
        ("command", "verify"),
        ("converged", ok),
        ("observed_order_flow", order_flow),
        ("observed_order_fixed_point", order_fp),
        ("constant_steady_error", const_err),
        ("wall_time_s", wall),
    ])
    if plots:
        from . import report as _report

        _report.render_verify(out, hs, np.array(errors_flow), order_flow)
    _say(quiet, f"verify: order(flow)={order_flow:.3f} order(fixed point)={order_fp:.3f} "
                f"constant error={const_err:.2e} -> {'ok' if ok else 'FAIL'} ({wall:.2f}s)")
    return 0 if ok else 2


def run_command(
    cmd: str,
    cfg: RunConfig,
    out_dir: str | None = None,
    fmt: str | None = None,
    quiet: bool = False,
    plots: bool | None = None,
) -> int:
    """Execute one command pipeline; returns the process exit status."""
    if cmd not in COMMANDS:
        raise ValueError(f"unknown command {cmd!r}; expected one of {COMMANDS}")
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    fmt = fmt if fmt is not None else cfg.output_format
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    do_plots = cfg.output_plots if plots is None else plots
    write_resolved_config(cfg, out / "resolved.cfg")
    try:
        if cmd == "flow":
            return _cmd_flow(cfg, out, fmt, quiet, do_plots)
        if cmd == "monotone":
            return _cmd_monotone(cfg, out, fmt, quiet, do_plots)
        if cmd == "eps-path":
            return _cmd_eps_path(cfg, out, fmt, quiet, do_plots)
        return _cmd_verify(cfg, out, fmt, quiet, do_plots)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"lichflow {cmd}: error: {exc}", file=sys.stderr)
        return 1


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="lichflow",
        description="Heat-flow, monotone-chain, and eps-continuation solvers "
                    "for -lap(u) = A*u^-p - B*u^q on periodic grids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in (
        ("flow", "evolve the parabolic problem to steady state"),
        ("monotone", "run the ordered sub/supersolution chain"),
        ("eps-path", "solve along a decreasing regularization schedule"),
        ("verify", "run manufactured-solution and closed-form checks"),
    ):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", required=True, help="path to the run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
        p.add_argument("--format", default=None, choices=FORMATS,
                       help="which artifacts to write (overrides output.format)")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
        p.add_argument("--plots", action=argparse.BooleanOptionalAction, default=None,
                       help="render figure files (overrides output.plots)")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"lichflow: {exc}", file=sys.stderr)
        return 1
    return run_command(
        args.command, cfg, out_dir=args.out, fmt=args.format,
        quiet=args.quiet, plots=args.plots,
    )


if __name__ == "__main__":
    sys.exit(main())
