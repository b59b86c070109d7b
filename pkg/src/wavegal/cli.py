"""Command-line scenario runner.

    wavegal run <config>
    wavegal study <config> --vary eps=1e-2,1e-3 | --vary J=4,5 [--uniform-baseline]
    wavegal compare <config>
    wavegal dump-basis <family> <J> [--dirichlet bottom,top]

Exit codes: 0 success, 2 config error, 3 solver error, 4 I/O error.
``WAVEGAL_OUT`` overrides the configured output directory.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import os
import sys
import time
from pathlib import Path

import numpy as np

from .adaptivity import active_sets_csv
from .assembly import write_matrix_market
from .config import ScenarioConfig, load_config
from .errors import ConfigError, ValidationError, WavegalError
from .mra import full_index_set, get_family, sample_expansion
from .reference import (ErrorReport, analytic_fgm_steady, analytic_slab_steady,
                        error_norms, fd_solve_transient, field_csv)
from .timestepper import run_transient

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
STUDY_HEADER = ["param", "active_dofs", "l2_error", "h1_semi_error", "wall_ms"]


def output_dir(cfg: ScenarioConfig) -> Path:
    return Path(os.environ.get("WAVEGAL_OUT") or cfg.output_dir)


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def sample_solution(sol, n):
    """Temperature of the final state on the ``n x n`` reference grid, ``[iy, ix]``."""
    s = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(s, s, indexing="xy")
    a = sol.assembler
    act = sol.final_set
    v = sample_expansion(sol.final_coeffs, act.iset, a.table, X, Y)
    return v + a.lifting.value(X, Y, sol.final_time)


def build_reference(cfg: ScenarioConfig, n=None):
    """The configured oracle, or ``None``."""
    n = n or cfg.reference_n
    if cfg.reference == "fd":
        return fd_solve_transient(cfg.problem(), n, cfg.dt, cfg.t_final)
    if cfg.reference == "analytic":
        geo = cfg.material().geometry.__class__.__name__
        if geo == "LayeredSlab":
            return analytic_slab_steady(cfg.k1, cfg.k2, cfg.interface_y)
        if geo == "GradedLayer":
            return analytic_fgm_steady(cfg.k_m, cfg.alpha, cfg.y0)
        if geo == "Homogeneous":
            return analytic_slab_steady(cfg.k_m, cfg.k_m, 0.5)
        raise ConfigError("no analytic reference for this geometry", "reference.kind")
    return None


def _reference_n(cfg, sol):
    lev = int(sol.final_set.iset.level.max()) if len(sol.final_set) else 0
    return max(cfg.reference_n, 2 * 2 ** (lev + 1) + 1)


def solve(cfg: ScenarioConfig, adaptive=None):
    c = cfg if adaptive is None else dataclasses.replace(cfg, adaptive=adaptive)
    return run_transient(c.problem(), c.discretization(), c.policy(), c.time_grid(), c.pcg(),
                         record_timing=c.record_timing)


def _report(cfg, sol, err: ErrorReport = None, wall_ms=0.0):
    d = sol.diagnostics
    lines = [
        f"scenario={cfg.scenario}",
        f"family={get_family(cfg.family).tag}",
        f"J={cfg.J}",
        f"epsilon_tol={cfg.epsilon_tol!r}" if cfg.adaptive else "epsilon_tol=uniform",
        f"steps={len(d)}",
        f"final_time={sol.final_time!r}",
        f"final_active_dofs={len(sol.final_set)}",
        f"full_dofs={len(sol.assembler.full)}",
        f"max_active_dofs={max(r.active_dofs for r in d)}",
        f"total_pcg_iters={sum(r.pcg_iters for r in d)}",
        f"max_pcg_iters={max(r.pcg_iters for r in d)}",
    ]
    yi = cfg.interface_line()
    if yi is not None:
        x = np.linspace(0.0, 1.0, cfg.reference_n)
        t = sol.temperature(x, np.full(x.size, yi))
        lines.append(f"interface_temperature={float(np.mean(t))!r}")
    if err is not None:
        lines += [f"l2_error={err.l2_error!r}", f"h1_semi_error={err.h1_semi_error!r}",
                  f"reference={err.reference}", f"reference_resolution={err.resolution}",
                  "error_normalization=raw"]
    lines.append(f"wall_ms={wall_ms:.3f}")
    return "\n".join(lines) + "\n" + cfg.echo()


def _snapshots(sol):
    """``(step, ActiveSet)`` at step 0 and wherever the active set changed."""
    out, last = [], None
    for n, sid in enumerate(sol.snapshot_ids):
        if sid != last:
            out.append((n, sol.sets[sid]))
            last = sid
    return out


def cmd_run(cfg: ScenarioConfig):
    out = output_dir(cfg)
    t0 = time.perf_counter()
    sol = solve(cfg)
    ref = build_reference(cfg, _reference_n(cfg, sol))
    err = error_norms(sol, ref) if ref is not None else None
    wall = (time.perf_counter() - t0) * 1e3 if cfg.record_timing else 0.0
    n = cfg.reference_n
    _write(out / "field.csv", field_csv(np.linspace(0, 1, n), sample_solution(sol, n)))
    _write(out / "active_set.csv", active_sets_csv(_snapshots(sol)))
    _write(out / "diagnostics.csv", sol.diagnostics_csv())
    _write(out / "report.txt", _report(cfg, sol, err, wall))
    if cfg.dump_matrix:
        _, K = sol.assembler.matrices(sol.final_set.iset)
        out.mkdir(parents=True, exist_ok=True)
        write_matrix_market(out / "K.mtx", K, comment="stiffness on the final active set")
    return sol, err


def _parse_vary(text):
    name, _, vals = text.partition("=")
    name = name.strip().lower()
    if name not in ("eps", "j") or not vals:
        raise ConfigError("expected eps=v1,v2,... or J=v1,v2,...", "--vary")
    try:
        values = [float(v) if name == "eps" else int(v) for v in vals.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad value list {vals!r}", "--vary") from None
    if not values:
        raise ConfigError("empty value list", "--vary")
    return ("epsilon_tol" if name == "eps" else "J"), values


def _fmt_row(v):
    return repr(v) if isinstance(v, float) else str(v)


def cmd_study(cfg: ScenarioConfig, vary, uniform_baseline=False):
    attr, values = _parse_vary(vary)
    out = output_dir(cfg)
    runs = [(v, dataclasses.replace(cfg, **{attr: v}), True) for v in values]
    if uniform_baseline:
        runs.append(("uniform", cfg, False))
    finest = max(r[1].J for r in runs)
    n = max(cfg.reference_n, 2 * 2 ** finest + 1)
    ref = build_reference(cfg, n)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STUDY_HEADER)
    for param, c, adaptive in runs:
        t0 = time.perf_counter()
        try:
            sol = solve(c, adaptive)
            err = error_norms(sol, ref) if ref is not None else None
        except WavegalError as exc:
            print(f"study: run {param} failed: {exc}", file=sys.stderr)
            w.writerow([_fmt_row(param), "failed", "", "", ""])
            continue
        wall = (time.perf_counter() - t0) * 1e3 if cfg.record_timing else 0.0
        w.writerow([_fmt_row(param), len(sol.final_set),
                    repr(err.l2_error) if err else "nan",
                    repr(err.h1_semi_error) if err else "nan", f"{wall:.3f}"])
    _write(out / "study.csv", buf.getvalue())
    return buf.getvalue()


def cmd_compare(cfg: ScenarioConfig):
    out = output_dir(cfg)
    sol = solve(cfg)
    n = _reference_n(cfg, sol)
    ref = fd_solve_transient(cfg.problem(), n, cfg.dt, cfg.t_final)
    err = error_norms(sol, ref)
    s = np.linspace(0.0, 1.0, n)
    _write(out / "field.csv", field_csv(s, sample_solution(sol, n)))
    _write(out / "reference_field.csv", ref.to_csv())
    _write(out / "error_report.txt", err.to_text() + _report(cfg, sol, err))
    return err


def cmd_dump_basis(family, J, dirichlet=""):
    edges = frozenset(e.strip() for e in dirichlet.split(",") if e.strip())
    bad = edges - {"bottom", "top", "left", "right"}
    if bad:
        raise ConfigError(f"unknown edges {sorted(bad)}", "--dirichlet")
    return full_index_set(int(J), get_family(family), edges).to_csv()


def build_parser():
    p = argparse.ArgumentParser(prog="wavegal", description="Adaptive wavelet heat-conduction runner")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("config")
    s = sub.add_parser("study", help="parameter sweep")
    s.add_argument("config")
    s.add_argument("--vary", required=True, help="eps=1e-2,1e-3 or J=4,5")
    s.add_argument("--uniform-baseline", action="store_true")
    c = sub.add_parser("compare", help="compare against the finite-difference reference")
    c.add_argument("config")
    d = sub.add_parser("dump-basis", help="print a full index set as CSV")
    d.add_argument("family")
    d.add_argument("J", type=int)
    d.add_argument("--dirichlet", default="")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "dump-basis":
            try:
                text = cmd_dump_basis(args.family, args.J, args.dirichlet)
            except ValidationError as exc:
                raise ConfigError(str(exc)) from exc
            sys.stdout.write(text)
            return EXIT_OK
        cfg = load_config(args.config)
        if args.command == "run":
            cmd_run(cfg)
        elif args.command == "study":
            cmd_study(cfg, args.vary, args.uniform_baseline)
        else:
            cmd_compare(cfg)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except WavegalError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
