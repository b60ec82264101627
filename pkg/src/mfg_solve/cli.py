"""Command-line entry point: ``mfg-solve {solve,sweep,verify}``.

Exit codes: 0 success, 1 configuration or I/O error, 2 an iteration did not
converge, 3 a verification check failed.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._io import fmt, fmt_row
from .config import BUILTIN, ConfigError, RunConfig, load_config, resolve_out_dir
from .fixedpoint import (
    NonConvergedError,
    envelope_paths,
    read_equilibrium_csv,
    solve_equilibrium,
    write_equilibrium_csv,
    write_manifest,
)
from .hjb import HJBSolution, read_fields_csv, write_fields_csv
from .kfe import DistributionPath, write_mass_csv
from .mc import verify_paths, write_mc_csv
from .model import verify_assumptions
from .svg import Panel, Series, write_svg
from .sweep import multiplicity_scan, statics_table, write_report_csv, write_report_svg

EXIT_OK, EXIT_CONFIG, EXIT_NONCONV, EXIT_FAIL = 0, 1, 2, 3

log = logging.getLogger("mfg_solve")


def _say(*parts):
    print(" ".join(str(p) for p in parts), flush=True)


def _out_dir(cfg: RunConfig, flag) -> Path:
    out = resolve_out_dir(cfg, flag)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(cfg: RunConfig, out_flag=None, threads: int = 1) -> int:
    grid, tgrid = cfg.space_grid(), cfg.time_grid()
    out = _out_dir(cfg, out_flag)
    code = EXIT_OK
    try:
        res = solve_equilibrium(cfg.model, grid, tgrid, cfg.iteration)
    except NonConvergedError as exc:
        res = exc.result
        code = EXIT_NONCONV
        _say("NON_CONVERGED", exc)

    write_equilibrium_csv(out / "equilibrium.csv", res)
    write_manifest(out / "manifest.json", cfg.model, res, cfg.iteration)
    if cfg.write_fields:
        write_fields_csv(out / "fields.csv", grid, tgrid,
                         HJBSolution(values=res.value_field, policy=res.policy_field))
    if cfg.write_mass:
        write_mass_csv(out / "mass.csv", grid, tgrid, DistributionPath(mass=res.distribution))
    m_min, m_max = envelope_paths(cfg.model, grid, tgrid)
    t = tgrid.nodes
    write_svg(out / "equilibrium.svg", [Panel(
        title=f"Equilibrium path, xi={fmt(cfg.model.xi)}", xlabel="t", ylabel="m",
        series=[Series("m*", t, res.m_star), Series("m Min", t, m_min), Series("m Max", t, m_max)],
    )])
    _say(f"scheme={res.scheme.value} init={res.init} iterations={res.iterations} "
         f"residual={fmt(res.residual)} monotone={res.monotone_flag} reward={fmt(res.reward)}")
    _say(f"m*(T)={fmt(res.m_star[-1])} written to {out}")
    return code


def cmd_sweep(cfg: RunConfig, out_flag=None, threads: int = 1) -> int:
    grid, tgrid = cfg.space_grid(), cfg.time_grid()
    out = _out_dir(cfg, out_flag)
    sw = cfg.sweep
    report = multiplicity_scan(cfg.model, grid, tgrid, sw.xi_values, gap_tol=sw.gap_tol,
                               cfg=cfg.iteration, threads=threads, thresholds=sw.thresholds,
                               classify_tol=sw.classify_tol)
    rows = statics_table(cfg.model, grid, tgrid, sw.xi_values, report=report)
    write_report_csv(out / "sweep.csv", report, tgrid)
    write_report_svg(out / "sweep.svg", report)
    _write_statics_csv(out / "statics.csv", rows)
    if report.region is None:
        _say("region: none (no xi with gap > gap_tol)")
    else:
        _say(f"region: [{fmt(report.region[0])}, {fmt(report.region[1])}]")
    for a in report.anomalies:
        _say("anomaly:", a)
    _say(f"written to {out}")
    return EXIT_OK if report.converged else EXIT_NONCONV


def _verdict(v):
    return "" if v is None else ("yes" if v else "no")


def _write_statics_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["xi", "in_region", "J_low", "J_high", "price_low(T)", "price_high(T)",
                    "low_ordered", "high_ordered", "reward_ordered", "price_ordered"])
        for r in rows:
            w.writerow([fmt(r.xi), _verdict(r.in_region), *fmt_row(r.J_low, r.J_high,
                        r.price_low[-1], r.price_high[-1]),
                        _verdict(r.low_ordered), _verdict(r.high_ordered),
                        _verdict(r.reward_ordered), _verdict(r.price_ordered)])


def cmd_verify(cfg: RunConfig, out_flag=None, threads: int = 1) -> int:
    spec = cfg.model
    grid, tgrid = cfg.space_grid(), cfg.time_grid()
    rep = verify_assumptions(spec, grid)
    ok = rep.structural_ok
    for c in (rep.concavity, rep.supermodular_m):
        _say(f"{'PASS' if c.holds else 'FAIL'} {c.name} {c.sign} "
             f"range=[{fmt(c.min_value)}, {fmt(c.max_value)}]")
    c = rep.supermodular_xi
    # the xi condition is informational: it only matters for comparative statics
    _say(f"{'PASS' if c.holds else 'INFO'} {c.name} {c.sign} "
         f"range=[{fmt(c.min_value)}, {fmt(c.max_value)}]"
         + ("" if c.holds else f" first violation (x, m, xi, value)={c.first_violation}"))

    out = resolve_out_dir(cfg, out_flag)
    eq_path, fields_path = out / "equilibrium.csv", out / "fields.csv"
    if eq_path.is_file() and fields_path.is_file():
        t, m_star = read_equilibrium_csv(eq_path)
        tf, xf, _, policy = read_fields_csv(fields_path)
        if (t.size != len(tgrid) or not np.allclose(t, tgrid.nodes, rtol=0, atol=1e-12)
                or xf.size != grid.n or not np.array_equal(xf, grid.nodes)):
            raise ConfigError(f"artifacts in {out} were produced on a different grid")
        v = verify_paths(spec, grid, tgrid, m_star, policy, cfg.mc, cfg.bias_const, threads)
        write_mc_csv(out / "mc.csv", v)
        k = v.worst_node
        _say(f"{'PASS' if v.passed else 'FAIL'} monte_carlo n_paths={cfg.mc.n_paths} "
             f"max_z={fmt(v.max_z)} bias_tol={fmt(v.bias_tol)} worst t={fmt(v.t[k])} "
             f"m_mc={fmt(v.m_mc[k])} m_pde={fmt(v.m_pde[k])} se={fmt(v.se[k])}")
        ok = ok and v.passed
    else:
        _say(f"SKIP monte_carlo (no equilibrium artifacts in {out})")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfg-solve", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="paper_baseline",
                        help=f"INI file or builtin name ({', '.join(BUILTIN)})")
    common.add_argument("--init", help="envelope_min, envelope_max or const:<value>")
    common.add_argument("--xi", type=float, help="override the interaction strength")
    common.add_argument("--scheme", choices=["banach", "fictitious", "BANACH", "FICTITIOUS"])
    common.add_argument("--out", help="output directory (else $MFG_SOLVE_OUT, else config)")
    common.add_argument("--threads", type=int, default=1, help="worker cap for sweeps and MC")
    common.add_argument("--seed", type=int, help="override the Monte-Carlo seed")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="compute one equilibrium")
    sub.add_parser("sweep", parents=[common], help="scan xi for multiple equilibria")
    sub.add_parser("verify", parents=[common], help="check model assumptions and MC agreement")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        _say("error: --threads must be >= 1")
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config).with_overrides(
            xi=args.xi, init=args.init, scheme=args.scheme, seed=args.seed)
        return COMMANDS[args.command](cfg, args.out, args.threads)
    except (ConfigError, ValueError) as exc:
        _say(f"error: {exc}")
        return EXIT_CONFIG
    except OSError as exc:
        _say(f"error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
