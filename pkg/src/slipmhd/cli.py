"""Command-line entry point.

    slipmhd simulate CONFIG          single run: diagnostics.csv, snapshots
    slipmhd converge CONFIG          vanishing-viscosity study and H^{2k+1} probe
    slipmhd corrector-scaling CONFIG exponent table of the wall-layer corrector
    slipmhd verify-spaces CONFIG     wall identities of the parity spaces
    slipmhd fit CSV                  log-log slope of the first two columns

Exit status: 0 ok, 1 unexpected error, 2 bad config, 3 CFL violation,
4 blow-up guard, 5 a study check failed.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from .config import ConfigError, emit_config, load_config
from .fitting import fit_rate
from .harness import (
    EXIT_BLOWUP,
    EXIT_CFL,
    EXIT_CHECK_FAILED,
    EXIT_CONFIG,
    EXIT_ERROR,
    EXIT_OK,
    convergence_study,
    corrector_scaling_study,
    h2kp1_convergence_probe,
    run,
    verify_spaces,
)
from .snapshot import SnapshotError
from .solver import BlowUpError, CFLError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slipmhd", description="Slip-wall MHD solver and vanishing-viscosity studies")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "converge", "corrector-scaling", "verify-spaces"):
        s = sub.add_parser(name)
        s.add_argument("config")
        s.add_argument("--out", help="output directory (overrides output.dir)")
        s.add_argument("--seed", type=int, help="overrides init.seed")
        s.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    f = sub.add_parser("fit")
    f.add_argument("csv", help="CSV whose first two numeric columns are x and y")
    f.add_argument("--out")
    return p


def _write(out: str, name: str, text: str):
    with open(os.path.join(out, name), "w", encoding="utf-8") as fh:
        fh.write(text)


def _fit_csv(path: str) -> int:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    pts = []
    for row in rows:
        try:
            pts.append((float(row[0]), float(row[1])))
        except (ValueError, IndexError):
            continue  # header or blank line
    fit = fit_rate(pts)
    print(f"slope={fit.slope!r} intercept={fit.intercept!r} r2={fit.r2!r} n={fit.n}")
    return EXIT_OK


def _dispatch(args) -> int:
    if args.command == "fit":
        return _fit_csv(args.csv)
    cfg = load_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["init__seed"] = args.seed
    if args.out is not None:
        updates["output__dir"] = args.out
    if updates:
        cfg = cfg.replace(**updates)
    out = cfg["output.dir"]
    os.makedirs(out, exist_ok=True)
    _write(out, "config.txt", emit_config(cfg))

    if args.command == "simulate":
        result = run(cfg, out)
        last = result.diagnostics.rows[-1]
        print(f"t={last[0]:g} E_kin={last[1]:.6e} E_mag={last[2]:.6e}; {len(result.snapshots)} snapshots")
        return EXIT_OK

    if args.command == "converge":
        report = convergence_study(cfg, jobs=args.jobs)
        probe = h2kp1_convergence_probe(cfg, report)
        _write(out, "errors.csv", report.to_csv())
        _write(out, "fits.csv", report.fits_csv())
        _write(out, "reference_diagnostics.csv", report.reference.to_csv())
        for n, d in enumerate(report.diagnostics):
            _write(out, f"member_{n:02d}_diagnostics.csv", d.to_csv())
        _write(out, "probe.csv", probe.to_csv())
        text = report.summary() + probe.summary()
        _write(out, "summary.txt", text)
        print(text, end="")
        if report.partial:
            return EXIT_BLOWUP
        s = 2 * cfg["study.k"]
        ok = s not in report.norms or report.decrease_factor(s) > 5
        return EXIT_OK if ok and probe.strictly_decreasing else EXIT_CHECK_FAILED

    if args.command == "corrector-scaling":
        report = corrector_scaling_study(cfg)
        _write(out, "exponents.csv", report.to_csv())
        _write(out, "norms.csv", report.norms_csv())
        _write(out, "summary.txt", report.summary())
        print(report.summary(), end="")
        return EXIT_OK if report.passed else EXIT_CHECK_FAILED

    if args.command == "verify-spaces":
        report = verify_spaces(cfg)
        _write(out, "identities.csv", report.to_csv())
        _write(out, "summary.txt", report.summary())
        print(report.summary(), end="")
        return EXIT_OK if report.passed else EXIT_CHECK_FAILED
    raise AssertionError(args.command)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CFLError as exc:
        print(f"CFL violation: {exc}", file=sys.stderr)
        return EXIT_CFL
    except BlowUpError as exc:
        print(f"blow-up guard: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (OSError, SnapshotError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
