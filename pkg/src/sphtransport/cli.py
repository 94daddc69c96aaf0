"""Command-line front end: ``run``, ``sweep``, ``gen-points``, ``validate-config``.

Exit status is 0 when every requested run converged and 1 otherwise; a
JSON failure summary is written to stderr and to ``failures.json``.
Configuration errors exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import KEYS, manifest_dict, parse_config
from .errors import ConfigError, TransportError
from .geometry import generate_phyllotaxis, save_point_set
from .io import emit_snapshot, write_report
from .solver import run_simulation

log = logging.getLogger("sphtransport")

SWEEP_COLUMNS = ("N", "dt", "l2_error", "relative_l2_error", "total_iterations", "wall_time")


def _snapshot_sink(manifest, run_dir):
    ext = "csv" if manifest.snapshot_format == "csv" else "vtk"

    def sink(state, ps):
        path = run_dir / f"snapshot_step{state.step_index:06d}.{ext}"
        emit_snapshot(ps, state, manifest.snapshot_format, path)
        log.info("wrote %s (t=%.6g)", path, state.time)

    return sink


def run_manifest(manifest, n=None, write=True):
    """Run one experiment. Returns ``(U, report, run_dir)``.

    With ``n`` given, a phyllotaxis set of that size replaces the
    manifest's point source.
    """
    ps = manifest.point_set(n)
    cfg = manifest.solver_config(len(ps) if n is not None or manifest.points_file is None else None)
    case = manifest.case()
    run_dir = manifest.output_path() / manifest.run_label(n)
    sink = None
    if write:
        run_dir.mkdir(parents=True, exist_ok=True)
        sink = _snapshot_sink(manifest, run_dir) if manifest.snapshot_times else None
    U, report = run_simulation(
        ps, cfg, case, sink=sink, snapshot_times=manifest.snapshot_times,
        eval_set=manifest.evaluation_set(),
    )
    if write:
        write_report(report, run_dir)
    return U, report, run_dir


@dataclass
class SweepTable:
    """Rows of a convergence sweep plus any per-N failures."""

    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.failures

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)


def run_convergence_sweep(manifest, n_list, write=True):
    """Run ``manifest`` on phyllotaxis sets of each size in ``n_list``.

    A failing N is logged and skipped, so the returned table may be
    partial. With ``write`` the table goes to
    ``sweep_<test>_<method>.csv`` in the output directory.
    """
    table = SweepTable()
    for n in n_list:
        t0 = time.perf_counter()
        try:
            _, rep, _ = run_manifest(manifest, n=int(n), write=write)
        except (TransportError, ValueError) as exc:
            log.error("N=%d failed: %s", n, exc)
            table.failures.append({"N": int(n), "error": type(exc).__name__, "message": str(exc)})
            continue
        table.rows.append({
            "N": int(n), "dt": rep.dt, "l2_error": rep.l2_error, "relative_l2_error": rep.relative_l2_error,
            "total_iterations": rep.total_iterations, "wall_time": time.perf_counter() - t0,
        })
        log.info("N=%d l2=%s", n, rep.l2_error)
    if write:
        out = manifest.output_path()
        out.mkdir(parents=True, exist_ok=True)
        name = f"sweep_{manifest.test}_{manifest.method.lower()}.csv"
        with open(out / name, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
            w.writeheader()
            for r in table.rows:
                w.writerow({k: ("%.17g" % v if isinstance(v, float) else v) for k, v in r.items()})
    return table


def _manifest_args(p):
    p.add_argument("-c", "--config", help="key = value configuration file")
    for key in KEYS:
        p.add_argument("--" + key.replace("_", "-"), dest=key, metavar="VALUE")


def _overrides(args):
    return {k: getattr(args, k) for k in KEYS if getattr(args, k, None) is not None}


def _fail(failures, out_dir):
    summary = json.dumps({"failures": failures})
    print(summary, file=sys.stderr)
    try:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "failures.json").write_text(summary + "\n")
    except OSError:
        pass
    return 1


def build_parser():
    p = argparse.ArgumentParser(prog="sphtransport", description="Meshless transport solver on the unit sphere.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    _manifest_args(run)

    sweep = sub.add_parser("sweep", help="run one experiment over several point counts")
    _manifest_args(sweep)
    sweep.add_argument("--n-list", required=True, help="comma-separated point counts, e.g. 400,1600")

    gen = sub.add_parser("gen-points", help="write a phyllotaxis point set")
    gen.add_argument("n", type=int)
    gen.add_argument("output")
    gen.add_argument("--format", default="plain-xyz", choices=("plain-xyz", "plain-lonlat"))

    val = sub.add_parser("validate-config", help="check a configuration and print the resolved manifest")
    _manifest_args(val)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        if args.command == "gen-points":
            if args.n < 4:
                raise ConfigError("need at least 4 points", "n")
            path = save_point_set(generate_phyllotaxis(args.n), args.output, args.format)
            print(path)
            return 0
        manifest = parse_config(args.config, _overrides(args))
        if args.command == "validate-config":
            d = manifest_dict(manifest)
            d["resolved_dt"] = manifest.resolved_dt()
            print(json.dumps(d, indent=1, default=list))
            return 0
        if args.command == "run":
            try:
                _, report, run_dir = run_manifest(manifest)
            except TransportError as exc:
                return _fail([{"error": type(exc).__name__, "message": str(exc)}], manifest.output_path())
            print(report.as_text(), end="")
            print(f"output: {run_dir}")
            return 0
        n_list = [int(s) for s in args.n_list.split(",") if s.strip()]
        manifest = replace(manifest, points_file=None)
        table = run_convergence_sweep(manifest, n_list)
        w = csv.DictWriter(sys.stdout, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for r in table.rows:
            w.writerow(r)
        return 0 if table.ok else _fail(table.failures, manifest.output_path())
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (OSError, TransportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
