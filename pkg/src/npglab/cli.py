"""``npglab`` command line: run, sweep, plot and verify subcommands.

Exit codes: 0 success, 1 error (bad input, failed check or failed sweep cell),
2 run truncated by the logit-overflow guard.
"""
import argparse
import csv
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from npglab import verify as vh
from npglab.config import ConfigError, build_problem, from_dict, load_config
from npglab.plot import CsvFormatError, domination_violations, label_for, read_run_csv, render_svg
from npglab.solver import run

EXIT_OK, EXIT_ERROR, EXIT_OVERFLOW = 0, 1, 2
AGGREGATE_HEADER = ["cell", "axis", "value", "status", "iterations", "final_delta",
                    "min_delta", "final_bound", "floor"]


def execute(cfg, verify=False):
    prob, schedule = build_problem(cfg)
    result = run(prob.mdp, prob.features, schedule, cfg.oracle, cfg.T, prob.rho,
                 np.random.default_rng(cfg.seed), seed=cfg.seed, nominal=cfg.nominal,
                 verify=verify, logit_cap=cfg.logit_cap, problem=prob)
    return prob, schedule, result


def _status(result):
    if result.overflow:
        return "overflow"
    return "converged" if result.converged else "completed"


def summary_line(result):
    last = result.records[-1]
    return (f"status={_status(result)} iterations={last.t} final_delta={last.delta:.6e} "
            f"bound={last.bound:.6e} floor={result.floor:.6e}")


def cmd_run(cfg, out=None):
    path = out or cfg.output["csv"]
    if not path:
        print("error: no output path (use --out or output.csv)", file=sys.stderr)
        return EXIT_ERROR
    try:
        _, _, result = execute(cfg)
    except (ConfigError, ValueError, ArithmeticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    result.to_csv(path)
    print(summary_line(result))
    return EXIT_OVERFLOW if result.overflow else EXIT_OK


def sweep_cells(cfg):
    """One config per sweep value."""
    axis, values = cfg.sweep["axis"], cfg.sweep["values"]
    cells = []
    for v in values:
        doc = cfg.to_dict()
        doc["sweep"] = None
        if axis == "seed":
            doc["seed"] = v
        elif axis == "eps_stat":
            doc["oracle"]["eps_stat"] = v
            if doc["oracle"]["mode"] == "exact" and v > 0:
                doc["oracle"]["mode"] = "noisy"
        else:
            doc["schedule"]["kind"] = v
        cells.append(doc)
    return cells


def _run_cell(doc, path):
    try:
        cfg = from_dict(doc)
        _, _, result = execute(cfg)
    except (ConfigError, ValueError, ArithmeticError) as e:
        return {"status": "error", "message": str(e)}
    result.to_csv(path)
    deltas = result.deltas
    return {"status": _status(result), "iterations": result.records[-1].t,
            "final_delta": float(deltas[-1]), "min_delta": float(deltas.min()),
            "final_bound": result.records[-1].bound, "floor": result.floor}


def thread_cap():
    raw = os.environ.get("NPGLAB_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    n = int(raw)
    if n < 1:
        raise ValueError("NPGLAB_THREADS must be a positive integer")
    return n


def cmd_sweep(cfg, out=None):
    out_dir = out or cfg.output["dir"]
    if not out_dir:
        print("error: no output directory (use --out or output.dir)", file=sys.stderr)
        return EXIT_ERROR
    if cfg.sweep is None:
        print("error: config has no sweep section", file=sys.stderr)
        return EXIT_ERROR
    try:
        workers = min(thread_cap(), len(cfg.sweep["values"]))
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    os.makedirs(out_dir, exist_ok=True)
    cells = sweep_cells(cfg)
    paths = [os.path.join(out_dir, f"cell_{i:03d}.csv") for i in range(len(cells))]
    if workers == 1:
        results = [_run_cell(d, p) for d, p in zip(cells, paths)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, cells, paths))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_HEADER)
    failed = 0
    for i, (value, res) in enumerate(zip(cfg.sweep["values"], results)):
        if res["status"] == "error":
            failed += 1
            print(f"cell {i} ({cfg.sweep['axis']}={value}) failed: {res['message']}", file=sys.stderr)
            w.writerow([i, cfg.sweep["axis"], value, "error", "", "", "", "", ""])
            continue
        w.writerow([i, cfg.sweep["axis"], value, res["status"], res["iterations"]]
                   + [f"{res[k]:.17g}" for k in ("final_delta", "min_delta", "final_bound", "floor")])
    with open(os.path.join(out_dir, "aggregate.csv"), "w", newline="") as f:
        f.write(buf.getvalue())
    print(f"{len(cells)} cells, {failed} failed, aggregate at {os.path.join(out_dir, 'aggregate.csv')}")
    return EXIT_ERROR if failed else EXIT_OK


def cmd_plot(paths, out):
    if not paths:
        print("error: no CSV files given", file=sys.stderr)
        return EXIT_ERROR
    if not out:
        print("error: --out is required", file=sys.stderr)
        return EXIT_ERROR
    series = []
    try:
        for p in paths:
            series.append((label_for(p), read_run_csv(p)))
    except (OSError, CsvFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    for (label, rows), p in zip(series, paths):
        bad = domination_violations(rows)
        if bad:
            print(f"{p}: delta exceeds bound at data rows {bad[:10]}")
        else:
            print(f"{p}: delta <= bound on all {len(rows)} rows")
    svg = render_svg(series)
    with open(out, "w", newline="") as f:
        f.write(svg)
    return EXIT_OK


def cmd_verify(cfg):
    try:
        prob, schedule, result = execute(cfg, verify=True)
    except (ConfigError, ValueError, ArithmeticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    fm = prob.features
    tabular = fm.dim == fm.phi.shape[0] and np.array_equal(fm.phi, np.eye(fm.dim))
    rng = np.random.default_rng(cfg.seed)
    checks = [vh.perf_diff_check(prob.mdp, rng)]
    checks += vh.run_checks(result, tabular, cfg.oracle.mode == "exact", schedule, prob.nu_mu)
    checks.append(vh.recursion_check(rng))
    print(vh.format_table(checks))
    print(summary_line(result))
    failed = [c.name for c in checks if c.asserted and not c.passed]
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1; exit 2 is reserved for overflow truncation
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_ERROR)


def build_parser():
    p = _Parser(prog="npglab", description="Natural policy gradient experiments on finite MDPs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (("run", "run one experiment and write its CSV"),
                        ("sweep", "run every cell of the config's sweep section"),
                        ("verify", "run the verification harness and print a check table")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="experiment config (JSON)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        if name != "verify":
            sp.add_argument("--out", help="output CSV (run) or directory (sweep)")
    sp = sub.add_parser("plot", help="render run CSVs as an SVG")
    sp.add_argument("csv", nargs="+", help="CSV files written by 'run'")
    sp.add_argument("--out", required=True, help="output SVG path")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "plot":
        return cmd_plot(args.csv, args.out)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed: must be a nonnegative integer")
            cfg = cfg.replace(seed=args.seed)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    if args.command == "run":
        return cmd_run(cfg, args.out)
    if args.command == "sweep":
        return cmd_sweep(cfg, args.out)
    return cmd_verify(cfg)


if __name__ == "__main__":
    sys.exit(main())
