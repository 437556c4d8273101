"""Command-line entry point: ``powerenhance {test-fp,test-csi,simulate,rolling}``."""
import argparse
import configparser
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

from . import __version__
from .csi import CsiConfig, power_enhanced_csi, write_pairs_csv
from .errors import ConfigError, PowerEnhanceError
from .fileio import atomic_open
from .montecarlo import (
    CSI_ALTERNATIVES,
    CSI_METHODS,
    FP_ALTERNATIVES,
    FP_METHODS,
    CsiDgpSpec,
    FpDgpSpec,
    Scenario,
    SizePowerRow,
    aggregate,
    simulate,
)
from .panel import LAYOUTS, MISSING_POLICIES, align, load_factor_csv, load_panel_csv, read_table_csv
from .quad_tests import C_METHODS, FpConfig, power_enhanced_fp
from .rolling import rolling_fp, write_rolling_csv
from .sparse_cov import DEFAULT_GRID, RULES

log = logging.getLogger("powerenhance")


# --------------------------------------------------------------------------
# argument helpers
# --------------------------------------------------------------------------

def parse_grid(text):
    """'lo,hi,step' -> (lo, hi, step)."""
    parts = [p for p in text.replace(":", ",").split(",") if p.strip()]
    if len(parts) != 3:
        raise ConfigError(f"C grid must be 'min,max,step', got {text!r}")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"C grid must be numeric, got {text!r}") from None
    if step <= 0 or lo < 0 or hi < lo:
        raise ConfigError(f"C grid needs 0 <= min <= max and step > 0, got {text!r}")
    return lo, hi, step


def _grid_text(grid):
    return ",".join(f"{x:g}" for x in grid)


def _level(text):
    q = float(text)
    if not 0 < q < 1:
        raise argparse.ArgumentTypeError(f"level must be in (0, 1), got {text}")
    return q


def _positive_int(text):
    k = int(text)
    if k < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return k


def _fp_config(args):
    return FpConfig(
        rule=args.rule,
        c_grid=parse_grid(args.c_grid),
        c_method=args.c_method,
        delta_override=args.delta_override,
    )


def _verdicts(report, level):
    pivot = "J_wald" if report.method == "fp" else "J1"
    yes = {True: "reject", False: "do not reject"}
    return (
        f"at level {level:g}: {pivot} -> {yes[report.p_value_pivotal < level]}, "
        f"PE -> {yes[report.p_value < level]}\n"
    )


def _write_json(report, level, path):
    d = report.to_dict()
    d["level"] = level
    d["reject_pivotal"] = report.p_value_pivotal < level
    d["reject_pe"] = report.p_value < level
    with atomic_open(path) as fh:
        fh.write(json.dumps(d, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_test_fp(args, out):
    returns = load_panel_csv(args.returns, args.layout, args.missing_policy)
    factors = load_factor_csv(args.factors, args.factor_layout)
    if returns.dropped_count:
        log.warning("dropped %d incomplete units", returns.dropped_count)
    returns, factors = align(returns, factors)
    report = power_enhanced_fp(returns, factors, _fp_config(args))
    out.write(report.to_text())
    out.write(_verdicts(report, args.level))
    if args.json_out:
        _write_json(report, args.level, args.json_out)
    return report


def _align_units(y, x):
    if list(x.unit_labels) == list(y.unit_labels):
        return x
    pos = {u: k for k, u in enumerate(x.unit_labels)}
    missing = [u for u in y.unit_labels if u not in pos]
    if missing:
        raise ConfigError(f"regressor panel lacks unit {missing[0]!r}")
    return x.select_units([pos[u] for u in y.unit_labels])


def cmd_test_csi(args, out):
    y = load_panel_csv(args.y, args.layout, args.missing_policy)
    xs = []
    for path in args.x:
        x = _align_units(y, load_panel_csv(path, args.layout, "reject"))
        y, x = align(y, x)
        xs.append(x)
    xs = [xi if list(xi.time_labels) == list(y.time_labels) else xi.select_times(y.time_labels) for xi in xs]
    report = power_enhanced_csi(y, xs, CsiConfig(delta_override=args.delta_override))
    out.write(report.to_text())
    out.write(_verdicts(report, args.level))
    if args.json_out:
        _write_json(report, args.level, args.json_out)
    if args.pairs_out:
        write_pairs_csv(report, args.pairs_out)
    return report


SIM_KEYS = {
    "app", "n", "t", "reps", "seed", "alternative", "methods", "rule",
    "c_grid", "c_method", "level", "jobs", "ha1_count",
}


def read_sim_config(path):
    """Flat ``key = value`` file; '#' starts a comment. Keys are case-insensitive."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such config file: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",))
    try:
        cp.read_string("[run]\n" + path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    raw = dict(cp["run"])
    unknown = sorted(set(raw) - SIM_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}; allowed: {', '.join(sorted(SIM_KEYS))}")
    app = raw.get("app", "").strip().lower()
    if app not in ("fp", "csi"):
        raise ConfigError(f"{path}: 'app' must be fp or csi")
    all_alts, all_methods = (FP_ALTERNATIVES, FP_METHODS) if app == "fp" else (CSI_ALTERNATIVES, CSI_METHODS)

    def listing(key, allowed):
        items = [s.strip() for s in raw.get(key, ",".join(allowed)).split(",") if s.strip()]
        bad = [s for s in items if s not in allowed]
        if bad or not items:
            raise ConfigError(f"{path}: {key} must be drawn from {', '.join(allowed)}, got {raw.get(key)!r}")
        return items

    def integer(key, default):
        try:
            return int(raw.get(key, default))
        except ValueError:
            raise ConfigError(f"{path}: {key} must be an integer, got {raw[key]!r}") from None

    cfg = {
        "app": app,
        "n": integer("n", 500 if app == "fp" else 200),
        "t": integer("t", 300 if app == "fp" else 100),
        "reps": integer("reps", 500),
        "seed": integer("seed", 0),
        "jobs": integer("jobs", 1),
        "alternatives": listing("alternative", all_alts),
        "methods": listing("methods", all_methods),
        "rule": raw.get("rule", "soft").strip(),
        "c_grid": parse_grid(raw.get("c_grid", _grid_text(DEFAULT_GRID))),
        "c_method": raw.get("c_method", "cv").strip(),
        "ha1_count": raw.get("ha1_count", "round").strip(),
    }
    try:
        cfg["level"] = float(raw.get("level", 0.05))
    except ValueError:
        raise ConfigError(f"{path}: level must be a number") from None
    if not 0 < cfg["level"] < 1:
        raise ConfigError(f"{path}: level must be in (0, 1)")
    if cfg["reps"] < 1 or cfg["jobs"] < 1:
        raise ConfigError(f"{path}: reps and jobs must be positive")
    if cfg["rule"] not in RULES:
        raise ConfigError(f"{path}: rule must be one of {', '.join(RULES)}")
    if cfg["c_method"] not in C_METHODS:
        raise ConfigError(f"{path}: c_method must be one of {', '.join(C_METHODS)}")
    return cfg


def _scenarios(cfg):
    out = []
    for alt in cfg["alternatives"]:
        if cfg["app"] == "fp":
            spec = FpDgpSpec(cfg["n"], cfg["t"], alt, ha1_count=cfg["ha1_count"])
            fpc = FpConfig(rule=cfg["rule"], c_grid=cfg["c_grid"], c_method=cfg["c_method"])
            out.append(Scenario(spec, fpc))
        else:
            out.append(Scenario(CsiDgpSpec(cfg["n"], cfg["t"], alt)))
    for sc in out:
        sc.spec.validate()
    return out


def provenance_lines(cfg):
    lines = [
        f"powerenhance {__version__} simulate",
        f"app={cfg['app']} N={cfg['n']} T={cfg['t']} reps={cfg['reps']} seed={cfg['seed']} level={cfg['level']:g}",
    ]
    if cfg["app"] == "fp":
        lines.append(
            f"rule={cfg['rule']} c_grid={_grid_text(cfg['c_grid'])} c_method={cfg['c_method']} "
            f"ha1_count={cfg['ha1_count']}"
        )
    return lines


def run_simulation(cfg):
    rows = []
    for sc in _scenarios(cfg):
        records = simulate(sc, cfg["reps"], cfg["seed"], cfg["jobs"])
        rows += aggregate(sc, records, cfg["methods"], cfg["level"], cfg["seed"])
    return rows


def format_table(rows):
    head = SizePowerRow.CSV_COLUMNS
    body = [r.csv_row() for r in rows]
    widths = [max(len(h), *(len(b[k]) for b in body)) for k, h in enumerate(head)] if body else [len(h) for h in head]
    fmt = "  ".join(f"{{:>{w}}}" for w in widths)
    return "\n".join([fmt.format(*head)] + [fmt.format(*b) for b in body]) + "\n"


def write_sim_csv(rows, cfg, path):
    with atomic_open(path) as fh:
        for line in provenance_lines(cfg):
            fh.write(f"# {line}\n")
        failed = sum(r.n_failed for r in rows if r.method == rows[0].method) if rows else 0
        fh.write(f"# failed_replications={failed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SizePowerRow.CSV_COLUMNS)
        for r in rows:
            w.writerow(r.csv_row())


def cmd_simulate(args, out):
    cfg = read_sim_config(args.config)
    for key in ("seed", "reps", "jobs"):
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
    rows = run_simulation(cfg)
    for line in provenance_lines(cfg):
        out.write(f"# {line}\n")
    out.write(format_table(rows))
    if args.out:
        write_sim_csv(rows, cfg, args.out)
    return rows


def cmd_rolling(args, out):
    raw = read_table_csv(args.returns, args.layout)
    factors = load_factor_csv(args.factors, args.factor_layout)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        result = rolling_fp(raw, factors, args.window, _fp_config(args), args.level)
    small = [w for w in caught if "<= T=" in str(w.message)]
    if small:
        log.warning("%d of %d windows have N <= T (first: %s)", len(small), len(result.records), small[0].message)
    out.write(result.summary_text())
    if args.out:
        write_rolling_csv(result, args.out)
    return result


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_common(p, fp=True):
    p.add_argument("--layout", choices=LAYOUTS, default="units-as-rows", help="layout of the panel CSV(s)")
    p.add_argument("--level", type=_level, default=0.05, help="significance level (default 0.05)")
    p.add_argument("--delta-override", type=float, default=None, help="replace the screening threshold (expert use)")
    if fp:
        p.add_argument("--factor-layout", choices=LAYOUTS, default="units-as-columns")
        p.add_argument("--rule", choices=RULES, default="soft", help="thresholding rule (default soft)")
        p.add_argument("--c-grid", default=_grid_text(DEFAULT_GRID), help="C grid as min,max,step")
        p.add_argument("--c-method", choices=C_METHODS, default="cv", help="how C is picked from the grid")


def build_parser():
    ap = argparse.ArgumentParser(prog="powerenhance", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test-fp", help="test that all pricing errors are zero")
    p.add_argument("returns")
    p.add_argument("factors")
    _add_common(p)
    p.add_argument("--missing-policy", choices=MISSING_POLICIES, default="reject")
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_test_fp)

    p = sub.add_parser("test-csi", help="test cross-sectional independence of panel errors")
    p.add_argument("y")
    p.add_argument("x", nargs="+", help="one CSV per regressor")
    _add_common(p, fp=False)
    p.add_argument("--missing-policy", choices=MISSING_POLICIES, default="reject")
    p.add_argument("--json-out")
    p.add_argument("--pairs-out", help="CSV of selected pairs")
    p.set_defaults(func=cmd_test_csi)

    p = sub.add_parser("simulate", help="Monte Carlo size/power table from a config file")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="override the config's master seed")
    p.add_argument("--reps", type=_positive_int, default=None)
    p.add_argument("--jobs", type=_positive_int, default=None, help="worker processes")
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rolling", help="alpha tests on rolling windows")
    p.add_argument("returns")
    p.add_argument("factors")
    _add_common(p)
    p.add_argument("--window", type=_positive_int, default=60)
    p.add_argument("--out", help="per-window CSV output path")
    p.set_defaults(func=cmd_rolling)
    return ap


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        args.func(args, out)
    except (PowerEnhanceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
