"""Command-line interface.

Every command writes a reproducibility header of ``# key = value`` lines
(package version, command, seed and the fully resolved configuration)
followed by CSV or JSON data. Exit codes: 0 success or accept, 1 reject,
2 usage error, 3 library or numeric error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass
from importlib.metadata import PackageNotFoundError, version
from typing import NamedTuple

import numpy as np

from . import bands, bandwidth, harness, processes
from .errors import EmptyEstimateError, IngestError, InvalidInputError, TsBandsError
from .estimators import SampleSet
from .kernels import get_kernel

log = logging.getLogger(__name__)

EXIT_OK, EXIT_REJECT, EXIT_USAGE, EXIT_ERROR = 0, 1, 2, 3
DEFAULT_COVERAGE = 0.94


def package_version():
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


# -- data ingestion -----------------------------------------------------------


@dataclass(frozen=True)
class PriceSeries:
    prices: np.ndarray
    source: str

    def log_returns(self):
        return np.diff(np.log(self.prices))


def _data_lines(text):
    """(line number, line) pairs, skipping comments and blank lines."""
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s and not s.startswith("#"):
            yield no, line


def read_column(path, column=0):
    """Read one numeric column of a CSV file with a header row.

    ``column`` is a header name or a zero-based index. Returns the values
    and their file line numbers.
    """
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc.strerror}") from None
    lines = list(_data_lines(text))
    if not lines:
        raise IngestError(f"{path}: no header row")
    rows = list(csv.reader([ln for _, ln in lines]))
    header = [h.strip() for h in rows[0]]
    if isinstance(column, str) and not column.lstrip("-").isdigit():
        if column not in header:
            raise IngestError(f"{path}: no column named {column!r} (have {header})")
        col = header.index(column)
    else:
        col = int(column)
        if not 0 <= col < len(header):
            raise IngestError(f"{path}: column index {col} out of range")
    values, numbers = [], []
    for (no, _), row in zip(lines[1:], rows[1:]):
        cell = row[col].strip() if col < len(row) else ""
        if not cell:
            raise IngestError(f"{path}: missing value on line {no}")
        try:
            v = float(cell)
        except ValueError:
            raise IngestError(f"{path}: cannot parse {cell!r} on line {no}") from None
        if not math.isfinite(v):
            raise IngestError(f"{path}: non-finite value on line {no}")
        values.append(v)
        numbers.append(no)
    return np.array(values), numbers


def ingest_prices(path, column=0):
    """Load a positive price column; rows are reported by file line number."""
    values, numbers = read_column(path, column)
    bad = np.flatnonzero(values <= 0)
    if bad.size:
        i = bad[0]
        raise IngestError(f"{path}: nonpositive price {values[i]!r} on line {numbers[i]}")
    if values.size < 3:
        raise IngestError(f"{path}: need at least 3 prices, got {values.size}")
    return PriceSeries(values, str(path))


class Embedding(NamedTuple):
    data: SampleSet
    retained: int
    total: int

    @property
    def retained_fraction(self):
        return self.retained / self.total


def lag_embed(returns, t1, t2):
    """Pairs ``(Y_{i-1}, Y_i)`` whose first coordinate lies in ``[t1, t2]``."""
    y = np.asarray(returns, dtype=float)
    if y.size < 2:
        raise InvalidInputError("need at least 2 returns to form a lag pair")
    x, resp = y[:-1], y[1:]
    keep = (x >= t1) & (x <= t2)
    if not keep.any():
        raise EmptyEstimateError(f"no lag pair has X in [{t1}, {t2}]")
    if keep.sum() < 2:
        raise EmptyEstimateError(f"only one lag pair has X in [{t1}, {t2}]")
    return Embedding(SampleSet(x[keep], resp[keep], (t1, t2)), int(keep.sum()), x.size)


def quantile_interval(x, coverage=DEFAULT_COVERAGE):
    """Symmetric interval around 0 holding about ``coverage`` of ``x``."""
    t = float(np.quantile(np.abs(np.asarray(x, dtype=float)), coverage))
    return -t, t


# -- output -------------------------------------------------------------------


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [_jsonable(u) for u in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(u) for k, u in v.items()}
    return v


def _header_value(v):
    v = _jsonable(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(header, columns, fmt):
    """Header plus a table given as an ordered dict of equal-length columns."""
    if fmt == "json":
        doc = {"header": _jsonable(header), "columns": _jsonable(columns)}
        return json.dumps(doc, indent=1, sort_keys=False) + "\n"
    buf = io.StringIO()
    for k, v in header.items():
        buf.write(f"# {k} = {_header_value(v)}\n")
    w = csv.writer(buf, lineterminator="\n")
    names = list(columns)
    w.writerow(names)
    cols = [_jsonable(columns[k]) for k in names]
    for row in zip(*cols):
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def parse_document(text):
    """Inverse of :func:`render` for either format; returns (header, columns)."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        doc = json.loads(stripped)
        return doc["header"], {k: list(v) for k, v in doc["columns"].items()}
    header = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, val = line[1:].partition("=")
            if sep:
                header[key.strip()] = val.strip()
        elif line.strip():
            body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        raise IngestError("document has no table")
    names = rows[0]
    columns = {n: [r[i] for r in rows[1:]] for i, n in enumerate(names)}
    return header, columns


def band_columns(band):
    return {"x": band.x, "center": band.center, "lower": band.lower,
            "upper": band.upper, "floored": band.floored.astype(int)}


def band_header(band):
    return {"target": band.target, "level": band.level, "cutoff": band.cutoff,
            "cutoff_kind": band.cutoff_kind, "m": band.grid.m,
            "spacing_rule": band.grid.spacing_rule, **band.meta}


def _num(v):
    return float(v) if not isinstance(v, str) else float(v.strip() or "nan")


def band_from_document(text):
    """Rebuild a band from :func:`render` output of a band command."""
    header, cols = parse_document(text)
    try:
        x = np.array([_num(v) for v in cols["x"]])
        center = np.array([_num(v) for v in cols["center"]])
        lower = np.array([_num(v) for v in cols["lower"]])
        upper = np.array([_num(v) for v in cols["upper"]])
        floored = np.array([int(_num(v)) for v in cols["floored"]], dtype=bool)
    except (KeyError, ValueError) as exc:
        raise IngestError(f"not a band document: {exc}") from None
    grid = bands.EvaluationGrid(x, str(header.get("spacing_rule", "file")))
    return bands.ConfidenceBand(grid, center, lower, upper, float(header.get("level", "nan")),
                                float(header.get("cutoff", "nan")),
                                str(header.get("cutoff_kind", "")),
                                str(header.get("target", "")), floored, dict(header))


# -- argument handling ----------------------------------------------------------


PROCESSES = {
    "model1": processes.model1,
    "model2": processes.model2,
    "ar_arch": processes.ar_arch,
}

CUTOFFS = {"finite": "finite_sample", "asymptotic": "asymptotic"}


def _add_common(p):
    p.add_argument("--seed", type=int, help="random seed (default 0; coverage uses "
                                             f"{harness.DEFAULT_MASTER_SEED})")
    p.add_argument("--out", default="-", help="output file ('-' for stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _add_input(p):
    p.add_argument("--input", required=True, help="CSV file with a header row")
    p.add_argument("--column", default="0", help="column name or zero-based index")
    p.add_argument("--prices", action="store_true",
                   help="column holds prices; log returns are taken first")
    p.add_argument("--interval", nargs=2, type=float, metavar=("T1", "T2"),
                   help="covariate interval (default: symmetric ~94%% quantile interval)")
    p.add_argument("--kernel", default="epanechnikov")


def _add_band(p):
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--cutoff", choices=tuple(CUTOFFS), default="finite")
    p.add_argument("--grid", default="k=20", help="'k=<int>' even grid or '2k0b' kernel-support spacing")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--bandwidth", type=float)
    g.add_argument("--auto", action="store_true", help="select the bandwidth by IRSC")
    p.add_argument("--aux-bandwidth", type=float,
                   help="bandwidth of the nuisance fit (default: the band bandwidth)")


def build_parser():
    parser = argparse.ArgumentParser(prog="tsbands",
                                     description="Simultaneous confidence bands for "
                                                 "nonparametric time series regression.")
    parser.add_argument("--version", action="version", version=package_version())
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="simulate a process")
    _add_common(p)
    p.add_argument("--process", choices=tuple(PROCESSES), default="model1")
    p.add_argument("--spec", help="process description file (key = value lines)")
    p.add_argument("--n", type=int, default=2500)
    p.add_argument("--force", action="store_true", help="skip the stability check")

    p = sub.add_parser("select-bw", help="IRSC bandwidth table")
    _add_common(p)
    _add_input(p)
    p.add_argument("--target", choices=("mean", "variance"), default="mean")
    p.add_argument("--candidates", nargs="+", type=float)

    for name, target in (("band-mean", "mean"), ("band-var", "variance")):
        p = sub.add_parser(name, help=f"simultaneous band for the {target}")
        _add_common(p)
        _add_input(p)
        _add_band(p)

    p = sub.add_parser("validate", help="check a polynomial against a saved band")
    _add_common(p)
    p.add_argument("--band", required=True, help="band file written by band-mean/band-var")
    p.add_argument("--coef", nargs="+", type=float, required=True,
                   help="polynomial coefficients, constant term first")

    p = sub.add_parser("coverage", help="Monte Carlo coverage experiment")
    _add_common(p)
    p.add_argument("--table", choices=("1", "2"), default="1",
                   help="1: mean band on model1, 2: variance band on model2")
    p.add_argument("--replications", type=int, default=2000)
    p.add_argument("--n", type=int, default=2500)
    p.add_argument("--bandwidths", nargs="+", type=float)
    p.add_argument("--grid", default="k=20")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--spec", help="process description file replacing the table's model")
    p.add_argument("--true-sigma", action="store_true",
                   help="scale band widths with the true sigma or variance (diagnostic)")
    p.add_argument("--aux-bandwidth", type=float)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("fit", help="bandwidth selection, curves and parametric checks")
    _add_common(p)
    _add_input(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--cutoff", choices=tuple(CUTOFFS), default="finite")
    p.add_argument("--grid", default="k=20")
    p.add_argument("--method", choices=("linear", "constant"), default="linear")
    p.add_argument("--final", choices=("flat", "argmin"), default="flat",
                   help="fit at the flat-IRSC bandwidths (default) or the IRSC minimisers")
    p.add_argument("--emit", choices=("curves", "bands"), default="bands",
                   help="table to write: fitted curves or both bands with candidates")
    return parser


def _grid_arg(text):
    return text.replace(" ", "")


def _load_sample(args):
    if args.prices:
        returns = ingest_prices(args.input, args.column).log_returns()
    else:
        returns, _ = read_column(args.input, args.column)
    if args.interval:
        t1, t2 = args.interval
    else:
        t1, t2 = quantile_interval(returns[:-1])
    emb = lag_embed(returns, t1, t2)
    info = {"input": args.input, "column": args.column, "prices": args.prices,
            "interval": [t1, t2], "pairs": emb.total, "retained": emb.retained,
            "retained_fraction": emb.retained_fraction, "kernel": args.kernel}
    return emb.data, info


def _header(args, extra):
    h = {"tsbands": package_version(), "command": args.command, "seed": args.seed}
    h.update(extra)
    return h


def _emit(args, text, out):
    if args.out == "-":
        out.write(text)
    else:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)


# -- commands -----------------------------------------------------------------


def cmd_gen(args, out):
    if args.spec:
        with open(args.spec) as fh:
            spec = processes.spec_from_text(fh.read()).with_seed(args.seed)
    else:
        spec = PROCESSES[args.process](seed=args.seed)
    values, _ = processes.generate(spec, args.n, force=args.force)
    header = _header(args, {"n": args.n, "process": spec_to_dict(spec)})
    _emit(args, render(header, {"t": np.arange(args.n), "y": values}, args.format), out)
    return EXIT_OK


def spec_to_dict(spec):
    d = {}
    for line in processes.spec_to_text(spec).splitlines():
        k, _, v = line.partition("=")
        d[k.strip()] = v.strip()
    return d


def _selection_config(data, kernel, candidates):
    cfg = bandwidth.default_config(data, kernel)
    if candidates:
        cfg = bandwidth.RSCConfig(sorted(candidates), cfg.integration_grid,
                                  cfg.min_effective_points)
    return cfg


def cmd_select_bw(args, out):
    data, info = _load_sample(args)
    kernel = get_kernel(args.kernel)
    if args.target == "variance":
        pipe = bandwidth.fit_pipeline(data, kernel,
                                      config_sigma=_selection_config(data, kernel,
                                                                     args.candidates))
        sel = pipe.sigma_selection
        info["b_star"] = pipe.b_star
    else:
        sel = bandwidth.select_bandwidth(data, kernel,
                                         _selection_config(data, kernel, args.candidates))
    best = min(v for _, v in sel.table if math.isfinite(v))
    info.update(target=args.target, selected=sel.b_star, flat_b=sel.flat_b)
    cols = {"b": [b for b, _ in sel.table], "irsc": [v for _, v in sel.table],
            "relative_irsc": [v / best for _, v in sel.table]}
    _emit(args, render(_header(args, info), cols, args.format), out)
    return EXIT_OK


def _build_band(args, data, kernel, target):
    cutoff = CUTOFFS[args.cutoff]
    grid = _grid_arg(args.grid)
    if args.auto:
        pipe = bandwidth.fit_pipeline(data, kernel)
        bw = pipe.b_star if target == "mean" else pipe.h_star
        aux = pipe.h_star if target == "mean" else pipe.b_star
    else:
        bw = args.bandwidth
        aux = args.aux_bandwidth
    if target == "mean":
        return bands.scb_mean(data, kernel, bw, args.alpha, cutoff, grid, h=aux)
    return bands.scb_variance(data, kernel, bw, args.alpha, cutoff, grid, b=aux)


def cmd_band(args, out):
    target = "mean" if args.command == "band-mean" else "variance"
    data, info = _load_sample(args)
    band = _build_band(args, data, get_kernel(args.kernel), target)
    info.update(band_header(band))
    info["auto"] = args.auto
    _emit(args, render(_header(args, info), band_columns(band), args.format), out)
    return EXIT_OK


def cmd_validate(args, out):
    try:
        with open(args.band) as fh:
            band = band_from_document(fh.read())
    except OSError as exc:
        raise IngestError(f"cannot read {args.band}: {exc.strerror}") from None
    res = bands.validate_parametric(band, bands.polynomial(args.coef))
    info = {"band": args.band, "coef": list(args.coef), "verdict": res.verdict,
            "violations": len(res.violations)}
    cols = {"x": [v.x for v in res.violations], "value": [v.value for v in res.violations],
            "lower": [v.lower for v in res.violations],
            "upper": [v.upper for v in res.violations]}
    _emit(args, render(_header(args, info), cols, args.format), out)
    print(res.verdict, file=sys.stderr)
    for v in res.violations:
        print(f"  x={v.x:.6g}: {v.value:.6g} outside [{v.lower:.6g}, {v.upper:.6g}]",
              file=sys.stderr)
    return EXIT_OK if res.accepted else EXIT_REJECT


def cmd_coverage(args, out):
    make = harness.table1_config if args.table == "1" else harness.table2_config
    opts = dict(replications=args.replications, n=args.n, master_seed=args.seed,
                grid=_grid_arg(args.grid), level=args.level, true_sigma=args.true_sigma,
                aux_bandwidth=args.aux_bandwidth)
    if args.bandwidths:
        opts["bandwidths"] = tuple(args.bandwidths)
    if args.spec:
        with open(args.spec) as fh:
            opts["process"] = processes.spec_from_text(fh.read())
    cfg = make(**opts)
    report = harness.run_coverage(cfg, workers=args.workers)
    desc = cfg.describe()
    info = {"table": args.table, **{k: v for k, v in desc.items() if k != "master_seed"}}
    bws = cfg.bandwidths
    cols = {"bandwidth": list(bws)}
    for kind in cfg.cutoff_kinds:
        cols[f"cutoff_{kind}"] = [report.cell(b, kind).cutoff for b in bws]
        cols[f"coverage_{kind}"] = [report.cell(b, kind).coverage for b in bws]
        cols[f"se_{kind}"] = [report.cell(b, kind).mc_standard_error for b in bws]
    cols["failures"] = [report.cell(b, cfg.cutoff_kinds[0]).failures for b in bws]
    _emit(args, render(_header(args, info), cols, args.format), out)
    return EXIT_OK


def least_squares_candidates(data):
    """Linear mean, quadratic and constant variance fitted on pairs with X in T.

    The variance candidates regress squared residuals of the linear mean
    on ``1, x, x^2`` and on ``1`` respectively.
    """
    inside = data.in_interval()
    x, y = data.x[inside], data.y[inside]
    lin = np.polynomial.polynomial.polyfit(x, y, 1)
    r2 = (y - np.polynomial.polynomial.polyval(x, lin)) ** 2
    quad = np.polynomial.polynomial.polyfit(x, r2, 2)
    const = np.array([r2.mean()])
    return {"linear_mean": lin, "quadratic_variance": quad, "constant_variance": const}


def run_fit(data, kernel, alpha=0.05, cutoff_kind="finite_sample", grid="k=20",
            method="linear", final="flat"):
    """Pipeline fit, both bands and verdicts for the least-squares candidates.

    Bands are built at the pipeline's fitted bandwidths, studentized with
    its variance curve and nu_eps estimate.
    """
    pipe = bandwidth.fit_pipeline(data, kernel, method=method, final=final)
    b, h = pipe.b_used, pipe.h_used
    kstar_k0 = math.sqrt(2.0) * kernel.k0
    g_mean = bands.resolve_grid(grid, data.interval, kstar_k0, b)
    sd_vals = pipe.sd_predictor()(g_mean.points)
    mean_band = bands.scb_mean(data, kernel, b, alpha, cutoff_kind, g_mean, sd=sd_vals, h=h)
    var_band = bands.scb_variance(data, kernel, h, alpha, cutoff_kind, grid,
                                  mean_predictor=pipe.mean_predictor(),
                                  nu_eps=pipe.nu_eps_hat, b=b)
    cands = least_squares_candidates(data)
    verdicts = {
        "linear_mean": bands.validate_parametric(mean_band,
                                                 bands.polynomial(cands["linear_mean"])),
        "quadratic_variance": bands.validate_parametric(
            var_band, bands.polynomial(cands["quadratic_variance"])),
        "constant_variance": bands.validate_parametric(
            var_band, bands.polynomial(cands["constant_variance"])),
    }
    return pipe, mean_band, var_band, cands, verdicts


def cmd_fit(args, out):
    data, info = _load_sample(args)
    kernel = get_kernel(args.kernel)
    pipe, mean_band, var_band, cands, verdicts = run_fit(
        data, kernel, args.alpha, CUTOFFS[args.cutoff], _grid_arg(args.grid), args.method,
        args.final)
    info.update(method=args.method, final=args.final, alpha=args.alpha,
                cutoff_kind=CUTOFFS[args.cutoff], grid=args.grid,
                b_star=pipe.b_star, h_star=pipe.h_star, b_used=pipe.b_used,
                h_used=pipe.h_used, nu_eps=pipe.nu_eps_hat)
    for name, coefs in cands.items():
        info[f"{name}_coef"] = list(coefs)
    for name, res in verdicts.items():
        info[f"{name}_verdict"] = res.verdict
    if args.emit == "curves":
        cols = {"x": pipe.mu_curve.grid, "mu": pipe.mu_curve.values,
                "sigma2": pipe.sigma2_curve.values}
    else:
        lin = bands.polynomial(cands["linear_mean"])
        quad = bands.polynomial(cands["quadratic_variance"])
        cols = {"x_mean": mean_band.x, "mean_center": mean_band.center,
                "mean_lower": mean_band.lower, "mean_upper": mean_band.upper,
                "mean_linear": lin(mean_band.x),
                "x_var": var_band.x, "var_center": var_band.center,
                "var_lower": var_band.lower, "var_upper": var_band.upper,
                "var_quadratic": quad(var_band.x),
                "var_constant": np.full(var_band.x.size, cands["constant_variance"][0])}
        size = max(len(v) for v in cols.values())
        cols = {k: list(v) + [math.nan] * (size - len(v)) for k, v in cols.items()}
    _emit(args, render(_header(args, info), cols, args.format), out)
    labels = {"linear_mean": "linear mean", "quadratic_variance": "quadratic variance",
              "constant_variance": "constant variance"}
    for name, res in verdicts.items():
        print(f"{res.verdict} {labels[name]}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "select-bw": cmd_select_bw,
    "band-mean": cmd_band,
    "band-var": cmd_band,
    "validate": cmd_validate,
    "coverage": cmd_coverage,
    "fit": cmd_fit,
}


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is None:
        args.seed = harness.DEFAULT_MASTER_SEED if args.command == "coverage" else 0
    try:
        return COMMANDS[args.command](args, out)
    except (TsBandsError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
