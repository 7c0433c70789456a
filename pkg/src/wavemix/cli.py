"""Command-line front end.

Subcommands::

    wavemix denoise PANEL.csv --out DIR      average-then-shrink mean curve
    wavemix simulate --fn bumps --out DIR    synthetic panel plus its true mean
    wavemix study PLAN.json --out DIR        Monte-Carlo study report
    wavemix transform FILE.csv --out F.csv   forward (or --inverse) DWT per row

Exit codes: 0 success, 2 input error, 3 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile
from typing import Optional, Sequence

import numpy as np

from . import __version__, bench, simgen
from .dwt import forward_array, get_filter, inverse_array, is_power_of_two, level_of_index
from .errors import CellError, ConfigurationError, LengthError, WavemixError
from .estimator import CurvePanel, average_then_shrink, normalize_variance_mode, shrink_then_average
from .shrinkage import ShrinkageRule
from .threshold import ThresholdPolicy

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3

FILTER_CHOICES = ("d1", "d2", "d5", "d7")


class InputError(WavemixError):
    """Unreadable or malformed input file."""


class _Parser(argparse.ArgumentParser):
    # bad flags are configuration errors, not input errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# -- panel I/O --------------------------------------------------------------

def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def read_panel(path: str) -> np.ndarray:
    """Read a comma-separated panel, one replicate per row, optional header line."""
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from exc
    rows = []
    width = None
    with fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not tok.strip() for tok in record):
                continue
            tokens = [tok.strip() for tok in record]
            if lineno == 1 and not all(_is_number(t) for t in tokens):
                continue  # header
            try:
                values = [float(t) for t in tokens]
            except ValueError:
                bad = next(t for t in tokens if not _is_number(t))
                raise InputError(f"{path}:{lineno}: not a number: {bad!r}") from None
            if not all(math.isfinite(v) for v in values):
                raise InputError(f"{path}:{lineno}: non-finite value")
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise InputError(f"{path}:{lineno}: expected {width} values, found {len(values)}")
            rows.append(values)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def format_row(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def write_panel(path: str, data: np.ndarray) -> None:
    data = np.atleast_2d(data)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in data:
            fh.write(format_row(row) + "\n")


def crop(data: np.ndarray, left: int, right: int) -> np.ndarray:
    if left < 0 or right < 0:
        raise ConfigurationError("crop widths must be non-negative")
    M = data.shape[1]
    if left + right >= M:
        raise ConfigurationError(f"cropping {left}+{right} columns leaves nothing of {M}")
    return data[:, left : M - right]


# -- output staging ---------------------------------------------------------

class _Staged:
    """Collect output files in a temp dir and move them into place only on success."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.tmp = None

    def __enter__(self):
        os.makedirs(self.out_dir, exist_ok=True)
        self.tmp = tempfile.mkdtemp(prefix=".wavemix-", dir=self.out_dir)
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        import shutil

        try:
            if exc_type is None:
                for name in sorted(os.listdir(self.tmp)):
                    dest = os.path.join(self.out_dir, name)
                    if os.path.isdir(dest):
                        shutil.rmtree(dest)
                    os.replace(os.path.join(self.tmp, name), dest)
        finally:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


# -- subcommands --------------------------------------------------------------

def _policy_from_args(args) -> ThresholdPolicy:
    rule = ShrinkageRule(args.rule, args.scad_a)
    return ThresholdPolicy(rule, args.selector, args.j0, args.scale)


def cmd_denoise(args) -> int:
    data = read_panel(args.input)
    if args.crop_left or args.crop_right:
        data = crop(data, args.crop_left, args.crop_right)
    if not is_power_of_two(data.shape[1]):
        raise InputError(
            f"{args.input}: curve length {data.shape[1]} is not a power of two; "
            "use --crop-left/--crop-right to select a dyadic window"
        )
    filt = get_filter(args.filter)
    policy = _policy_from_args(args)
    mode = normalize_variance_mode(args.variance)
    panel = CurvePanel(data)
    if args.strategy == "shrink_then_average":
        result = shrink_then_average(panel, filt, policy)
    else:
        result = average_then_shrink(panel, filt, policy, mode)

    M = panel.M
    report = {
        "input": os.path.abspath(args.input),
        "N": panel.N,
        "M": M,
        "filter": filt.name,
        "policy": {
            "rule": policy.rule.kind,
            "scad_a": policy.rule.scad_a,
            "selector": policy.selector,
            "j0": policy.j0,
            "scale": policy.scale,
        },
        "variance_mode": mode,
        "strategy": args.strategy,
        "crop": [args.crop_left, args.crop_right],
        "diagnostics": result.diagnostics,
    }
    with _Staged(args.out) as tmp:
        write_panel(os.path.join(tmp, "mu_hat.csv"), result.mu_hat)
        if result.variances is not None:
            levels = level_of_index(M)
            with open(os.path.join(tmp, "variances.csv"), "w", encoding="utf-8", newline="") as fh:
                fh.write("j,k,variance\n")
                for idx, v in enumerate(result.variances.sigma2):
                    j = int(levels[idx])
                    k = 0 if j < 0 else idx - 2**j
                    fh.write(f"{j},{k},{float(v)!r}\n")
        with open(os.path.join(tmp, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = simgen.SimulationConfig(
        test_function=args.fn,
        M=args.M,
        N=args.N,
        snr=args.snr,
        tau=math.inf if str(args.tau).lower() in ("inf", "infinity") else float(args.tau),
        eta=args.eta,
        structure=args.mask,
        bernoulli_p=args.p,
        seed=args.seed,
        filter=args.filter,
        snr_definition=args.snr_definition,
    )
    curves, mu_true, noise = simgen.simulate(config, repetition=args.repetition)
    with _Staged(args.out) as tmp:
        write_panel(os.path.join(tmp, "panel.csv"), curves)
        write_panel(os.path.join(tmp, "mu_true.csv"), mu_true)
        meta = config.to_dict()
        meta.update(repetition=args.repetition, sigma2=noise.sigma2, gamma2_ref=noise.gamma2_ref)
        with open(os.path.join(tmp, "config.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


def cmd_study(args) -> int:
    configs, estimators = bench.load_study_plan(args.plan)
    report = bench.run_study(configs, estimators, threads=args.threads, keep_traces=args.traces)
    with _Staged(args.out) as tmp:
        with open(os.path.join(tmp, "report.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(report.to_csv())
        with open(os.path.join(tmp, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
        if args.traces:
            report.write_traces(os.path.join(tmp, "traces"))
    if not args.quiet:
        print(report.format_table())
    return EXIT_OK


def cmd_transform(args) -> int:
    data = read_panel(args.input)
    if not is_power_of_two(data.shape[1]):
        raise InputError(f"{args.input}: row length {data.shape[1]} is not a power of two")
    filt = get_filter(args.filter)
    out = inverse_array(data, filt) if args.inverse else forward_array(data, filt)
    tmp = args.out + ".tmp"
    write_panel(tmp, out)
    os.replace(tmp, args.out)
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def _add_policy_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("thresholding")
    g.add_argument("--filter", default="d2", choices=FILTER_CHOICES, help="Daubechies filter (default d2)")
    g.add_argument("--rule", default="scad", help="shrinkage rule: hard, soft or scad (default scad)")
    g.add_argument("--scad-a", type=float, default=3.7, help="SCAD shape parameter a > 2 (default 3.7)")
    g.add_argument("--selector", default="universal", help="universal, sure or hybrid (default universal)")
    g.add_argument("--scale", type=float, default=1.0, help="multiplier on the universal threshold (default 1)")
    g.add_argument("--j0", type=int, default=3, help="coarsest thresholded level (default 3)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wavemix", description="Wavelet mean-curve estimation for replicated curves.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("denoise", help="estimate the mean curve of a panel")
    p.add_argument("input", help="CSV panel, one replicate per row")
    p.add_argument("--out", required=True, help="output directory")
    _add_policy_flags(p)
    p.add_argument("--variance", default="het", help="het (per-position) or mad (default het)")
    p.add_argument(
        "--strategy",
        default="average_then_shrink",
        choices=("average_then_shrink", "shrink_then_average"),
        help="estimation strategy (default average_then_shrink)",
    )
    p.add_argument("--crop-left", type=int, default=0, help="drop this many leading columns")
    p.add_argument("--crop-right", type=int, default=0, help="drop this many trailing columns")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("simulate", help="write a synthetic panel and its true mean curve")
    p.add_argument("--fn", default="blocks", help="blocks, bumps, heavisine or doppler")
    p.add_argument("--M", type=int, default=1024, help="curve length, a power of two")
    p.add_argument("--N", type=int, default=100, help="number of replicates")
    p.add_argument("--snr", type=float, default=5.0, help="signal-to-noise ratio")
    p.add_argument("--tau", default="0.1", help="heteroscedasticity ratio, or inf for none")
    p.add_argument("--eta", type=float, default=1.5, help="level decay of the extra variance")
    p.add_argument("--mask", default="zeros", help="zeros or bernoulli heteroscedastic positions")
    p.add_argument("--p", type=float, default=0.3, help="Bernoulli mask probability")
    p.add_argument("--seed", type=int, default=0, help="master seed (unsigned 64-bit)")
    p.add_argument("--repetition", type=int, default=0, help="repetition index of the noise stream")
    p.add_argument("--filter", default=None, choices=FILTER_CHOICES, help="default depends on --fn")
    p.add_argument("--snr-definition", default="rms", choices=simgen.SNR_DEFINITIONS, help="how --snr sets sigma")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("study", help="run a Monte-Carlo study from a JSON plan")
    p.add_argument("plan", help="JSON study plan (version 1)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--traces", action="store_true", help="also write median-realization traces/")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default WAVEMIX_THREADS or CPU count)")
    p.add_argument("--quiet", action="store_true", help="do not print the summary table")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("transform", help="row-wise forward or inverse DWT of a CSV file")
    p.add_argument("input", help="CSV, one signal per row")
    p.add_argument("--out", required=True, help="output CSV file")
    p.add_argument("--filter", default="d2", choices=FILTER_CHOICES, help="Daubechies filter (default d2)")
    p.add_argument("--inverse", action="store_true", help="treat rows as coefficients and invert")
    p.set_defaults(func=cmd_transform)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "filter", None) is not None:
        args.filter = get_filter(args.filter).vanishing_moments
    try:
        return args.func(args)
    except CellError as exc:
        print(f"wavemix: {exc}", file=sys.stderr)
        if isinstance(exc.cause, (InputError, LengthError)):
            return EXIT_INPUT
        return EXIT_CONFIG
    except (InputError, LengthError) as exc:
        print(f"wavemix: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (WavemixError, ValueError) as exc:
        print(f"wavemix: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
