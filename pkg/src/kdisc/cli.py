"""Command-line interface: ``kdisc {mmd,hsic,ksd} ...``.

Reads CSV samples, evaluates one statistic per kernel, optionally normalises
and pools them, and writes a JSON report. Exit codes:

====  ==========================================
0     success
2     invalid configuration
3     unreadable or malformed data
4     degenerate normaliser
5     ``--verify`` mismatch above 1e-8
====  ==========================================
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import re
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cores import DiagonalGaussian
from .designs import DDesign, LDesign, RDesign, XDesign, equal_blocks
from .estimators import StatisticRequest, design_form
from .exceptions import DataError, DegenerateNormalizerError, KdiscError, OracleCapError
from .kernels import KernelSpec
from .oracle import (
    OracleConfig,
    oracle_design_average,
    oracle_hsic_second_order,
    oracle_hsic_sums,
    oracle_ksd,
    oracle_mmd_u_paired,
    oracle_mmd_u_tuple,
    oracle_mmd_v_tuple,
    oracle_sigma,
)
from .pooling import (
    DEFAULT_FAMILIES,
    KernelCollection,
    adaptive_statistic,
    bandwidth_collection,
    hsic_collection,
    median_bandwidth,
    pool,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DEGENERATE, EXIT_VERIFY = 0, 2, 3, 4, 5
VERIFY_TOL = 1e-8
KSD_FAMILIES = ("gaussian", "imq")

_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


class ConfigError(KdiscError):
    """Invalid or incompatible command-line options."""


# -- CSV -------------------------------------------------------------------------


def load_csv(path: str, has_header: bool = False) -> np.ndarray:
    """Read a rectangular numeric CSV file into an ``n x d`` float64 matrix.

    Only dot decimals are accepted. Blank lines are skipped. Errors name the
    1-based line and column of the offending cell.
    """
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            lines = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    except (UnicodeDecodeError, csv.Error) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from None
    rows = [(lineno, cells) for lineno, cells in enumerate(lines, start=1) if cells and any(c.strip() for c in cells)]
    if has_header and rows:
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0][1])
    data = np.empty((len(rows), width))
    for r, (lineno, cells) in enumerate(rows):
        if len(cells) != width:
            raise DataError(f"{path}: line {lineno} has {len(cells)} columns, expected {width} (ragged row)")
        for c, cell in enumerate(cells):
            text = cell.strip()
            if not _NUMBER.match(text):
                raise DataError(f"{path}: line {lineno}, column {c + 1}: {cell!r} is not a number")
            data[r, c] = float(text)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: values overflow to infinity")
    return data


# -- option parsing ----------------------------------------------------------------


@dataclass(frozen=True)
class KernelChoice:
    mode: str  # "fixed" | "median" | "collection"
    family: Optional[str] = None
    bandwidth: Optional[float] = None
    families: tuple = ()


def parse_kernel(token: str, r: Optional[float]) -> KernelChoice:
    token = token.strip().lower()
    if token == "collection" or token.startswith("collection:"):
        fams = tuple(f.strip() for f in token.split(":", 1)[1].split(",")) if ":" in token else ()
        for f in fams:
            _family_spec(f, 1.0, r)
        return KernelChoice("collection", families=fams)
    family, sep, arg = token.partition(":")
    if not sep:
        raise ConfigError(f"kernel must be FAMILY:BANDWIDTH, FAMILY:median or collection[:FAMILIES], got {token!r}")
    if arg == "median":
        _family_spec(family, 1.0, r)
        return KernelChoice("median", family=family)
    try:
        bw = float(arg)
    except ValueError:
        raise ConfigError(f"cannot parse bandwidth {arg!r}") from None
    _family_spec(family, bw, r)
    return KernelChoice("fixed", family=family, bandwidth=bw)


def _family_spec(family: str, bandwidth: float, r: Optional[float]) -> KernelSpec:
    native = family in ("gaussian", "laplace", "imq", "indicator")
    try:
        return KernelSpec.from_name(family, bandwidth, r=None if native else r)
    except KdiscError as exc:
        raise ConfigError(str(exc)) from None


def _distance_order(family: str, r: Optional[float]) -> float:
    return {"gaussian": 2.0, "imq": 2.0, "laplace": 1.0}.get(family, 2.0 if r is None else float(r))


def parse_stat(token: str, n: int, seed: int):
    """Map a ``--stat`` token to ``(kind, design)``."""
    token = token.strip().lower()
    if token in ("v", "u", "paired-u", "second-order-v"):
        return token, None
    head, _, rest = token.partition(":")
    try:
        if head == "l" and not rest:
            return "incomplete", LDesign()
        if head == "d":
            return "incomplete", DDesign(int(rest))
        if head == "b":
            return "incomplete", equal_blocks(n, int(rest))
        if head == "x":
            return "incomplete", XDesign(int(rest) if rest else n // 2)
        if head == "r":
            size, _, flag = rest.partition(":")
            if flag not in ("", "with-replacement"):
                raise ConfigError(f"unknown R-design flag {flag!r}")
            return "incomplete", RDesign(int(size), with_replacement=flag == "with-replacement", seed=seed)
    except ValueError as exc:
        if isinstance(exc, KdiscError):
            raise ConfigError(str(exc)) from None
        raise ConfigError(f"cannot parse statistic {token!r}") from None
    raise ConfigError(f"unknown statistic {token!r}")


def parse_pool(token: Optional[str]):
    if token is None:
        return None, None
    method, _, arg = token.strip().lower().partition(":")
    if method not in ("mean", "max", "fuse"):
        raise ConfigError(f"unknown pooling method {method!r}")
    if not arg:
        return method, None
    if method != "fuse":
        raise ConfigError(f"{method} pooling takes no parameter")
    try:
        nu = float(arg)
    except ValueError:
        raise ConfigError(f"cannot parse fuse parameter {arg!r}") from None
    if not (math.isfinite(nu) and nu > 0):
        raise ConfigError(f"fuse parameter must be positive, got {arg}")
    return method, nu


def parse_score(token: str, d: int) -> DiagonalGaussian:
    parts = token.strip().split(":")
    if len(parts) != 3 or parts[0].lower() != "gaussian":
        raise ConfigError(f"score must be gaussian:MEAN:VAR, got {token!r}")

    def vec(text, what):
        try:
            vals = [float(v) for v in text.split(",")]
        except ValueError:
            raise ConfigError(f"cannot parse score {what} {text!r}") from None
        if len(vals) == 1:
            vals = vals * d
        if len(vals) != d:
            raise ConfigError(f"score {what} has {len(vals)} entries, data has dimension {d}")
        return vals

    try:
        return DiagonalGaussian(vec(parts[1], "mean"), vec(parts[2], "variance"))
    except ConfigError:
        raise
    except KdiscError as exc:
        raise ConfigError(str(exc)) from None


# -- runs ----------------------------------------------------------------------------


def _single_kernel(choice: KernelChoice, r, X, Y=None) -> KernelSpec:
    if choice.mode == "fixed":
        return _family_spec(choice.family, choice.bandwidth, r)
    bw = median_bandwidth(X, Y, _distance_order(choice.family, r))
    return _family_spec(choice.family, bw, r)


def _cap(limit, groups, square=False):
    if limit is None:
        return None
    if limit < groups:
        raise ConfigError(f"--max-kernels {limit} is smaller than the number of families ({groups})")
    per = limit // groups
    return max(1, math.isqrt(per)) if square else per


def _load_inputs(args):
    X = load_csv(args.inputs[0], args.header)
    Y = load_csv(args.inputs[1], args.header) if len(args.inputs) > 1 else None
    if args.command == "hsic" and Y is None:
        if args.split is None:
            raise ConfigError("hsic with one input file needs --split D_X")
        if not 1 <= args.split < X.shape[1]:
            raise ConfigError(f"--split must be in [1, {X.shape[1] - 1}], got {args.split}")
        X, Y = np.ascontiguousarray(X[:, : args.split]), np.ascontiguousarray(X[:, args.split :])
    return X, Y


def _check_shapes(args, X, Y, kind):
    if args.command == "mmd" and X.shape[1] != Y.shape[1]:
        raise DataError(f"inputs have dimensions {X.shape[1]} and {Y.shape[1]}")
    if args.command == "hsic" and X.shape[0] != Y.shape[0]:
        raise DataError(f"paired inputs have {X.shape[0]} and {Y.shape[0]} rows")
    if kind == "paired-u" and X.shape[0] != Y.shape[0]:
        raise ConfigError(f"paired-u needs equal row counts, got {X.shape[0]} and {Y.shape[0]}")
    if kind == "second-order-v" and X.shape[0] % 2:
        raise ConfigError(f"second-order-v needs an even number of rows, got {X.shape[0]}")
    if args.command == "mmd" and kind == "incomplete" and X.shape[0] != Y.shape[0]:
        raise ConfigError("incomplete MMD statistics pair rows and need equal row counts")


def _collection(args, choice, X, Y):
    r = args.r
    if args.command == "hsic":
        if choice.mode == "collection":
            if args.kernel_y is not None:
                raise ConfigError("--kernel-y cannot be combined with a kernel collection")
            fams = choice.families or DEFAULT_FAMILIES
            cap = _cap(args.max_kernels, len(fams), square=True)
            return hsic_collection(X, Y, r, fams, max_per_axis=cap)
        choice_y = parse_kernel(args.kernel_y, r) if args.kernel_y else choice
        if choice_y.mode == "collection":
            raise ConfigError("--kernel-y must be FAMILY:BANDWIDTH or FAMILY:median")
        pair = (_single_kernel(choice, r, X), _single_kernel(choice_y, r, Y))
        return KernelCollection((pair,))
    if choice.mode == "collection":
        fams = choice.families or (KSD_FAMILIES if args.command == "ksd" else DEFAULT_FAMILIES)
        cap = _cap(args.max_kernels, len(fams))
        return bandwidth_collection(X, Y, r, fams, max_per_family=cap)
    return KernelCollection((_single_kernel(choice, r, X, Y),))


def _design_dict(kind, design, n):
    if kind == "incomplete":
        return design.to_dict()
    if kind == "second-order-v":
        return {"variant": "V", "shift": n // 2}
    return {"variant": {"v": "V", "u": "U", "paired-u": "U"}[kind]}


def _oracle_raw(request, X, Y, config):
    d, kind, k = request.discrepancy, request.kind, request.kernel
    if kind == "incomplete":
        core, design = design_form(request, X, Y)
        return oracle_design_average(core, design, config)
    if d == "mmd":
        fn = {"v": oracle_mmd_v_tuple, "u": oracle_mmd_u_tuple, "paired-u": oracle_mmd_u_paired}[kind]
        return fn(k, X, Y, config)
    if d == "hsic":
        if kind == "second-order-v":
            return oracle_hsic_second_order(k[0], k[1], X, Y, config)
        v4, _, u = oracle_hsic_sums(k[0], k[1], X, Y, config)
        return v4 if kind == "v" else u
    v, u = oracle_ksd(k, request.score, X, config)
    return v if kind == "v" else u


def _verify(collection, request, X, Y, normalize, method, nu):
    config = OracleConfig()
    values = []
    for kernel in collection:
        req = request.with_kernel(kernel)
        raw = _oracle_raw(req, X, Y, config)
        if normalize:
            core, design = design_form(req, X, Y)
            raw = raw / oracle_sigma(core, design, config)
        values.append(raw)
    return pool(values, method, nu)


def run(args) -> tuple:
    """Execute a parsed command line; returns ``(exit_code, report or None)``."""
    if args.command != "ksd" and args.score is not None:
        raise ConfigError("--score only applies to ksd")
    if args.command == "ksd" and args.score is None:
        raise ConfigError("ksd needs --score gaussian:MEAN:VAR")
    if args.command != "hsic" and (args.kernel_y is not None or args.split is not None):
        raise ConfigError("--kernel-y and --split only apply to hsic")
    n_inputs = len(args.inputs)
    if args.command == "ksd" and n_inputs != 1:
        raise ConfigError("ksd takes exactly one input file")
    if args.command == "mmd" and n_inputs != 2:
        raise ConfigError("mmd takes exactly two input files")
    if args.command == "hsic" and n_inputs not in (1, 2):
        raise ConfigError("hsic takes one or two input files")
    if args.command == "hsic" and n_inputs == 2 and args.split is not None:
        raise ConfigError("--split only applies to a single hsic input file")
    if args.r is not None and not args.r >= 1:
        raise ConfigError(f"--r must be >= 1, got {args.r}")
    if not 0 <= args.seed < 2**64:
        raise ConfigError("--seed must be a 64-bit unsigned integer")
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    if args.max_kernels is not None and args.max_kernels < 1:
        raise ConfigError("--max-kernels must be >= 1")
    choice = parse_kernel(args.kernel, args.r)
    pool_method, nu = parse_pool(args.pool)

    X, Y = _load_inputs(args)
    kind, design = parse_stat(args.stat, X.shape[0], args.seed)
    _check_shapes(args, X, Y, kind)
    score = parse_score(args.score, X.shape[1]) if args.command == "ksd" else None
    try:
        request = StatisticRequest(args.command, kind, design=design, score=score)
    except KdiscError as exc:
        raise ConfigError(str(exc)) from None
    collection = _collection(args, choice, X, Y)

    method = pool_method or ("fuse" if len(collection) > 1 else "mean")
    result = adaptive_statistic(
        collection, request, X, Y, method=method, nu=nu, normalize=args.normalize, workers=args.workers
    )
    pooled = len(collection) > 1 or pool_method is not None
    report = {
        "command": args.command,
        "statistic_kind": kind,
        "design": _design_dict(kind, design, X.shape[0]),
        "kernel_selection": choice.mode,
        "kernels": collection.to_dicts(),
        "raw_values": list(result.raw_values),
        "sigmas": list(result.sigmas) if result.sigmas is not None else None,
        "normalized": bool(args.normalize),
        "value": result.value,
        "pooled_value": result.value if pooled else None,
        "pool": {"method": result.method, "nu": result.nu, "argmax": result.argmax} if pooled else None,
        "seed": args.seed,
        "n": int(X.shape[0]),
        "m": int(Y.shape[0]) if Y is not None and args.command == "mmd" else None,
        "d": int(X.shape[1]),
        "clamped": bool(result.clamped),
        "score": score.to_dict() if score is not None else None,
    }
    if args.command == "hsic":
        report["d_y"] = int(Y.shape[1])
    code = EXIT_OK
    if args.verify:
        try:
            oracle_value = _verify(collection, request, X, Y, args.normalize, result.method, result.nu)
        except OracleCapError as exc:
            print(f"kdisc: --verify skipped: {exc}", file=sys.stderr)
        else:
            report["oracle_value"] = oracle_value
            report["abs_diff"] = abs(result.value - oracle_value)
            if not report["abs_diff"] <= VERIFY_TOL:
                code = EXIT_VERIFY
    return code, report


# -- entry point ------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--header", action="store_true", help="skip the first row of each CSV file")
    common.add_argument(
        "--kernel",
        default="gaussian:median",
        help="FAMILY:BANDWIDTH, FAMILY:median or collection[:FAM1,FAM2] (default gaussian:median)",
    )
    common.add_argument("--r", type=float, default=None, help="distance order for Matérn kernels and distance sets")
    common.add_argument(
        "--stat",
        default="v",
        help="v | u | paired-u | second-order-v | l | d:R | b:BLOCKS | x[:N1] | r:SIZE[:with-replacement]",
    )
    common.add_argument("--pool", default=None, help="mean | max | fuse[:NU] (default fuse for collections)")
    common.add_argument("--normalize", action="store_true", help="divide each statistic by its spread estimate")
    common.add_argument("--seed", type=int, default=0, help="seed for random designs (default 0)")
    common.add_argument("--max-kernels", type=int, default=None, help="cap on the size of an automatic collection")
    common.add_argument("--output", "-o", default=None, help="write the JSON report here instead of stdout")
    common.add_argument("--verify", action="store_true", help="cross-check against brute-force sums (n <= 8)")
    common.add_argument("--workers", type=int, default=1, help="worker threads (results do not depend on this)")

    parser = _Parser(prog="kdisc", description="Kernel discrepancy statistics (MMD, HSIC, KSD).")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("mmd", parents=[common], help="two-sample maximum mean discrepancy")
    p.add_argument("inputs", nargs="+", metavar="CSV")
    p.set_defaults(score=None, kernel_y=None, split=None)
    p = sub.add_parser("hsic", parents=[common], help="Hilbert-Schmidt independence criterion")
    p.add_argument("inputs", nargs="+", metavar="CSV")
    p.add_argument("--kernel-y", default=None, help="kernel for the second stream (default: same as --kernel)")
    p.add_argument("--split", type=int, default=None, help="with one file: number of leading columns forming X")
    p.set_defaults(score=None)
    p = sub.add_parser("ksd", parents=[common], help="kernel Stein discrepancy against a Gaussian model")
    p.add_argument("inputs", nargs="+", metavar="CSV")
    p.add_argument("--score", default=None, help="gaussian:MEAN:VAR, comma lists per coordinate or scalars")
    p.set_defaults(kernel_y=None, split=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        code, report = run(args)
    except DegenerateNormalizerError as exc:
        print(f"kdisc: degenerate normaliser: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except DataError as exc:
        print(f"kdisc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KdiscError as exc:
        print(f"kdisc: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = json.dumps(report, indent=2) + "\n"
    if args.output:
        try:
            with open(args.output, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"kdisc: cannot write {args.output}: {exc.strerror or exc}", file=sys.stderr)
            return EXIT_DATA
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
