"""Command-line front end.

Exit codes: 0 success, 1 input or usage error, 2 verification mismatch.
Set ``SPARSESPACE_LOG`` (DEBUG, INFO, WARNING, ...) for log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .dataflow import encoding_metrics, stats
from .designs import descriptor, simulate
from .errors import SparseSpaceError
from .inverse import decode, decoded_rows, streaming_block_decoder, verify_integrity
from .matrix import DenseMatrix, parse_matrix_market, random_sparse, serialize_matrix_market, spmv_oracle
from .transform import EncodedMatrix, encode

log = logging.getLogger("sparsespace")

EXIT_OK, EXIT_INPUT, EXIT_MISMATCH = 0, 1, 2
FLOAT_RTOL = 1e-6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _design_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--design", choices=["cisr", "blocked"], default="cisr")
    p.add_argument("-m", "--machines", type=int, default=None, help="machines (cisr default 4, blocked default 2)")
    p.add_argument("-k", type=int, default=4, help="blocked: block factor is k/2 (default 4)")
    p.add_argument("--adders", type=int, default=None, help="cisr: fused accumulators (default min(2, m))")
    p.add_argument("--levels", type=int, default=4, help="blocked: linear-array cells (default 4)")


def _descriptor(args):
    if args.design == "cisr":
        m = 4 if args.machines is None else args.machines
        adders = args.adders if args.adders is not None else (2 if m % 2 == 0 else 1)
        return descriptor("cisr", machines=m, adders=adders)
    m = 2 if args.machines is None else args.machines
    return descriptor("blocked", k=args.k, machines=m, linear_array_levels=args.levels)


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc


def _read_matrix(path: str) -> DenseMatrix:
    try:
        return parse_matrix_market(_read_text(path))
    except SparseSpaceError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _read_vector(path: str) -> np.ndarray:
    vals = []
    for lineno, line in enumerate(_read_text(path).splitlines(), start=1):
        line = line.strip()
        if not line or line[0] in "%#":
            continue
        for tok in line.replace(",", " ").split():
            try:
                vals.append(float(tok))
            except ValueError:
                raise UsageError(f"{path}: line {lineno}: not a number: {tok!r}") from None
    return np.array(vals)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_encode(args) -> int:
    a = _read_matrix(args.matrix)
    e = encode(a, _descriptor(args).spec())
    _emit(e.to_json(indent=args.indent) + "\n", args.output)
    return EXIT_OK


def cmd_decode(args) -> int:
    e = EncodedMatrix.from_json(_read_text(args.encoded))
    verify_integrity(e)
    _emit(serialize_matrix_market(decode(e)), args.output)
    return EXIT_OK


def _mismatch(y: np.ndarray, ref: np.ndarray, scale: np.ndarray, exact: bool) -> Optional[int]:
    """First index where ``y`` departs from ``ref`` beyond tolerance.

    Integer data must match exactly.  Otherwise the error is relative to
    sum_j |A(i, j) x(j)|, which is |ref(i)| whenever no cancellation occurs.
    """
    diff = np.abs(y - ref)
    bad = diff > 0 if exact else diff > FLOAT_RTOL * scale
    idx = np.flatnonzero(bad)
    return int(idx[0]) if idx.size else None


def cmd_spmv(args) -> int:
    a = _read_matrix(args.matrix)
    if args.ones:
        x = np.ones(a.n_cols)
    elif args.x:
        x = _read_vector(args.x)
    else:
        raise UsageError("spmv needs --x FILE or --ones")
    if x.shape[0] != a.n_cols:
        raise UsageError(f"x has length {x.shape[0]}, matrix has {a.n_cols} columns")
    desc = _descriptor(args)
    y, trace, _ = simulate(desc, a, x)
    st = stats(trace)
    st["design"] = desc.name

    status = EXIT_OK
    if args.verify:
        ref = spmv_oracle(a, x)
        exact = a.is_integral() and bool(np.all(np.mod(x, 1.0) == 0.0))
        scale = np.abs(a.values) @ np.abs(x)
        first = _mismatch(y, ref, scale, exact)
        st["verified"] = first is None
        st["tolerance"] = 0.0 if exact else FLOAT_RTOL
        if first is not None:
            print(f"verification failed: y[{first}] = {y[first]!r}, oracle = {ref[first]!r}", file=sys.stderr)
            status = EXIT_MISMATCH

    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(trace.to_csv())
    stats_json = json.dumps(st, sort_keys=True, indent=2)
    if args.format == "json":
        _emit(json.dumps({"y": [float(v) for v in y], "stats": st}, sort_keys=True, indent=2) + "\n", args.output)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "y"])
        for i, v in enumerate(y):
            w.writerow([i, repr(float(v))])
        _emit(buf.getvalue(), args.output)
        if args.stats:
            with open(args.stats, "w") as fh:
                fh.write(stats_json + "\n")
        else:
            print(stats_json, file=sys.stderr)
    return status


def _bench_matrices(args):
    for path in args.matrix or []:
        yield os.path.basename(path), _read_matrix(path)
    if args.matrix and args.count is None:
        return
    for n in range(1 if args.count is None else args.count):
        for d in args.density:
            seed = args.seed + n
            name = f"rand-{args.rows}x{args.cols}-d{d:g}-s{seed}"
            yield name, random_sparse(args.rows, args.cols, d, seed)


def cmd_bench(args) -> int:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["matrix", "design", "m", "k", "L", "padded_slots", "utilization", "degenerate"]
    if args.verify:
        header.append("verified")
    w.writerow(header)
    mismatch = False
    for name, a in _bench_matrices(args):
        for design in args.designs:
            ks = args.k if design == "blocked" else [None]
            for m in args.machines:
                for k in ks:
                    if design == "cisr":
                        desc = descriptor("cisr", machines=m, adders=1)
                    else:
                        desc = descriptor("blocked", k=k, machines=m, linear_array_levels=args.levels)
                    e = encode(a, desc.spec())
                    met = encoding_metrics(e.machines, e.stream_length, e.nnz)
                    row = [name, design, m, "" if k is None else k, met["stream_length"], met["padded_slots"],
                           f"{met['utilization']:.6f}", int("warning" in met)]
                    if args.verify:
                        x = np.ones(a.n_cols)
                        y, _, _ = simulate(desc, a, x)
                        ok = bool(np.array_equal(y, spmv_oracle(a, x)))
                        mismatch |= not ok
                        row.append(int(ok))
                    w.writerow(row)
    _emit(buf.getvalue(), args.output)
    return EXIT_MISMATCH if mismatch else EXIT_OK


def cmd_inspect(args) -> int:
    text = _read_text(args.input)
    if text.lstrip().startswith("{"):
        e = EncodedMatrix.from_json(text)
    else:
        try:
            a = parse_matrix_market(text)
        except SparseSpaceError as exc:
            raise UsageError(f"{args.input}: {exc}") from exc
        e = encode(a, _descriptor(args).spec())
    out = io.StringIO()
    spec_name = e.spec.name if e.spec else "?"
    print(f"representation {spec_name}: {e.machines} machines x {e.stream_length} slots, "
          f"nnz={e.nnz}, padded={e.padded_slots}, origin {e.origin_dims[0]}x{e.origin_dims[1]}", file=out)
    rows = decoded_rows(e) if (e.row_len is not None or e.is_blocked) else None
    if e.is_blocked:
        print(f"row_blocks {list(e.row_blocks)}  block factor {e.block_factor}", file=out)
        total = e.machines * (e.stream_length // e.block_factor) if e.block_factor else 0
        for info in streaming_block_decoder(e.row_blocks, e.block_factor, e.machines, total):
            print(f"  step {info.step} machine {info.machine}: row {info.row}"
                  f"{'  (same row as previous machine)' if info.same_row_as_previous else ''}", file=out)
    for k in range(e.machines):
        print(f"machine {k}" + (f"  row_len {list(e.row_len[k])}" if e.row_len is not None else ""), file=out)
        print(f"  {'pos':>4} {'value':>12} {'col_idx':>7} {'row':>5}  origin", file=out)
        for pos in range(e.stream_length):
            o = e.provenance[k][pos]
            r = "" if rows is None else rows[k][pos]
            print(f"  {pos:>4} {e.values[k][pos]!r:>12} {e.col_idx[k][pos]:>7} {r!s:>5}  "
                  f"{'padding' if o is None else o}", file=out)
    _emit(out.getvalue(), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsespace", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", help="encode a Matrix Market file to the JSON stream layout")
    p.add_argument("matrix")
    _design_args(p)
    p.add_argument("-o", "--output")
    p.add_argument("--indent", type=int, default=None)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode an encoded JSON file back to Matrix Market")
    p.add_argument("encoded")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("spmv", help="simulate a design on a matrix and vector")
    p.add_argument("matrix")
    xs = p.add_mutually_exclusive_group()
    xs.add_argument("--x", help="vector file, one number per entry")
    xs.add_argument("--ones", action="store_true", help="use x = all ones")
    _design_args(p)
    p.add_argument("--verify", action="store_true", help="compare against the dense oracle")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--trace", help="write the stage trace as CSV")
    p.add_argument("--stats", help="write stats JSON here instead of stderr (csv format)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_spmv)

    p = sub.add_parser("bench", help="proxy metrics over a grid of matrices and design parameters")
    p.add_argument("--matrix", action="append", help="Matrix Market file (repeatable)")
    p.add_argument("--rows", type=int, default=64)
    p.add_argument("--cols", type=int, default=64)
    p.add_argument("--density", type=float, nargs="+", default=[0.05])
    p.add_argument("--count", type=int, default=None, help="random matrices per density")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--designs", nargs="+", choices=["cisr", "blocked"], default=["cisr", "blocked"])
    p.add_argument("-m", "--machines", type=int, nargs="+", default=[1, 2, 4])
    p.add_argument("-k", type=int, nargs="+", default=[4])
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--verify", action="store_true", help="also simulate with x = 1s and check the oracle")
    p.add_argument("--format", choices=["csv"], default="csv")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="show streams, structure and decoded rows side by side")
    p.add_argument("input", help="Matrix Market file or encoded JSON")
    _design_args(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("SPARSESPACE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SparseSpaceError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
