"""Inverse index mapping (machine, position) -> (i, j), and streaming
decoders that recover dense row indices from structure streams alone.

The inverse map is built constructively from the provenance that each
transformation step recorded.  The decoders never look at provenance; they
replay the job scheduler from ``row_len`` (or ``row_blocks``) the way a
hardware decoder would.  Agreement between the two is the evidence that the
structure streams really do encode the indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import InconsistentBlockCount, IntegrityError, OutOfBounds, StructureExhausted
from .matrix import DenseMatrix
from .transform import Dim, EncodedMatrix, Origin


@dataclass(frozen=True)
class InverseMap:
    machines: int
    stream_length: int
    origin_dims: tuple[int, int]
    table: tuple[tuple[Origin, ...], ...]

    def __call__(self, machine: int, position: int) -> Origin:
        if not (0 <= machine < self.machines and 0 <= position < self.stream_length):
            raise OutOfBounds(f"slot ({machine}, {position}) outside {self.machines}x{self.stream_length}")
        return self.table[machine][position]

    @cached_property
    def _forward(self) -> dict[tuple[int, int], tuple[int, int]]:
        fwd = {}
        for k, stream in enumerate(self.table):
            for pos, origin in enumerate(stream):
                if origin is not None:
                    fwd[origin] = (k, pos)
        return fwd

    def slots(self):
        """Every ``(machine, position, origin)``, machine-major."""
        for k, stream in enumerate(self.table):
            for pos, origin in enumerate(stream):
                yield k, pos, origin


def build_inverse_map(e: EncodedMatrix) -> InverseMap:
    return InverseMap(e.machines, e.stream_length, e.origin_dims, e.provenance)


def forward_map(im: InverseMap, i: int, j: int) -> Optional[tuple[int, int]]:
    n_rows, n_cols = im.origin_dims
    if not (0 <= i < n_rows and 0 <= j < n_cols):
        raise OutOfBounds(f"({i}, {j}) outside {n_rows}x{n_cols}")
    return im._forward.get((i, j))


def _pack_dim(e: EncodedMatrix) -> Dim:
    if e.spec is not None and e.spec.pack is not None:
        return e.spec.pack.dim
    return Dim.COLUMNS


def major_indices(e: EncodedMatrix) -> list[list[Optional[int]]]:
    """Per slot, the job (major) index from provenance; ``None`` for padding.
    This is the row index for the usual Columns-packed chains."""
    axis = 0 if _pack_dim(e) == Dim.COLUMNS else 1
    return [[None if o is None else o[axis] for o in stream] for stream in e.provenance]


def n_major(e: EncodedMatrix) -> int:
    return e.origin_dims[0] if _pack_dim(e) == Dim.COLUMNS else e.origin_dims[1]


# ---------------------------------------------------------------------------
# row-length decoder


class RowDecoder:
    """Incremental replay of ASAP scheduling over row jobs.

    Call :meth:`want` to learn which machine's next ``row_len`` entry the
    replay needs, then either :meth:`feed` that entry or report the machine
    as :meth:`exhausted`.  Rows ``>= n_rows`` label padding-only segments of
    machines that received no job.
    """

    def __init__(self, machines: int, n_rows: int):
        self.machines = machines
        self.n_rows = n_rows
        self.consumed = [0] * machines
        self.next_row = 0
        self._exhausted = [False] * machines

    def want(self) -> Optional[int]:
        if self.next_row < self.n_rows:
            k = min(range(self.machines), key=lambda q: (self.consumed[q], q))
            if self._exhausted[k]:
                raise StructureExhausted(
                    f"machine {k} has no row_len entry left for row {self.next_row}"
                )
            return k
        live = [q for q in range(self.machines) if not self._exhausted[q]]
        if not live:
            return None
        return min(live, key=lambda q: (self.consumed[q], q))

    def feed(self, machine: int, length: int) -> int:
        row = self.next_row
        self.next_row += 1
        self.consumed[machine] += length
        return row

    def exhausted(self, machine: int) -> None:
        self._exhausted[machine] = True


def streaming_row_decoder(row_len_streams: Sequence[Sequence[int]], n_rows: int) -> list[list[int]]:
    m = len(row_len_streams)
    if m == 0:
        return []
    cursors = [iter(s) for s in row_len_streams]
    out = [[] for _ in range(m)]
    dec = RowDecoder(m, n_rows)
    while (k := dec.want()) is not None:
        length = next(cursors[k], None)
        if length is None:
            dec.exhausted(k)
            continue
        row = dec.feed(k, length)
        out[k].extend([row] * length)
    return out


# ---------------------------------------------------------------------------
# block decoder


class BlockInfo(NamedTuple):
    machine: int
    step: int
    row: int
    same_row_as_previous: bool


class BlockDecoder:
    """Streams ``row_blocks`` entries in, emits one row label per block.

    Blocks are round-robin over machines (ASAP with equal-size jobs), so
    block ``b`` runs on machine ``b % m`` at step ``b // m``.  Padding blocks
    appended to fill the final step get distinct synthetic rows ``>= n_rows``.
    """

    def __init__(self, machines: int):
        self.machines = machines
        self.rows: list[int] = []
        self._next_row = 0
        self._emitted = 0

    def push(self, count: int) -> None:
        self.rows.extend([self._next_row] * count)
        self._next_row += 1

    def finish(self, total_blocks: int) -> None:
        real = len(self.rows)
        m = self.machines
        if real > total_blocks or total_blocks % m or total_blocks - real >= m:
            raise InconsistentBlockCount(
                f"row_blocks sum to {real} blocks, inconsistent with {total_blocks} scheduled on {m} machines"
            )
        synth = self._next_row
        self.rows.extend(range(synth, synth + total_blocks - real))

    def ready(self) -> list[BlockInfo]:
        """Blocks whose whole step is decoded and not yet handed out."""
        m = self.machines
        complete = (len(self.rows) // m) * m
        out = []
        for b in range(self._emitted, complete):
            q, t = b % m, b // m
            same = q > 0 and self.rows[b] == self.rows[b - 1]
            out.append(BlockInfo(q, t, self.rows[b], same))
        self._emitted = complete
        return out


def streaming_block_decoder(row_blocks: Iterable[int], factor: int, machines: int, total_blocks: int) -> list[BlockInfo]:
    """Row and pairing flag for every scheduled block, in block order.

    ``factor`` does not affect the labels; it is accepted so the decoder's
    inputs mirror the structure a block loader supplies.
    """
    if factor < 1:
        raise ValueError(f"block factor must be >= 1, got {factor}")
    dec = BlockDecoder(machines)
    for count in row_blocks:
        dec.push(count)
    dec.finish(total_blocks)
    return dec.ready()


def block_rows_to_slots(infos: Sequence[BlockInfo], factor: int, machines: int) -> list[list[int]]:
    """Expand per-block rows to per-slot rows on each machine's stream."""
    out = [[] for _ in range(machines)]
    for info in infos:
        out[info.machine].extend([info.row] * factor)
    return out


def decoded_rows(e: EncodedMatrix) -> list[list[int]]:
    """Per-slot row labels of ``e`` derived only from its structure streams."""
    n = n_major(e)
    if e.is_blocked:
        total = e.machines * (e.stream_length // e.block_factor) if e.block_factor else 0
        infos = streaming_block_decoder(e.row_blocks, e.block_factor, e.machines, total)
        return block_rows_to_slots(infos, e.block_factor, e.machines)
    if e.row_len is None:
        raise IntegrityError("encoding carries no row_len structure to decode")
    return streaming_row_decoder(e.row_len, n)


# ---------------------------------------------------------------------------
# decode / checks


def decode(e: EncodedMatrix) -> DenseMatrix:
    """Scatter every real slot to its inverse-mapped (i, j)."""
    grid = np.zeros(e.origin_dims)
    im = build_inverse_map(e)
    for k, pos, origin in im.slots():
        if origin is not None:
            grid[origin] = e.values[k][pos]
    return DenseMatrix(grid)


@dataclass
class RoundtripReport:
    checked_slots: int = 0
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def __bool__(self):
        return self.ok


def check_roundtrip(e: EncodedMatrix, a: DenseMatrix) -> RoundtripReport:
    report = RoundtripReport()
    if e.origin_dims != a.shape:
        report.problems.append(f"origin dims {e.origin_dims} differ from matrix shape {a.shape}")
        return report
    seen = {}
    for k, pos, origin in build_inverse_map(e).slots():
        v = e.values[k][pos]
        if origin is None:
            if v != 0.0:
                report.problems.append(f"padding slot ({k}, {pos}) holds {v!r}")
            continue
        report.checked_slots += 1
        if origin in seen:
            report.problems.append(f"slot ({k}, {pos}) maps to {origin}, already used by slot {seen[origin]}")
            continue
        seen[origin] = (k, pos)
        if v != a[origin]:
            report.problems.append(f"slot ({k}, {pos}) -> {origin}: value {v!r} != {a[origin]!r}")
    for i, j, v in a.triplets():
        if (i, j) not in seen:
            report.problems.append(f"nonzero ({i}, {j}) = {v!r} has no slot")
    if report.ok and decode(e) != a:
        report.problems.append("decoded matrix differs from the original")
    return report


def verify_integrity(e: EncodedMatrix) -> None:
    """Self-consistency of an encoding without the source matrix.

    Checks provenance bounds and injectivity, padding values, index streams,
    and that the streaming decoder re-derives provenance rows from the
    structure streams.  Raises :class:`IntegrityError` listing every problem.
    """
    problems = []
    n_rows, n_cols = e.origin_dims
    axis = 0 if _pack_dim(e) == Dim.COLUMNS else 1
    seen = set()
    for k in range(e.machines):
        for pos in range(e.stream_length):
            o, v, c = e.provenance[k][pos], e.values[k][pos], e.col_idx[k][pos]
            if o is None:
                if v != 0.0:
                    problems.append(f"padding slot ({k}, {pos}) holds {v!r}")
                continue
            i, j = o
            if not (0 <= i < n_rows and 0 <= j < n_cols):
                problems.append(f"slot ({k}, {pos}) origin {o} out of bounds")
                continue
            if o in seen:
                problems.append(f"origin {o} appears twice")
            seen.add(o)
            if v == 0.0:
                problems.append(f"slot ({k}, {pos}) -> {o} holds an explicit zero")
            if c != o[1 - axis]:
                problems.append(f"slot ({k}, {pos}) index stream says {c}, provenance says {o}")
    if e.row_len is not None:
        for k, lens in enumerate(e.row_len):
            if sum(lens) != e.stream_length:
                problems.append(f"machine {k}: row_len sums to {sum(lens)}, stream_length is {e.stream_length}")
    if e.is_blocked and e.block_factor and e.stream_length % e.block_factor:
        problems.append(f"stream_length {e.stream_length} is not a multiple of block factor {e.block_factor}")
    if not problems and (e.row_len is not None or e.is_blocked):
        try:
            rows = decoded_rows(e)
        except (StructureExhausted, InconsistentBlockCount) as exc:
            problems.append(f"structure streams do not decode: {exc}")
        else:
            for k in range(e.machines):
                for pos, o in enumerate(e.provenance[k]):
                    if o is not None and rows[k][pos] != o[axis]:
                        problems.append(f"slot ({k}, {pos}) decodes to row {rows[k][pos]} but provenance says {o}")
    if problems:
        raise IntegrityError("; ".join(problems[:10]) + (f" (+{len(problems) - 10} more)" if len(problems) > 10 else ""))
