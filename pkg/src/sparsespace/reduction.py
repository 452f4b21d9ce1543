"""Reduction combinators and circuits over streams of partial sums.

Streams carry ``(row, value)`` pairs whose row comes from a decoder, so the
number of values reduced into one row is not known statically.  The circuits
here exploit properties of those streams (continuity per machine,
distinctness across machines, monotone row order) that the caller asserts
and that are checked against the data.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

from .errors import (
    CapacityExceeded,
    LevelBudgetExceeded,
    MonotonicityViolation,
    PropertyViolated,
    TargetMismatch,
)


class PartialSum(NamedTuple):
    row: int
    value: float


@dataclass(frozen=True)
class ReductionProps:
    continuous_per_machine: bool
    distinct_across_machines: bool
    max_run_per_target: Optional[int] = None


@dataclass
class ReductionTrace:
    """Event log: one record per consumed item and per emitted partial sum."""

    records: list[tuple[int, int, int, float, bool]] = field(default_factory=list)

    def record(self, step: int, machine: int, row: int, value: float, emitted: bool) -> None:
        self.records.append((step, machine, row, value, emitted))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "machine", "row", "value", "emitted"])
        for step, machine, row, value, emitted in self.records:
            w.writerow([step, machine, row, repr(float(value)), int(emitted)])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# properties


def check_continuous(rows: Iterable[int]) -> bool:
    """True iff equal rows form contiguous runs in ``rows``."""
    finished = set()
    current = None
    for r in rows:
        if r == current:
            continue
        if r in finished:
            return False
        if current is not None:
            finished.add(current)
        current = r
    return True


def check_distinct(streams: Sequence[Sequence[int]], n_rows: Optional[int] = None) -> bool:
    """True iff, at every step, the machines target pairwise distinct rows.

    Rows ``>= n_rows`` (synthetic padding rows) are exempt when ``n_rows`` is
    given.
    """
    if not streams:
        return True
    length = len(streams[0])
    if any(len(s) != length for s in streams):
        raise ValueError("step-aligned streams must have equal length")
    for step in zip(*streams):
        real = [r for r in step if n_rows is None or r < n_rows]
        if len(set(real)) != len(real):
            return False
    return True


def max_run(rows: Iterable[int]) -> int:
    best = run = 0
    prev = object()
    for r in rows:
        run = run + 1 if r == prev else 1
        prev = r
        best = max(best, run)
    return best


def reduction_props(streams: Sequence[Sequence[int]], n_rows: Optional[int] = None) -> ReductionProps:
    return ReductionProps(
        continuous_per_machine=all(check_continuous(s) for s in streams),
        distinct_across_machines=check_distinct(streams, n_rows),
        max_run_per_target=max((max_run(s) for s in streams), default=0),
    )


# ---------------------------------------------------------------------------
# combinators


def isolate_reduction(stream: Iterable[tuple[int, float]]) -> list[PartialSum]:
    """First-level reduction: sum consecutive same-row items and hand each
    local sum, tagged with its row, to the next level."""
    out = []
    current, acc = None, 0.0
    for row, value in stream:
        if current is not None and row == current:
            acc += value
            continue
        if current is not None:
            out.append(PartialSum(current, acc))
        current, acc = row, value
    if current is not None:
        out.append(PartialSum(current, acc))
    return out


def combine_same_target(
    step_streams: Iterable[Sequence[float]],
    targets: Optional[Iterable[Sequence[int]]] = None,
) -> list[float]:
    """Per step, one sum of the machines' values in ascending machine order.

    When ``targets`` (the rows each machine reduces into, per step) is given,
    every step must name a single row.
    """
    steps = [list(s) for s in step_streams]
    if targets is not None:
        for t, rows in enumerate(targets):
            if len(set(rows)) > 1:
                raise TargetMismatch(f"step {t}: machines target rows {list(rows)}")
    out = []
    for values in steps:
        acc = 0.0
        for v in values:
            acc += v
        out.append(acc)
    return out


def combine_maybe_different(step_streams: Iterable[Sequence[tuple[int, float]]]) -> list[PartialSum]:
    """Per step, scan machines in order holding ``(current_row, sum)``; add on
    a row match, otherwise hand off the running sum and restart from the new
    item; hand off the final sum after the scan."""
    out = []
    for items in step_streams:
        if not items:
            continue
        acc = 0.0
        current = items[0][0]
        for row, value in items:
            if current == row:
                acc += value
            else:
                out.append(PartialSum(current, acc))
                acc = value
            current = row
        out.append(PartialSum(current, acc))
    return out


def combine_flagged(items: Sequence[tuple[int, float]], same_as_previous: Sequence[bool]) -> list[PartialSum]:
    """Pairing adder driven by decoder flags instead of row comparison.

    ``same_as_previous[q]`` says machine ``q`` continues machine ``q-1``'s
    row.  With two machines this is the add-or-add-zero rule: a shared row
    yields one sum, otherwise the first sum passes (plus 0) and the second
    follows it.
    """
    out = []
    acc = None
    current = None
    for (row, value), same in zip(items, same_as_previous):
        if acc is not None and same:
            acc += value
            continue
        if acc is not None:
            out.append(PartialSum(current, acc + 0.0))
        current, acc = row, value
    if acc is not None:
        out.append(PartialSum(current, acc))
    return out


# ---------------------------------------------------------------------------
# circuits


def levels_needed(n: int) -> int:
    """Adder-tree depth for ``n`` inputs: ceil(log2(max(n, 1)))."""
    return max(n - 1, 0).bit_length()


def tree_reduce(values: Sequence[float], max_levels: int) -> float:
    """Balanced pairwise summation, level by level."""
    level = list(values)
    need = levels_needed(len(level))
    if need > max_levels:
        raise LevelBudgetExceeded(f"{len(level)} inputs need {need} adder levels, budget is {max_levels}")
    if not level:
        return 0.0
    while len(level) > 1:
        nxt = [level[k] + level[k + 1] for k in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


class LinearArrayReducer:
    """Second-level reducer: a bounded array of ``(row, sum)`` cells.

    Input rows must be nondecreasing.  A record for a buffered row adds into
    its cell; a new row takes a free cell.  Because rows never go back, the
    arrival of a strictly greater row proves every lower buffered row
    complete, so those cells are emitted and freed first.
    """

    def __init__(self, stages: int):
        if stages < 0:
            raise ValueError(f"stages must be >= 0, got {stages}")
        self.stages = stages
        self.cells: list[list] = []
        self._last_row: Optional[int] = None

    def push(self, row: int, value: float) -> list[PartialSum]:
        if self._last_row is not None and row < self._last_row:
            raise MonotonicityViolation(f"row {row} arrived after row {self._last_row}")
        self._last_row = row
        done = [PartialSum(r, s) for r, s in self.cells if r < row]
        self.cells = [c for c in self.cells if c[0] >= row]
        for cell in self.cells:
            if cell[0] == row:
                cell[1] += value
                return done
        if len(self.cells) >= self.stages:
            live = sorted({c[0] for c in self.cells} | {row})
            raise CapacityExceeded(
                f"{len(live)} unfinalized rows {live} exceed the {self.stages}-cell linear array"
            )
        self.cells.append([row, value])
        return done

    def flush(self) -> list[PartialSum]:
        done = [PartialSum(r, s) for r, s in self.cells]
        self.cells = []
        return done


def linear_array_reduce(stream: Iterable[tuple[int, float]], stages: int) -> list[PartialSum]:
    circuit = LinearArrayReducer(stages)
    out = []
    for row, value in stream:
        out.extend(circuit.push(row, value))
    out.extend(circuit.flush())
    return out


class FusedAccumulator:
    """One adder shared round-robin by several product streams.

    Keeps a ``(row, sum)`` register per stream; a stream's register is
    emitted when that stream changes row or ends.  Relies on each stream
    being continuous, which it checks as items arrive.
    """

    def __init__(self, n_streams: int, trace: Optional[ReductionTrace] = None, machine_offset: int = 0):
        self.registers: list[Optional[list]] = [None] * n_streams
        self.finished: list[set] = [set() for _ in range(n_streams)]
        self.trace = trace
        self.machine_offset = machine_offset
        self.steps = [0] * n_streams

    def push(self, stream: int, row: int, value: float) -> Optional[PartialSum]:
        reg = self.registers[stream]
        machine = stream + self.machine_offset
        if self.trace is not None:
            self.trace.record(self.steps[stream], machine, row, value, False)
        self.steps[stream] += 1
        if reg is not None and reg[0] == row:
            reg[1] += value
            return None
        if row in self.finished[stream]:
            raise PropertyViolated(f"stream {machine}: row {row} recurs after its run ended")
        emitted = None
        if reg is not None:
            self.finished[stream].add(reg[0])
            emitted = self._emit(stream, reg)
        self.registers[stream] = [row, value]
        return emitted

    def close(self, stream: int) -> Optional[PartialSum]:
        reg = self.registers[stream]
        self.registers[stream] = None
        if reg is None:
            return None
        self.finished[stream].add(reg[0])
        return self._emit(stream, reg)

    def _emit(self, stream: int, reg) -> PartialSum:
        ps = PartialSum(reg[0], reg[1])
        if self.trace is not None:
            self.trace.record(self.steps[stream], stream + self.machine_offset, ps.row, ps.value, True)
        return ps


def fused_accumulator(
    product_streams: Sequence[Sequence[tuple[int, float]]],
    adders: int = 1,
    *,
    n_rows: Optional[int] = None,
    trace: Optional[ReductionTrace] = None,
) -> list[PartialSum]:
    """Reduce ``m`` product streams with ``adders`` fused accumulators, each
    serving ``m / adders`` consecutive streams round-robin.

    Streams must be continuous and, step by step, target distinct rows
    (synthetic rows ``>= n_rows`` exempt); otherwise :class:`PropertyViolated`.
    """
    m = len(product_streams)
    if m == 0:
        return []
    if adders < 1 or m % adders:
        raise ValueError(f"{adders} adders cannot evenly serve {m} streams")
    rows = [[r for r, _ in s] for s in product_streams]
    for k, rs in enumerate(rows):
        if not check_continuous(rs):
            raise PropertyViolated(f"stream {k} is not continuous")
    aligned = len({len(rs) for rs in rows}) == 1
    if not aligned or not check_distinct(rows, n_rows):
        raise PropertyViolated("streams are not step-aligned with distinct targets")

    g = m // adders
    units = [FusedAccumulator(g, trace, machine_offset=q * g) for q in range(adders)]
    out = []
    for t in range(len(rows[0])):
        for q, unit in enumerate(units):
            for s in range(g):
                row, value = product_streams[q * g + s][t]
                ps = unit.push(s, row, value)
                if ps is not None:
                    out.append(ps)
    for unit in units:
        for s in range(g):
            ps = unit.close(s)
            if ps is not None:
                out.append(ps)
    return out


def sequential_row_sums(stream: Iterable[tuple[int, float]]) -> dict[int, float]:
    """Reference segmented sum: total per row in arrival order."""
    totals: dict[int, float] = {}
    for row, value in stream:
        totals[row] = totals.get(row, 0.0) + value
    return totals
