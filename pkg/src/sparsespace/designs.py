"""The two spatial SpMV designs as parameterised stage graphs.

``cisr``
    CSR rows scheduled ASAP onto ``machines`` memory-channel streams.  A
    row-length decoder labels each slot with its row; one multiplier per
    stream; ``adders`` fused accumulators, each serving ``machines/adders``
    streams alternately; a buffered y unloader.

``blocked``
    CSR rows cut into zero-padded blocks of ``k/2`` slots, blocks scheduled
    ASAP onto ``machines``.  Each machine multiplies a block with ``k/2``
    multipliers and sums it in an adder tree; a block decoder tells the
    pairing adder which neighbouring machines share a row; the combined
    partial sums are finished by a linear-array reducer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .dataflow import Map, PipelineGraph, Source, Stage, StageKind, Trace, connect, run
from .errors import BadParameters, Deadlock, DimensionMismatch, PropertyViolated, UnknownDesign
from .inverse import BlockDecoder, RowDecoder, streaming_row_decoder
from .matrix import DenseMatrix, as_vector
from .reduction import (
    FusedAccumulator,
    LinearArrayReducer,
    PartialSum,
    check_distinct,
    combine_flagged,
    levels_needed,
    tree_reduce,
)
from .transform import EncodedMatrix, blocked_spec, cisr_spec, encode

# Stream positions an A/x loader moves per fire.
LOADER_BURST = 64


@dataclass(frozen=True)
class CisrDesignParams:
    machines: int = 4
    adders: int = 2

    def __post_init__(self):
        if self.machines < 1 or self.adders < 1:
            raise BadParameters(f"machines and adders must be >= 1, got {self.machines}, {self.adders}")
        if self.machines % self.adders:
            raise BadParameters(f"{self.adders} adders must divide {self.machines} machines")


@dataclass(frozen=True)
class BlockedDesignParams:
    k: int = 4
    machines: int = 2
    linear_array_levels: int = 4

    def __post_init__(self):
        if self.k < 2 or self.k % 2:
            raise BadParameters(f"k must be even and >= 2, got {self.k}")
        if self.machines < 1:
            raise BadParameters(f"machines must be >= 1, got {self.machines}")
        if self.linear_array_levels < 1:
            raise BadParameters(f"linear_array_levels must be >= 1, got {self.linear_array_levels}")

    @property
    def block_factor(self) -> int:
        return self.k // 2


DesignParams = Union[CisrDesignParams, BlockedDesignParams]


@dataclass(frozen=True)
class DesignDescriptor:
    name: str
    params: DesignParams

    def spec(self):
        if self.name == "cisr":
            return cisr_spec(self.params.machines)
        return blocked_spec(self.params.block_factor, self.params.machines)


def descriptor(name: str, **params) -> DesignDescriptor:
    """Look up a shipped design by name; unknown keyword parameters are
    rejected."""
    kinds = {"cisr": CisrDesignParams, "blocked": BlockedDesignParams}
    if name not in kinds:
        raise UnknownDesign(f"unknown design {name!r}; choose from {sorted(kinds)}")
    try:
        return DesignDescriptor(name, kinds[name](**params))
    except TypeError as exc:
        raise BadParameters(str(exc)) from exc


# ---------------------------------------------------------------------------
# stages shared by both designs


class XFeeder(Stage):
    """Buffers all of x on chip, then answers column-index requests."""

    def __init__(self, name, x_input, requests):
        self.requests = dict(requests)  # index channel -> reply channel
        super().__init__(name, StageKind.COMPUTE, [x_input, *self.requests], list(self.requests.values()))
        self.x_input = x_input
        self.buffer: list[float] = []

    def fire(self):
        xin = self.ins[self.x_input]
        while len(xin):
            self.buffer.append(xin.get())
        if not xin.drained:
            return
        for req, reply in self.requests.items():
            ch = self.ins[req]
            while len(ch):
                self.outs[reply].put(self.buffer[ch.get()])
        if self.all_inputs_drained():
            self.finished = True


class YUnloader(Stage):
    """Accumulates partial sums into a dense y buffer; rows ``>= n_rows``
    are synthetic padding rows and are dropped."""

    def __init__(self, name, inputs, n_rows):
        super().__init__(name, StageKind.UNLOADER, inputs, [])
        self.y = np.zeros(n_rows)
        self.received: list[PartialSum] = []
        self.discarded = 0

    def fire(self):
        for ch in self.ins.values():
            while len(ch):
                ps = ch.get()
                self.received.append(ps)
                if ps.row < len(self.y):
                    self.y[ps.row] += ps.value
                else:
                    self.discarded += 1
        if self.all_inputs_drained():
            self.finished = True


# ---------------------------------------------------------------------------
# cisr


class RowDecoderStage(Stage):
    def __init__(self, name, machines, n_rows):
        super().__init__(
            name,
            StageKind.DECODER,
            [f"row_len[{k}]" for k in range(machines)],
            [f"row[{k}]" for k in range(machines)],
        )
        self.dec = RowDecoder(machines, n_rows)

    def fire(self):
        while True:
            k = self.dec.want()
            if k is None:
                self.finished = True
                return
            ch = self.ins[f"row_len[{k}]"]
            if len(ch):
                length = ch.get()
                row = self.dec.feed(k, length)
                out = self.outs[f"row[{k}]"]
                for _ in range(length):
                    out.put(row)
            elif ch.drained:
                self.dec.exhausted(k)
            else:
                return


class FusedAccumulatorStage(Stage):
    def __init__(self, name, streams: list[int], out: str):
        super().__init__(name, StageKind.REDUCER, [f"prod[{k}]" for k in streams], [out])
        self.unit = FusedAccumulator(len(streams), machine_offset=streams[0])

    def fire(self):
        chans = [self.ins[n] for n in self.inputs]
        out = self.outs[self.outputs[0]]
        while all(len(c) for c in chans):
            for s, ch in enumerate(chans):
                row, value = ch.get()
                ps = self.unit.push(s, row, value)
                if ps is not None:
                    out.put(ps)
        if all(c.drained for c in chans):
            for s in range(len(chans)):
                ps = self.unit.close(s)
                if ps is not None:
                    out.put(ps)
            self.finished = True
        elif all(c.closed for c in chans):
            raise Deadlock(f"{self.name}: product streams ended unevenly")


def _cisr_graph(e: EncodedMatrix, x: np.ndarray, p: CisrDesignParams) -> PipelineGraph:
    m, g = p.machines, p.machines // p.adders
    n_rows = e.origin_dims[0]
    stages: list[Stage] = []
    for k in range(m):
        stages.append(Source(f"A_loader[{k}]", {
            f"a_val[{k}]": e.values[k],
            f"a_col[{k}]": e.col_idx[k],
            f"row_len[{k}]": e.row_len[k],
        }, burst=LOADER_BURST))
    stages.append(Source("x_loader", {"x_in": [float(v) for v in x]}, burst=LOADER_BURST))
    stages.append(XFeeder("x_feeder", "x_in", {f"a_col[{k}]": f"xj[{k}]" for k in range(m)}))
    stages.append(RowDecoderStage("decoder", m, n_rows))
    for k in range(m):
        stages.append(Map(
            f"multiplier[{k}]", StageKind.COMPUTE,
            [f"a_val[{k}]", f"xj[{k}]", f"row[{k}]"], [f"prod[{k}]"],
            lambda v, xv, r: (r, v * xv),
        ))
    for q in range(p.adders):
        stages.append(FusedAccumulatorStage(f"fused_accumulator[{q}]", list(range(q * g, (q + 1) * g)), f"psum[{q}]"))
    stages.append(YUnloader("y_unloader", [f"psum[{q}]" for q in range(p.adders)], n_rows))
    kinds = {}
    for k in range(m):
        kinds.update({f"a_val[{k}]": "value", f"a_col[{k}]": "index", f"row_len[{k}]": "structure",
                      f"xj[{k}]": "value", f"row[{k}]": "index", f"prod[{k}]": "PartialSum"})
    kinds.update({f"psum[{q}]": "PartialSum" for q in range(p.adders)})
    return connect(stages, kinds, _meta("cisr", e))


# ---------------------------------------------------------------------------
# blocked


class BlockDecoderStage(Stage):
    def __init__(self, name, machines, total_blocks):
        super().__init__(name, StageKind.DECODER, ["row_blocks"], [f"brow[{q}]" for q in range(machines)])
        self.dec = BlockDecoder(machines)
        self.total_blocks = total_blocks

    def fire(self):
        ch = self.ins["row_blocks"]
        while len(ch):
            self.dec.push(ch.get())
        if ch.drained:
            self.dec.finish(self.total_blocks)
            self.finished = True
        for info in self.dec.ready():
            self.outs[f"brow[{info.machine}]"].put((info.row, info.same_row_as_previous))


class AdderTree(Map):
    def __init__(self, name, inputs, output, levels):
        super().__init__(name, StageKind.COMPUTE, inputs, [output], self._sum)
        self.levels = levels
        self.sums: list[float] = []

    def _sum(self, *products):
        s = tree_reduce(products, self.levels)
        self.sums.append(s)
        return s


class PairAdder(Stage):
    """Cross-machine adder: per step, chains machines whose blocks share a
    row (decoder flag), handing each finished sum on in machine order."""

    def __init__(self, name, machines):
        inputs = [f"bsum[{q}]" for q in range(machines)] + [f"brow[{q}]" for q in range(machines)]
        super().__init__(name, StageKind.REDUCER, inputs, ["pairs"])
        self.machines = machines

    def fire(self):
        m = self.machines
        sums = [self.ins[f"bsum[{q}]"] for q in range(m)]
        rows = [self.ins[f"brow[{q}]"] for q in range(m)]
        out = self.outs["pairs"]
        while all(len(c) for c in sums + rows):
            items, flags = [], []
            for q in range(m):
                row, same = rows[q].get()
                items.append((row, sums[q].get()))
                flags.append(same)
            for ps in combine_flagged(items, flags):
                out.put(ps)
        if self.all_inputs_drained():
            self.finished = True
        elif all(c.closed for c in sums + rows):
            raise Deadlock(f"{self.name}: block sums and decoder rows ended unevenly")


class LinearArrayStage(Stage):
    def __init__(self, name, stages):
        super().__init__(name, StageKind.REDUCER, ["pairs"], ["final"])
        self.circuit = LinearArrayReducer(stages)

    def fire(self):
        ch, out = self.ins["pairs"], self.outs["final"]
        while len(ch):
            for ps in self.circuit.push(*ch.get()):
                out.put(ps)
        if ch.drained:
            for ps in self.circuit.flush():
                out.put(ps)
            self.finished = True


def _blocked_graph(e: EncodedMatrix, x: np.ndarray, p: BlockedDesignParams) -> PipelineGraph:
    m, h = p.machines, p.block_factor
    n_rows = e.origin_dims[0]
    steps = e.stream_length // h
    stages: list[Stage] = []
    for q in range(m):
        streams = {}
        for u in range(h):
            streams[f"a_val[{q}][{u}]"] = [e.values[q][t * h + u] for t in range(steps)]
            streams[f"a_col[{q}][{u}]"] = [e.col_idx[q][t * h + u] for t in range(steps)]
        stages.append(Source(f"A_loader[{q}]", streams, burst=LOADER_BURST))
    stages.append(Source("row_blocks_loader", {"row_blocks": e.row_blocks}, burst=LOADER_BURST))
    stages.append(Source("x_loader", {"x_in": [float(v) for v in x]}, burst=LOADER_BURST))
    stages.append(XFeeder("x_feeder", "x_in", {
        f"a_col[{q}][{u}]": f"xj[{q}][{u}]" for q in range(m) for u in range(h)
    }))
    stages.append(BlockDecoderStage("decoder", m, m * steps))
    for q in range(m):
        for u in range(h):
            stages.append(Map(
                f"multiplier[{q}][{u}]", StageKind.COMPUTE,
                [f"a_val[{q}][{u}]", f"xj[{q}][{u}]"], [f"prod[{q}][{u}]"],
                lambda v, xv: v * xv,
            ))
        stages.append(AdderTree(f"adder_tree[{q}]", [f"prod[{q}][{u}]" for u in range(h)], f"bsum[{q}]", levels_needed(h)))
    stages.append(PairAdder("pair_adder", m))
    stages.append(LinearArrayStage("linear_array", p.linear_array_levels))
    stages.append(YUnloader("y_unloader", ["final"], n_rows))
    kinds = {"row_blocks": "structure", "pairs": "PartialSum", "final": "PartialSum"}
    for q in range(m):
        kinds[f"brow[{q}]"] = "index"
        for u in range(h):
            kinds.update({f"a_val[{q}][{u}]": "value", f"a_col[{q}][{u}]": "index"})
    return connect(stages, kinds, _meta("blocked", e))


def _meta(name: str, e: EncodedMatrix) -> dict:
    return {
        "design": name,
        "machines": e.machines,
        "stream_length": e.stream_length,
        "nnz": e.nnz,
        "n_rows": e.origin_dims[0],
        "n_cols": e.origin_dims[1],
    }


# ---------------------------------------------------------------------------
# entry points


def build_graph(desc: DesignDescriptor, e: EncodedMatrix, x) -> PipelineGraph:
    """Stage graph for ``desc`` with loaders bound to ``e`` and ``x``."""
    x = as_vector(x)
    if x.shape[0] != e.origin_dims[1]:
        raise DimensionMismatch(f"x has length {x.shape[0]}, matrix has {e.origin_dims[1]} columns")
    if desc.name == "cisr":
        p = desc.params
        if e.is_blocked or e.row_len is None or e.machines != p.machines:
            raise BadParameters("cisr design needs a row-scheduled encoding with row_len on the same machine count")
        return _cisr_graph(e, x, p)
    if desc.name == "blocked":
        p = desc.params
        if not e.is_blocked or e.block_factor != p.block_factor or e.machines != p.machines:
            raise BadParameters("blocked design needs a block-scheduled encoding matching k/2 and machines")
        return _blocked_graph(e, x, p)
    raise UnknownDesign(f"unknown design {desc.name!r}")


def simulate(desc: DesignDescriptor, a: DenseMatrix, x) -> tuple[np.ndarray, Trace, PipelineGraph]:
    """Encode ``a`` for ``desc``, run its graph, return (y, trace, graph)."""
    x = as_vector(x)
    if x.shape[0] != a.n_cols:
        raise DimensionMismatch(f"x has length {x.shape[0]}, matrix has {a.n_cols} columns")
    e = encode(a, desc.spec())
    if desc.name == "cisr":
        rows = streaming_row_decoder(e.row_len, a.n_rows)
        if not check_distinct(rows, a.n_rows):
            raise PropertyViolated("CISR streams do not reduce into distinct rows at every step")
    graph = build_graph(desc, e, x)
    trace = run(graph)
    y = graph.stage("y_unloader").y.copy()
    return y, trace, graph


def design_cisr_spmv(a: DenseMatrix, x, p: Optional[CisrDesignParams] = None) -> tuple[np.ndarray, Trace]:
    y, trace, _ = simulate(DesignDescriptor("cisr", p or CisrDesignParams()), a, x)
    return y, trace


def design_blocked_spmv(a: DenseMatrix, x, p: Optional[BlockedDesignParams] = None) -> tuple[np.ndarray, Trace]:
    y, trace, _ = simulate(DesignDescriptor("blocked", p or BlockedDesignParams()), a, x)
    return y, trace
