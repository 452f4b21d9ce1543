"""Deterministic stage-and-channel execution engine.

Stages are wired by named FIFO channels, each with exactly one producer.  A
run fires every unfinished stage once per round, in topological order, until
all stages have finished.  A round in which nothing moves while stages are
still pending is a deadlock.  Channels are unbounded; the engine checks
functional behaviour, not timing.
"""

from __future__ import annotations

import csv
import io
import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from graphlib import CycleError, TopologicalSorter
from typing import Any, Callable, Mapping, Optional, Sequence

from .errors import BadParameters, Deadlock

log = logging.getLogger(__name__)


class StageKind(str, Enum):
    LOADER = "Loader"
    DECODER = "Decoder"
    COMPUTE = "Compute"
    REDUCER = "Reducer"
    UNLOADER = "Unloader"


class Channel:
    """Unbounded FIFO.  Closed by the engine once its producer finishes."""

    def __init__(self, name: str, kind: str = "value"):
        self.name = name
        self.kind = kind
        self._items: deque = deque()
        self.produced = 0
        self.consumed = 0
        self.closed = False

    def put(self, item) -> None:
        if self.closed:
            raise RuntimeError(f"channel {self.name} is closed")
        self._items.append(item)
        self.produced += 1

    def get(self):
        self.consumed += 1
        return self._items.popleft()

    def peek(self):
        return self._items[0]

    def __len__(self):
        return len(self._items)

    @property
    def drained(self) -> bool:
        return self.closed and not self._items

    def __repr__(self):
        return f"Channel({self.name!r}, pending={len(self)}, closed={self.closed})"


class Stage:
    """A hardware unit.  Subclasses implement :meth:`fire`, pulling from
    ``self.ins`` and pushing to ``self.outs``, and set ``self.finished``
    once they will produce nothing more."""

    def __init__(self, name: str, kind: StageKind, inputs: Sequence[str] = (), outputs: Sequence[str] = ()):
        self.name = name
        self.kind = StageKind(kind)
        self.inputs = list(inputs)
        self.outputs = list(outputs)
        self.ins: dict[str, Channel] = {}
        self.outs: dict[str, Channel] = {}
        self.finished = False

    def fire(self) -> None:
        raise NotImplementedError

    def all_inputs_drained(self) -> bool:
        return all(ch.drained for ch in self.ins.values())

    def waiting_on(self) -> list[str]:
        return [n for n, ch in self.ins.items() if not ch.closed and not len(ch)]

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class Source(Stage):
    """Emits up to ``burst`` items per output channel per fire, from fixed
    sequences."""

    def __init__(self, name: str, streams: Mapping[str, Sequence], kind: StageKind = StageKind.LOADER, burst: int = 1):
        super().__init__(name, kind, (), list(streams))
        if burst < 1:
            raise BadParameters(f"burst must be >= 1, got {burst}")
        self._streams = {k: list(v) for k, v in streams.items()}
        self._pos = 0
        self.burst = burst

    def fire(self):
        lo, hi = self._pos, self._pos + self.burst
        for name, items in self._streams.items():
            out = self.outs[name]
            for item in items[lo:hi]:
                out.put(item)
        self._pos = hi
        if all(self._pos >= len(v) for v in self._streams.values()):
            self.finished = True


class Map(Stage):
    """Stateless per-item function over step-aligned inputs.

    ``fn`` takes one item from each input (in declared order) and returns a
    tuple with one item per output.
    """

    def __init__(self, name: str, kind: StageKind, inputs: Sequence[str], outputs: Sequence[str], fn: Callable):
        super().__init__(name, kind, inputs, outputs)
        self.fn = fn

    def fire(self):
        chans = [self.ins[n] for n in self.inputs]
        while all(len(c) for c in chans):
            result = self.fn(*(c.get() for c in chans))
            if len(self.outputs) == 1:
                result = (result,)
            for name, item in zip(self.outputs, result):
                self.outs[name].put(item)
        if all(c.drained for c in chans):
            self.finished = True
        elif all(c.closed for c in chans):
            pending = {c.name: len(c) for c in chans}
            raise Deadlock(f"{self.name}: inputs ended unevenly {pending}")


class Sink(Stage):
    """Collects every item of one input channel."""

    def __init__(self, name: str, input: str, kind: StageKind = StageKind.UNLOADER):
        super().__init__(name, kind, [input], [])
        self.items: list = []

    def fire(self):
        ch = self.ins[self.inputs[0]]
        while len(ch):
            self.items.append(ch.get())
        if ch.drained:
            self.finished = True


@dataclass
class PipelineGraph:
    stages: list[Stage]
    channels: dict[str, Channel]
    meta: dict[str, Any] = field(default_factory=dict)

    def stage(self, name: str) -> Stage:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    def count(self, prefix: str) -> int:
        """Number of stages whose name is ``prefix`` or ``prefix[...]``."""
        return sum(1 for s in self.stages if s.name == prefix or s.name.startswith(prefix + "["))

    def by_kind(self, kind: StageKind) -> list[Stage]:
        return [s for s in self.stages if s.kind == kind]


def connect(stages: Sequence[Stage], channel_kinds: Optional[Mapping[str, str]] = None, meta=None) -> PipelineGraph:
    """Wire stages by channel name and order them topologically.

    Every consumed channel needs exactly one producer; a channel with no
    consumer is an error too, since its items would never drain.
    """
    channel_kinds = channel_kinds or {}
    producers: dict[str, Stage] = {}
    consumers: dict[str, Stage] = {}
    names = set()
    for s in stages:
        if s.name in names:
            raise BadParameters(f"duplicate stage name {s.name!r}")
        names.add(s.name)
        for ch in s.outputs:
            if ch in producers:
                raise BadParameters(f"channel {ch!r} has two producers: {producers[ch].name}, {s.name}")
            producers[ch] = s
        for ch in s.inputs:
            if ch in consumers:
                raise BadParameters(f"channel {ch!r} has two consumers: {consumers[ch].name}, {s.name}")
            consumers[ch] = s
    for ch, s in consumers.items():
        if ch not in producers:
            raise BadParameters(f"stage {s.name} reads channel {ch!r} that nothing produces")
    for ch, s in producers.items():
        if ch not in consumers:
            raise BadParameters(f"stage {s.name} writes channel {ch!r} that nothing reads")

    channels = {ch: Channel(ch, channel_kinds.get(ch, "value")) for ch in producers}
    for s in stages:
        s.ins = {ch: channels[ch] for ch in s.inputs}
        s.outs = {ch: channels[ch] for ch in s.outputs}

    order = {s.name: s for s in stages}
    ts = TopologicalSorter({s.name: {producers[ch].name for ch in s.inputs} for s in stages})
    try:
        ts.prepare()
    except CycleError as exc:
        raise BadParameters(f"stage graph has a cycle: {exc.args[1]}") from exc
    ordered = []
    while ts.is_active():
        ready = sorted(ts.get_ready(), key=[s.name for s in stages].index)
        ordered.extend(order[n] for n in ready)
        ts.done(*ready)
    return PipelineGraph(ordered, channels, dict(meta or {}))


@dataclass(frozen=True)
class TraceEvent:
    round: int
    stage: str
    kind: str
    consumed: int
    produced: int


@dataclass
class Trace:
    events: list[TraceEvent] = field(default_factory=list)
    channels: dict[str, tuple[int, int]] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)
    rounds: int = 0

    def per_stage(self) -> dict[str, dict[str, int]]:
        counts: dict[str, dict[str, int]] = {}
        for ev in self.events:
            c = counts.setdefault(ev.stage, {"consumed": 0, "produced": 0, "fires": 0})
            c["consumed"] += ev.consumed
            c["produced"] += ev.produced
            c["fires"] += 1
        return counts

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "stage", "kind", "consumed", "produced"])
        for ev in self.events:
            w.writerow([ev.round, ev.stage, ev.kind, ev.consumed, ev.produced])
        return buf.getvalue()


def run(graph: PipelineGraph, max_rounds: Optional[int] = None) -> Trace:
    """Fire stages in topological rounds until every stage has finished."""
    trace = Trace(meta=dict(graph.meta))
    rnd = 0
    while True:
        pending = [s for s in graph.stages if not s.finished]
        if not pending:
            break
        if max_rounds is not None and rnd >= max_rounds:
            raise Deadlock(f"no quiescence after {max_rounds} rounds")
        moved = False
        for s in pending:
            before_in = sum(ch.consumed for ch in s.ins.values())
            before_out = sum(ch.produced for ch in s.outs.values())
            s.fire()
            consumed = sum(ch.consumed for ch in s.ins.values()) - before_in
            produced = sum(ch.produced for ch in s.outs.values()) - before_out
            if s.finished:
                for ch in s.outs.values():
                    ch.closed = True
            if consumed or produced or s.finished:
                moved = True
                trace.events.append(TraceEvent(rnd, s.name, s.kind.value, consumed, produced))
        rnd += 1
        if not moved:
            stuck = {s.name: s.waiting_on() for s in graph.stages if not s.finished}
            raise Deadlock(f"stages stalled waiting on empty open channels: {stuck}")
    trace.rounds = rnd
    for name, ch in graph.channels.items():
        trace.channels[name] = (ch.produced, ch.consumed)
        if ch.produced != ch.consumed:
            raise Deadlock(f"channel {name} ended with {ch.produced - ch.consumed} unconsumed items")
    log.debug("run finished after %d rounds, %d events", rnd, len(trace.events))
    return trace


def stats(trace: Trace) -> dict[str, Any]:
    """Proxy metrics of the encoding that drove a run."""
    m = trace.meta.get("machines", 0)
    L = trace.meta.get("stream_length", 0)
    nnz = trace.meta.get("nnz", 0)
    out = encoding_metrics(m, L, nnz)
    if "warning" in out:
        log.warning(out["warning"])
    out["rounds"] = trace.rounds
    out["per_stage"] = trace.per_stage()
    return out


def encoding_metrics(machines: int, stream_length: int, nnz: int) -> dict[str, Any]:
    slots = machines * stream_length
    out = {
        "machines": machines,
        "stream_length": stream_length,
        "nnz": nnz,
        "padded_slots": slots - nnz,
        "utilization": nnz / slots if slots and nnz else 0.0,
    }
    if nnz == 0:
        out["warning"] = "degenerate: matrix has no nonzeros, utilization reported as 0"
    return out
