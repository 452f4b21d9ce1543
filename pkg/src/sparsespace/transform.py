"""Invertible transformation chain: pack -> [block] -> schedule.

Every step records, for each slot it produces, where the slot came from in
the dense matrix.  The final job schedule therefore hands back not only the
per-machine value/index streams and their structure streams, but also the
complete per-slot provenance that the inverse map is built from.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np

from .errors import InvalidSpec, SchemaError, ZeroMachines
from .matrix import DenseMatrix

# A slot's dense origin, or None for a padding slot.
Origin = Optional[tuple[int, int]]

PADDING_INDEX = 0


class Dim(str, Enum):
    ROWS = "Rows"
    COLUMNS = "Columns"
    BLOCKS = "Blocks"


@dataclass(frozen=True)
class Pack:
    dim: Dim = Dim.COLUMNS
    record_index_as: str = "col_idx"
    record_length_as: Optional[str] = "row_len"


@dataclass(frozen=True)
class Block:
    dim: Dim = Dim.COLUMNS
    factor: int = 2
    padding: str = "Zero"
    record_as: str = "row_blocks"


@dataclass(frozen=True)
class Schedule:
    dim: Dim = Dim.ROWS
    machines: int = 4
    policy: str = "ASAP"
    padding: str = "Zero"


TransformStep = Union[Pack, Block, Schedule]


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.valid


@dataclass(frozen=True)
class RepresentationSpec:
    name: str
    steps: tuple[TransformStep, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    @property
    def pack(self) -> Optional[Pack]:
        return next((s for s in self.steps if isinstance(s, Pack)), None)

    @property
    def block(self) -> Optional[Block]:
        return next((s for s in self.steps if isinstance(s, Block)), None)

    @property
    def schedule(self) -> Optional[Schedule]:
        return next((s for s in self.steps if isinstance(s, Schedule)), None)

    def to_dict(self) -> dict:
        steps = []
        for s in self.steps:
            d = {"step": type(s).__name__.lower()}
            for k, v in s.__dict__.items():
                d[k] = v.value if isinstance(v, Dim) else v
            steps.append(d)
        return {"name": self.name, "steps": steps}

    @classmethod
    def from_dict(cls, d: dict) -> RepresentationSpec:
        kinds = {"pack": Pack, "block": Block, "schedule": Schedule}
        steps = []
        try:
            for raw in d["steps"]:
                raw = dict(raw)
                kind = kinds[raw.pop("step")]
                if "dim" in raw:
                    raw["dim"] = Dim(raw["dim"])
                steps.append(kind(**raw))
            return cls(name=d["name"], steps=tuple(steps))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad representation spec: {exc}") from exc


def cisr_spec(machines: int = 4) -> RepresentationSpec:
    """CSR rows scheduled ASAP onto ``machines`` streams, zero-padded."""
    return RepresentationSpec(
        "CISR",
        (Pack(Dim.COLUMNS, "col_idx", "row_len"), Schedule(Dim.ROWS, machines, "ASAP", "Zero")),
    )


def blocked_spec(factor: int = 2, machines: int = 2) -> RepresentationSpec:
    """CSR rows cut into zero-padded blocks of ``factor``, blocks scheduled ASAP."""
    return RepresentationSpec(
        "blocked",
        (
            Pack(Dim.COLUMNS, "col_idx", None),
            Block(Dim.COLUMNS, factor, "Zero", "row_blocks"),
            Schedule(Dim.BLOCKS, machines, "ASAP", "Zero"),
        ),
    )


def validate_spec(spec: RepresentationSpec) -> ValidationReport:
    report = ValidationReport()
    steps = list(spec.steps)
    bad = [s for s in steps if not isinstance(s, (Pack, Block, Schedule))]
    for s in bad:
        report.violations.append(f"unknown step {s!r}")

    packs = [k for k, s in enumerate(steps) if isinstance(s, Pack)]
    blocks = [k for k, s in enumerate(steps) if isinstance(s, Block)]
    scheds = [k for k, s in enumerate(steps) if isinstance(s, Schedule)]

    if len(scheds) != 1:
        report.violations.append(f"expected exactly one schedule step, found {len(scheds)}")
    if scheds and scheds[-1] != len(steps) - 1:
        report.violations.append("schedule is not the last step")
    if len(packs) != 1:
        report.violations.append(f"expected exactly one pack step, found {len(packs)}")
    if len(blocks) > 1:
        report.violations.append(f"at most one block step is supported, found {len(blocks)}")
    if packs and blocks and blocks[0] < packs[0]:
        report.violations.append("block precedes pack")

    pack = steps[packs[0]] if packs else None
    if pack is not None and pack.dim not in (Dim.ROWS, Dim.COLUMNS):
        report.violations.append(f"pack dimension must be Rows or Columns, got {pack.dim}")
    for k in blocks:
        b = steps[k]
        if not (isinstance(b.factor, (int, np.integer)) and b.factor >= 1):
            report.violations.append(f"block factor must be a positive integer, got {b.factor!r}")
        if pack is not None and b.dim != pack.dim:
            report.violations.append(f"block dimension {b.dim.value} differs from packed dimension {pack.dim.value}")
        if b.padding != "Zero":
            report.violations.append(f"unsupported block padding {b.padding!r}")
    for k in scheds:
        s = steps[k]
        if not (isinstance(s.machines, (int, np.integer)) and s.machines >= 1):
            report.violations.append(f"schedule needs at least one machine, got {s.machines!r}")
        if s.policy != "ASAP":
            report.violations.append(f"unsupported scheduling policy {s.policy!r}")
        if s.padding != "Zero":
            report.violations.append(f"unsupported schedule padding {s.padding!r}")
        if pack is not None:
            if blocks:
                expected = Dim.BLOCKS
            else:
                expected = Dim.ROWS if pack.dim == Dim.COLUMNS else Dim.COLUMNS
            if s.dim != expected:
                report.violations.append(f"schedule dimension must be {expected.value} for this chain, got {s.dim.value}")
    return report


# ---------------------------------------------------------------------------
# pack / block


@dataclass(frozen=True)
class PackedMatrix:
    """One job per major index (row for a Columns pack, column for a Rows
    pack); each job lists ``(minor index, value)`` in ascending order."""

    dim: Dim
    origin_dims: tuple[int, int]
    jobs: tuple[tuple[tuple[int, float], ...], ...]

    @property
    def lengths(self) -> list[int]:
        return [len(job) for job in self.jobs]

    def origin(self, major: int, minor: int) -> tuple[int, int]:
        return (major, minor) if self.dim == Dim.COLUMNS else (minor, major)

    def job_slots(self):
        """Per job: (major index, [(value, minor index, origin), ...])."""
        for major, job in enumerate(self.jobs):
            yield major, [(v, idx, self.origin(major, idx)) for idx, v in job]


def pack(a: DenseMatrix, dim: Dim = Dim.COLUMNS) -> PackedMatrix:
    dim = Dim(dim)
    if dim == Dim.COLUMNS:
        grid = a.values
    elif dim == Dim.ROWS:
        grid = a.values.T
    else:
        raise ValueError(f"cannot pack along {dim}")
    jobs = []
    for line in grid:
        (nz,) = np.nonzero(line)
        jobs.append(tuple((int(k), float(line[k])) for k in nz))
    return PackedMatrix(dim, (a.n_rows, a.n_cols), tuple(jobs))


@dataclass(frozen=True)
class BlockedMatrix:
    """Fixed-size blocks in major-then-block order.  Padding slots inside a
    block are ``None``."""

    packed: PackedMatrix
    factor: int
    blocks: tuple[tuple[Optional[tuple[int, float]], ...], ...]
    block_major: tuple[int, ...]
    row_blocks: tuple[int, ...]

    @property
    def origin_dims(self):
        return self.packed.origin_dims

    @property
    def padded_slots(self) -> int:
        return sum(1 for b in self.blocks for s in b if s is None)

    def job_slots(self):
        for major, blk in zip(self.block_major, self.blocks):
            slots = []
            for s in blk:
                if s is None:
                    slots.append((0.0, PADDING_INDEX, None))
                else:
                    idx, v = s
                    slots.append((v, idx, self.packed.origin(major, idx)))
            yield major, slots


def block(p: PackedMatrix, factor: int, padding: str = "Zero") -> BlockedMatrix:
    if factor < 1:
        raise ValueError(f"block factor must be >= 1, got {factor}")
    if padding != "Zero":
        raise ValueError(f"unsupported padding policy {padding!r}")
    blocks, majors, counts = [], [], []
    for major, job in enumerate(p.jobs):
        n = -(-len(job) // factor)
        counts.append(n)
        for b in range(n):
            chunk = list(job[b * factor:(b + 1) * factor])
            chunk += [None] * (factor - len(chunk))
            blocks.append(tuple(chunk))
            majors.append(major)
    return BlockedMatrix(p, factor, tuple(blocks), tuple(majors), tuple(counts))


# ---------------------------------------------------------------------------
# schedule


@dataclass(frozen=True, eq=False)
class EncodedMatrix:
    """Machine-partitioned streams produced by the final job schedule.

    ``row_len`` holds, per machine, the lengths of its consecutive job
    segments (padding folded into the final one) and is present for row jobs
    when lengths were recorded.  ``row_blocks``/``block_factor`` are present
    for block jobs.  For a Rows-packed chain the roles transpose: ``col_idx``
    carries row indices and ``row_len`` carries column lengths.
    """

    machines: int
    stream_length: int
    values: tuple[tuple[float, ...], ...]
    col_idx: tuple[tuple[int, ...], ...]
    provenance: tuple[tuple[Origin, ...], ...]
    origin_dims: tuple[int, int]
    spec: Optional[RepresentationSpec] = None
    row_len: Optional[tuple[tuple[int, ...], ...]] = None
    row_blocks: Optional[tuple[int, ...]] = None
    block_factor: Optional[int] = None

    @property
    def nnz(self) -> int:
        return sum(o is not None for stream in self.provenance for o in stream)

    @property
    def padded_slots(self) -> int:
        return self.machines * self.stream_length - self.nnz

    @property
    def is_blocked(self) -> bool:
        return self.row_blocks is not None

    def values_array(self) -> np.ndarray:
        return np.array(self.values, dtype=np.float64).reshape(self.machines, self.stream_length)

    def to_dict(self) -> dict:
        streams = []
        for k in range(self.machines):
            s = {
                "values": list(self.values[k]),
                "col_idx": list(self.col_idx[k]),
                "provenance": [None if o is None else [o[0], o[1]] for o in self.provenance[k]],
            }
            if self.row_len is not None:
                s["row_len"] = list(self.row_len[k])
            streams.append(s)
        d = {
            "format": "sparsespace.encoded/1",
            "machines": self.machines,
            "stream_length": self.stream_length,
            "origin_dims": list(self.origin_dims),
            "spec": None if self.spec is None else self.spec.to_dict(),
            "streams": streams,
        }
        if self.row_blocks is not None:
            d["row_blocks"] = list(self.row_blocks)
            d["block_factor"] = self.block_factor
        return d

    def to_json(self, indent: Optional[int] = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d: dict) -> EncodedMatrix:
        try:
            m = int(d["machines"])
            L = int(d["stream_length"])
            n_rows, n_cols = (int(v) for v in d["origin_dims"])
            streams = d["streams"]
            if len(streams) != m:
                raise SchemaError(f"{len(streams)} streams for {m} machines")
            values, cols, prov, lens = [], [], [], []
            for k, s in enumerate(streams):
                vs, cs, ps = s["values"], s["col_idx"], s["provenance"]
                if not (len(vs) == len(cs) == len(ps) == L):
                    raise SchemaError(f"machine {k}: stream lengths differ from stream_length={L}")
                values.append(tuple(float(v) for v in vs))
                cols.append(tuple(int(c) for c in cs))
                prov.append(tuple(None if p is None else (int(p[0]), int(p[1])) for p in ps))
                if "row_len" in s:
                    lens.append(tuple(int(n) for n in s["row_len"]))
            if lens and len(lens) != m:
                raise SchemaError("row_len present on some machines only")
            spec = None if d.get("spec") is None else RepresentationSpec.from_dict(d["spec"])
            row_blocks = d.get("row_blocks")
            return cls(
                machines=m,
                stream_length=L,
                values=tuple(values),
                col_idx=tuple(cols),
                provenance=tuple(prov),
                origin_dims=(n_rows, n_cols),
                spec=spec,
                row_len=tuple(lens) if lens else None,
                row_blocks=None if row_blocks is None else tuple(int(n) for n in row_blocks),
                block_factor=None if row_blocks is None else int(d["block_factor"]),
            )
        except SchemaError:
            raise
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise SchemaError(f"malformed encoded matrix: {exc!r}") from exc

    @classmethod
    def from_json(cls, text: str) -> EncodedMatrix:
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise SchemaError("top-level JSON value must be an object")
        return cls.from_dict(d)

    def __eq__(self, other):
        if not isinstance(other, EncodedMatrix):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None


def schedule_asap(
    jobs: Union[PackedMatrix, BlockedMatrix],
    machines: int,
    padding: str = "Zero",
    *,
    record_lengths: bool = True,
    spec: Optional[RepresentationSpec] = None,
) -> EncodedMatrix:
    """Greedy list scheduling in job order: each job goes to the machine with
    the smallest accumulated slot count, ties to the lowest machine index.
    Afterwards every machine is zero-padded to the longest stream."""
    if machines < 1:
        raise ZeroMachines(f"cannot schedule onto {machines} machines")
    if padding != "Zero":
        raise ValueError(f"unsupported padding policy {padding!r}")

    blocked = isinstance(jobs, BlockedMatrix)
    loads = [0] * machines
    streams = [[] for _ in range(machines)]
    segments = [[] for _ in range(machines)]
    for _, slots in jobs.job_slots():
        k = min(range(machines), key=lambda q: (loads[q], q))
        streams[k].extend(slots)
        segments[k].append(len(slots))
        loads[k] += len(slots)

    L = max(loads)
    pad = (0.0, PADDING_INDEX, None)
    for k in range(machines):
        missing = L - loads[k]
        if blocked:
            # whole zero blocks; block jobs all have length == factor
            streams[k].extend([pad] * missing)
        else:
            streams[k].extend([pad] * missing)
            if segments[k]:
                segments[k][-1] += missing
            else:
                segments[k].append(missing)

    row_len = None
    if not blocked and record_lengths:
        row_len = tuple(tuple(seg) for seg in segments)
    return EncodedMatrix(
        machines=machines,
        stream_length=L,
        values=tuple(tuple(float(s[0]) for s in st) for st in streams),
        col_idx=tuple(tuple(int(s[1]) for s in st) for st in streams),
        provenance=tuple(tuple(s[2] for s in st) for st in streams),
        origin_dims=jobs.origin_dims,
        spec=spec,
        row_len=row_len,
        row_blocks=tuple(jobs.row_blocks) if blocked else None,
        block_factor=jobs.factor if blocked else None,
    )


def encode(a: DenseMatrix, spec: RepresentationSpec) -> EncodedMatrix:
    report = validate_spec(spec)
    if not report:
        raise InvalidSpec(report.violations)
    p = spec.pack
    packed = pack(a, p.dim)
    b = spec.block
    jobs = block(packed, b.factor, b.padding) if b is not None else packed
    s = spec.schedule
    return schedule_asap(jobs, s.machines, s.padding, record_lengths=p.record_length_as is not None, spec=spec)


def machine_job_majors(e: EncodedMatrix) -> list[list[int]]:
    """Distinct major (row) indices of the real slots on each machine, in
    stream order.  Handy for inspecting an assignment."""
    out = []
    for stream in e.provenance:
        seen = []
        for o in stream:
            if o is None:
                continue
            major = o[0]
            if not seen or seen[-1] != major:
                seen.append(major)
        out.append(seen)
    return out
