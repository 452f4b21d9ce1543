import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparsespace import (
    Block,
    DenseMatrix,
    Dim,
    EncodedMatrix,
    Pack,
    RepresentationSpec,
    Schedule,
    block,
    blocked_spec,
    cisr_spec,
    dense_from_triplets,
    encode,
    pack,
    random_sparse,
    schedule_asap,
    validate_spec,
)
from sparsespace.errors import InvalidSpec, SchemaError, ZeroMachines
from sparsespace.transform import machine_job_majors

from conftest import brute_blocks, brute_cisr, brute_greedy, brute_rows

matrices = st.builds(
    random_sparse,
    st.integers(1, 24),
    st.integers(1, 24),
    st.sampled_from([0.0, 0.01, 0.05, 0.2, 0.5, 1.0]),
    st.integers(0, 10_000),
)


class TestPack:
    def test_identity(self):
        p = pack(dense_from_triplets(2, 2, [(0, 0, 1), (1, 1, 1)]))
        assert p.jobs == (((0, 1.0),), ((1, 1.0),))
        assert p.lengths == [1, 1]

    def test_all_zero(self):
        p = pack(DenseMatrix.zeros(3, 3))
        assert p.jobs == ((), (), ())
        assert p.lengths == [0, 0, 0]

    def test_fixture(self, fixture4):
        p = pack(fixture4)
        assert p.lengths == [3, 1, 2, 2]
        assert list(p.jobs[0]) == [(0, 1.0), (1, 2.0), (3, 3.0)]

    def test_matches_brute_force_csr(self, fixture4):
        assert [list(j) for j in pack(fixture4).jobs] == brute_rows(fixture4)

    def test_pack_rows_is_column_major(self, fixture4):
        p = pack(fixture4, Dim.ROWS)
        assert p.lengths == [2, 2, 2, 2]
        assert list(p.jobs[0]) == [(0, 1.0), (2, 5.0)]
        assert p.origin(0, 2) == (2, 0)


class TestBlock:
    def _row(self, n):
        return pack(dense_from_triplets(1, n, [(0, j, j + 1) for j in range(n)]))

    def test_padding_last_block(self):
        b = block(self._row(3), 2)
        assert b.row_blocks == (2,)
        assert b.blocks[1] == ((2, 3.0), None)

    def test_exact_division(self):
        b = block(self._row(4), 2)
        assert b.row_blocks == (2,)
        assert b.padded_slots == 0

    def test_fixture(self, fixture4):
        b = block(pack(fixture4), 2)
        assert b.row_blocks == (2, 1, 1, 1)
        assert len(b.blocks) == 5
        assert b.padded_slots == 2
        # ceil of each length, pads = blocks * factor - nnz
        assert list(b.row_blocks) == [math.ceil(n / 2) for n in [3, 1, 2, 2]]

    def test_empty_row_has_no_blocks(self):
        b = block(pack(dense_from_triplets(3, 3, [(0, 0, 1), (2, 2, 1)])), 2)
        assert b.row_blocks == (1, 0, 1)
        assert b.block_major == (0, 2)

    def test_matches_brute_force(self, fixture4):
        b = block(pack(fixture4), 2)
        assert [(r, list(c)) for r, c in zip(b.block_major, b.blocks)] == brute_blocks(fixture4, 2)

    def test_rejects_bad_factor(self, fixture4):
        with pytest.raises(ValueError):
            block(pack(fixture4), 0)


class TestSchedule:
    def test_fixture_worked_example(self, fixture4):
        e = schedule_asap(pack(fixture4), 2)
        assert e.stream_length == 5
        assert e.values == ((1, 2, 3, 7, 8), (4, 5, 6, 0, 0))
        assert e.col_idx == ((0, 1, 3, 1, 2), (2, 0, 3, 0, 0))
        assert e.row_len == ((3, 2), (1, 4))
        assert machine_job_majors(e) == [[0, 3], [1, 2]]

    def test_fixture_against_brute_force(self, fixture4):
        vals, cols, origins, segs, L, assign = brute_cisr(fixture4, 2)
        assert assign == [0, 1, 1, 0]
        e = schedule_asap(pack(fixture4), 2)
        assert [list(v) for v in e.values] == vals
        assert [list(c) for c in e.col_idx] == cols
        assert [list(o) for o in e.provenance] == origins
        assert [list(s) for s in e.row_len] == segs

    def test_one_machine_concatenates(self, fixture4):
        e = schedule_asap(pack(fixture4), 1)
        assert e.values == ((1, 2, 3, 4, 5, 6, 7, 8),)
        assert e.padded_slots == 0
        assert e.row_len == ((3, 1, 2, 2),)

    def test_more_machines_than_rows(self):
        a = dense_from_triplets(2, 3, [(0, 0, 1), (0, 2, 2), (1, 1, 3)])
        e = schedule_asap(pack(a), 4)
        assert machine_job_majors(e) == [[0], [1], [], []]
        assert e.stream_length == 2
        assert e.provenance[2] == (None, None) and e.provenance[3] == (None, None)
        assert e.row_len == ((2,), (2,), (2,), (2,))

    def test_zero_machines(self, fixture4):
        with pytest.raises(ZeroMachines):
            schedule_asap(pack(fixture4), 0)

    def test_blocked_fixture(self, fixture4):
        e = schedule_asap(block(pack(fixture4), 2), 2)
        # round-robin over 5 blocks plus one zeroed block on machine 1
        assert e.stream_length == 6
        assert e.values == ((1, 2, 4, 0, 7, 8), (3, 0, 5, 6, 0, 0))
        assert e.row_blocks == (2, 1, 1, 1)
        assert e.block_factor == 2
        assert e.row_len is None


class TestValidate:
    def test_pack_schedule_valid(self):
        assert validate_spec(cisr_spec(4)).valid
        assert validate_spec(blocked_spec(2, 2)).valid

    def test_schedule_not_last(self):
        r = validate_spec(RepresentationSpec("x", (Schedule(Dim.ROWS, 2), Pack())))
        assert not r.valid
        assert any("not the last" in v for v in r.violations)

    def test_two_blocks(self):
        spec = RepresentationSpec("x", (Pack(), Block(Dim.COLUMNS, 2), Block(Dim.COLUMNS, 2), Schedule(Dim.BLOCKS, 2)))
        r = validate_spec(spec)
        assert not r.valid
        assert any("at most one block" in v for v in r.violations)

    @pytest.mark.parametrize("steps,fragment", [
        ((Pack(),), "exactly one schedule"),
        ((Schedule(Dim.ROWS, 2),), "exactly one pack"),
        ((Block(Dim.COLUMNS, 2), Pack(), Schedule(Dim.BLOCKS, 2)), "block precedes pack"),
        ((Pack(), Schedule(Dim.ROWS, 0)), "at least one machine"),
        ((Pack(), Block(Dim.COLUMNS, 0), Schedule(Dim.BLOCKS, 2)), "positive integer"),
        ((Pack(), Schedule(Dim.BLOCKS, 2)), "must be Rows"),
        ((Pack(), Block(Dim.COLUMNS, 2), Schedule(Dim.ROWS, 2)), "must be Blocks"),
        ((Pack(), Schedule(Dim.ROWS, 2, "LPT")), "policy"),
    ])
    def test_violations(self, steps, fragment):
        r = validate_spec(RepresentationSpec("x", steps))
        assert any(fragment in v for v in r.violations), r.violations

    def test_encode_rejects_invalid(self, fixture4):
        with pytest.raises(InvalidSpec):
            encode(fixture4, RepresentationSpec("x", (Schedule(Dim.ROWS, 2), Pack())))


class TestEncode:
    def test_cisr_four_machines(self, fixture4):
        e = encode(fixture4, cisr_spec(4))
        vals, cols, origins, segs, L, _ = brute_cisr(fixture4, 4)
        assert e.stream_length == L == 3
        assert [list(o) for o in e.provenance] == origins
        assert [list(s) for s in e.row_len] == segs

    def test_blocked_composes_pack_block_schedule(self, fixture4):
        e = encode(fixture4, blocked_spec(2, 2))
        assert e == schedule_asap(block(pack(fixture4), 2), 2, spec=blocked_spec(2, 2))

    @pytest.mark.parametrize("spec", [cisr_spec(3), blocked_spec(2, 3)])
    def test_all_zero(self, spec):
        e = encode(DenseMatrix.zeros(4, 5), spec)
        assert len({len(s) for s in e.values}) == 1
        assert all(o is None for s in e.provenance for o in s)

    def test_rows_pack_chain(self, fixture4):
        spec = RepresentationSpec("CISC", (Pack(Dim.ROWS, "row_idx", "col_len"), Schedule(Dim.COLUMNS, 2)))
        e = encode(fixture4, spec)
        assert e.nnz == 8
        # index stream holds row indices for a Rows pack
        for k in range(2):
            for o, idx in zip(e.provenance[k], e.col_idx[k]):
                if o is not None:
                    assert idx == o[0]

    def test_no_lengths_recorded(self, fixture4):
        spec = RepresentationSpec("idx-only", (Pack(Dim.COLUMNS, "col_idx", None), Schedule(Dim.ROWS, 2)))
        assert encode(fixture4, spec).row_len is None


class TestJson:
    @pytest.mark.parametrize("spec", [cisr_spec(2), blocked_spec(2, 2), cisr_spec(5)])
    def test_roundtrip(self, fixture4, spec):
        e = encode(fixture4, spec)
        back = EncodedMatrix.from_json(e.to_json())
        assert back == e
        assert back.to_json() == e.to_json()

    def test_float_bits_survive(self):
        a = random_sparse(9, 9, 0.5, 3, integer=False)
        e = encode(a, cisr_spec(3))
        back = EncodedMatrix.from_json(e.to_json())
        assert np.array_equal(back.values_array(), e.values_array())

    def test_layout(self, fixture4):
        d = encode(fixture4, cisr_spec(2)).to_dict()
        assert d["machines"] == 2 and d["stream_length"] == 5
        assert d["streams"][1]["provenance"][3] is None
        assert d["streams"][0]["provenance"][3] == [3, 1]
        assert d["streams"][1]["row_len"] == [1, 4]

    @pytest.mark.parametrize("text", [
        "[]",
        "{not json",
        '{"machines": 1}',
        '{"machines": 2, "stream_length": 1, "origin_dims": [1, 1], "streams": []}',
        '{"machines": 1, "stream_length": 2, "origin_dims": [1, 1], "streams": '
        '[{"values": [1.0], "col_idx": [0], "provenance": [[0, 0]]}]}',
    ])
    def test_schema_errors(self, text):
        with pytest.raises(SchemaError):
            EncodedMatrix.from_json(text)

    def test_golden_cisr(self, fixture4, golden):
        text = (golden / "fixture_cisr_m2.json").read_text()
        assert encode(fixture4, cisr_spec(2)) == EncodedMatrix.from_json(text)

    def test_golden_blocked(self, fixture4, golden):
        text = (golden / "fixture_blocked_k4_m2.json").read_text()
        assert encode(fixture4, blocked_spec(2, 2)) == EncodedMatrix.from_json(text)


# ---------------------------------------------------------------------------
# properties


@settings(max_examples=120, deadline=None)
@given(matrices, st.sampled_from([1, 2, 3, 4, 8]), st.booleans())
def test_conservation(a, m, blocked):
    e = encode(a, blocked_spec(2, m) if blocked else cisr_spec(m))
    real = [(o[0], o[1], e.values[k][p]) for k in range(m) for p, o in enumerate(e.provenance[k]) if o is not None]
    assert len(real) == a.nnz
    assert sorted(real) == sorted(a.triplets())
    for k in range(m):
        for p, o in enumerate(e.provenance[k]):
            if o is None:
                assert e.values[k][p] == 0.0


@settings(max_examples=120, deadline=None)
@given(matrices, st.sampled_from([1, 2, 3, 4, 8]))
def test_balance_and_brute_force(a, m):
    e = encode(a, cisr_spec(m))
    vals, cols, origins, segs, L, assign = brute_cisr(a, m)
    assert all(len(s) == e.stream_length for s in e.values)
    assert e.stream_length == L == max(brute_greedy(a.row_lengths(), m)[1])
    assert [list(o) for o in e.provenance] == origins
    assert [list(s) for s in e.row_len] == segs
    for k in range(m):
        assert sum(e.row_len[k]) == e.stream_length


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(0, 30), min_size=1, max_size=60), st.integers(1, 9))
def test_greedy_load_bound(lengths, m):
    n = len(lengths)
    cols = max(max(lengths), 1)
    a = dense_from_triplets(n, cols, [(i, j, 1.0) for i, ln in enumerate(lengths) for j in range(ln)])
    e = encode(a, cisr_spec(m))
    total = sum(lengths)
    if total:
        assert e.stream_length <= math.ceil(total / m) + max(lengths) - 1


@settings(max_examples=100, deadline=None)
@given(matrices, st.sampled_from([1, 2, 3, 4, 8]), st.sampled_from([1, 2, 3, 4]))
def test_blocks_schedule_round_robin(a, m, factor):
    b = block(pack(a), factor)
    e = schedule_asap(b, m)
    assign, _ = brute_greedy([factor] * len(b.blocks), m)
    assert assign == [q % m for q in range(len(b.blocks))]
    # block q sits on machine q % m at step q // m
    for q, (major, blk) in enumerate(zip(b.block_major, b.blocks)):
        k, t = q % m, q // m
        for u, slot in enumerate(blk):
            o = e.provenance[k][t * factor + u]
            assert o == (None if slot is None else (major, slot[0]))
