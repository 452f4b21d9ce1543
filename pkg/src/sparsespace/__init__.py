"""Sparse matrices as chains of invertible transformations, with inverse
index maps, streaming decoders and functional simulation of values-driven
spatial SpMV designs."""

from .designs import (
    BlockedDesignParams,
    CisrDesignParams,
    DesignDescriptor,
    build_graph,
    descriptor,
    design_blocked_spmv,
    design_cisr_spmv,
    simulate,
)
from .dataflow import PipelineGraph, Trace, run, stats
from .inverse import (
    InverseMap,
    build_inverse_map,
    check_roundtrip,
    decode,
    forward_map,
    streaming_block_decoder,
    streaming_row_decoder,
    verify_integrity,
)
from .matrix import (
    DenseMatrix,
    dense_from_triplets,
    parse_matrix_market,
    random_sparse,
    serialize_matrix_market,
    spmv_oracle,
)
from .reduction import (
    PartialSum,
    check_continuous,
    check_distinct,
    combine_maybe_different,
    combine_same_target,
    fused_accumulator,
    isolate_reduction,
    linear_array_reduce,
    tree_reduce,
)
from .transform import (
    Block,
    Dim,
    EncodedMatrix,
    Pack,
    RepresentationSpec,
    Schedule,
    block,
    blocked_spec,
    cisr_spec,
    encode,
    pack,
    schedule_asap,
    validate_spec,
)

__version__ = "0.1.0"
