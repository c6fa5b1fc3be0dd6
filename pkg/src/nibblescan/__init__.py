"""
nibblescan - 4-bit product quantization with in-register fast scan.

Product-quantized nearest-neighbor search where each code is a nibble, each
query table is quantized to bytes and a whole block of 32 vectors is scored
with byte shuffles.
"""

import logging

logging.getLogger("nibblescan").addHandler(logging.NullHandler())

__version__ = "0.1.0"

# Datasets
from nibblescan.dataset import (
    gen_dataset,
    gen_latent,
    gen_synthetic,
    gen_vectors,
    ground_truth,
    read_bvecs,
    read_fvecs,
    read_ivecs,
    recall_at,
    recall_at_1,
    write_bvecs,
    write_fvecs,
    write_ivecs,
)

# Quantizers
from nibblescan.kmeans import KMeansResult, assign, assign_batch, kmeans, train_kmeans
from nibblescan.pq import (
    Codebook,
    adc_scan,
    build_lut,
    decode,
    encode,
    encode_batch,
    train_pq,
)

# Fast scan
from nibblescan.fastscan import (
    PackedCodeBlocks,
    QuantizedLUT,
    Reg32,
    block_accumulate,
    fastscan_search,
    lane_pair_shuffle,
    movemask32,
    pack_codes,
    quantize_lut,
    unpack_codes,
)
from nibblescan.kernels import BACKEND_ENV_VAR, active_backend, available_backends

# Inverted index
from nibblescan.ivf import CoarseQuantizer, FlatCoarseQuantizer, IVFIndex, load, save, train_ivf

# Parameters
from nibblescan.params import IndexParams, KMeansParams, SearchParams, SyntheticSpec

# Errors
from nibblescan.errors import (
    ArgumentError,
    CorruptionError,
    EvaluationError,
    FormatError,
    NibblescanError,
    PropertyError,
    UsageError,
)

# Core types
from nibblescan._types import (
    GroundTruth,
    LUTf,
    Neighbor,
    PQCodes,
    SearchEvent,
    SearchResult,
    VectorSet,
)

# Define public API
__all__ = [
    # Datasets
    "read_fvecs",
    "read_ivecs",
    "read_bvecs",
    "write_fvecs",
    "write_ivecs",
    "write_bvecs",
    "gen_synthetic",
    "gen_latent",
    "gen_vectors",
    "gen_dataset",
    "ground_truth",
    "recall_at",
    "recall_at_1",
    # Quantizers
    "kmeans",
    "train_kmeans",
    "KMeansResult",
    "assign",
    "assign_batch",
    "Codebook",
    "train_pq",
    "encode",
    "encode_batch",
    "decode",
    "build_lut",
    "adc_scan",
    # Fast scan
    "QuantizedLUT",
    "PackedCodeBlocks",
    "Reg32",
    "quantize_lut",
    "pack_codes",
    "unpack_codes",
    "lane_pair_shuffle",
    "movemask32",
    "block_accumulate",
    "fastscan_search",
    "available_backends",
    "active_backend",
    "BACKEND_ENV_VAR",
    # Inverted index
    "IVFIndex",
    "CoarseQuantizer",
    "FlatCoarseQuantizer",
    "train_ivf",
    "save",
    "load",
    # Parameters
    "KMeansParams",
    "SearchParams",
    "IndexParams",
    "SyntheticSpec",
    # Errors
    "NibblescanError",
    "ArgumentError",
    "UsageError",
    "FormatError",
    "CorruptionError",
    "EvaluationError",
    "PropertyError",
    # Types
    "VectorSet",
    "GroundTruth",
    "PQCodes",
    "LUTf",
    "Neighbor",
    "SearchResult",
    "SearchEvent",
]
