"""Signatures, linear controlled differential equations and selective state-space layers.

Paths are passed as (L+1, d) arrays of samples on the uniform grid over [0, 1];
they are shifted to start at the origin.
"""

from ._core import (
    Dataset,
    DomainError,
    OverflowError,
    ResourceError,
    brute_force_signature,
    build_signature_chain,
    gen_dataset,
    kernel_goursat,
    load_dataset,
    run_suite,
    s4_forward,
    s6_forward,
    sample_lecun,
    save_dataset,
    signature,
    solve_dense,
    solve_diagonal,
    tensor_size,
    train,
    word_index,
)

__all__ = [
    "Dataset",
    "DomainError",
    "OverflowError",
    "ResourceError",
    "brute_force_signature",
    "build_signature_chain",
    "gen_dataset",
    "kernel_goursat",
    "load_dataset",
    "run_suite",
    "s4_forward",
    "s6_forward",
    "sample_lecun",
    "save_dataset",
    "signature",
    "solve_dense",
    "solve_diagonal",
    "tensor_size",
    "train",
    "word_index",
]
