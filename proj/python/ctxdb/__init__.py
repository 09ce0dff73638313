"""KV-cache retrieval engine: attention-aware range search over stored contexts."""

from ._ctxdb import (
    DB,
    Error,
    GraphIndex,
    Session,
    alpha_to_beta,
    beta_to_alpha,
    build_graph,
    dipr_bruteforce,
    flat_topk,
    full_attention,
    plan,
    read_vector_file,
    recovery_ratio,
    sparse_attention,
    tokens_for_recovery,
    write_vector_file,
)

__all__ = [
    "DB",
    "Error",
    "GraphIndex",
    "Session",
    "alpha_to_beta",
    "beta_to_alpha",
    "build_graph",
    "dipr_bruteforce",
    "flat_topk",
    "full_attention",
    "plan",
    "read_vector_file",
    "recovery_ratio",
    "sparse_attention",
    "tokens_for_recovery",
    "write_vector_file",
]
