"""Episodic conversational memory engine (C++ core bindings)."""

from ._epimem import (  # noqa: F401
    bleu1,
    build_memory,
    cluster_vectors,
    compare_temporal,
    cosine,
    count_tokens,
    mean_silhouette,
    parse_temporal,
    query_store,
    resolve_relative_date,
    rouge1,
    rougeL,
    topk_bm25,
    topk_dense,
    unify_category,
)

__all__ = [
    "bleu1",
    "build_memory",
    "cluster_vectors",
    "compare_temporal",
    "cosine",
    "count_tokens",
    "mean_silhouette",
    "parse_temporal",
    "query_store",
    "resolve_relative_date",
    "rouge1",
    "rougeL",
    "topk_bm25",
    "topk_dense",
    "unify_category",
]
