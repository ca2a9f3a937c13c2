"""Exact subfactor projections for Out(F_n): free factor arithmetic on
Stallings graphs, marked-graph machinery, projection distances, and
ping-pong certificates."""

from .words import Automorphism, Word, word_from_str, word_to_str
from .stallings import (
    FactorClass,
    StallingsGraph,
    apply_to_factor,
    factor_class,
    factor_from_strs,
    is_free_factor,
)
from .marked import MarkedGraph, rose, transformed
from .projection import (
    behrstock_check,
    classify_pair,
    factor_distance,
    farey_distance,
    joint_embedding,
    near_embedding,
    project_factor,
    project_graph,
)
from .complex_cn import (
    chain_progress_verify,
    cn_distance_bounds,
    cvertex,
    enumerate_cvertices,
    is_cn_edge,
    is_primitive,
    x_set,
)
from .irreducible import (
    PingPongSpec,
    build_pingpong,
    chain_windows,
    fill_check,
    pingpong_word,
    restriction,
    spec_from_pair,
    translate_xset,
    translation_estimate,
    window_xsets,
)

__all__ = [
    "Automorphism",
    "Word",
    "word_from_str",
    "word_to_str",
    "FactorClass",
    "StallingsGraph",
    "apply_to_factor",
    "factor_class",
    "factor_from_strs",
    "is_free_factor",
    "MarkedGraph",
    "rose",
    "transformed",
    "behrstock_check",
    "classify_pair",
    "factor_distance",
    "farey_distance",
    "joint_embedding",
    "near_embedding",
    "project_factor",
    "project_graph",
    "chain_progress_verify",
    "cn_distance_bounds",
    "cvertex",
    "enumerate_cvertices",
    "is_cn_edge",
    "is_primitive",
    "x_set",
    "PingPongSpec",
    "build_pingpong",
    "chain_windows",
    "fill_check",
    "pingpong_word",
    "restriction",
    "spec_from_pair",
    "translate_xset",
    "translation_estimate",
    "window_xsets",
]
