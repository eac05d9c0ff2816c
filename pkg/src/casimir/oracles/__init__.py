"""Max, top-K and exp oracles, dispatched on the topology of a potential table."""

from __future__ import annotations

from ..graph import PotentialTable
from .chain import (
    exp_oracle_chain,
    forward_backward,
    topk_oracle_chain,
    topk_oracle_from_list,
    topk_viterbi,
    viterbi,
)
from .generic import (
    MaxMarginals,
    bmmf_topk,
    branch_bound_topk,
    decode_from_max_marginals,
    exhaustive_max_marginals,
    exhaustive_provider,
    full_space,
    independent_bound,
    split_best_label,
    split_halve,
)
from .result import OracleResult, support_occupancy
from .tree import exp_oracle_tree, max_product_tree, sum_product_tree, topk_max_product_tree, topk_oracle_tree


def max_oracle(pot: PotentialTable) -> OracleResult:
    """Max score with the argmax as a weight-one support."""
    value, y = viterbi(pot) if pot.topology.kind == "chain" else max_product_tree(pot)
    return OracleResult(value=value, mode="support", support=((1.0, y),), scores=(value,))


def topk_list(pot: PotentialTable, K: int) -> list:
    return topk_viterbi(pot, K) if pot.topology.kind == "chain" else topk_max_product_tree(pot, K)


def topk_oracle(pot: PotentialTable, mu: float, K: int) -> OracleResult:
    return topk_oracle_from_list(topk_list(pot, K), mu)


def exp_oracle(pot: PotentialTable, mu: float) -> OracleResult:
    return exp_oracle_chain(pot, mu) if pot.topology.kind == "chain" else exp_oracle_tree(pot, mu)


__all__ = [
    "MaxMarginals",
    "OracleResult",
    "bmmf_topk",
    "branch_bound_topk",
    "decode_from_max_marginals",
    "exhaustive_max_marginals",
    "exhaustive_provider",
    "exp_oracle",
    "exp_oracle_chain",
    "exp_oracle_tree",
    "forward_backward",
    "full_space",
    "independent_bound",
    "max_oracle",
    "max_product_tree",
    "split_best_label",
    "split_halve",
    "sum_product_tree",
    "support_occupancy",
    "topk_list",
    "topk_max_product_tree",
    "topk_oracle",
    "topk_oracle_chain",
    "topk_oracle_tree",
    "topk_viterbi",
    "viterbi",
]
