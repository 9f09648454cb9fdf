"""Hierarchical overlapping group penalty on the subset lattice.

There is one group per enumerated subset ``v``; it collects every block
``c^w`` with ``v`` a subset of ``w``.  Groups are stored in a flat
"membership pair" layout: pair ``k`` says that block ``pair_member[k]``
belongs to group ``pair_group[k]``.  Dual variables for the penalty live on
the same layout, one ``(p+1)``-row per pair.
"""

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np

from .mvb import ModelConfig, as_blocks, subset_label


@dataclass(frozen=True, eq=False)
class GroupStructure:
    config: ModelConfig
    weights: np.ndarray
    penalize_intercept: bool = True

    @property
    def roots(self):
        return self.config.masks

    @property
    def n_groups(self):
        return len(self.config.masks)

    @cached_property
    def membership(self):
        """Boolean ``(n_groups, q)`` table: ``membership[v, w]`` iff ``v`` subset of ``w``."""
        m = self.config.masks
        return (m[:, None] & m[None, :]) == m[:, None]

    @cached_property
    def pair_group(self):
        return np.nonzero(self.membership)[0]

    @cached_property
    def pair_member(self):
        return np.nonzero(self.membership)[1].astype(np.int64)

    @cached_property
    def sizes(self):
        return self.membership.sum(axis=1)

    @cached_property
    def coverage(self):
        """Number of groups containing each block."""
        return self.membership.sum(axis=0)

    @cached_property
    def gptr(self):
        """Offsets of each group's run of pairs (pairs are stored group-major)."""
        return np.concatenate([[0], np.cumsum(self.sizes)]).astype(np.int64)

    @cached_property
    def column_mask(self):
        """Coefficient columns that the penalty acts on."""
        mask = np.ones(self.config.p + 1, dtype=bool)
        mask[0] = self.penalize_intercept
        return mask

    def members(self, v):
        """Masks of the blocks in the group rooted at subset ``v``."""
        i = self.config.position[int(v)]
        return self.config.masks[self.membership[i]]

    def describe(self):
        lines = []
        for i, v in enumerate(self.config.masks):
            members = " ".join("{" + subset_label(w) + "}" for w in self.members(v))
            lines.append(f"{{{subset_label(v)}}}\tweight={self.weights[i]:.12g}\tmembers={members}")
        return "\n".join(lines)


def build_groups(config, weights=None, penalize_intercept=True):
    """Groups rooted at each enumerated subset, default weight ``1 / |T_v|``."""
    m = config.masks
    sizes = ((m[:, None] & m[None, :]) == m[:, None]).sum(axis=1)
    if weights is None:
        weights = 1.0 / sizes
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (config.q,) or np.any(weights <= 0):
        raise ValueError("weights must be positive, one per enumerated subset")
    return GroupStructure(config, weights, penalize_intercept)


def block_norms(c, config):
    return np.linalg.norm(as_blocks(c, config), axis=1)


def group_norms(c, groups):
    C = as_blocks(c, groups.config)[:, groups.column_mask]
    return np.sqrt(groups.membership @ np.sum(C * C, axis=1))


def penalty_value(c, groups):
    """``J(c) = sum_v p_v ||c^{T_v}||``."""
    return float(groups.weights @ group_norms(c, groups))


@dataclass
class RecoveredStructure:
    nonzero_subsets: list = field(default_factory=list)
    edges: list = field(default_factory=list)
    maximal_cliques: list = field(default_factory=list)

    def edge_labels(self):
        return [f"{s},{t}" for s, t in self.edges]


def _nodes(mask):
    return [i + 1 for i in range(int(mask).bit_length()) if mask >> i & 1]


def recovered_structure(c, config, tol=1e-6):
    """Nonzero blocks, the induced edges, and the maximal nonzero subsets.

    An edge ``{s, t}`` is present when some nonzero block contains both nodes.
    Maximal cliques are the inclusion-maximal nonzero subsets, which are the
    cliques of the single-potential factorization the fit implies.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    norms = block_norms(c, config)
    nonzero = [int(w) for w, r in zip(config.masks, norms) if r > tol]
    edges = set()
    for w in nonzero:
        edges.update(combinations(_nodes(w), 2))
    maximal = [w for w in nonzero if not any(u != w and u & w == w for u in nonzero)]
    return RecoveredStructure(nonzero, sorted(edges), sorted(maximal, key=lambda w: (bin(w).count("1"), w)))


def hierarchy_violations(c, config, tol=1e-6):
    """Pairs ``(w1, w2)``, ``w1`` a proper subset of ``w2``, with block ``w1`` zero but ``w2`` not."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    norms = block_norms(c, config)
    masks = config.masks
    zero = masks[norms <= tol]
    live = masks[norms > tol]
    out = []
    for w1 in zero:
        for w2 in live:
            if w2 != w1 and w2 & w1 == w1:
                out.append((int(w1), int(w2)))
    return out
