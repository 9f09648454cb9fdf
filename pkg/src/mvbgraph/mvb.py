"""Multivariate Bernoulli likelihood algebra.

Subsets of the node set {1, ..., K} are encoded as integer bitmasks, bit
``i - 1`` standing for node ``i``.  An outcome pattern ``y`` in {0, 1}^K is
encoded the same way, so ``probs[mask]`` is the probability that exactly the
nodes in ``mask`` take the value 1.

Every quantity that depends on the natural parameters is computed on the full
lattice of 2^K outcome patterns.  Two transforms do the heavy lifting:

* the subset-sum (zeta) transform, ``S[w] = sum_{k subset of w} f[k]``;
* the superset-sum transform, ``mu[k] = sum_{w superset of k} P[w]``.

Both run in O(K 2^K) with one cumulative sum per node axis.  A truncated model
(max interaction order ``m < K``) keeps the same outcome space and simply
treats the dropped natural parameters as zero.
"""

from dataclasses import dataclass
from functools import cached_property
from math import comb

import numpy as np
from scipy.special import logsumexp

MAX_NODES = 20


def popcount(mask):
    return bin(int(mask)).count("1")


def subset_label(mask):
    """Render a subset as its 1-based, comma separated node list, e.g. ``"1,3"``."""
    mask = int(mask)
    return ",".join(str(i + 1) for i in range(mask.bit_length()) if mask >> i & 1)


def parse_subset(label):
    mask = 0
    for tok in str(label).split(","):
        node = int(tok)
        if node < 1:
            raise ValueError(f"node labels are 1-based, got {tok!r} in {label!r}")
        mask |= 1 << (node - 1)
    if mask == 0:
        raise ValueError("empty subset")
    return mask


def enumerate_subsets(K, m=None):
    """Canonical ordering of the nonempty subsets of {1..K} with size <= m.

    Subsets are grouped by cardinality, ascending, and sorted by mask within a
    cardinality level.

    >>> [subset_label(s) for s in enumerate_subsets(2)]
    ['1', '2', '1,2']
    """
    if m is None:
        m = K
    if not 1 <= K <= MAX_NODES:
        raise ValueError(f"K must be in [1, {MAX_NODES}], got {K}")
    if not 1 <= m <= K:
        raise ValueError(f"m must be in [1, K={K}], got {m}")
    masks = np.arange(1, 1 << K, dtype=np.int64)
    sizes = np.array([popcount(s) for s in masks])
    keep = sizes <= m
    order = np.lexsort((masks[keep], sizes[keep]))
    return masks[keep][order]


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions of an MVB model: ``K`` nodes, ``p`` features, order cap ``m``."""

    K: int
    p: int = 0
    m: int = None

    def __post_init__(self):
        if self.m is None:
            object.__setattr__(self, "m", self.K)
        if self.p < 0:
            raise ValueError(f"p must be nonnegative, got {self.p}")
        if not 1 <= self.K <= MAX_NODES:
            raise ValueError(f"K must be in [1, {MAX_NODES}], got {self.K}")
        if not 1 <= self.m <= self.K:
            raise ValueError(f"m must be in [1, K={self.K}], got {self.m}")

    @cached_property
    def masks(self):
        return enumerate_subsets(self.K, self.m)

    @property
    def q(self):
        return sum(comb(self.K, k) for k in range(1, self.m + 1))

    @property
    def n_outcomes(self):
        return 1 << self.K

    @property
    def block_size(self):
        return self.p + 1

    @property
    def n_coef(self):
        return self.q * (self.p + 1)

    @property
    def full(self):
        return self.m == self.K

    @cached_property
    def position(self):
        """Map from subset mask to its position in the canonical order."""
        return {int(s): i for i, s in enumerate(self.masks)}

    @cached_property
    def orders(self):
        return np.array([popcount(s) for s in self.masks])

    @cached_property
    def labels(self):
        return [subset_label(s) for s in self.masks]


def _config_for(f, config):
    if config is not None:
        if np.shape(f)[-1] != config.q:
            raise ValueError(f"expected {config.q} natural parameters, got {np.shape(f)[-1]}")
        return config
    q = np.shape(f)[-1]
    K = int(q + 1).bit_length() - 1
    if (1 << K) - 1 != q:
        raise ValueError(f"cannot infer K from {q} parameters; pass a ModelConfig")
    return ModelConfig(K)


def _lattice_axes(a, K):
    lead = a.shape[:-1]
    return a.reshape(lead + (2,) * K), range(len(lead), len(lead) + K), lead


def subset_sum(a, K):
    """Zeta transform over the last axis: ``out[w] = sum_{k subset of w} a[k]``."""
    a, axes, lead = _lattice_axes(np.asarray(a, dtype=float), K)
    for ax in axes:
        a = np.cumsum(a, axis=ax)
    return a.reshape(lead + (1 << K,))


def superset_sum(a, K):
    """``out[k] = sum_{w superset of k} a[w]`` over the last axis."""
    a, axes, lead = _lattice_axes(np.asarray(a, dtype=float), K)
    for ax in axes:
        a = np.flip(np.cumsum(np.flip(a, axis=ax), axis=ax), axis=ax)
    return a.reshape(lead + (1 << K,))


def moebius(a, K):
    """Inverse of :func:`subset_sum`."""
    a, axes, lead = _lattice_axes(np.asarray(a, dtype=float), K)
    for ax in axes:
        a = np.diff(a, axis=ax, prepend=0.0)
    return a.reshape(lead + (1 << K,))


def embed(f, config):
    """Scatter ``(..., q)`` parameters onto the ``(..., 2^K)`` lattice, zeros elsewhere."""
    f = np.asarray(f, dtype=float)
    out = np.zeros(f.shape[:-1] + (config.n_outcomes,))
    out[..., config.masks] = f
    return out


def augment_response(y, config=None):
    """Augmented response ``y^w = prod_{i in w} y_i`` for every enumerated ``w``.

    Accepts a single K-vector or an ``(n, K)`` array.
    """
    y = np.asarray(y)
    if config is None:
        config = ModelConfig(y.shape[-1])
    if y.shape[-1] != config.K:
        raise ValueError(f"expected {config.K} responses, got {y.shape[-1]}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("responses must be binary (0/1)")
    pattern = y.astype(np.int64) @ (1 << np.arange(config.K, dtype=np.int64))
    pattern = np.asarray(pattern)[..., None]
    return ((pattern & config.masks) == config.masks).astype(float)


def pattern_of(y):
    """Bitmask of the nodes that are 1 in each row of ``y``."""
    y = np.asarray(y, dtype=np.int64)
    return y @ (1 << np.arange(y.shape[-1], dtype=np.int64))


def outcomes(K):
    """All 2^K binary outcome rows, row ``mask`` having ``y_i = 1`` for bits set in ``mask``."""
    masks = np.arange(1 << K)
    return (masks[:, None] >> np.arange(K) & 1).astype(np.int64)


def linear_predictor(c, x, config):
    """Natural parameters ``f^w(x) = c_0^w + sum_j c_j^w x_j``.

    ``c`` may be the flat coefficient vector of length ``q (p+1)`` or the
    ``(q, p+1)`` block array; ``x`` a p-vector or an ``(n, p)`` matrix.
    """
    C = as_blocks(c, config)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != config.p:
        raise ValueError(f"expected {config.p} features, got {x.shape[-1]}")
    return C[:, 0] + x @ C[:, 1:].T


def as_blocks(c, config):
    c = np.asarray(c, dtype=float)
    if c.shape == (config.q, config.p + 1):
        return c
    if c.ndim == 1 and c.size == config.n_coef:
        return c.reshape(config.q, config.p + 1)
    raise ValueError(
        f"coefficient shape {c.shape} does not match q={config.q}, p={config.p}"
    )


def s_values(f, config=None):
    """``S^w = sum_{k subset of w} f^k`` for every enumerated ``w``."""
    config = _config_for(f, config)
    return subset_sum(embed(f, config), config.K)[..., config.masks]


def _log_weights(f, config):
    # S over every outcome pattern, S[empty] = 0
    return subset_sum(embed(f, config), config.K)


def log_partition(f, config=None):
    """``b(f) = log(1 + sum_w exp(S^w))``, summed over all 2^K - 1 nonempty patterns."""
    config = _config_for(f, config)
    return logsumexp(_log_weights(f, config), axis=-1)


def log_prob_table(f, config=None):
    """Log probability of every outcome pattern, shape ``(..., 2^K)``."""
    config = _config_for(f, config)
    S = _log_weights(f, config)
    return S - logsumexp(S, axis=-1, keepdims=True)


def log_prob(y, f, config=None):
    config = _config_for(f, config)
    Y = augment_response(y, config)
    return np.sum(Y * f, axis=-1) - log_partition(f, config)


def moments(f, config=None):
    """Return ``(b, m)`` where ``m[..., k] = E[y^k]`` over the full 2^K lattice."""
    config = _config_for(f, config)
    S = _log_weights(f, config)
    b = logsumexp(S, axis=-1)
    P = np.exp(S - b[..., None])
    return b, superset_sum(P, config.K)


def mean_mu(f, config=None):
    """Mean of the augmented response, which is also the gradient of ``b``."""
    config = _config_for(f, config)
    return moments(f, config)[1][..., config.masks]


def covariance_w(f, config=None):
    """Covariance of the augmented response (Hessian of ``b``), shape ``(..., q, q)``.

    Uses ``E[y^a y^b] = E[y^(a | b)]``.
    """
    config = _config_for(f, config)
    m_full = moments(f, config)[1]
    masks = config.masks
    mu = m_full[..., masks]
    joint = m_full[..., masks[:, None] | masks[None, :]]
    return joint - mu[..., :, None] * mu[..., None, :]


def mvb_from_table(probs, config=None):
    """Natural parameters from a table of 2^K outcome probabilities.

    Each ``f^w`` is the alternating (odd/even) sum of log-probabilities of the
    patterns inside ``w``, i.e. the Moebius inversion of the log table.
    """
    probs = np.asarray(probs, dtype=float)
    K = int(probs.shape[-1]).bit_length() - 1
    if probs.shape[-1] != 1 << K:
        raise ValueError(f"table length {probs.shape[-1]} is not a power of two")
    if np.any(~np.isfinite(probs)) or np.any(probs <= 0):
        raise ValueError("probabilities must be strictly positive")
    if np.any(np.abs(probs.sum(axis=-1) - 1.0) > 1e-9):
        raise ValueError("probabilities must sum to 1")
    config = config or ModelConfig(K)
    if config.K != K or not config.full:
        raise ValueError("a probability table determines the full (m = K) model")
    return moebius(np.log(probs), K)[..., config.masks]


@dataclass
class PotentialTable:
    """Single-clique potential over all 2^K patterns, ``values[0] == 1``.

    ``log_normalizer`` is ``log Z`` when known (set by :func:`gm_from_mvb`).
    """

    values: np.ndarray
    log_normalizer: float = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = self.values.shape[-1]
        if n < 2 or n & (n - 1):
            raise ValueError(f"potential table length {n} is not a power of two")
        if np.any(~np.isfinite(self.values)) or np.any(self.values <= 0):
            raise ValueError("potentials must be strictly positive")
        if not np.allclose(self.values[..., 0], 1.0, rtol=0, atol=1e-12):
            raise ValueError("the all-zeros potential must equal 1")

    @property
    def K(self):
        return self.values.shape[-1].bit_length() - 1

    def probabilities(self):
        return self.values / self.values.sum(axis=-1, keepdims=True)


def mvb_from_gm(potentials):
    """Conditional log odds ratios from a graphical-model potential table."""
    if not isinstance(potentials, PotentialTable):
        potentials = PotentialTable(potentials)
    K = potentials.K
    config = ModelConfig(K)
    return moebius(np.log(potentials.values), K)[..., config.masks]


def gm_from_mvb(f, config=None):
    """Single-clique potentials ``Phi(w) = exp(S^w)`` with ``Z = exp(b(f))``."""
    config = _config_for(f, config)
    if not config.full:
        raise ValueError("potential table conversion requires the full model (m = K)")
    S = _log_weights(f, config)
    return PotentialTable(np.exp(S), log_normalizer=logsumexp(S, axis=-1))
