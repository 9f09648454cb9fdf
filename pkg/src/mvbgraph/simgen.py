"""Synthetic graph models and recovery scoring.

Four benchmark structures are provided:

* Model 1 (K=4): triangle {1,2,3} with its third-order term, plus edge {3,4}.
* Model 2 (K=6): Model 1 plus an independent pair {5,6}.
* Model 3 (K=8): Model 1, a bridge {4,5}, and a full 4-clique on {5,6,7,8}.
* Model 4 (K=10): the {1,2,3} triangle, edge {3,4}, all pairs within
  {4,...,8}; nodes 9 and 10 isolated.

Coefficients follow the usual benchmark protocol: feature weights uniform on
the integers -5..5, intercept 1 for main effects and 2 for interactions.
Responses are drawn exactly by inverse CDF over the 2^K outcome patterns.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .data import Dataset
from .mvb import ModelConfig, linear_predictor, log_prob_table, outcomes, parse_subset
from .penalty import block_norms

MAX_SAMPLING_NODES = 12


def _subsets(*labels):
    return {parse_subset(lab) for lab in labels}


def _mains(K):
    return {1 << i for i in range(K)}


def _clique(nodes, orders):
    out = set()
    for r in orders:
        for combo in combinations(nodes, r):
            out.add(sum(1 << (i - 1) for i in combo))
    return out


def hereditary_closure(masks):
    out = set()
    for w in masks:
        sub = w
        while sub:
            out.add(sub)
            sub = (sub - 1) & w
    return out


def is_hereditary(masks):
    masks = set(masks)
    return hereditary_closure(masks) == masks


@dataclass
class TrueModel:
    config: ModelConfig
    nonzero: frozenset
    coef: np.ndarray = None

    def __post_init__(self):
        self.nonzero = frozenset(int(w) for w in self.nonzero)
        bad = [w for w in self.nonzero if w not in self.config.position]
        if bad:
            raise ValueError(f"subsets {bad} are outside the model's enumeration")

    @property
    def interactions(self):
        return sorted((w for w in self.nonzero if bin(w).count("1") >= 2),
                      key=lambda w: self.config.position[w])


def model_spec(model_id, p=5):
    """Nonzero-subset skeleton of benchmark Model ``model_id`` (1 to 4)."""
    if model_id == 1:
        K, nz = 4, _mains(4) | _subsets("1,2", "1,3", "2,3", "1,2,3", "3,4")
    elif model_id == 2:
        K = 6
        nz = model_spec(1).nonzero | _mains(6) | _subsets("5,6")
    elif model_id == 3:
        K = 8
        nz = (_mains(8) | _subsets("1,2", "1,3", "2,3", "1,2,3", "3,4", "4,5")
              | _clique((5, 6, 7, 8), (2, 3, 4)))
    elif model_id == 4:
        K = 10
        nz = (_mains(10) | _subsets("1,2", "1,3", "2,3", "1,2,3", "3,4")
              | _clique((4, 5, 6, 7, 8), (2,)))
    else:
        raise ValueError(f"model id must be 1, 2, 3 or 4, got {model_id!r}")
    return TrueModel(ModelConfig(K, p), nz)


def sample_true_model(skeleton, rng, p=None, low=-5, high=5):
    """Draw coefficients for every nonzero subset of ``skeleton``.

    Blocks are filled in canonical subset order; each gets ``p`` integer
    weights uniform on ``low..high``.
    """
    rng = np.random.default_rng(rng)
    config = skeleton.config if p is None else ModelConfig(skeleton.config.K, p, skeleton.config.m)
    C = np.zeros((config.q, config.p + 1))
    for i, w in enumerate(config.masks):
        if int(w) in skeleton.nonzero:
            C[i, 0] = 1.0 if bin(int(w)).count("1") == 1 else 2.0
            C[i, 1:] = rng.integers(low, high + 1, size=config.p)
    return TrueModel(config, skeleton.nonzero, C)


def sample_responses(F, config, rng):
    """Draw one outcome per row of natural parameters ``F`` by inverse CDF."""
    if config.K > MAX_SAMPLING_NODES:
        raise ValueError(f"exact sampling supports K <= {MAX_SAMPLING_NODES}")
    rng = np.random.default_rng(rng)
    P = np.exp(log_prob_table(F, config))
    cdf = np.cumsum(P, axis=-1)
    u = rng.random(P.shape[:-1]) * cdf[..., -1]
    idx = np.minimum((cdf < u[..., None]).sum(axis=-1), config.n_outcomes - 1)
    return outcomes(config.K)[idx]


def sample_dataset(truth, n, rng):
    """``n`` rows with standard normal features and exactly sampled responses."""
    rng = np.random.default_rng(rng)
    config = truth.config
    x = rng.standard_normal((n, config.p))
    F = linear_predictor(truth.coef, x, config)
    return Dataset(x, sample_responses(F, config, rng))


def simulate(model_id, n, seed, p=5):
    """Truth and dataset for one replication; fully determined by ``(model_id, n, seed)``."""
    rng = np.random.default_rng(seed)
    truth = sample_true_model(model_spec(model_id, p), rng)
    return truth, sample_dataset(truth, n, rng)


@dataclass
class RecoveryMetrics:
    recovered: dict = field(default_factory=dict)
    tp: int = 0
    fp: int = 0
    n_true: int = 0
    main_tp: int = 0
    main_true: int = 0

    @property
    def tpr(self):
        return self.tp / self.n_true if self.n_true else 1.0

    @property
    def misses(self):
        return self.n_true - self.tp


def evaluate_recovery(coef, truth, tol=1e-6, config=None):
    """Score a fitted coefficient array against the generating model.

    ``tp``/``n_true``/``tpr`` cover interactions only (main effects are
    reported separately in ``main_tp``); ``fp`` counts every recovered subset
    that the truth lacks.
    """
    config = config or truth.config
    if config.K != truth.config.K or not np.array_equal(config.masks, truth.config.masks):
        raise ValueError("fit and truth use different subset enumerations")
    norms = block_norms(coef, config)
    out = RecoveryMetrics()
    for w, r in zip(config.masks, norms):
        w = int(w)
        hit = bool(r > tol)
        out.recovered[w] = hit
        main = bin(w).count("1") == 1
        if w in truth.nonzero:
            if main:
                out.main_true += 1
                out.main_tp += hit
            else:
                out.n_true += 1
                out.tp += hit
        elif hit:
            out.fp += 1
    return out
