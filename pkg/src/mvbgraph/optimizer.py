"""Penalized MVB likelihood fitting by proximal linearization.

Each outer step linearizes the negative log-likelihood around ``c_k`` and
solves

    min_c  <g_k, c - c_k> + (alpha_k / 2) ||c - c_k||^2 + lam * J(c)

through its dual.  Writing ``z = sum_v s_v`` for dual vectors ``s_v`` living
in the ball of radius ``lam * p_v`` on the coordinates of group ``T_v``, the
primal minimizer is ``c~ = c_k - (g_k + z) / alpha_k`` and the dual objective
is

    eta(S) = -||g_k + z||^2 / (2 alpha_k) + <z, c_k>.

The dual is maximized by accelerated projected gradient with adaptive
restart.  For a primal candidate ``c'`` the duality gap reduces to

    gap(c') = lam J(c') - <z, c'> + (alpha_k / 2) ||c' - c~||^2,

which is a certificate on the subproblem suboptimality of ``c'``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .mvb import ModelConfig, as_blocks, log_partition, moments
from ._kernels import dual_ascent
from .penalty import build_groups, group_norms, penalty_value

log = logging.getLogger(__name__)

# dual-interior margin used to propose exactly-zero groups
_INTERIOR = 1e-7


@dataclass
class FitOptions:
    alpha0: float = 1.0
    alpha_min: float = 1e-8
    alpha_max: float = 1e8
    zeta: float = 2.0
    tol: float = None
    max_outer: int = 500
    inner_tol: float = None
    inner_max: int = 5000

    def __post_init__(self):
        if not 0 < self.alpha_min <= self.alpha0 <= self.alpha_max:
            raise ValueError("need 0 < alpha_min <= alpha0 <= alpha_max")
        if self.zeta <= 1:
            raise ValueError("zeta must exceed 1")
        if self.tol is not None and self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.inner_tol is not None and self.inner_tol <= 0:
            raise ValueError("inner_tol must be positive")

    def tolerances(self, objective):
        """Absolute (outer, inner) tolerances for a starting objective value."""
        scale = 1.0 + abs(objective)
        tol = self.tol if self.tol is not None else 1e-8 * scale
        inner = self.inner_tol if self.inner_tol is not None else 1e-9 * scale
        return tol, inner


@dataclass
class ProxResult:
    d: np.ndarray
    duals: np.ndarray
    gap: float
    iterations: int
    converged: bool


@dataclass
class Trial:
    """One solve of the proximal subproblem inside the outer loop."""

    outer: int
    alpha: float
    delta: float
    step_cubed: float
    accepted: bool
    inner_iterations: int
    gap: float
    confirming: bool = False


@dataclass
class FitResult:
    coef: np.ndarray
    lam: float
    config: ModelConfig
    objective_trace: list = field(default_factory=list)
    converged: bool = False
    inner_stats: list = field(default_factory=list)
    trials: list = field(default_factory=list)
    duals: np.ndarray = None

    @property
    def objective(self):
        return self.objective_trace[-1]

    @property
    def n_outer(self):
        return len(self.objective_trace) - 1

    @property
    def coef_vector(self):
        return self.coef.ravel()


class MVBLoss:
    """Negative log-likelihood ``sum_i -Y(i)'f(x(i)) + b(f(x(i)))`` as a function of ``c``.

    ``y_aug`` overrides the augmented responses; used for perturbation studies.
    """

    def __init__(self, data, config, y_aug=None):
        if data.K != config.K or data.p != config.p:
            raise ValueError(
                f"data has K={data.K}, p={data.p} but model has K={config.K}, p={config.p}"
            )
        self.config = config
        self.design = data.design
        self.Y = data.augmented(config) if y_aug is None else np.asarray(y_aug, dtype=float)
        if self.Y.shape != (data.n, config.q):
            raise ValueError("augmented responses have the wrong shape")

    def predictor(self, C):
        return self.design @ as_blocks(C, self.config).T

    def value(self, C):
        F = self.predictor(C)
        return float(np.sum(log_partition(F, self.config)) - np.sum(self.Y * F))

    def value_and_grad(self, C):
        F = self.predictor(C)
        b, m_full = moments(F, self.config)
        mu = m_full[:, self.config.masks]
        val = float(np.sum(b) - np.sum(self.Y * F))
        return val, (mu - self.Y).T @ self.design


def neg_log_lik(c, data, config=None):
    config = config or data.config()
    return MVBLoss(data, config).value(as_blocks(c, config))


def grad_neg_log_lik(c, data, config=None):
    """Gradient in block layout ``(q, p+1)``: ``sum_i (mu^w(i) - y^w(i)) x_j(i)``."""
    config = config or data.config()
    return MVBLoss(data, config).value_and_grad(as_blocks(c, config))[1]


def solve_prox(c_k, g_k, alpha, lam, groups, inner_tol=1e-10, inner_max=5000, duals=None):
    """Solve one proximal linearization subproblem through its dual.

    Returns the step ``d = c~ - c_k`` in block layout, the dual vectors in the
    membership-pair layout of ``groups``, and the certified duality gap.  When
    the dual solution leaves whole groups strictly inside their balls, those
    groups are set exactly to zero provided the gap certificate still holds.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    config = groups.config
    Ck = np.ascontiguousarray(as_blocks(c_k, config))
    G = np.ascontiguousarray(as_blocks(g_k, config))
    u = Ck - G / alpha
    shape = (len(groups.pair_member), config.p + 1)
    if lam == 0:
        return ProxResult(-G / alpha, np.zeros(shape), 0.0, 0, True)

    cols = groups.column_mask
    S = np.zeros(shape) if duals is None else np.array(duals, dtype=float)
    if S.shape != shape:
        raise ValueError(f"dual warm start has shape {S.shape}, expected {shape}")
    S[:, ~cols] = 0.0
    radius = lam * groups.weights
    # step 1/L: the dual coupling sum_v s_v has Gram matrix diag(coverage)
    step = alpha / groups.coverage.max()
    tiny = 1e-12 * (1.0 + np.abs(u).max())
    c, gap, S, it = dual_ascent(
        u, Ck, G, S, float(alpha), radius, groups.gptr, groups.pair_member, cols,
        step, float(inner_tol), int(inner_max), _INTERIOR, tiny,
    )
    if it == 0:
        c, gap = u, np.inf
    return ProxResult(c - Ck, S, float(gap), int(it), bool(gap <= inner_tol))


def proximal_linearization(loss, groups, lam, c0, opts=None):
    """Outer loop of proximal linearization with insufficient-decrease backtracking.

    ``loss`` must expose ``value(C)`` and ``value_and_grad(C)`` on ``(q, p+1)``
    block arrays.  A trial step ``d`` is accepted once the decrease
    ``delta = I(c) - I(c + d)`` is at least ``||d||^3``; otherwise ``alpha``
    grows by ``zeta`` and the subproblem is solved again.  After acceptance
    ``alpha`` shrinks by ``zeta``.  The loop stops when the accepted decrease
    falls below ``tol`` twice in a row, the second time for a step taken at
    ``zeta`` times the previous ``alpha``.
    """
    opts = opts or FitOptions()
    config = groups.config
    C = np.array(as_blocks(c0, config), dtype=float)
    f, g = loss.value_and_grad(C)
    obj = f + lam * penalty_value(C, groups)
    if not np.isfinite(obj):
        raise FloatingPointError("objective is not finite at the starting point")
    tol, inner_tol = opts.tolerances(obj)

    result = FitResult(C, lam, config, objective_trace=[obj])
    alpha = min(max(opts.alpha0, opts.alpha_min), opts.alpha_max)
    duals = None
    # a small decrease only ends the loop once a step at zeta * alpha confirms it;
    # steps taken with alpha just below the curvature can stall without converging
    confirming = False
    for k in range(opts.max_outer):
        while True:
            pr = solve_prox(C, g, alpha, lam, groups, inner_tol, opts.inner_max, duals)
            trial = C + pr.d
            new_obj = loss.value(trial) + lam * penalty_value(trial, groups)
            if np.isnan(new_obj):
                raise FloatingPointError("objective became NaN; check data scaling")
            delta = obj - new_obj
            step_cubed = float(np.linalg.norm(pr.d)) ** 3
            accepted = bool(delta >= step_cubed)
            result.trials.append(
                Trial(k, alpha, float(delta), step_cubed, accepted, pr.iterations, pr.gap, confirming)
            )
            if accepted or alpha >= opts.alpha_max:
                break
            alpha = max(opts.alpha_min, min(opts.alpha_max, opts.zeta * alpha))
        if not accepted:
            # no step at the largest alpha decreases the objective by more
            # than the subproblem noise: the current point is stationary
            result.converged = abs(delta) < tol
            if not result.converged:
                log.warning("step rejected at alpha_max; stopping at outer iteration %d", k)
            break
        duals = pr.duals
        C = trial
        obj = new_obj
        result.objective_trace.append(obj)
        result.inner_stats.append(pr.iterations)
        if delta < tol and (confirming or alpha >= opts.alpha_max):
            result.converged = True
            break
        confirming = delta < tol
        if confirming:
            alpha = min(opts.alpha_max, opts.zeta * alpha)
        else:
            alpha = max(opts.alpha_min, alpha / opts.zeta)
        f, g = loss.value_and_grad(C)
    else:
        log.info("max_outer=%d reached without convergence (lam=%g)", opts.max_outer, lam)

    result.coef = C
    result.duals = duals
    return result


def fit(data, lam, config=None, opts=None, c0=None, groups=None, y_aug=None):
    """Minimize ``L(c) + lam * sum_v p_v ||c^{T_v}||`` for one penalty level."""
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    if groups is None:
        groups = build_groups(config or data.config())
    config = groups.config
    loss = MVBLoss(data, config, y_aug)
    if c0 is None:
        c0 = np.zeros((config.q, config.p + 1))
    return proximal_linearization(loss, groups, lam, c0, opts)


def lambda_upper_bound(data, groups):
    """``max_v ||grad L(0) on T_v|| / p_v``; the zero model is optimal for any larger penalty."""
    config = groups.config
    g0 = grad_neg_log_lik(np.zeros((config.q, config.p + 1)), data, config)
    return float(np.max(group_norms(g0, groups) / groups.weights))


def lambda_path(data, lambdas, config=None, opts=None, groups=None, c0=None):
    """Warm-started fits along a descending penalty grid."""
    lambdas = [float(v) for v in lambdas]
    if not lambdas:
        raise ValueError("empty lambda grid")
    if any(a < b for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambda grid must be sorted in descending order")
    if groups is None:
        groups = build_groups(config or data.config())
    config = groups.config
    loss = MVBLoss(data, config)
    C = np.zeros((config.q, config.p + 1)) if c0 is None else as_blocks(c0, config)
    fits = []
    for lam in lambdas:
        res = proximal_linearization(loss, groups, lam, C, opts)
        fits.append(res)
        C = res.coef
    return fits
