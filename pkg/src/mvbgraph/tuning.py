"""GACV / BGACV scores for penalized MVB fits and penalty-level selection.

The influence of the augmented responses on the fitted natural parameters is
linearized on the active set ``N`` (nonzero coefficients):

    H = D~ (D~' W D~ + lam sum_v p_v J_v)^{-1} D~'

with ``W`` the block-diagonal response covariance and ``J_v`` the Hessian of
``||c^{T_v}||``.  Only the diagonal ``q x q`` blocks ``H(i, i)`` enter the
score, through compound-symmetric averages of ``H(i, i)`` and
``Q(i) = I - H(i, i) W(i)``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .mvb import as_blocks, covariance_w, moments
from .optimizer import FitOptions, MVBLoss, lambda_path, lambda_upper_bound
from .penalty import build_groups

log = logging.getLogger(__name__)

CRITERIA = ("GACV", "BGACV")
DEFAULT_GRID_COUNT = 30
DEFAULT_GRID_RATIO = 1000.0


@dataclass
class TuningDiagnostics:
    lam: float
    obs: float
    df: float
    gacv: float
    bgacv: float
    active_count: int
    n: int

    def score(self, criterion):
        return {"GACV": self.gacv, "BGACV": self.bgacv}[criterion.upper()]


def loss_hessian(c, data, config):
    """``sum_i D(i)' W(i) D(i)`` in flat coefficient order, shape ``(q(p+1), q(p+1))``."""
    C = as_blocks(c, config)
    X = data.design
    W = covariance_w(X @ C.T, config)
    H = np.einsum("iab,ij,ik->ajbk", W, X, X, optimize=True)
    return H.reshape(config.n_coef, config.n_coef)


def penalty_hessian(c, groups, lam):
    """``lam * sum_v p_v J_v`` over the groups with nonzero coefficients.

    ``J_v = (||r||^2 R_v - r r') / ||r||^3`` with ``r = R_v c`` and ``R_v``
    the coordinate selector of group ``T_v``.
    """
    config = groups.config
    C = as_blocks(c, config)
    sel = groups.membership[:, :, None] & groups.column_mask[None, None, :]
    sel = sel.reshape(groups.n_groups, config.n_coef)
    flat = C.ravel()
    out = np.zeros((config.n_coef, config.n_coef))
    any_active = False
    for v in range(groups.n_groups):
        r = np.where(sel[v], flat, 0.0)
        nrm = np.linalg.norm(r)
        if nrm == 0:
            continue
        any_active = True
        Jv = (nrm * nrm * np.diag(sel[v].astype(float)) - np.outer(r, r)) / nrm**3
        out += groups.weights[v] * Jv
    if not any_active:
        raise ValueError("penalty Hessian is undefined when every group is zero")
    return lam * out


def _active_inverse(c, data, lam, groups):
    config = groups.config
    flat = as_blocks(c, config).ravel()
    active = np.flatnonzero(flat != 0)
    if active.size == 0:
        raise ValueError("influence matrix needs a nonempty active set")
    A = loss_hessian(flat, data, config)
    if lam > 0:
        A = A + penalty_hessian(flat, groups, lam)
    A = A[np.ix_(active, active)]
    try:
        inv = linalg.cho_solve(linalg.cho_factor(A), np.eye(active.size))
    except linalg.LinAlgError:
        ridge = 1e-10 * max(1.0, np.abs(np.diag(A)).max())
        try:
            inv = linalg.cho_solve(linalg.cho_factor(A + ridge * np.eye(active.size)),
                                   np.eye(active.size))
        except linalg.LinAlgError:
            raise np.linalg.LinAlgError("Hessian on the active set is singular") from None
    full = np.zeros((config.n_coef, config.n_coef))
    full[np.ix_(active, active)] = inv
    return full.reshape(config.q, config.p + 1, config.q, config.p + 1)


def influence_matrix(c, data, lam, groups, full=False):
    """Diagonal influence blocks ``H(i, i)``, shape ``(n, q, q)``.

    With ``full=True`` the whole ``(nq, nq)`` matrix is returned instead,
    rows ordered sample-major; only sensible for tiny problems.
    """
    inv = _active_inverse(c, data, lam, groups)
    X = data.design
    if full:
        q = groups.config.q
        H = np.einsum("ij,ajbk,lk->ialb", X, inv, X, optimize=True)
        return H.reshape(data.n * q, data.n * q)
    return np.einsum("ij,ajbk,ik->iab", X, inv, X, optimize=True)


def generalized_average(blocks):
    """``(delta, gamma)`` of the compound-symmetric average of ``n`` square blocks."""
    blocks = np.asarray(blocks, dtype=float)
    if blocks.ndim == 2:
        blocks = blocks[None]
    n, q, _ = blocks.shape
    tr = np.trace(blocks, axis1=1, axis2=2).sum()
    delta = tr / (n * q)
    if q == 1:
        return float(delta), 0.0
    gamma = (blocks.sum() - tr) / (n * q * (q - 1))
    return float(delta), float(gamma)


def compound_symmetric(delta, gamma, q):
    return (delta - gamma) * np.eye(q) + gamma * np.ones((q, q))


def compound_symmetric_inverse(delta, gamma, q):
    """Closed-form inverse of ``(delta - gamma) I + gamma e e'``."""
    a = delta - gamma
    d = a + q * gamma
    if a == 0 or d == 0:
        raise np.linalg.LinAlgError("compound-symmetric matrix is singular")
    return (np.eye(q) - (gamma / d) * np.ones((q, q))) / a


def gacv_scores(fitted, data, groups=None):
    """OBS, degrees of freedom, GACV and BGACV for one fitted model."""
    config = fitted.config
    groups = groups or build_groups(config)
    C = fitted.coef
    loss = MVBLoss(data, config)
    F = loss.predictor(C)
    b, m_full = moments(F, config)
    mu = m_full[:, config.masks]
    Y = loss.Y
    n = data.n
    obs = float(np.mean(b - np.sum(Y * F, axis=1)))
    active = int(np.count_nonzero(C))
    if active == 0:
        return TuningDiagnostics(fitted.lam, obs, 0.0, obs, obs, 0, n)

    try:
        Hd = influence_matrix(C, data, fitted.lam, groups)
    except np.linalg.LinAlgError:
        log.warning("singular Hessian at lam=%g; score set to inf", fitted.lam)
        return TuningDiagnostics(fitted.lam, obs, np.inf, np.inf, np.inf, active, n)
    W = covariance_w(F, config)
    q = config.q
    Q = np.eye(q)[None] - Hd @ W
    try:
        Qbar_inv = compound_symmetric_inverse(*generalized_average(Q), q)
    except np.linalg.LinAlgError:
        return TuningDiagnostics(fitted.lam, obs, np.inf, np.inf, np.inf, active, n)
    Hbar = compound_symmetric(*generalized_average(Hd), q)
    M = Qbar_inv @ Hbar
    df = float(np.einsum("ia,ab,ib->", Y, M, Y - mu))
    return TuningDiagnostics(
        fitted.lam, obs, df, obs + df / n, obs + 0.5 * np.log(n) * df / n, active, n
    )


def default_grid(data, groups, count=DEFAULT_GRID_COUNT, ratio=DEFAULT_GRID_RATIO):
    """``count`` log-spaced penalty levels from the zero-model bound down by ``ratio``."""
    top = lambda_upper_bound(data, groups)
    if top <= 0:
        raise ValueError("the zero model is already stationary; no penalty path to explore")
    return np.geomspace(top, top / ratio, count)


@dataclass
class TuneResult:
    criterion: str
    best_index: int
    fits: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    @property
    def best_lambda(self):
        return self.fits[self.best_index].lam

    @property
    def best_fit(self):
        return self.fits[self.best_index]

    def scores(self, criterion=None):
        crit = criterion or self.criterion
        return np.array([d.score(crit) for d in self.diagnostics])

    def select(self, criterion):
        """Index of the best grid point under ``criterion``; ties go to the larger penalty."""
        s = self.scores(criterion)
        if not np.isfinite(s).any():
            raise RuntimeError("every grid point was skipped")
        return int(np.argmin(np.where(np.isfinite(s), s, np.inf)))


def tune(data, grid=None, criterion="GACV", config=None, opts=None, groups=None):
    """Fit a warm-started descending path and pick the penalty minimizing the criterion."""
    criterion = criterion.upper()
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    if groups is None:
        groups = build_groups(config or data.config())
    if grid is None:
        grid = default_grid(data, groups)
    grid = [float(v) for v in grid]
    if not grid or any(v <= 0 for v in grid):
        raise ValueError("grid must be nonempty and positive")
    fits = lambda_path(data, grid, opts=opts or FitOptions(), groups=groups)
    diags = [gacv_scores(f, data, groups) for f in fits]
    res = TuneResult(criterion, 0, fits, diags)
    res.best_index = res.select(criterion)
    return res
