"""Rasch IRT: gridded posterior scoring, adaptive item selection, LLTM and on-line calibration."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .exceptions import CalibrationError, ModelError, ZeroMassError

TIE_TOL = 1e-12


def rasch_prob(theta, beta):
    """P(correct | theta, beta) = logistic(theta - beta)."""
    return expit(np.subtract(theta, beta))


@dataclass(frozen=True)
class RaschItem:
    id: str
    beta: float | None = None
    features: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(x) for x in self.features))
        if self.beta is not None:
            if not np.isfinite(self.beta):
                raise ModelError(f"item {self.id!r}: difficulty must be finite")
            object.__setattr__(self, "beta", float(self.beta))


@dataclass(frozen=True, eq=False)
class ThetaGrid:
    """A discrete distribution for proficiency on an increasing grid."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        w = np.array(self.weights, dtype=float)
        if pts.ndim != 1 or pts.shape != w.shape or pts.size == 0:
            raise ModelError("grid points and weights must be equal-length vectors")
        if np.any(np.diff(pts) <= 0):
            raise ModelError("grid points must be strictly increasing")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ModelError("grid weights must be nonnegative and sum to 1")
        pts.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)


def normal_grid(n: int = 61, lo: float = -4.0, hi: float = 4.0, mean: float = 0.0, sd: float = 1.0) -> ThetaGrid:
    """A normal prior discretised on ``n`` equally spaced points."""
    pts = np.linspace(lo, hi, n)
    w = norm.pdf(pts, mean, sd)
    return ThetaGrid(pts, w / w.sum())


def update_theta(grid: ThetaGrid, item: RaschItem, x: int) -> ThetaGrid:
    p = rasch_prob(grid.points, item.beta)
    w = grid.weights * (p if x == 1 else 1.0 - p)
    total = w.sum()
    if not total > 0:
        raise ZeroMassError(f"response {x} to item {item.id!r} has zero probability on the grid")
    return ThetaGrid(grid.points, w / total)


def posterior_moments(grid: ThetaGrid) -> tuple[float, float]:
    mean = float(grid.weights @ grid.points)
    var = float(grid.weights @ (grid.points - mean) ** 2)
    return mean, var


def _weighted_var(w: np.ndarray, pts: np.ndarray) -> np.ndarray:
    # w: (..., G) unnormalised weights
    total = w.sum(axis=-1)
    mean = (w @ pts) / total
    second = (w @ pts**2) / total
    return np.maximum(second - mean**2, 0.0)


def expected_posterior_variances(grid: ThetaGrid, betas) -> np.ndarray:
    """Expected posterior variance after one more response, for each difficulty in ``betas``."""
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    p = rasch_prob(grid.points[None, :], betas[:, None])  # items x G
    w1 = grid.weights * p
    w0 = grid.weights * (1.0 - p)
    out = np.zeros(len(betas))
    # gate each branch on its own mass; 1 - p1 can be positive while w0 underflows
    for w in (w1, w0):
        mass = w.sum(axis=1)
        ok = mass > 0
        out[ok] += mass[ok] * _weighted_var(w[ok], grid.points)
    return out


def expected_posterior_variance(grid: ThetaGrid, candidate: RaschItem) -> float:
    """p1 Var(theta | x=1) + (1 - p1) Var(theta | x=0) for one candidate item."""
    return float(expected_posterior_variances(grid, [candidate.beta])[0])


@dataclass(frozen=True)
class CatConfig:
    stop_sd: float = 0.35
    max_items: int = 30
    constraint: Callable[[RaschItem], bool] | None = None

    def __post_init__(self):
        if not self.stop_sd > 0:
            raise ModelError("stop_sd must be positive")
        if self.max_items < 1:
            raise ModelError("max_items must be at least 1")


def _eligible(pool: Sequence[RaschItem], config: CatConfig, administered) -> list[RaschItem]:
    administered = set(administered)
    out = [it for it in pool if it.id not in administered]
    if config.constraint is not None:
        out = [it for it in out if config.constraint(it)]
    return out


def select_next(grid: ThetaGrid, pool: Sequence[RaschItem], config: CatConfig, administered=()) -> RaschItem:
    """The eligible item minimising expected posterior variance; ties go to the lowest id."""
    items = _eligible(pool, config, administered)
    if not items:
        raise ModelError("no eligible items remain in the pool")
    ev = expected_posterior_variances(grid, [it.beta for it in items])
    # values equal up to rounding count as ties so the choice ignores pool order
    best = ev.min()
    tied = [it for it, v in zip(items, ev) if v <= best + TIE_TOL * max(1.0, abs(best))]
    return min(tied, key=lambda it: it.id)


@dataclass(frozen=True)
class TraceRecord:
    item: str
    beta: float
    response: int
    mean: float
    sd: float


@dataclass
class CatSession:
    prior: ThetaGrid
    grid: ThetaGrid
    records: list[TraceRecord] = field(default_factory=list)

    @property
    def n_items(self) -> int:
        return len(self.records)

    @property
    def mean(self) -> float:
        return posterior_moments(self.grid)[0]

    @property
    def sd(self) -> float:
        return float(np.sqrt(posterior_moments(self.grid)[1]))

    def to_dicts(self) -> list[dict]:
        return [r.__dict__.copy() for r in self.records]


class RaschResponder:
    """Simulated examinee answering under the Rasch model."""

    def __init__(self, theta: float, rng: np.random.Generator):
        self.theta = float(theta)
        self.rng = rng

    def __call__(self, item: RaschItem) -> int:
        return int(self.rng.random() < rasch_prob(self.theta, item.beta))


def run_cat(
    responder: Callable[[RaschItem], int],
    pool: Sequence[RaschItem],
    prior: ThetaGrid,
    config: CatConfig,
    selector: str = "adaptive",
    rng: np.random.Generator | None = None,
) -> CatSession:
    """Administer items until the posterior sd reaches ``stop_sd`` or ``max_items`` are used.

    ``selector="random"`` draws uniformly from the eligible items with
    ``rng`` instead of minimising expected posterior variance.
    """
    if not pool:
        raise ModelError("item pool is empty")
    if selector not in ("adaptive", "random"):
        raise ModelError(f"unknown selector {selector!r}")
    if selector == "random" and rng is None:
        raise ModelError("random selection needs an rng")
    session = CatSession(prior, prior)
    administered: list[str] = []
    while len(administered) < config.max_items:
        if selector == "adaptive":
            item = select_next(session.grid, pool, config, administered)
        else:
            items = _eligible(pool, config, administered)
            if not items:
                raise ModelError("no eligible items remain in the pool")
            item = items[int(rng.integers(len(items)))]
        x = int(responder(item))
        if x not in (0, 1):
            raise ModelError(f"responder returned {x!r} for item {item.id!r}")
        session.grid = update_theta(session.grid, item, x)
        administered.append(item.id)
        mean, var = posterior_moments(session.grid)
        session.records.append(TraceRecord(item.id, item.beta, x, mean, float(np.sqrt(var))))
        if np.sqrt(var) <= config.stop_sd:
            break
    return session


# ---------------------------------------------------------------------------
# LLTM


@dataclass(frozen=True, eq=False)
class FeatureEffects:
    """Per-feature difficulty contributions and residual variance."""

    eta: np.ndarray
    sigma2: float
    cov: np.ndarray | None = None

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ModelError("residual variance must be nonnegative")

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


def lltm_fit(betas, features) -> FeatureEffects:
    """Least-squares feature effects with residual variance RSS / (J - K)."""
    y = np.asarray(betas, dtype=float)
    Y = np.asarray(features, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, k = Y.shape
    if n != len(y):
        raise ModelError("one feature row is needed per item")
    if n < k + 1:
        raise ModelError(f"need at least {k + 1} items for {k} features")
    if np.linalg.matrix_rank(Y) < k:
        raise ModelError("feature matrix is rank deficient")
    eta, *_ = np.linalg.lstsq(Y, y, rcond=None)
    resid = y - Y @ eta
    sigma2 = float(resid @ resid / (n - k))
    cov = sigma2 * np.linalg.inv(Y.T @ Y)
    return FeatureEffects(eta, sigma2, cov)


def lltm_predict(features, effects: FeatureEffects) -> tuple[float, float]:
    """Prior mean and variance for a new item's difficulty."""
    f = np.atleast_1d(np.asarray(features, dtype=float))
    if f.shape != effects.eta.shape:
        raise ModelError(f"expected {effects.eta.size} features, got {f.size}")
    return float(f @ effects.eta), effects.sigma2


# ---------------------------------------------------------------------------
# On-line calibration


@dataclass(frozen=True)
class OnlineConfig:
    iterations: int = 2000
    burn_in: int = 500
    proposal_sd: float = 0.2
    seed: int = 0
    grid_points: int = 61
    grid_range: tuple[float, float] = (-4.0, 4.0)

    def __post_init__(self):
        if self.iterations < 2 or self.burn_in < 0 or not self.proposal_sd > 0:
            raise CalibrationError(f"invalid on-line calibration settings {self}")


@dataclass(frozen=True)
class BetaSummary:
    item: str
    mean: float
    sd: float
    acceptance: float
    prior_mean: float
    prior_var: float


def _log_lik(x, theta_pts, beta):
    # x: N x J with NaN missing; theta_pts: N; beta: J
    eta = theta_pts[:, None] - beta[None, :]
    ll = np.where(x == 1, -np.logaddexp(0, -eta), -np.logaddexp(0, eta))
    return np.where(np.isnan(x), 0.0, ll)


def calibrate_rasch_online(
    old_responses,
    old_betas,
    new_responses,
    prior_mean,
    prior_var,
    config: OnlineConfig | None = None,
    new_ids: Sequence[str] | None = None,
    theta_prior: ThetaGrid | None = None,
) -> list[BetaSummary]:
    """Posterior for new items' difficulties with the old items' difficulties treated as known.

    Alternates exact draws of every examinee's proficiency on the grid
    with one random-walk Metropolis step per new item.  ``old_responses``
    (N x J_old) and ``new_responses`` (N x J_new) hold 0/1 with NaN for
    items not taken.
    """
    config = OnlineConfig() if config is None else config
    x_old = np.asarray(old_responses, dtype=float)
    x_new = np.asarray(new_responses, dtype=float)
    if x_new.ndim == 1:
        x_new = x_new[:, None]
    n, j_new = x_new.shape
    if x_old.size == 0 and x_old.ndim != 2:
        x_old = np.empty((n, 0))
    if x_old.shape[0] != n:
        raise CalibrationError("old and new responses must have the same examinees")
    b_old = np.asarray(old_betas, dtype=float).reshape(-1)
    if b_old.size != x_old.shape[1]:
        raise CalibrationError("one known difficulty is needed per old item")
    mu = np.broadcast_to(np.asarray(prior_mean, dtype=float), (j_new,)).copy()
    var = np.broadcast_to(np.asarray(prior_var, dtype=float), (j_new,)).copy()
    if np.any(var <= 0):
        raise CalibrationError("prior variances must be positive")
    ids = [f"new{k + 1}" for k in range(j_new)] if new_ids is None else list(new_ids)
    grid = normal_grid(config.grid_points, *config.grid_range) if theta_prior is None else theta_prior
    pts = grid.points
    log_prior_theta = np.log(np.maximum(grid.weights, 1e-300))

    # old-item log-likelihood over the grid never changes
    ll_old = np.zeros((n, pts.size))
    if x_old.shape[1]:
        p_old = rasch_prob(pts[:, None], b_old[None, :])  # G x J_old
        obs = ~np.isnan(x_old)
        ll_old = np.where(obs, np.nan_to_num(x_old), 0) @ np.log(p_old).T + np.where(
            obs, 1 - np.nan_to_num(x_old), 0
        ) @ np.log1p(-p_old).T
    obs_new = ~np.isnan(x_new)
    x1_new = np.where(obs_new, np.nan_to_num(x_new), 0)
    x0_new = np.where(obs_new, 1 - np.nan_to_num(x_new), 0)

    rng = np.random.default_rng(config.seed)
    beta = mu.copy()
    kept = np.empty((config.iterations, j_new))
    accepted = np.zeros(j_new)
    total = config.burn_in + config.iterations
    for t in range(total):
        p_new = rasch_prob(pts[:, None], beta[None, :])
        log_w = ll_old + x1_new @ np.log(p_new).T + x0_new @ np.log1p(-p_new).T + log_prior_theta
        log_w -= log_w.max(axis=1, keepdims=True)
        if not np.all(np.isfinite(log_w)):
            raise CalibrationError("non-finite likelihood while drawing proficiencies")
        cw = np.cumsum(np.exp(log_w), axis=1)
        u = rng.random(n) * cw[:, -1]
        theta = pts[np.minimum((cw < u[:, None]).sum(axis=1), pts.size - 1)]

        proposal = beta + config.proposal_sd * rng.standard_normal(j_new)
        cur = _log_lik(x_new, theta, beta).sum(axis=0) - 0.5 * (beta - mu) ** 2 / var
        new = _log_lik(x_new, theta, proposal).sum(axis=0) - 0.5 * (proposal - mu) ** 2 / var
        accept = np.log(rng.random(j_new)) < new - cur
        beta = np.where(accept, proposal, beta)
        if t >= config.burn_in:
            kept[t - config.burn_in] = beta
            accepted += accept
    rate = accepted / config.iterations
    for item, r in zip(ids, rate):
        if not 0.05 < r < 0.95:
            warnings.warn(f"Metropolis acceptance rate {r:.3f} for item {item!r} is outside (0.05, 0.95)")
    return [
        BetaSummary(ids[k], float(kept[:, k].mean()), float(kept[:, k].std(ddof=1)), float(rate[k]), float(mu[k]), float(var[k]))
        for k in range(j_new)
    ]


def calibrate_rasch(responses, config: OnlineConfig | None = None, item_ids=None, prior_var: float = 4.0):
    """Startup calibration of every item with diffuse N(0, prior_var) difficulty priors."""
    x = np.asarray(responses, dtype=float)
    return calibrate_rasch_online(np.empty((x.shape[0], 0)), [], x, 0.0, prior_var, config, item_ids)


def simulate_rasch(thetas, betas, rng: np.random.Generator) -> np.ndarray:
    p = rasch_prob(np.asarray(thetas)[:, None], np.asarray(betas)[None, :])
    return (rng.random(p.shape) < p).astype(float)


def trace_to_json(session: CatSession) -> str:
    return json.dumps(session.to_dicts(), indent=2)


def pool_from_mapping(rows: Sequence[Mapping]) -> list[RaschItem]:
    return [RaschItem(str(r["id"]), r.get("beta"), tuple(r.get("features", ()))) for r in rows]
