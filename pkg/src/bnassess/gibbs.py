"""Gibbs-sampler calibration of population and task parameters.

One sweep draws, in order,

1. every examinee's joint skill configuration, exactly, from its categorical
   full conditional over the enumerated configurations;
2. each free task's (false-positive, true-positive) pair from its Beta
   conditional;
3. each free population slot from its Beta/Dirichlet conditional.

Evidence-model hyperparameters are not sampled: the prior pairs on each
task are fixed configuration.  Missing responses are skipped in both the
likelihood and the conjugate counts.

Skill configurations are carried as integer indices into
``graph.configurations``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import ResponseMatrix
from .exceptions import CalibrationError, ConvergenceError, MomentMatchError, ModelError, ZeroMassError
from .model import AssessmentModel, SkillGraph

FALSE_POS = "FalsePos"
TRUE_POS = "TruePos"
LOG_FLOOR = -1e300


def pi_names(task_id: str) -> tuple[str, str]:
    return f"pi[{task_id}]|{FALSE_POS}", f"pi[{task_id}]|{TRUE_POS}"


def lambda_scalar_names(graph: SkillGraph) -> list[tuple[str, int]]:
    """(name, flat entry) for each scalar summarised from the population slots.

    A Bernoulli slot contributes its P(state=1); a categorical slot
    contributes every component, named ``slot[k]``.
    """
    out = []
    for s in graph.slots:
        if s.is_bernoulli:
            out.append((s.name, s.offset + 1))
        else:
            out.extend((f"{s.name}[{k}]", s.offset + k) for k in range(s.cardinality))
    return out


@dataclass(frozen=True)
class PriorSet:
    """Prior pseudo-counts.

    ``lambda_priors`` maps slot name to pseudo-counts in state order.
    ``pi_priors`` maps task id to ``((a0, b0), (a1, b1))``: the Beta
    priors of the false-positive and true-positive probabilities.
    """

    lambda_priors: Mapping[str, tuple[float, ...]]
    pi_priors: Mapping[str, tuple[tuple[float, float], tuple[float, float]]]

    def __post_init__(self):
        lp = {k: tuple(float(x) for x in v) for k, v in dict(self.lambda_priors).items()}
        pp = {
            k: (tuple(float(x) for x in v[0]), tuple(float(x) for x in v[1]))
            for k, v in dict(self.pi_priors).items()
        }
        for k, v in lp.items():
            if min(v) <= 0 or not all(np.isfinite(v)):
                raise ModelError(f"slot {k!r}: prior pseudo-counts must be positive")
        for k, (f, t) in pp.items():
            if min(f + t) <= 0 or not all(np.isfinite(f + t)):
                raise ModelError(f"task {k!r}: Beta parameters must be positive")
        object.__setattr__(self, "lambda_priors", lp)
        object.__setattr__(self, "pi_priors", pp)

    @classmethod
    def from_model(cls, model: AssessmentModel) -> "PriorSet":
        graph = model.graph
        missing = [s.name for s in graph.slots if s.name not in graph.slot_priors]
        if missing:
            raise ModelError(f"no default prior for slots {missing}")
        pi = {}
        for t in model.tasks:
            em = model.evidence_model(t.evidence_model)
            pi[t.id] = (em.prior_false_pos, em.prior_true_pos)
        return cls(dict(graph.slot_priors), pi)

    def replace(self, lambda_priors=None, pi_priors=None) -> "PriorSet":
        lp = dict(self.lambda_priors)
        lp.update(lambda_priors or {})
        pp = dict(self.pi_priors)
        pp.update(pi_priors or {})
        return PriorSet(lp, pp)

    def lambda_vector(self, graph: SkillGraph) -> np.ndarray:
        vec = np.empty(graph.n_entries)
        for s in graph.slots:
            try:
                prior = self.lambda_priors[s.name]
            except KeyError:
                raise ModelError(f"no prior for slot {s.name!r}") from None
            if len(prior) != s.cardinality:
                raise ModelError(f"slot {s.name!r}: prior needs {s.cardinality} values")
            vec[s.offset : s.offset + s.cardinality] = prior
        return vec

    def pi_arrays(self, task_ids: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Beta ``a`` and ``b`` arrays (J x 2), column z for delta = z."""
        a = np.empty((len(task_ids), 2))
        b = np.empty((len(task_ids), 2))
        for j, t in enumerate(task_ids):
            try:
                (a0, b0), (a1, b1) = self.pi_priors[t]
            except KeyError:
                raise ModelError(f"no prior for task {t!r}") from None
            a[j] = a0, a1
            b[j] = b0, b1
        return a, b

    def scalar_priors(self, graph: SkillGraph, task_ids: Sequence[str]) -> dict[str, tuple[float, float]]:
        """Marginal Beta prior of every summarised scalar."""
        out = {}
        for s in graph.slots:
            prior = self.lambda_priors[s.name]
            total = sum(prior)
            if s.is_bernoulli:
                out[s.name] = (prior[1], prior[0])
            else:
                for k in range(s.cardinality):
                    out[f"{s.name}[{k}]"] = (prior[k], total - prior[k])
        for t in task_ids:
            fp, tp = pi_names(t)
            out[fp], out[tp] = self.pi_priors[t]
        return out


# ---------------------------------------------------------------------------
# Moment matching and summaries


def moment_match_beta(mean: float, sd: float) -> tuple[float, float]:
    """The Beta(alpha, beta) with the given mean and standard deviation."""
    if not 0.0 < mean < 1.0:
        raise MomentMatchError(f"mean {mean} is outside (0, 1)")
    var = sd * sd
    if not 0.0 < var < mean * (1.0 - mean):
        raise MomentMatchError(f"variance {var} is infeasible for a Beta with mean {mean}")
    nu = mean * (1.0 - mean) / var - 1.0
    return mean * nu, (1.0 - mean) * nu


def moment_match_dirichlet(means: Sequence[float], sds: Sequence[float]) -> np.ndarray:
    """Approximate Dirichlet concentrations from component means and sds.

    Each component implies a total concentration through its Beta
    marginal; the components' totals are averaged.  Exact when the moments
    come from a Dirichlet.
    """
    means = np.asarray(means, dtype=float)
    sds = np.asarray(sds, dtype=float)
    if means.shape != sds.shape or means.ndim != 1 or len(means) < 2:
        raise MomentMatchError("means and sds must be equal-length vectors")
    if abs(means.sum() - 1.0) > 1e-9 or np.any(means <= 0):
        raise MomentMatchError("means must be a strictly positive simplex vector")
    var = sds**2
    if np.any(var <= 0) or np.any(var >= means * (1 - means)):
        raise MomentMatchError("infeasible standard deviations")
    totals = means * (1 - means) / var - 1.0
    total = float(totals.mean())
    conc = means / means.sum() * total
    return conc


@dataclass(frozen=True)
class ParameterSummary:
    """Posterior summary of one scalar: moments, implied Beta, and effective observations."""

    name: str
    mean: float
    sd: float
    alpha_hat: float
    beta_hat: float
    n_hat: float
    prior: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mean": self.mean,
            "sd": self.sd,
            "alpha_hat": self.alpha_hat,
            "beta_hat": self.beta_hat,
            "n_hat": self.n_hat,
            "prior": list(self.prior),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ParameterSummary":
        return cls(
            d["name"], d["mean"], d["sd"], d["alpha_hat"], d["beta_hat"], d["n_hat"], tuple(d["prior"])
        )


def summarize(draws: Sequence[float], prior: tuple[float, float], name: str = "") -> ParameterSummary:
    draws = np.asarray(draws, dtype=float).ravel()
    if draws.size < 2:
        raise MomentMatchError("need at least two draws to summarize")
    mean = float(draws.mean())
    sd = float(draws.std(ddof=1))
    if sd == 0.0:
        raise MomentMatchError(f"{name or 'parameter'}: zero posterior sd, moment matching undefined")
    return summary_from_moments(name, mean, sd, prior)


def summary_from_moments(name: str, mean: float, sd: float, prior: tuple[float, float]) -> ParameterSummary:
    a, b = moment_match_beta(mean, sd)
    return ParameterSummary(name, mean, sd, a, b, a + b - (prior[0] + prior[1]), tuple(float(p) for p in prior))


def gelman_rubin(chains) -> float:
    """Potential scale reduction factor for one scalar, chains shaped (m, n)."""
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2 or chains.shape[0] < 2:
        raise ConvergenceError("need at least two chains")
    m, n = chains.shape
    if n < 10:
        raise ConvergenceError("need at least 10 retained draws per chain")
    between = n * np.var(chains.mean(axis=1), ddof=1)
    within = np.mean(np.var(chains, axis=1, ddof=1))
    if between == 0.0:
        return 1.0
    if within == 0.0:
        raise ConvergenceError("zero within-chain variance")
    var_plus = (n - 1) / n * within + between / n
    return float(np.sqrt(var_plus / within))


# ---------------------------------------------------------------------------
# Conditional kernels


def _indicators(cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    observed = ~np.isnan(cells)
    x1 = np.where(observed, cells, 0.0)
    x0 = np.where(observed, 1.0 - np.nan_to_num(cells), 0.0)
    return x1, x0


def _p_correct(pi: np.ndarray, delta: np.ndarray) -> np.ndarray:
    return np.where(delta == 1, pi[:, 1:2], pi[:, 0:1])


def _safe_log(x):
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(x), LOG_FLOOR)


def _theta_log_weights(x1, x0, log_prior, p_correct) -> np.ndarray:
    return x1 @ _safe_log(p_correct) + x0 @ _safe_log(1.0 - p_correct) + log_prior


def _sample_rows(log_w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    top = log_w.max(axis=1, keepdims=True)
    if np.any(top < 0.5 * LOG_FLOOR) or not np.all(np.isfinite(top)):
        raise ZeroMassError("an examinee's configuration conditional has no mass")
    cw = np.cumsum(np.exp(log_w - top), axis=1)
    u = rng.random(log_w.shape[0]) * cw[:, -1]
    idx = (cw < u[:, None]).sum(axis=1)
    return np.minimum(idx, log_w.shape[1] - 1)


def _lambda_params(entry_config: np.ndarray, prior_vec: np.ndarray, theta: np.ndarray) -> np.ndarray:
    counts = np.bincount(theta, minlength=entry_config.shape[1])
    return prior_vec + entry_config @ counts


def _pi_params(x1, x0, delta, theta, a, b) -> tuple[np.ndarray, np.ndarray]:
    d = delta[:, theta].T.astype(float)  # N x J
    nd = 1.0 - d
    correct = np.stack([(x1 * nd).sum(axis=0), (x1 * d).sum(axis=0)], axis=1)
    wrong = np.stack([(x0 * nd).sum(axis=0), (x0 * d).sum(axis=0)], axis=1)
    return a + correct, b + wrong


def _draw_simplex(params: np.ndarray, graph: SkillGraph, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_gamma(params)
    starts = np.array([s.offset for s in graph.slots])
    sums = np.add.reduceat(g, starts)
    sizes = np.array([s.cardinality for s in graph.slots])
    return g / np.repeat(sums, sizes)


# ----- public conditional draws -----------------------------------------


def _pi_matrix(model: AssessmentModel, pi, task_ids) -> np.ndarray:
    if pi is None:
        pi = {t.id: t.pi for t in model.tasks}
    out = np.empty((len(task_ids), 2))
    for j, t in enumerate(task_ids):
        if pi.get(t) is None:
            raise ModelError(f"task {t!r} has no pi value")
        out[j] = pi[t]
    return out


def theta_weights(responses: ResponseMatrix, lam, pi, model: AssessmentModel) -> np.ndarray:
    """Normalised full conditional (N x S) of every examinee's configuration."""
    graph = model.graph
    task_ids = model.task_ids
    x1, x0 = _indicators(responses.aligned(task_ids))
    lam_vec = lam if isinstance(lam, np.ndarray) else graph.lambda_vector(lam)
    log_prior = _safe_log(lam_vec)[graph.entry_index].sum(axis=1)
    log_w = _theta_log_weights(x1, x0, log_prior, _p_correct(_pi_matrix(model, pi, task_ids), model.delta_table()))
    top = log_w.max(axis=1, keepdims=True)
    w = np.exp(log_w - top)
    return w / w.sum(axis=1, keepdims=True)


def draw_theta(responses: ResponseMatrix, lam, pi, model: AssessmentModel, rng: np.random.Generator) -> np.ndarray:
    """Draw every examinee's configuration index from its exact conditional."""
    graph = model.graph
    task_ids = model.task_ids
    x1, x0 = _indicators(responses.aligned(task_ids))
    lam_vec = lam if isinstance(lam, np.ndarray) else graph.lambda_vector(lam)
    log_prior = _safe_log(lam_vec)[graph.entry_index].sum(axis=1)
    p = _p_correct(_pi_matrix(model, pi, task_ids), model.delta_table())
    return _sample_rows(_theta_log_weights(x1, x0, log_prior, p), rng)


def lambda_posterior(theta: np.ndarray, graph: SkillGraph, priors: PriorSet) -> dict[str, np.ndarray]:
    """Conjugate posterior pseudo-counts (state order) for every slot."""
    post = _lambda_params(graph.entry_config_matrix, priors.lambda_vector(graph), np.asarray(theta, dtype=np.int64))
    return {s.name: post[s.offset : s.offset + s.cardinality] for s in graph.slots}


def draw_lambda(theta: np.ndarray, graph: SkillGraph, priors: PriorSet, rng: np.random.Generator) -> dict:
    post = _lambda_params(graph.entry_config_matrix, priors.lambda_vector(graph), np.asarray(theta, dtype=np.int64))
    return graph.lambda_dict(_draw_simplex(post, graph, rng))


def pi_posterior(theta: np.ndarray, responses: ResponseMatrix, model: AssessmentModel, priors: PriorSet) -> dict:
    """Conjugate posterior Beta pairs ``((a0, b0), (a1, b1))`` for every task."""
    task_ids = model.task_ids
    x1, x0 = _indicators(responses.aligned(task_ids))
    a, b = priors.pi_arrays(task_ids)
    pa, pb = _pi_params(x1, x0, model.delta_table(), np.asarray(theta, dtype=np.int64), a, b)
    return {t: ((pa[j, 0], pb[j, 0]), (pa[j, 1], pb[j, 1])) for j, t in enumerate(task_ids)}


def draw_pi(theta, responses: ResponseMatrix, model: AssessmentModel, priors: PriorSet, rng) -> dict:
    task_ids = model.task_ids
    x1, x0 = _indicators(responses.aligned(task_ids))
    a, b = priors.pi_arrays(task_ids)
    pa, pb = _pi_params(x1, x0, model.delta_table(), np.asarray(theta, dtype=np.int64), a, b)
    draws = rng.beta(pa, pb)
    return {t: (float(draws[j, 0]), float(draws[j, 1])) for j, t in enumerate(task_ids)}


# ---------------------------------------------------------------------------
# Runs


@dataclass(frozen=True)
class GibbsConfig:
    chains: int = 3
    burn_in: int = 2000
    iterations: int = 5000
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.chains < 1 or self.iterations < 1 or self.burn_in < 0 or self.thin < 1:
            raise CalibrationError(f"invalid sampler configuration {self}")

    def to_dict(self) -> dict:
        return {
            "chains": self.chains,
            "burn_in": self.burn_in,
            "iterations": self.iterations,
            "thin": self.thin,
            "seed": self.seed,
        }


@dataclass
class ChainState:
    """Current values of one chain."""

    theta: np.ndarray
    lam: np.ndarray
    pi: np.ndarray
    iteration: int
    seed: tuple[int, int]


@dataclass(eq=False)
class CalibrationRun:
    """Retained draws, per-parameter summaries and R-hat of one calibration."""

    mode: str
    config: GibbsConfig
    parameter_names: tuple[str, ...]
    draws: np.ndarray | None  # chains x kept x parameters; None when loaded without draws
    summaries: dict[str, ParameterSummary]
    rhat: dict[str, float]
    task_ids: tuple[str, ...]
    n_examinees: int
    fixed: dict = field(default_factory=dict)
    final_states: list[ChainState] = field(default_factory=list, repr=False)

    @property
    def max_rhat(self) -> float:
        return max(self.rhat.values()) if self.rhat else 1.0

    def chain_draws(self, name: str) -> np.ndarray:
        return self.draws[:, :, self.parameter_names.index(name)]

    def posterior_means(self, graph: SkillGraph) -> tuple[dict, dict]:
        """Point estimates: (lambda assignment, task -> (pi0, pi1)) at posterior means.

        Parameters that were held fixed in this run are passed through.
        """
        lam = dict(self.fixed.get("lambda", {}))
        if not lam:
            vec = np.empty(graph.n_entries)
            for s in graph.slots:
                if s.is_bernoulli:
                    p = self.summaries[s.name].mean
                    vec[s.offset : s.offset + 2] = (1 - p, p)
                else:
                    comp = np.array([self.summaries[f"{s.name}[{k}]"].mean for k in range(s.cardinality)])
                    vec[s.offset : s.offset + s.cardinality] = comp / comp.sum()
            lam = graph.lambda_dict(vec)
        pi = {t: tuple(v) for t, v in self.fixed.get("pi", {}).items()}
        for t in self.task_ids:
            fp, tp = pi_names(t)
            pi[t] = (self.summaries[fp].mean, self.summaries[tp].mean)
        return lam, pi

    def report_text(self, digits: int = 2) -> str:
        """Summaries in the layout Parameter/State, Mean, SD, alpha, beta, n, R-hat."""
        head = f"{'Parameter':<16}{'State':<10}{'Mean':>7}{'SD':>7}{'alpha':>8}{'beta':>8}{'n':>8}{'Rhat':>7}"
        lines = [head]
        for name in self.parameter_names:
            s = self.summaries[name]
            if name.startswith("pi["):
                param, state = name.split("|")
            elif "|" in name:
                param, state = name.split("|", 1)
                state = f"z={state}"
            else:
                param, state = name, ""
            mean = f"{s.mean:.{digits}f}".lstrip("0") if s.mean < 1 else f"{s.mean:.{digits}f}"
            sd = f"{s.sd:.{digits}f}".lstrip("0")
            lines.append(
                f"{param:<16}{state:<10}{mean:>7}{sd:>7}{s.alpha_hat:>8.0f}{s.beta_hat:>8.0f}"
                f"{round(s.n_hat):>8d}{self.rhat[name]:>7.3f}"
            )
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "config": self.config.to_dict(),
            "parameter_names": list(self.parameter_names),
            "task_ids": list(self.task_ids),
            "n_examinees": self.n_examinees,
            "fixed": {
                "lambda": {k: v for k, v in self.fixed.get("lambda", {}).items()},
                "pi": {k: list(v) for k, v in self.fixed.get("pi", {}).items()},
            },
            "summaries": [self.summaries[n].to_dict() for n in self.parameter_names],
            "rhat": {n: self.rhat[n] for n in self.parameter_names},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


class _Design:
    """Precomputed arrays shared by every sweep of a run."""

    def __init__(self, model: AssessmentModel, data: ResponseMatrix, priors: PriorSet):
        self.model = model
        self.graph = model.graph
        self.task_ids = model.task_ids
        self.x1, self.x0 = _indicators(data.aligned(self.task_ids))
        self.delta = model.delta_table()
        self.entry_config = self.graph.entry_config_matrix
        self.entry_index = self.graph.entry_index
        self.lambda_prior = priors.lambda_vector(self.graph)
        self.pi_a, self.pi_b = priors.pi_arrays(self.task_ids)


def _run_chain(
    design: _Design,
    rng: np.random.Generator,
    config: GibbsConfig,
    lam0: np.ndarray,
    pi0: np.ndarray,
    free_lambda: bool,
    free_pi: np.ndarray,
    record_lambda: np.ndarray,
    record_pi: np.ndarray,
) -> tuple[np.ndarray, ChainState]:
    lam = lam0.copy()
    pi = pi0.copy()
    graph = design.graph
    kept = np.empty((config.iterations, len(record_lambda) + len(record_pi)))
    n_lam = len(record_lambda)
    total = config.burn_in + config.iterations * config.thin
    k = 0
    theta = np.zeros(design.x1.shape[0], dtype=np.int64)
    any_free_pi = bool(free_pi.any())
    for t in range(total):
        log_prior = _safe_log(lam)[design.entry_index].sum(axis=1)
        log_w = _theta_log_weights(design.x1, design.x0, log_prior, _p_correct(pi, design.delta))
        theta = _sample_rows(log_w, rng)
        if any_free_pi:
            a, b = _pi_params(design.x1, design.x0, design.delta, theta, design.pi_a, design.pi_b)
            pi[free_pi] = rng.beta(a[free_pi], b[free_pi])
        if free_lambda:
            lam = _draw_simplex(_lambda_params(design.entry_config, design.lambda_prior, theta), graph, rng)
        if t >= config.burn_in and (t - config.burn_in) % config.thin == 0:
            kept[k, :n_lam] = lam[record_lambda]
            kept[k, n_lam:] = pi.ravel()[record_pi]
            k += 1
    return kept, ChainState(theta, lam, pi, total, (config.seed, 0))


def _calibrate(
    data: ResponseMatrix,
    model: AssessmentModel,
    priors: PriorSet,
    config: GibbsConfig,
    *,
    mode: str,
    fixed_lambda=None,
    fixed_pi: Mapping[str, tuple[float, float]] | None = None,
    reference_priors: PriorSet | None = None,
    initial: Mapping | None = None,
) -> CalibrationRun:
    graph = model.graph
    task_ids = model.task_ids
    fixed_pi = dict(fixed_pi or {})
    design = _Design(model, data, priors)
    free_pi = np.array([t not in fixed_pi for t in task_ids])
    free_lambda = fixed_lambda is None
    fixed_vec = None if free_lambda else graph.lambda_vector(fixed_lambda)

    names: list[str] = []
    record_lambda: list[int] = []
    if free_lambda:
        for name, entry in lambda_scalar_names(graph):
            names.append(name)
            record_lambda.append(entry)
    record_pi: list[int] = []
    summarised_tasks = []
    for j, t in enumerate(task_ids):
        if free_pi[j]:
            names.extend(pi_names(t))
            record_pi.extend((2 * j, 2 * j + 1))
            summarised_tasks.append(t)
    if not names:
        raise CalibrationError("nothing to calibrate: every parameter is fixed")

    seq = np.random.SeedSequence(config.seed)
    chain_rngs = [np.random.default_rng(s) for s in seq.spawn(config.chains)]
    all_draws = []
    states = []
    for c, rng in enumerate(chain_rngs):
        if initial is not None:
            lam0 = graph.lambda_vector(initial["lambda"]) if free_lambda else fixed_vec
            pi0 = _pi_matrix(model, {**initial["pi"], **fixed_pi}, task_ids)
        else:
            lam0 = _draw_simplex(design.lambda_prior, graph, rng) if free_lambda else fixed_vec
            pi0 = np.empty((len(task_ids), 2))
            for j, t in enumerate(task_ids):
                pi0[j] = fixed_pi[t] if t in fixed_pi else rng.beta(design.pi_a[j], design.pi_b[j])
        kept, state = _run_chain(
            design, rng, config, lam0, pi0, free_lambda, free_pi,
            np.array(record_lambda, dtype=np.int64), np.array(record_pi, dtype=np.int64),
        )
        state.seed = (config.seed, c)
        all_draws.append(kept)
        states.append(state)
    draws = np.stack(all_draws)

    ref = (reference_priors or priors).scalar_priors(graph, summarised_tasks)
    summaries = {}
    rhat = {}
    for p, name in enumerate(names):
        summaries[name] = summarize(draws[:, :, p], ref[name], name)
        rhat[name] = gelman_rubin(draws[:, :, p]) if config.chains >= 2 and config.iterations >= 10 else float("nan")
    fixed = {}
    if not free_lambda:
        fixed["lambda"] = graph.lambda_dict(fixed_vec)
    if fixed_pi:
        fixed["pi"] = {t: tuple(float(x) for x in v) for t, v in fixed_pi.items()}
    return CalibrationRun(
        mode, config, tuple(names), draws, summaries, rhat, tuple(summarised_tasks),
        data.shape[0], fixed, states,
    )


def run_gibbs(
    data: ResponseMatrix,
    model: AssessmentModel,
    priors: PriorSet | None = None,
    config: GibbsConfig | None = None,
    *,
    initial: Mapping | None = None,
) -> CalibrationRun:
    """Startup calibration of every population slot and every task.

    ``initial`` optionally starts every chain at ``{"lambda": ..., "pi": ...}``;
    otherwise each chain starts from a prior draw.
    """
    priors = PriorSet.from_model(model) if priors is None else priors
    config = GibbsConfig() if config is None else config
    return _calibrate(data, model, priors, config, mode="startup", initial=initial)


def priors_from_summaries(
    summaries: Mapping[str, ParameterSummary],
    model: AssessmentModel,
    base: PriorSet | None = None,
) -> tuple[PriorSet, list[str]]:
    """Moment-matched priors standing in for a previous run's posteriors.

    Returns the prior set and the ids of tasks with no previous summary
    (the new tasks), which keep their evidence-model priors.
    """
    graph = model.graph
    base = PriorSet.from_model(model) if base is None else base
    lam = {}
    for s in graph.slots:
        if s.is_bernoulli:
            if s.name not in summaries:
                raise CalibrationError(f"previous run has no summary for {s.name!r}")
            sm = summaries[s.name]
            lam[s.name] = (sm.beta_hat, sm.alpha_hat)
        else:
            keys = [f"{s.name}[{k}]" for k in range(s.cardinality)]
            missing = [k for k in keys if k not in summaries]
            if missing:
                raise CalibrationError(f"previous run has no summary for {missing}")
            means = np.array([summaries[k].mean for k in keys])
            lam[s.name] = tuple(moment_match_dirichlet(means / means.sum(), [summaries[k].sd for k in keys]))
    pi = {}
    new = []
    for t in model.task_ids:
        fp, tp = pi_names(t)
        have = (fp in summaries, tp in summaries)
        if all(have):
            pi[t] = (
                (summaries[fp].alpha_hat, summaries[fp].beta_hat),
                (summaries[tp].alpha_hat, summaries[tp].beta_hat),
            )
        elif any(have):
            raise CalibrationError(f"previous run summarises only one of task {t!r}'s two probabilities")
        else:
            new.append(t)
    return base.replace(lam, pi), new


def calibrate_new_full(
    previous: CalibrationRun | Mapping[str, ParameterSummary],
    data: ResponseMatrix,
    model: AssessmentModel,
    config: GibbsConfig | None = None,
    base_priors: PriorSet | None = None,
) -> CalibrationRun:
    """Calibrate new tasks while updating everything, with moment-matched priors for old parameters.

    Effective-observation counts are reported relative to the model's
    original priors so they stay comparable with the startup run.
    """
    summaries = previous.summaries if isinstance(previous, CalibrationRun) else previous
    config = GibbsConfig() if config is None else config
    base = PriorSet.from_model(model) if base_priors is None else base_priors
    priors, _ = priors_from_summaries(summaries, model, base)
    return _calibrate(data, model, priors, config, mode="full", reference_priors=base)


def calibrate_new_eb(
    lambda_hat,
    pi_hat: Mapping[str, tuple[float, float]],
    data: ResponseMatrix,
    model: AssessmentModel,
    config: GibbsConfig | None = None,
    priors: PriorSet | None = None,
) -> CalibrationRun:
    """Calibrate new tasks with the population and old tasks fixed at point estimates.

    Tasks of ``model`` absent from ``pi_hat`` are the new tasks; only the
    examinees' configurations and the new tasks' probabilities are sampled.
    """
    config = GibbsConfig() if config is None else config
    priors = PriorSet.from_model(model) if priors is None else priors
    fixed = {t: tuple(pi_hat[t]) for t in model.task_ids if t in pi_hat}
    if len(fixed) == len(model.task_ids):
        raise CalibrationError("no new tasks to calibrate")
    return _calibrate(data, model, priors, config, mode="eb", fixed_lambda=lambda_hat, fixed_pi=fixed)
