"""Exact belief updating by docking evidence-model fragments.

An examinee's belief is a probability vector over the canonical joint
configurations of a :class:`~bnassess.model.SkillGraph`.  Docking a task's
fragment multiplies that vector by the task's likelihood; the result is
renormalized and the fragment is discarded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import ModelError, ZeroMassError
from .model import DEFAULT_STATE_CAP, AssessmentModel, SkillGraph, joint_probabilities

ZERO_MASS = 1e-300


@dataclass(frozen=True)
class BeliefState:
    graph: SkillGraph
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.shape != (self.graph.state_space_size,):
            raise ModelError(
                f"belief has {probs.shape} entries, graph has {self.graph.state_space_size} configurations"
            )
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ModelError("belief must be a nonnegative vector summing to 1")
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)


@dataclass(frozen=True)
class Observation:
    task: str
    value: int

    def __post_init__(self):
        if self.value not in (0, 1):
            raise ModelError(f"observation on {self.task!r} must be 0 or 1, got {self.value!r}")


def init_belief(graph: SkillGraph, lam, cap: int = DEFAULT_STATE_CAP) -> BeliefState:
    return BeliefState(graph, joint_probabilities(graph, lam, cap))


def task_likelihood(model: AssessmentModel, task_id: str, x: int) -> np.ndarray:
    """P(X_j = x | configuration) for every canonical configuration."""
    task = model.task(task_id)
    if not task.calibrated:
        raise ModelError(f"task {task_id!r} is not calibrated")
    delta = model.delta_table([task_id])[0]
    p_correct = np.where(delta == 1, task.pi[1], task.pi[0])
    return p_correct if x == 1 else 1.0 - p_correct


def absorb(belief: BeliefState, model: AssessmentModel, obs: Observation) -> BeliefState:
    """Condition ``belief`` on one observed response, returning a new belief."""
    weights = belief.probs * task_likelihood(model, obs.task, obs.value)
    total = weights.sum()
    if total < ZERO_MASS:
        raise ZeroMassError(f"observation {obs} is impossible under the current belief")
    return BeliefState(belief.graph, weights / total)


def marginal(belief: BeliefState, variable: str) -> np.ndarray:
    """Distribution of one variable (stochastic or deterministic)."""
    graph = belief.graph
    var = graph.variable(variable)
    col = graph.names.index(var.name)
    return np.bincount(graph.configurations[:, col], weights=belief.probs, minlength=var.cardinality)


def predictive(belief: BeliefState, model: AssessmentModel, task_id: str) -> float:
    """Probability of a correct response to ``task_id`` under ``belief``."""
    return float(belief.probs @ task_likelihood(model, task_id, 1))


@dataclass(frozen=True)
class SkillProfile:
    skill: str
    prior: float
    posterior: float


@dataclass(frozen=True)
class ScoreReport:
    """Prior and posterior mastery probabilities for each reporting skill."""

    rows: tuple[SkillProfile, ...]
    responses: tuple[Observation, ...]
    belief: BeliefState

    def to_text(self) -> str:
        lines = [f"{'SKILL':<10}{'PRIOR PROB.':>14}{'POSTERIOR PROB.':>18}"]
        for r in self.rows:
            lines.append(f"{r.skill:<10}{r.prior:>14.3f}{r.posterior:>18.3f}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "responses": [{"task": o.task, "value": o.value} for o in self.responses],
            "skills": [
                {"skill": r.skill, "prior": r.prior, "posterior": r.posterior} for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def score_examinee(
    model: AssessmentModel,
    lam,
    responses: Iterable[Observation] | Mapping[str, int],
) -> ScoreReport:
    """Absorb responses one at a time and report each skill's prior and posterior."""
    if isinstance(responses, Mapping):
        responses = [Observation(t, int(v)) for t, v in responses.items()]
    responses = tuple(responses)
    graph = model.graph
    prior = init_belief(graph, lam)
    belief = prior
    for obs in responses:
        belief = absorb(belief, model, obs)
    rows = tuple(
        SkillProfile(s, float(marginal(prior, s)[1]), float(marginal(belief, s)[1])) for s in graph.reporting
    )
    return ScoreReport(rows, responses, belief)


def observations_from_vector(task_ids: Sequence[str], values: Sequence[float]) -> list[Observation]:
    """Pair task ids with a response vector, skipping missing (NaN or None) entries."""
    out = []
    for t, v in zip(task_ids, values):
        if v is None or (isinstance(v, float) and np.isnan(v)):
            continue
        out.append(Observation(t, int(v)))
    return out
