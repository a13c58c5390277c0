"""Response matrices, the bundled fraction-subtraction assets, and synthetic data."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .exceptions import ModelError
from .model import (
    AssessmentModel,
    EvidenceModelSpec,
    QMatrixRow,
    Task,
    build_fraction_model,
    joint_probabilities,
)


@dataclass(frozen=True, eq=False)
class ResponseMatrix:
    """Examinee-by-task 0/1 responses; missing cells are NaN."""

    examinee_ids: tuple[str, ...]
    task_ids: tuple[str, ...]
    cells: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "examinee_ids", tuple(str(e) for e in self.examinee_ids))
        object.__setattr__(self, "task_ids", tuple(str(t) for t in self.task_ids))
        cells = np.array(self.cells, dtype=float).reshape(len(self.examinee_ids), len(self.task_ids))
        observed = ~np.isnan(cells)
        if np.any((cells[observed] != 0) & (cells[observed] != 1)):
            raise ModelError("response cells must be 0, 1 or missing")
        if len(set(self.task_ids)) != len(self.task_ids):
            raise ModelError("duplicate task id in response matrix")
        if len(set(self.examinee_ids)) != len(self.examinee_ids):
            raise ModelError("duplicate examinee id in response matrix")
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)

    def __eq__(self, other):
        if not isinstance(other, ResponseMatrix):
            return NotImplemented
        return (
            self.examinee_ids == other.examinee_ids
            and self.task_ids == other.task_ids
            and np.array_equal(self.cells, other.cells, equal_nan=True)
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.cells)

    def aligned(self, task_ids: Sequence[str]) -> np.ndarray:
        """Cells re-ordered to ``task_ids``; tasks absent from the matrix are all-missing."""
        unknown = set(self.task_ids) - set(task_ids)
        if unknown:
            raise ModelError(f"responses reference tasks not in the model: {sorted(unknown)}")
        col = {t: i for i, t in enumerate(self.task_ids)}
        out = np.full((len(self.examinee_ids), len(task_ids)), np.nan)
        for j, t in enumerate(task_ids):
            if t in col:
                out[:, j] = self.cells[:, col[t]]
        return out

    def select(self, examinees: Sequence[int] | None = None, tasks: Sequence[str] | None = None) -> "ResponseMatrix":
        rows = np.arange(len(self.examinee_ids)) if examinees is None else np.asarray(examinees, dtype=int)
        tasks = list(self.task_ids) if tasks is None else list(tasks)
        col = {t: i for i, t in enumerate(self.task_ids)}
        cols = [col[t] for t in tasks]
        return ResponseMatrix(
            tuple(self.examinee_ids[i] for i in rows), tuple(tasks), self.cells[np.ix_(rows, cols)]
        )

    def row(self, examinee_id: str) -> dict[str, int]:
        i = self.examinee_ids.index(examinee_id)
        return {t: int(v) for t, v in zip(self.task_ids, self.cells[i]) if not np.isnan(v)}


@dataclass(frozen=True)
class SyntheticTruth:
    lambda_true: Mapping[str, float | tuple[float, ...]]
    pi_true: Mapping[str, tuple[float, float]]
    theta_true: tuple[int, ...]
    seed: int | None = None
    examinee_ids: tuple[str, ...] = field(default=())


# ---------------------------------------------------------------------------
# Bundled assets

FRACTION_ITEMS = {
    # item: (stem, evidence model)
    "1": ("6/7 - 4/7", "EM1"),
    "2": ("3/4 - 3/4", "EM1"),
    "3": ("11/8 - 1/8", "EM2"),
    "4": ("3 4/5 - 3 2/5", "EM3"),
    "5": ("4 5/7 - 1 4/7", "EM3"),
    "6": ("3 7/8 - 2", "EM3"),
    "7": ("3 1/2 - 2 3/2", "EM4"),
    "8": ("4 1/3 - 2 4/3", "EM4"),
    "9": ("7 3/5 - 4/5", "EM4"),
    "10": ("4 1/3 - 1 2/3", "EM4"),
    "11": ("4 1/10 - 2 8/10", "EM4"),
    "12": ("2 - 1/3", "EM5"),
    "13": ("3 - 2 1/3", "EM5"),
    "14": ("7 - 1 4/3", "EM5"),
    "15": ("4 4/12 - 2 7/12", "EM6"),
}

FRACTION_EVIDENCE_MODELS = {
    "EM1": (1, 0, 0, 0, 0),
    "EM2": (1, 1, 0, 0, 0),
    "EM3": (1, 0, 1, 0, 0),
    "EM4": (1, 0, 1, 1, 0),
    "EM5": (1, 0, 1, 1, 1),
    "EM6": (1, 1, 1, 1, 0),
}


def builtin_fraction_assets() -> AssessmentModel:
    """The five-skill mixed-number subtraction model with its 15 items and 6 evidence models."""
    graph = build_fraction_model()
    ems = tuple(
        EvidenceModelSpec(em_id, QMatrixRow(row), (6.0, 21.0), (21.0, 6.0))
        for em_id, row in FRACTION_EVIDENCE_MODELS.items()
    )
    tasks = tuple(
        Task(f"item{num}", em, features={"stem": stem}) for num, (stem, em) in FRACTION_ITEMS.items()
    )
    return AssessmentModel(graph, ems, tasks)


# ---------------------------------------------------------------------------
# Synthetic data


def sample_truth(model: AssessmentModel, priors=None, rng: np.random.Generator | None = None):
    """Draw a generating (lambda, pi) from the model's priors.

    Returns ``(lambda_dict, pi_dict)``.  ``priors`` is a
    :class:`~bnassess.gibbs.PriorSet`; the model defaults are used when omitted.
    """
    from .gibbs import PriorSet

    rng = np.random.default_rng() if rng is None else rng
    priors = PriorSet.from_model(model) if priors is None else priors
    graph = model.graph
    vec = np.empty(graph.n_entries)
    for s in graph.slots:
        vec[s.offset : s.offset + s.cardinality] = rng.dirichlet(priors.lambda_priors[s.name])
    pi = {}
    for t in model.task_ids:
        (a0, b0), (a1, b1) = priors.pi_priors[t]
        pi[t] = (float(rng.beta(a0, b0)), float(rng.beta(a1, b1)))
    return graph.lambda_dict(vec), pi


def generate_synthetic(
    model: AssessmentModel,
    lambda_true,
    pi_true: Mapping[str, tuple[float, float]],
    n: int,
    seed: int | None = None,
) -> tuple[ResponseMatrix, SyntheticTruth]:
    """Simulate ``n`` examinees: configurations from p(theta | lambda), then Bernoulli responses."""
    if n < 1:
        raise ModelError("need at least one examinee")
    for t in model.task_ids:
        if t not in pi_true:
            raise ModelError(f"no generating pi for task {t!r}")
        p0, p1 = pi_true[t]
        if not (0.0 <= p0 <= 1.0 and 0.0 <= p1 <= 1.0):
            raise ModelError(f"task {t!r}: generating pi must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    prior = joint_probabilities(model.graph, lambda_true)
    configs = rng.choice(len(prior), size=n, p=prior / prior.sum())
    delta = model.delta_table()[:, configs].T
    pi = np.array([pi_true[t] for t in model.task_ids])
    p_correct = np.where(delta == 1, pi[:, 1], pi[:, 0])
    cells = (rng.random(p_correct.shape) < p_correct).astype(float)
    width = len(str(n))
    ids = tuple(f"e{i + 1:0{width}d}" for i in range(n))
    truth = SyntheticTruth(
        dict(lambda_true) if isinstance(lambda_true, Mapping) else model.graph.lambda_dict(lambda_true),
        {t: tuple(float(x) for x in pi_true[t]) for t in model.task_ids},
        tuple(int(c) for c in configs),
        seed,
        ids,
    )
    return ResponseMatrix(ids, model.task_ids, cells), truth
