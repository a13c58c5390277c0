"""Student-model, evidence-model and task-model structures.

A :class:`SkillGraph` is a small discrete Bayes net over skill variables.
Stochastic variables are conditioned on the *sum* of their parents' states,
and each value of that sum selects a population parameter slot (a Bernoulli
probability for binary variables, a probability vector otherwise).
Deterministic variables are total functions of their parents.

Joint configurations are enumerated exactly.  Their canonical order is the
mixed-radix encoding of the stochastic variables in graph order, with the
first stochastic variable most significant.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .exceptions import ModelError, StateSpaceError

STOCHASTIC = "stochastic"
DETERMINISTIC = "deterministic"

DEFAULT_STATE_CAP = 10**6
SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class SkillVariable:
    """One node of the student model.

    ``mapping`` is only used by deterministic variables and maps each
    tuple of parent states to the variable's own state.  ``slot`` names
    the parameter family of a stochastic variable; it defaults to the
    variable name.
    """

    name: str
    cardinality: int = 2
    kind: str = STOCHASTIC
    parents: tuple[str, ...] = ()
    slot: str | None = None
    mapping: tuple[tuple[tuple[int, ...], int], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        if self.cardinality < 2:
            raise ModelError(f"variable {self.name!r}: cardinality must be >= 2")
        if self.name in self.parents:
            raise ModelError(f"variable {self.name!r} lists itself as a parent")
        if self.kind not in (STOCHASTIC, DETERMINISTIC):
            raise ModelError(f"variable {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == DETERMINISTIC:
            if self.mapping is None:
                raise ModelError(f"deterministic variable {self.name!r} has no mapping")
            if isinstance(self.mapping, Mapping):
                items = self.mapping.items()
            else:
                items = self.mapping
            norm = tuple(sorted((tuple(int(s) for s in k), int(v)) for k, v in items))
            object.__setattr__(self, "mapping", norm)
            for _, v in norm:
                if not 0 <= v < self.cardinality:
                    raise ModelError(f"variable {self.name!r}: mapped state {v} out of range")
        elif self.slot is None:
            object.__setattr__(self, "slot", self.name)

    @property
    def is_deterministic(self) -> bool:
        return self.kind == DETERMINISTIC


@dataclass(frozen=True)
class LambdaSlot:
    """A population-parameter slot: the law of ``variable`` when its parent sum is ``z``."""

    name: str
    variable: str
    z: int | None
    cardinality: int
    offset: int

    @property
    def is_bernoulli(self) -> bool:
        return self.cardinality == 2


def slot_name(prefix: str, z: int | None) -> str:
    return prefix if z is None else f"{prefix}|{z}"


@dataclass(frozen=True)
class SkillGraph:
    """A student model: skill variables, reporting skills, and default slot priors.

    Parameters
    ----------
    variables : sequence of SkillVariable
        In a topological order.
    reporting : sequence of str
        The K binary skills that Q-matrix rows refer to, in column order.
    slot_priors : mapping of str to tuple of float
        Default prior pseudo-counts for each slot, listed in *state order*
        (so a Bernoulli slot with prior Beta(a, b) on P(state=1) is stored as
        ``(b, a)``).  Slots without an entry have no default prior.
    """

    variables: tuple[SkillVariable, ...]
    reporting: tuple[str, ...]
    slot_priors: Mapping[str, tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "reporting", tuple(self.reporting))
        object.__setattr__(
            self,
            "slot_priors",
            {k: tuple(float(x) for x in v) for k, v in dict(self.slot_priors).items()},
        )
        seen: dict[str, SkillVariable] = {}
        for var in self.variables:
            if var.name in seen:
                raise ModelError(f"duplicate variable {var.name!r}")
            for p in var.parents:
                if p not in seen:
                    raise ModelError(
                        f"variable {var.name!r}: parent {p!r} is unknown or not earlier "
                        "in the variable order"
                    )
            if var.is_deterministic:
                cards = [seen[p].cardinality for p in var.parents]
                table = dict(var.mapping)
                for combo in itertools.product(*(range(c) for c in cards)):
                    if combo not in table:
                        raise ModelError(
                            f"deterministic variable {var.name!r} has no state for "
                            f"parent configuration {combo}"
                        )
            seen[var.name] = var
        if not any(not v.is_deterministic for v in self.variables):
            raise ModelError("a skill graph needs at least one stochastic variable")
        for r in self.reporting:
            if r not in seen:
                raise ModelError(f"reporting skill {r!r} is not a variable")
            if seen[r].cardinality != 2:
                raise ModelError(f"reporting skill {r!r} must be binary")
        slots = {s.name: s for s in self.slots}
        for name, prior in self.slot_priors.items():
            if name not in slots:
                raise ModelError(f"prior given for unknown slot {name!r}")
            if len(prior) != slots[name].cardinality or min(prior) <= 0:
                raise ModelError(f"slot {name!r}: prior must be {slots[name].cardinality} positive values")

    # ----- structure ---------------------------------------------------

    def variable(self, name: str) -> SkillVariable:
        try:
            return self._by_name[name]
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    @cached_property
    def _by_name(self) -> dict[str, SkillVariable]:
        return {v.name: v for v in self.variables}

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @cached_property
    def stochastic(self) -> tuple[SkillVariable, ...]:
        return tuple(v for v in self.variables if not v.is_deterministic)

    @cached_property
    def deterministic(self) -> tuple[SkillVariable, ...]:
        return tuple(v for v in self.variables if v.is_deterministic)

    def max_parent_sum(self, var: SkillVariable) -> int:
        return sum(self.variable(p).cardinality - 1 for p in var.parents)

    @cached_property
    def slots(self) -> tuple[LambdaSlot, ...]:
        out = []
        offset = 0
        for var in self.variables:
            if var.is_deterministic:
                continue
            zs: list[int | None] = [None] if not var.parents else list(range(self.max_parent_sum(var) + 1))
            for z in zs:
                out.append(LambdaSlot(slot_name(var.slot, z), var.name, z, var.cardinality, offset))
                offset += var.cardinality
        return tuple(out)

    @cached_property
    def slot_index(self) -> dict[str, LambdaSlot]:
        return {s.name: s for s in self.slots}

    @property
    def n_entries(self) -> int:
        last = self.slots[-1]
        return last.offset + last.cardinality

    @property
    def state_space_size(self) -> int:
        return int(np.prod([v.cardinality for v in self.stochastic]))

    def check_cap(self, cap: int = DEFAULT_STATE_CAP) -> None:
        if self.state_space_size > cap:
            raise StateSpaceError(
                f"joint state space has {self.state_space_size} configurations, cap is {cap}"
            )

    # ----- enumeration tables -----------------------------------------

    @cached_property
    def configurations(self) -> np.ndarray:
        """All joint configurations (S x V), deterministic variables filled in."""
        self.check_cap()
        col = {n: i for i, n in enumerate(self.names)}
        stoch_cards = [v.cardinality for v in self.stochastic]
        grid = np.array(list(itertools.product(*(range(c) for c in stoch_cards))), dtype=np.int64)
        grid = grid.reshape(-1, len(stoch_cards))
        configs = np.zeros((grid.shape[0], len(self.variables)), dtype=np.int64)
        k = 0
        for var in self.variables:
            if var.is_deterministic:
                parents = configs[:, [col[p] for p in var.parents]]
                table = dict(var.mapping)
                configs[:, col[var.name]] = [table[tuple(row)] for row in parents]
            else:
                configs[:, col[var.name]] = grid[:, k]
                k += 1
        configs.flags.writeable = False
        return configs

    @cached_property
    def entry_index(self) -> np.ndarray:
        """For each configuration, the flat parameter entry used by each stochastic variable."""
        configs = self.configurations
        col = {n: i for i, n in enumerate(self.names)}
        out = np.zeros((configs.shape[0], len(self.stochastic)), dtype=np.int64)
        for k, var in enumerate(self.stochastic):
            if var.parents:
                z = configs[:, [col[p] for p in var.parents]].sum(axis=1)
                offsets = np.array(
                    [self.slot_index[slot_name(var.slot, int(zz))].offset for zz in range(self.max_parent_sum(var) + 1)]
                )[z]
            else:
                offsets = np.full(configs.shape[0], self.slot_index[var.slot].offset)
            out[:, k] = offsets + configs[:, col[var.name]]
        out.flags.writeable = False
        return out

    @cached_property
    def entry_config_matrix(self) -> np.ndarray:
        """Indicator (n_entries x S): entry e is used by configuration c."""
        m = np.zeros((self.n_entries, self.state_space_size))
        cols = np.arange(self.state_space_size)
        for k in range(self.entry_index.shape[1]):
            m[self.entry_index[:, k], cols] = 1.0
        m.flags.writeable = False
        return m

    @cached_property
    def reporting_columns(self) -> np.ndarray:
        col = {n: i for i, n in enumerate(self.names)}
        return np.array([col[r] for r in self.reporting], dtype=np.int64)

    # ----- parameter vectors -------------------------------------------

    def lambda_vector(self, lam: Mapping[str, float | Sequence[float]]) -> np.ndarray:
        """Flatten a slot assignment into state-order probabilities."""
        vec = np.empty(self.n_entries)
        for s in self.slots:
            if s.name not in lam:
                raise ModelError(f"slot {s.name!r} is unassigned")
            val = lam[s.name]
            if s.is_bernoulli and np.ndim(val) == 0:
                p = float(val)
                probs = np.array([1.0 - p, p])
            else:
                probs = np.asarray(val, dtype=float)
                if probs.shape != (s.cardinality,):
                    raise ModelError(f"slot {s.name!r} needs {s.cardinality} probabilities")
                if abs(probs.sum() - 1.0) > SIMPLEX_TOL:
                    raise ModelError(f"slot {s.name!r} does not sum to 1")
            if np.any(probs < 0) or np.any(probs > 1) or not np.all(np.isfinite(probs)):
                raise ModelError(f"slot {s.name!r} has a value outside [0, 1]")
            vec[s.offset : s.offset + s.cardinality] = probs
        return vec

    def lambda_dict(self, vec: np.ndarray) -> dict[str, float | tuple[float, ...]]:
        out: dict[str, float | tuple[float, ...]] = {}
        for s in self.slots:
            chunk = vec[s.offset : s.offset + s.cardinality]
            out[s.name] = float(chunk[1]) if s.is_bernoulli else tuple(float(x) for x in chunk)
        return out

    def prior_mean_lambda(self) -> dict[str, float | tuple[float, ...]]:
        vec = np.empty(self.n_entries)
        for s in self.slots:
            prior = np.asarray(self.slot_priors[s.name])
            vec[s.offset : s.offset + s.cardinality] = prior / prior.sum()
        return self.lambda_dict(vec)


def joint_probabilities(graph: SkillGraph, lam, cap: int = DEFAULT_STATE_CAP) -> np.ndarray:
    """Prior probability of every canonical configuration under ``lam``."""
    graph.check_cap(cap)
    flat = lam if isinstance(lam, np.ndarray) else graph.lambda_vector(lam)
    return flat[graph.entry_index].prod(axis=1)


def enumerate_joint(graph: SkillGraph, lam, cap: int = DEFAULT_STATE_CAP) -> list[tuple[tuple[int, ...], float]]:
    """List ``(configuration, probability)`` pairs in canonical order.

    Configurations are tuples over ``graph.names`` with deterministic
    variables already filled in.
    """
    probs = joint_probabilities(graph, lam, cap)
    return [(tuple(int(s) for s in row), float(p)) for row, p in zip(graph.configurations, probs)]


# ---------------------------------------------------------------------------
# Evidence and task models


@dataclass(frozen=True)
class QMatrixRow:
    """Skills a task requires, as a 0/1 vector over the reporting skills."""

    skills_required: tuple[int, ...]

    def __post_init__(self):
        row = tuple(int(x) for x in self.skills_required)
        if any(x not in (0, 1) for x in row):
            raise ModelError(f"Q-matrix row {row} must be 0/1")
        if not any(row):
            raise ModelError("a Q-matrix row must require at least one skill")
        object.__setattr__(self, "skills_required", row)

    def __len__(self):
        return len(self.skills_required)

    def as_array(self) -> np.ndarray:
        return np.array(self.skills_required, dtype=np.int64)


def skill_conjunction(config: Sequence[int], row: QMatrixRow | Sequence[int]) -> int:
    """Return 1 when ``config`` has every skill that ``row`` requires."""
    if not isinstance(row, QMatrixRow):
        row = QMatrixRow(tuple(row))
    config = tuple(config)
    if len(config) != len(row):
        raise ModelError(f"configuration has {len(config)} skills, row has {len(row)}")
    return int(all(c >= 1 for c, y in zip(config, row.skills_required) if y))


@dataclass(frozen=True)
class EvidenceModelSpec:
    """An evidence-model class: the required skills and the Beta priors on its tasks.

    ``prior_false_pos`` is the Beta pair for P(correct | skills lacking),
    ``prior_true_pos`` for P(correct | skills present).
    """

    id: str
    skills_required: QMatrixRow
    prior_false_pos: tuple[float, float] = (6.0, 21.0)
    prior_true_pos: tuple[float, float] = (21.0, 6.0)

    def __post_init__(self):
        if not isinstance(self.skills_required, QMatrixRow):
            object.__setattr__(self, "skills_required", QMatrixRow(tuple(self.skills_required)))
        for label in ("prior_false_pos", "prior_true_pos"):
            pair = tuple(float(x) for x in getattr(self, label))
            if len(pair) != 2 or min(pair) <= 0:
                raise ModelError(f"evidence model {self.id!r}: {label} must be two positive numbers")
            object.__setattr__(self, label, pair)


@dataclass(frozen=True)
class Task:
    """A task: its evidence model and (once calibrated) its misclassification pair."""

    id: str
    evidence_model: str
    pi: tuple[float, float] | None = None
    features: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.pi is not None:
            pi = tuple(float(x) for x in self.pi)
            if len(pi) != 2 or not all(0.0 < x < 1.0 for x in pi):
                raise ModelError(f"task {self.id!r}: pi values must lie strictly inside (0, 1)")
            object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "features", dict(self.features))

    @property
    def calibrated(self) -> bool:
        return self.pi is not None


@dataclass(frozen=True)
class AssessmentModel:
    """A student model together with its evidence models and tasks."""

    graph: SkillGraph
    evidence_models: tuple[EvidenceModelSpec, ...]
    tasks: tuple[Task, ...]

    def __post_init__(self):
        object.__setattr__(self, "evidence_models", tuple(self.evidence_models))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        k = len(self.graph.reporting)
        ems: dict[str, EvidenceModelSpec] = {}
        rows: dict[tuple[int, ...], str] = {}
        for em in self.evidence_models:
            if em.id in ems:
                raise ModelError(f"duplicate evidence model {em.id!r}")
            if len(em.skills_required) != k:
                raise ModelError(f"evidence model {em.id!r}: Q-row length must be {k}")
            row = em.skills_required.skills_required
            if row in rows:
                raise ModelError(
                    f"evidence models {rows[row]!r} and {em.id!r} share the same Q-matrix row"
                )
            rows[row] = em.id
            ems[em.id] = em
        ids = set()
        for t in self.tasks:
            if t.id in ids:
                raise ModelError(f"duplicate task {t.id!r}")
            if t.evidence_model not in ems:
                raise ModelError(f"task {t.id!r} references unknown evidence model {t.evidence_model!r}")
            ids.add(t.id)

    @cached_property
    def _em_by_id(self) -> dict[str, EvidenceModelSpec]:
        return {em.id: em for em in self.evidence_models}

    @cached_property
    def _task_by_id(self) -> dict[str, Task]:
        return {t.id: t for t in self.tasks}

    @property
    def task_ids(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.tasks)

    def evidence_model(self, em_id: str) -> EvidenceModelSpec:
        return self._em_by_id[em_id]

    def task(self, task_id: str) -> Task:
        try:
            return self._task_by_id[task_id]
        except KeyError:
            raise ModelError(f"unknown task {task_id!r}") from None

    def q_row(self, task_id: str) -> QMatrixRow:
        return self.evidence_model(self.task(task_id).evidence_model).skills_required

    @property
    def q_matrix(self) -> np.ndarray:
        return np.array([self.q_row(t).skills_required for t in self.task_ids], dtype=np.int64)

    def delta_table(self, task_ids: Sequence[str] | None = None) -> np.ndarray:
        """delta (J x S): whether configuration c has the skills task j needs."""
        task_ids = self.task_ids if task_ids is None else task_ids
        skills = self.graph.configurations[:, self.graph.reporting_columns] >= 1
        q = np.array([self.q_row(t).skills_required for t in task_ids], dtype=bool)
        # a configuration satisfies a row iff no required skill is missing
        return (~(q[:, None, :] & ~skills[None, :, :])).all(axis=2).astype(np.int64)

    def with_pi(self, pi: Mapping[str, tuple[float, float]]) -> "AssessmentModel":
        tasks = tuple(replace(t, pi=tuple(pi[t.id])) if t.id in pi else t for t in self.tasks)
        return replace(self, tasks=tasks)

    def subset(self, task_ids: Sequence[str]) -> "AssessmentModel":
        keep = set(task_ids)
        return replace(self, tasks=tuple(t for t in self.tasks if t.id in keep))


# ---------------------------------------------------------------------------
# The mixed-number subtraction student model


def _beta_state_order(a: float, b: float) -> tuple[float, float]:
    # Beta(a, b) on P(state=1) -> pseudo-counts for states (0, 1)
    return (float(b), float(a))


FRACTION_SKILLS = ("theta1", "theta2", "theta3", "theta4", "theta5")

FRACTION_SLOT_PRIORS = {
    "lambda1": _beta_state_order(21, 6),
    "lambda2|0": _beta_state_order(6, 21),
    "lambda2|1": _beta_state_order(21, 6),
    "lambda5|0": _beta_state_order(6, 21),
    "lambda5|1": _beta_state_order(13.5, 13.5),
    "lambda5|2": _beta_state_order(21, 6),
    "lambdaWN|0": (18.0, 6.0, 3.0),
    "lambdaWN|1": (12.0, 9.0, 6.0),
    "lambdaWN|2": (6.0, 9.0, 12.0),
    "lambdaWN|3": (3.0, 6.0, 18.0),
}


def build_fraction_model() -> SkillGraph:
    """The mixed-number subtraction student model.

    theta1 is a root Bernoulli; theta2 depends on theta1; theta5 on
    theta1 + theta2; the three-level thetaWN on theta1 + theta2 + theta5.
    theta3 and theta4 are read off thetaWN (having Skill 3 is thetaWN >= 1,
    having Skill 4 is thetaWN == 2).
    """
    variables = (
        SkillVariable("theta1", slot="lambda1"),
        SkillVariable("theta2", parents=("theta1",), slot="lambda2"),
        SkillVariable("theta5", parents=("theta1", "theta2"), slot="lambda5"),
        SkillVariable("thetaWN", cardinality=3, parents=("theta1", "theta2", "theta5"), slot="lambdaWN"),
        SkillVariable(
            "theta3",
            kind=DETERMINISTIC,
            parents=("thetaWN",),
            mapping={(0,): 0, (1,): 1, (2,): 1},
        ),
        SkillVariable(
            "theta4",
            kind=DETERMINISTIC,
            parents=("thetaWN",),
            mapping={(0,): 0, (1,): 0, (2,): 1},
        ),
    )
    return SkillGraph(variables, FRACTION_SKILLS, FRACTION_SLOT_PRIORS)
