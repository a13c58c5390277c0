import itertools

import numpy as np
import pytest

from bnassess.data import builtin_fraction_assets
from bnassess.model import (
    DETERMINISTIC,
    AssessmentModel,
    EvidenceModelSpec,
    QMatrixRow,
    SkillGraph,
    SkillVariable,
    Task,
    build_fraction_model,
)


def one_skill_model(pi=(0.2, 0.8)):
    graph = SkillGraph((SkillVariable("s", slot="p"),), ("s",), {"p": (1.0, 1.0)})
    em = EvidenceModelSpec("E", QMatrixRow((1,)))
    return AssessmentModel(graph, (em,), (Task("t", "E", pi),))


def _small_models():
    """Test models with at most 12 joint states, each with up to 6 tasks."""
    out = {}

    g = SkillGraph(
        (SkillVariable("a", slot="la"), SkillVariable("b", parents=("a",), slot="lb")),
        ("a", "b"),
        {"la": (2, 3), "lb|0": (3, 1), "lb|1": (1, 3)},
    )
    ems = (EvidenceModelSpec("A", QMatrixRow((1, 0))), EvidenceModelSpec("AB", QMatrixRow((1, 1))))
    out["chain2"] = (g, ems, ("A", "AB", "A", "AB"))

    g = SkillGraph(
        (
            SkillVariable("a", slot="la"),
            SkillVariable("b", slot="lb"),
            SkillVariable("c", parents=("a", "b"), slot="lc"),
        ),
        ("a", "b", "c"),
        {"la": (1, 1), "lb": (2, 1), "lc|0": (3, 1), "lc|1": (2, 2), "lc|2": (1, 3)},
    )
    ems = (
        EvidenceModelSpec("A", QMatrixRow((1, 0, 0))),
        EvidenceModelSpec("BC", QMatrixRow((0, 1, 1))),
        EvidenceModelSpec("ABC", QMatrixRow((1, 1, 1))),
    )
    out["collider3"] = (g, ems, ("A", "BC", "ABC", "BC", "A", "ABC"))

    # a three-level stochastic variable feeding two deterministic skills
    g = SkillGraph(
        (
            SkillVariable("r", slot="lr"),
            SkillVariable("w", cardinality=3, parents=("r",), slot="lw"),
            SkillVariable("x", kind=DETERMINISTIC, parents=("w",), mapping={(0,): 0, (1,): 1, (2,): 1}),
            SkillVariable("y", kind=DETERMINISTIC, parents=("w",), mapping={(0,): 0, (1,): 0, (2,): 1}),
        ),
        ("r", "x", "y"),
        {"lr": (1, 2), "lw|0": (3, 2, 1), "lw|1": (1, 2, 3)},
    )
    ems = (
        EvidenceModelSpec("R", QMatrixRow((1, 0, 0))),
        EvidenceModelSpec("RX", QMatrixRow((1, 1, 0))),
        EvidenceModelSpec("XY", QMatrixRow((0, 1, 1))),
    )
    out["ternary6"] = (g, ems, ("R", "RX", "XY", "XY", "RX"))

    g = SkillGraph(
        (
            SkillVariable("a", slot="la"),
            SkillVariable("b", parents=("a",), slot="lb"),
            SkillVariable("w", cardinality=3, parents=("a", "b"), slot="lw"),
            SkillVariable("c", kind=DETERMINISTIC, parents=("w",), mapping={(0,): 0, (1,): 1, (2,): 1}),
        ),
        ("a", "b", "c"),
        {
            "la": (1, 1),
            "lb|0": (2, 1),
            "lb|1": (1, 2),
            "lw|0": (2, 1, 1),
            "lw|1": (1, 2, 1),
            "lw|2": (1, 1, 2),
        },
    )
    ems = (
        EvidenceModelSpec("A", QMatrixRow((1, 0, 0))),
        EvidenceModelSpec("AC", QMatrixRow((1, 0, 1))),
        EvidenceModelSpec("ABC", QMatrixRow((1, 1, 1))),
        EvidenceModelSpec("B", QMatrixRow((0, 1, 0))),
    )
    out["mixed12"] = (g, ems, ("A", "AC", "ABC", "B", "AC", "ABC"))

    models = {}
    for name, (g, ems, task_ems) in out.items():
        tasks = tuple(Task(f"t{j + 1}", em) for j, em in enumerate(task_ems))
        models[name] = AssessmentModel(g, ems, tasks)
    return models


SMALL_MODELS = _small_models()


@pytest.fixture
def fraction_graph():
    return build_fraction_model()


@pytest.fixture
def fraction_model():
    return builtin_fraction_assets()


@pytest.fixture
def one_skill():
    return one_skill_model()


def random_lambda(graph, rng):
    vec = np.empty(graph.n_entries)
    for s in graph.slots:
        vec[s.offset : s.offset + s.cardinality] = rng.dirichlet(np.ones(s.cardinality))
    return graph.lambda_dict(vec)


def random_pi(model, rng):
    return {t: (float(rng.uniform(0.02, 0.5)), float(rng.uniform(0.5, 0.98))) for t in model.task_ids}


# ---------------------------------------------------------------------------
# Brute-force oracle, written from the model definition with plain loops.


def brute_force_joint(graph, lam):
    """[(full configuration dict, probability)] by direct enumeration."""
    stoch = [v for v in graph.variables if not v.is_deterministic]
    out = []
    for states in itertools.product(*(range(v.cardinality) for v in stoch)):
        config = {}
        it = iter(states)
        prob = 1.0
        for v in graph.variables:
            if v.is_deterministic:
                config[v.name] = dict(v.mapping)[tuple(config[p] for p in v.parents)]
                continue
            s = next(it)
            config[v.name] = s
            key = v.slot if not v.parents else f"{v.slot}|{sum(config[p] for p in v.parents)}"
            val = lam[key]
            if v.cardinality == 2 and np.ndim(val) == 0:
                prob *= val if s == 1 else 1.0 - val
            else:
                prob *= val[s]
        out.append((config, prob))
    return out


def brute_force_posterior_marginals(model, lam, pi, responses):
    """Prior and posterior P(skill = 1) per reporting skill: p(theta) * prod p(x | theta)."""
    graph = model.graph
    rows = []
    for config, prior in brute_force_joint(graph, lam):
        like = 1.0
        for task, x in responses:
            req = model.q_row(task).skills_required
            has = all(config[s] == 1 for s, r in zip(graph.reporting, req) if r)
            p = pi[task][1] if has else pi[task][0]
            like *= p if x == 1 else 1.0 - p
        rows.append((config, prior, prior * like))
    total = sum(r[2] for r in rows)
    out = {}
    for s in graph.reporting:
        out[s] = (
            sum(r[1] for r in rows if r[0][s] == 1),
            sum(r[2] for r in rows if r[0][s] == 1) / total,
        )
    return out


def brute_lambda_counts(graph, theta, priors):
    """Posterior pseudo-counts by looping over examinees."""
    out = {s.name: list(priors.lambda_priors[s.name]) for s in graph.slots}
    names = graph.names
    for idx in theta:
        config = dict(zip(names, graph.configurations[idx]))
        for v in graph.stochastic:
            key = v.slot if not v.parents else f"{v.slot}|{sum(config[p] for p in v.parents)}"
            out[key][config[v.name]] += 1
    return out


def brute_pi_counts(model, theta, responses, priors):
    graph = model.graph
    out = {}
    for j, t in enumerate(responses.task_ids):
        (a0, b0), (a1, b1) = priors.pi_priors[t]
        counts = [[a0, b0], [a1, b1]]
        req = model.q_row(t).skills_required
        for i, idx in enumerate(theta):
            x = responses.cells[i, j]
            if np.isnan(x):
                continue
            config = dict(zip(graph.names, graph.configurations[idx]))
            d = int(all(config[s] == 1 for s, r in zip(graph.reporting, req) if r))
            counts[d][0 if x == 1 else 1] += 1
        out[t] = tuple(tuple(c) for c in counts)
    return out
