"""Reading and writing models, responses, runs, item pools and CAT traces.

Tabular data is CSV; nested objects are JSON documents carrying a
``format`` tag and an integer ``version``.  See ``docs/formats.md``.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import ResponseMatrix, SyntheticTruth
from .exceptions import SchemaError
from .gibbs import CalibrationRun, GibbsConfig, ParameterSummary
from .irt import CatSession, RaschItem
from .model import (
    DETERMINISTIC,
    AssessmentModel,
    EvidenceModelSpec,
    QMatrixRow,
    SkillGraph,
    SkillVariable,
    Task,
)

SCHEMA_VERSION = 1
MISSING = "NA"


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def _write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _read_doc(path, fmt: str) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e.msg}", path, e.lineno) from None
    return check_header(doc, fmt, path)


def check_header(doc, fmt: str, path=None) -> dict:
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object", path)
    if "version" not in doc:
        raise SchemaError("missing required 'version' field", path)
    if doc["version"] != SCHEMA_VERSION:
        raise SchemaError(f"unsupported version {doc['version']!r} (expected {SCHEMA_VERSION})", path)
    if doc.get("format") != fmt:
        raise SchemaError(f"expected format {fmt!r}, found {doc.get('format')!r}", path)
    return doc


def _fmt_float(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# Models


def model_to_dict(model: AssessmentModel) -> dict:
    g = model.graph
    variables = []
    for v in g.variables:
        d = {"name": v.name, "kind": v.kind, "cardinality": v.cardinality, "parents": list(v.parents)}
        if v.is_deterministic:
            d["mapping"] = [[list(k), s] for k, s in v.mapping]
        else:
            d["slot"] = v.slot
        variables.append(d)
    slot_priors = {}
    for s in g.slots:
        if s.name not in g.slot_priors:
            continue
        prior = g.slot_priors[s.name]
        slot_priors[s.name] = {"beta": [prior[1], prior[0]]} if s.is_bernoulli else {"dirichlet": list(prior)}
    return {
        "format": "bnassess-model",
        "version": SCHEMA_VERSION,
        "variables": variables,
        "reporting": list(g.reporting),
        "slot_priors": slot_priors,
        "evidence_models": [
            {
                "id": em.id,
                "skills_required": list(em.skills_required.skills_required),
                "prior_false_pos": list(em.prior_false_pos),
                "prior_true_pos": list(em.prior_true_pos),
            }
            for em in model.evidence_models
        ],
        "tasks": [
            {"id": t.id, "evidence_model": t.evidence_model, "pi": None if t.pi is None else list(t.pi), "features": dict(t.features)}
            for t in model.tasks
        ],
    }


def model_from_dict(doc: dict, path=None) -> AssessmentModel:
    check_header(doc, "bnassess-model", path)
    try:
        variables = []
        for v in doc["variables"]:
            kind = v.get("kind", "stochastic")
            mapping = None
            if kind == DETERMINISTIC:
                mapping = tuple((tuple(k), int(s)) for k, s in v["mapping"])
            variables.append(
                SkillVariable(
                    v["name"], int(v.get("cardinality", 2)), kind, tuple(v.get("parents", ())), v.get("slot"), mapping
                )
            )
        slot_priors = {}
        for name, spec in doc.get("slot_priors", {}).items():
            if "beta" in spec:
                a, b = spec["beta"]
                slot_priors[name] = (b, a)
            elif "dirichlet" in spec:
                slot_priors[name] = tuple(spec["dirichlet"])
            else:
                raise SchemaError(f"slot prior {name!r} must give 'beta' or 'dirichlet'", path)
        graph = SkillGraph(tuple(variables), tuple(doc["reporting"]), slot_priors)
        ems = tuple(
            EvidenceModelSpec(
                e["id"],
                QMatrixRow(tuple(e["skills_required"])),
                tuple(e.get("prior_false_pos", (6.0, 21.0))),
                tuple(e.get("prior_true_pos", (21.0, 6.0))),
            )
            for e in doc["evidence_models"]
        )
        tasks = tuple(
            Task(t["id"], t["evidence_model"], None if t.get("pi") is None else tuple(t["pi"]), t.get("features", {}))
            for t in doc["tasks"]
        )
    except KeyError as e:
        raise SchemaError(f"missing field {e.args[0]!r}", path) from None
    return AssessmentModel(graph, ems, tasks)


def save_model(model: AssessmentModel, path) -> None:
    _write_text(path, _dump(model_to_dict(model)))


def load_model(path) -> AssessmentModel:
    return model_from_dict(_read_doc(path, "bnassess-model"), path)


# ---------------------------------------------------------------------------
# Responses


def responses_to_csv(rm: ResponseMatrix) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["examinee", *rm.task_ids])
    for eid, row in zip(rm.examinee_ids, rm.cells):
        w.writerow([eid, *(MISSING if np.isnan(v) else str(int(v)) for v in row)])
    return buf.getvalue()


def save_responses(rm: ResponseMatrix, path) -> None:
    _write_text(path, responses_to_csv(rm))


def _parse_cell(text: str, path, line: int) -> float:
    text = text.strip()
    if text in (MISSING, ""):
        return math.nan
    if text in ("0", "1"):
        return float(text)
    raise SchemaError(f"response cell {text!r} is not 0, 1 or {MISSING}", path, line)


def load_responses(path) -> ResponseMatrix:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty response file", path, 1) from None
        if not header or header[0] != "examinee":
            raise SchemaError("first header column must be 'examinee'", path, 1)
        tasks = header[1:]
        ids, rows = [], []
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise SchemaError(f"expected {len(header)} columns, found {len(rec)}", path, line)
            ids.append(rec[0])
            rows.append([_parse_cell(c, path, line) for c in rec[1:]])
    cells = np.array(rows, dtype=float).reshape(len(ids), len(tasks))
    return ResponseMatrix(tuple(ids), tuple(tasks), cells)


# ---------------------------------------------------------------------------
# Synthetic truth and point estimates


def _lam_json(lam) -> dict:
    return {k: (list(v) if isinstance(v, (tuple, list, np.ndarray)) else float(v)) for k, v in lam.items()}


def _lam_from_json(d) -> dict:
    return {k: (tuple(v) if isinstance(v, list) else float(v)) for k, v in d.items()}


def save_truth(truth: SyntheticTruth, path) -> None:
    doc = {
        "format": "bnassess-truth",
        "version": SCHEMA_VERSION,
        "seed": truth.seed,
        "lambda": _lam_json(truth.lambda_true),
        "pi": {k: list(v) for k, v in truth.pi_true.items()},
        "examinee_ids": list(truth.examinee_ids),
        "theta": list(truth.theta_true),
    }
    _write_text(path, _dump(doc))


def load_truth(path) -> SyntheticTruth:
    doc = _read_doc(path, "bnassess-truth")
    return SyntheticTruth(
        _lam_from_json(doc["lambda"]),
        {k: tuple(v) for k, v in doc["pi"].items()},
        tuple(doc["theta"]),
        doc.get("seed"),
        tuple(doc.get("examinee_ids", ())),
    )


def save_params(lam, pi, path) -> None:
    doc = {
        "format": "bnassess-params",
        "version": SCHEMA_VERSION,
        "lambda": _lam_json(lam),
        "pi": {k: list(v) for k, v in pi.items()},
    }
    _write_text(path, _dump(doc))


def load_params(path) -> tuple[dict, dict]:
    doc = _read_doc(path, "bnassess-params")
    return _lam_from_json(doc["lambda"]), {k: tuple(v) for k, v in doc["pi"].items()}


# ---------------------------------------------------------------------------
# Calibration runs


def run_to_dict(run: CalibrationRun) -> dict:
    return {"format": "bnassess-run", "version": SCHEMA_VERSION, **run.to_dict()}


def draws_to_csv(run: CalibrationRun) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["chain", "iteration", *run.parameter_names])
    for c in range(run.draws.shape[0]):
        for i in range(run.draws.shape[1]):
            w.writerow([c, i, *(_fmt_float(x) for x in run.draws[c, i])])
    return buf.getvalue()


def save_run(run: CalibrationRun, path, draws_path=None) -> None:
    doc = run_to_dict(run)
    if draws_path is not None:
        doc["draws_file"] = Path(draws_path).name
        _write_text(draws_path, draws_to_csv(run))
    _write_text(path, _dump(doc))


def _load_draws(path, names: Sequence[str], chains: int) -> np.ndarray:
    path = Path(path)
    per_chain: dict[int, list[list[float]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[2:] != list(names):
            raise SchemaError("draws header does not match the run's parameters", path, 1)
        for line, rec in enumerate(reader, start=2):
            try:
                per_chain.setdefault(int(rec[0]), []).append([float(x) for x in rec[2:]])
            except (ValueError, IndexError):
                raise SchemaError("malformed draws row", path, line) from None
    return np.array([per_chain[c] for c in range(chains)], dtype=float)


def load_run(path) -> CalibrationRun:
    path = Path(path)
    doc = _read_doc(path, "bnassess-run")
    cfg = GibbsConfig(**doc["config"])
    names = tuple(doc["parameter_names"])
    summaries = {d["name"]: ParameterSummary.from_dict(d) for d in doc["summaries"]}
    draws = None
    if doc.get("draws_file"):
        draws = _load_draws(path.parent / doc["draws_file"], names, cfg.chains)
    fixed = {}
    if doc.get("fixed", {}).get("lambda"):
        fixed["lambda"] = _lam_from_json(doc["fixed"]["lambda"])
    if doc.get("fixed", {}).get("pi"):
        fixed["pi"] = {k: tuple(v) for k, v in doc["fixed"]["pi"].items()}
    return CalibrationRun(
        doc["mode"], cfg, names, draws, summaries, dict(doc["rhat"]), tuple(doc["task_ids"]),
        doc["n_examinees"], fixed,
    )


# ---------------------------------------------------------------------------
# Item pools and CAT traces


def save_pool(items: Iterable[RaschItem], path) -> None:
    items = list(items)
    path = Path(path)
    if path.suffix == ".json":
        doc = {
            "format": "bnassess-pool",
            "version": SCHEMA_VERSION,
            "items": [{"id": it.id, "beta": it.beta, "features": list(it.features)} for it in items],
        }
        _write_text(path, _dump(doc))
        return
    k = max((len(it.features) for it in items), default=0)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "beta", *(f"f{i + 1}" for i in range(k))])
    for it in items:
        w.writerow([it.id, "" if it.beta is None else _fmt_float(it.beta), *(_fmt_float(f) for f in it.features)])
    _write_text(path, buf.getvalue())


def load_pool(path) -> list[RaschItem]:
    path = Path(path)
    if path.suffix == ".json":
        doc = _read_doc(path, "bnassess-pool")
        return [RaschItem(str(d["id"]), d.get("beta"), tuple(d.get("features", ()))) for d in doc["items"]]
    items = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["id", "beta"]:
            raise SchemaError("pool header must start with 'id,beta'", path, 1)
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise SchemaError(f"expected {len(header)} columns, found {len(rec)}", path, line)
            try:
                beta = None if rec[1].strip() == "" else float(rec[1])
                feats = tuple(float(x) for x in rec[2:])
            except ValueError:
                raise SchemaError("non-numeric difficulty or feature", path, line) from None
            items.append(RaschItem(rec[0], beta, feats))
    return items


TRACE_FIELDS = ("session", "step", "item", "beta", "response", "mean", "sd")


def traces_to_csv(sessions: Sequence[CatSession]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for s, sess in enumerate(sessions):
        for k, r in enumerate(sess.records):
            w.writerow([s, k + 1, r.item, _fmt_float(r.beta), r.response, _fmt_float(r.mean), _fmt_float(r.sd)])
    return buf.getvalue()


def load_traces(path) -> list[list[dict]]:
    out: list[list[dict]] = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            s = int(rec["session"])
            while len(out) <= s:
                out.append([])
            out[s].append(
                {
                    "item": rec["item"],
                    "beta": float(rec["beta"]),
                    "response": int(rec["response"]),
                    "mean": float(rec["mean"]),
                    "sd": float(rec["sd"]),
                }
            )
    return out
