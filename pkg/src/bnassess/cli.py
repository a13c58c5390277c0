"""Command-line entry point: generate, calibrate, score, calibrate-new, cat-sim, report.

Every command that writes to ``--out`` also writes ``manifest.json`` with the
exact argument vector, the configuration, and SHA-256 checksums of inputs
and outputs.  Re-running the recorded ``argv`` reproduces the outputs
byte for byte.

Exit codes: 0 success, 1 user error, 2 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as bio
from .data import builtin_fraction_assets, generate_synthetic, sample_truth
from .exceptions import BnAssessError, SchemaError
from .fragments import observations_from_vector, score_examinee
from .gibbs import (
    GibbsConfig,
    PriorSet,
    calibrate_new_eb,
    calibrate_new_full,
    pi_names,
    run_gibbs,
)
from .irt import CatConfig, RaschItem, RaschResponder, normal_grid, run_cat

BUILTIN = "builtin:fraction"
RHAT_WARN = 1.1


class UserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _emit(args, text: str, data) -> None:
    if args.format == "json":
        sys.stdout.write(json.dumps(data, indent=2) + "\n")
    else:
        sys.stdout.write(text)


def _out_dir(args) -> Path:
    if not args.out:
        raise UserError(f"{args.command} needs --out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(args, argv, out: Path, inputs: list, outputs: list, config: dict) -> None:
    manifest = {
        "format": "bnassess-manifest",
        "version": 1,
        "package_version": __version__,
        "command": args.command,
        "argv": list(argv),
        "seed": args.seed,
        "config": config,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs if p and Path(p).is_file()},
        "outputs": {Path(p).name: _sha256(Path(p)) for p in outputs},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _load_model(spec: str):
    if spec == BUILTIN:
        return builtin_fraction_assets()
    path = Path(spec)
    if not path.is_file():
        raise UserError(f"model file not found: {spec}")
    return bio.load_model(path)


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UserError(f"{what} not found: {path}")
    return p


def _gibbs_config(args) -> GibbsConfig:
    return GibbsConfig(args.chains, args.burn_in, args.iters, args.thin, args.seed)


def _load_priors(path, model) -> PriorSet:
    priors = PriorSet.from_model(model)
    if path is None:
        return priors
    doc = bio._read_doc(_require_file(path, "priors file"), "bnassess-priors")
    lam = {}
    for name, spec in doc.get("lambda", {}).items():
        lam[name] = (spec["beta"][1], spec["beta"][0]) if "beta" in spec else tuple(spec["dirichlet"])
    pi = {t: (tuple(v["false_pos"]), tuple(v["true_pos"])) for t, v in doc.get("pi", {}).items()}
    return priors.replace(lam, pi)


# ---------------------------------------------------------------------------


def cmd_generate(args, argv) -> int:
    model = _load_model(args.model)
    out = _out_dir(args)
    if args.truth:
        truth_in = bio.load_truth(_require_file(args.truth, "truth file"))
        lam, pi = truth_in.lambda_true, truth_in.pi_true
    elif args.sample_truth:
        lam, pi = sample_truth(model, rng=np.random.default_rng([args.seed, 1]))
    else:
        raise UserError("give --truth FILE or --sample-truth")
    responses, truth = generate_synthetic(model, lam, pi, args.n, seed=args.seed)
    paths = [out / "responses.csv", out / "truth.json", out / "model.json"]
    bio.save_responses(responses, paths[0])
    bio.save_truth(truth, paths[1])
    bio.save_model(model, paths[2])
    _write_manifest(args, argv, out, [args.model, args.truth], paths, {"n": args.n})
    _emit(
        args,
        f"wrote {responses.shape[0]} x {responses.shape[1]} responses to {paths[0]}\n",
        {"responses": str(paths[0]), "truth": str(paths[1]), "shape": list(responses.shape)},
    )
    return 0


def _parse_task_subset(spec: str, model, rng) -> list[str]:
    if spec.isdigit():
        k = int(spec)
        if not 1 <= k <= len(model.task_ids):
            raise UserError(f"--task-subset must be between 1 and {len(model.task_ids)}")
        keep = set(rng.choice(len(model.task_ids), size=k, replace=False).tolist())
        return [t for i, t in enumerate(model.task_ids) if i in keep]
    ids = [s.strip() for s in spec.split(",") if s.strip()]
    unknown = set(ids) - set(model.task_ids)
    if unknown:
        raise UserError(f"unknown tasks in --task-subset: {sorted(unknown)}")
    return [t for t in model.task_ids if t in set(ids)]


def cmd_calibrate(args, argv) -> int:
    model = _load_model(args.model)
    resp_path = _require_file(args.responses, "responses file")
    responses = bio.load_responses(resp_path)
    out = _out_dir(args)
    rng = np.random.default_rng([args.seed, 2])
    outputs = []
    if args.examinee_subset is not None:
        n = responses.shape[0]
        if not 1 <= args.examinee_subset <= n:
            raise UserError(f"--examinee-subset must be between 1 and {n}")
        chosen = np.sort(rng.choice(n, size=args.examinee_subset, replace=False))
        rest = np.setdiff1d(np.arange(n), chosen)
        if rest.size:
            held = responses.select(rest)
            bio.save_responses(held, out / "heldout.csv")
            outputs.append(out / "heldout.csv")
        responses = responses.select(chosen)
    if args.task_subset is not None:
        keep = _parse_task_subset(args.task_subset, model, rng)
        model = model.subset(keep)
        responses = responses.select(tasks=[t for t in responses.task_ids if t in set(keep)])
    priors = _load_priors(args.priors, model)
    config = _gibbs_config(args)
    run = run_gibbs(responses, model, priors, config)
    lam, pi = run.posterior_means(model.graph)
    bio.save_run(run, out / "run.json", out / "draws.csv" if args.save_draws else None)
    outputs.append(out / "run.json")
    if args.save_draws:
        outputs.append(out / "draws.csv")
    bio.save_model(model, out / "model.json")
    bio.save_params(lam, pi, out / "params.json")
    report = run.report_text()
    (out / "report.txt").write_text(report, encoding="utf-8")
    outputs += [out / "model.json", out / "params.json", out / "report.txt"]
    _write_manifest(args, argv, out, [args.model, args.responses, args.priors], outputs, config.to_dict())
    if run.max_rhat > RHAT_WARN:
        print(f"warning: max R-hat {run.max_rhat:.3f} exceeds {RHAT_WARN}", file=sys.stderr)
    _emit(args, report, bio.run_to_dict(run))
    return 0


def _point_estimates(args, model):
    if args.run:
        run = bio.load_run(_require_file(args.run, "run file"))
        return run.posterior_means(model.graph)
    if args.params:
        return bio.load_params(_require_file(args.params, "parameter file"))
    raise UserError("give --run FILE or --params FILE")


def cmd_score(args, argv) -> int:
    model = _load_model(args.model)
    lam, pi = _point_estimates(args, model)
    missing = [t for t in model.task_ids if t not in pi]
    model = model.with_pi({t: v for t, v in pi.items() if t in set(model.task_ids)})
    if args.responses:
        rm = bio.load_responses(_require_file(args.responses, "responses file"))
        eid = args.examinee or rm.examinee_ids[0]
        if eid not in rm.examinee_ids:
            raise UserError(f"examinee {eid!r} not in {args.responses}")
        extra = [t for t in rm.task_ids if t not in set(model.task_ids)]
        if extra:
            print(f"note: ignoring responses to tasks outside the model: {extra}", file=sys.stderr)
        known = [t for t in rm.task_ids if t not in set(extra)]
        obs = observations_from_vector(known, rm.select(tasks=known).cells[rm.examinee_ids.index(eid)])
    elif args.x is not None:
        values = [None if v.strip().upper() in ("NA", "") else float(v) for v in args.x.split(",")] if args.x else []
        if values and len(values) != len(model.task_ids):
            raise UserError(f"--x needs {len(model.task_ids)} values (NA for missing)")
        obs = observations_from_vector(model.task_ids, values)
    else:
        obs = []
    bad = [o.task for o in obs if o.task in missing]
    if bad:
        raise UserError(f"no calibrated pi for tasks {bad}")
    report = score_examinee(model, lam, obs)
    if args.out:
        out = _out_dir(args)
        path = out / "profile.json"
        path.write_text(report.to_json() + "\n", encoding="utf-8")
        _write_manifest(args, argv, out, [args.model, args.run, args.params, args.responses], [path], {})
    _emit(args, report.to_text(), report.to_dict())
    return 0


def _comparison_text(runs: dict) -> str:
    lines = [f"{'Parameter':<24}" + "".join(f"{m + ' mean':>12}{m + ' n':>9}" for m in runs)]
    names = next(iter(runs.values())).parameter_names
    for name in names:
        if not name.startswith("pi["):
            continue
        cells = ""
        for run in runs.values():
            s = run.summaries.get(name)
            cells += f"{s.mean:>12.3f}{s.n_hat:>9.1f}" if s else f"{'':>12}{'':>9}"
        lines.append(f"{name:<24}" + cells)
    return "\n".join(lines) + "\n"


def cmd_calibrate_new(args, argv) -> int:
    model = _load_model(args.model)
    old = bio.load_run(_require_file(args.old_run, "old run file"))
    responses = bio.load_responses(_require_file(args.responses, "responses file"))
    out = _out_dir(args)
    config = _gibbs_config(args)
    runs = {}
    outputs = []
    if args.mode in ("full", "both"):
        runs["full"] = calibrate_new_full(old, responses, model, config)
    if args.mode in ("eb", "both"):
        lam, pi = old.posterior_means(model.graph)
        new_tasks = [t for t in model.task_ids if pi_names(t)[0] not in old.summaries]
        runs["eb"] = calibrate_new_eb(lam, {t: v for t, v in pi.items() if t not in new_tasks}, responses, model, config)
    for mode, run in runs.items():
        path = out / f"run_{mode}.json"
        bio.save_run(run, path)
        (out / f"report_{mode}.txt").write_text(run.report_text(), encoding="utf-8")
        outputs += [path, out / f"report_{mode}.txt"]
    comp = _comparison_text(runs)
    (out / "comparison.txt").write_text(comp, encoding="utf-8")
    outputs.append(out / "comparison.txt")
    _write_manifest(args, argv, out, [args.model, args.old_run, args.responses], outputs, {**config.to_dict(), "mode": args.mode})
    for mode, run in runs.items():
        if run.max_rhat > RHAT_WARN:
            print(f"warning: {mode} run max R-hat {run.max_rhat:.3f} exceeds {RHAT_WARN}", file=sys.stderr)
    text = "".join(f"== {m} ==\n{r.report_text()}\n" for m, r in runs.items()) + comp
    _emit(args, text, {m: bio.run_to_dict(r) for m, r in runs.items()})
    return 0


def cmd_cat_sim(args, argv) -> int:
    rng = np.random.default_rng([args.seed, 3])
    if args.pool:
        pool = bio.load_pool(_require_file(args.pool, "pool file"))
        if any(it.beta is None for it in pool):
            raise UserError("every pool item needs a difficulty for CAT")
    else:
        width = len(str(args.pool_size))
        betas = rng.uniform(-3, 3, size=args.pool_size)
        pool = [RaschItem(f"i{k + 1:0{width}d}", b) for k, b in enumerate(betas)]
    if args.true_theta == "normal":
        thetas = rng.standard_normal(args.sessions)
    else:
        try:
            thetas = np.full(args.sessions, float(args.true_theta))
        except ValueError:
            raise UserError("--true-theta must be a number or 'normal'") from None
    out = _out_dir(args)
    config = CatConfig(args.stop_sd, args.max_items)
    prior = normal_grid(args.grid_points)
    selectors = ["adaptive", "random"] if args.selector == "both" else [args.selector]
    responder_seeds = np.random.SeedSequence([args.seed, 4]).spawn(args.sessions)
    summary = {"sessions": args.sessions, "stop_sd": args.stop_sd, "max_items": args.max_items, "selectors": {}}
    outputs = []
    for sel in selectors:
        sel_rng = np.random.default_rng([args.seed, 5])
        sessions = []
        for theta, ss in zip(thetas, responder_seeds):
            responder = RaschResponder(theta, np.random.default_rng(ss))
            sessions.append(run_cat(responder, pool, prior, config, sel, sel_rng))
        lengths = np.array([s.n_items for s in sessions])
        covered = np.array([abs(s.mean - th) <= 3 * s.sd for s, th in zip(sessions, thetas)])
        summary["selectors"][sel] = {
            "mean_items": float(lengths.mean()),
            "max_items_used": int(lengths.max()),
            "reached_stop_sd": float(np.mean([s.sd <= args.stop_sd for s in sessions])),
            "coverage_3sd": float(covered.mean()),
        }
        path = out / f"traces_{sel}.csv"
        path.write_text(bio.traces_to_csv(sessions), encoding="utf-8")
        outputs.append(path)
    spath = out / "summary.json"
    spath.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    outputs.append(spath)
    _write_manifest(args, argv, out, [args.pool], outputs, {k: v for k, v in summary.items() if k != "selectors"})
    text = "".join(
        f"{sel:<10} mean items {v['mean_items']:.2f}  coverage {v['coverage_3sd']:.3f}\n"
        for sel, v in summary["selectors"].items()
    )
    _emit(args, text, summary)
    return 0


def cmd_report(args, argv) -> int:
    runs = [bio.load_run(_require_file(p, "run file")) for p in args.run]
    text = "".join(r.report_text() + "\n" for r in runs)
    data = [bio.run_to_dict(r) for r in runs]
    if args.out:
        out = _out_dir(args)
        paths = [out / "report.txt", out / "report.json"]
        paths[0].write_text(text, encoding="utf-8")
        paths[1].write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
        _write_manifest(args, argv, out, list(args.run), paths, {})
    _emit(args, text, data)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--format", choices=("text", "json"), default="text", help="stdout format")

    sampler = _Parser(add_help=False)
    sampler.add_argument("--chains", type=int, default=3)
    sampler.add_argument("--burn-in", type=int, default=2000)
    sampler.add_argument("--iters", type=int, default=5000, help="retained draws per chain")
    sampler.add_argument("--thin", type=int, default=1)

    parser = _Parser(prog="bnassess", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", parents=[common], help="simulate a response matrix")
    p.add_argument("--model", default=BUILTIN, help=f"model JSON file or {BUILTIN}")
    p.add_argument("--truth", help="truth JSON with generating lambda and pi")
    p.add_argument("--sample-truth", action="store_true", help="draw the truth from the model priors")
    p.add_argument("--n", type=int, default=325, help="number of examinees")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("calibrate", parents=[common, sampler], help="startup Gibbs calibration")
    p.add_argument("--model", default=BUILTIN)
    p.add_argument("--responses", required=True)
    p.add_argument("--priors", help="bnassess-priors JSON overriding model priors")
    p.add_argument("--examinee-subset", type=int, help="calibrate on a seeded sample of N examinees")
    p.add_argument("--task-subset", help="K (seeded sample) or comma-separated task ids")
    p.add_argument("--save-draws", action="store_true", help="also write draws.csv")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("score", parents=[common], help="skill profile for one examinee")
    p.add_argument("--model", default=BUILTIN)
    p.add_argument("--run", help="calibration run; posterior means are used")
    p.add_argument("--params", help="bnassess-params JSON with fixed lambda and pi")
    p.add_argument("--responses", help="response CSV")
    p.add_argument("--examinee", help="examinee id in the response CSV (default: first row)")
    p.add_argument("--x", help="comma-separated responses in model task order, NA for missing")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("calibrate-new", parents=[common, sampler], help="on-line calibration of new tasks")
    p.add_argument("--model", default=BUILTIN, help="model containing both old and new tasks")
    p.add_argument("--old-run", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--mode", choices=("full", "eb", "both"), default="both")
    p.set_defaults(func=cmd_calibrate_new)

    p = sub.add_parser("cat-sim", parents=[common], help="simulate Rasch adaptive tests")
    p.add_argument("--pool", help="item pool CSV or JSON")
    p.add_argument("--pool-size", type=int, default=200, help="generated pool size when --pool is absent")
    p.add_argument("--sessions", type=int, default=100)
    p.add_argument("--true-theta", default="normal", help="a number, or 'normal' for N(0, 1) draws")
    p.add_argument("--stop-sd", type=float, default=0.35)
    p.add_argument("--max-items", type=int, default=30)
    p.add_argument("--selector", choices=("adaptive", "random", "both"), default="adaptive")
    p.add_argument("--grid-points", type=int, default=61)
    p.set_defaults(func=cmd_cat_sim)

    p = sub.add_parser("report", parents=[common], help="print run summaries")
    p.add_argument("--run", action="append", required=True, help="run JSON (repeatable)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except (UserError, BnAssessError, FileNotFoundError, SchemaError) as e:
        print(f"bnassess {args.command}: error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001
        print(f"bnassess {args.command}: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
