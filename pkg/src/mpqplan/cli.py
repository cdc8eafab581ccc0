"""Command-line entry point: ``mpqplan <command>``.

Every stage reads and writes plain files in ``--out-dir`` so stages can be
rerun or swapped independently. Wall-clock timings go to ``*.meta.json``
files only; every other artifact is byte-identical across reruns with the
same ``--seed``.

Exit codes: 0 ok, 2 bad input, 3 infeasible budget, 4 internal error.
Errors are reported as a JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .costmodel import (
    LEVELS, CostBudget, MissingLatency, budget_at, build_cost_table, load_latency_csv, plan_cost,
)
from .netlab import (
    ModelDescriptor, ParamVector, TrainSchedule, build, convnet, evaluate, load_mpqd, pattern_images,
    save_mpqd, split, train,
)
from .pareto import DEFAULT_FRACTIONS, SpaceCount, frontier, read_frontier_csv, select, write_frontier_csv
from .planner import BitPlan, IlpInstance, InfeasibleBudget, brute_force, budget_sweep, solve
from .proxy_nas import (
    HparamSpace, SearchBudget, SyntheticEvaluator, ToyQuantEvaluator, read_history, search,
    synthetic_space, write_history,
)
from .quantizer import QuantSpec
from .sensitivity import ProfileConfig, SensitivityProfile, profile
from .simulate import plan_accuracy

log = logging.getLogger("mpqplan")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_INTERNAL = 0, 2, 3, 4

# fixed file names inside a run directory
FILES = {
    "descriptor": "model.json",
    "data": "data.mpqd",
    "params": "params.f8",
    "profile": "profile.json",
    "cost_table": "cost_table.json",
    "plan": "plan.json",
    "frontier": "frontier.csv",
    "pareto": "pareto_report.json",
    "sweep": "sweep.csv",
    "history": "history.jsonl",
    "best": "best_config.json",
    "space": "space.toml",
    "latency": "latency.csv",
    "quantize_eval": "quantize_eval.json",
}


class CliError(Exception):
    def __init__(self, code: str, message: str, exit_code: int = EXIT_INPUT, **details):
        super().__init__(message)
        self.code, self.exit_code, self.details = code, exit_code, details

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self), **self.details}


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def _need(path, code: str) -> Path:
    if path is None:
        raise CliError(code, "required path not given")
    p = Path(path)
    if not p.is_file():
        raise CliError(code, f"{p} not found", path=str(p))
    return p


def _read(loader, path: Path, what: str):
    try:
        return loader(path)
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise CliError("E_INVALID_INPUT", f"{path}: invalid {what}: {exc}", path=str(path)) from None


def _bits(text: str) -> list[int]:
    try:
        out = [int(b) for b in text.split(",") if b.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bit list must be comma-separated integers: {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty bit list")
    return out


def _kinds(text: str) -> list[str]:
    out = [k.strip() for k in text.split(",") if k.strip()]
    bad = [k for k in out if k not in ("size", "bops", "latency")]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"cost kinds must be drawn from size,bops,latency: {text!r}")
    return out


def _meta(out: Path, stage: str, seconds: float, **extra) -> None:
    _dump(out / f"{stage}.meta.json", {"stage": stage, "seconds": seconds, "version": __version__, **extra})


# --- model and data loading ---------------------------------------------------------------


def _load_model(args):
    desc_path = _need(args.descriptor, "E_DESCRIPTOR_NOT_FOUND")
    desc = _read(ModelDescriptor.load, desc_path, "model descriptor")
    if desc.arch is None:
        raise CliError("E_INVALID_INPUT", f"{desc_path}: descriptor has no 'arch' record to build a network from")
    try:
        net = build(desc.arch)
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError("E_INVALID_INPUT", f"{desc_path}: {exc}") from None
    return desc, net


def _load_dataset(args):
    data_path = _need(args.data, "E_DATA_NOT_FOUND")
    batch, classes = _read(load_mpqd, data_path, "dataset")
    return _read(lambda _: split(batch, classes, args.val_fraction, args.seed), data_path, "dataset")


def _train_schedule(args, epochs=None) -> TrainSchedule:
    return TrainSchedule(args.lr, args.weight_decay, args.batch_size, args.train_epochs if epochs is None else epochs)


def _load_or_train(args, net, dataset, out: Path) -> ParamVector:
    if args.params is not None:
        params, _ = _read(ParamVector.load, _need(args.params, "E_PARAMS_NOT_FOUND"), "parameter checkpoint")
        if params.layout != net.layout:
            raise CliError("E_INVALID_INPUT", "checkpoint layout does not match the model")
        return params
    log.info("no --params given; training the float model for %d epochs", args.train_epochs)
    params, history = train(net, net.init_params(args.seed), dataset, _train_schedule(args), seed=args.seed)
    params.save(out / FILES["params"], {"seed": args.seed, "epochs": args.train_epochs,
                                        "best_val_accuracy": max(h[2] for h in history)})
    return params


def _quant_spec(args) -> QuantSpec:
    return QuantSpec(8, args.granularity, args.scheme, args.clip)


def _cost_table(args, profile_: SensitivityProfile):
    desc = _read(ModelDescriptor.load, _need(args.descriptor, "E_DESCRIPTOR_NOT_FOUND"), "model descriptor")
    latency = None
    if args.latency is not None:
        latency = _need(args.latency, "E_LATENCY_NOT_FOUND")
    try:
        entries = None if latency is None else _read(load_latency_csv, latency, "latency table")
        table = build_cost_table(desc, profile_.bit_options, args.activation_bits, entries)
    except MissingLatency as exc:
        raise CliError("E_MISSING_LATENCY", str(exc), missing=[list(m) for m in exc.missing]) from None
    except ValueError as exc:
        raise CliError("E_INVALID_INPUT", str(exc)) from None
    if table.layer_names != profile_.layer_names:
        raise CliError("E_INVALID_INPUT", "profile layers do not match the descriptor's quantizable layers",
                       profile_layers=profile_.layer_names, descriptor_layers=table.layer_names)
    return table


def _budget(args, table) -> CostBudget:
    explicit = {"size": args.size_mb, "bops": args.bops, "latency": args.latency_limit}
    explicit = {k: v for k, v in explicit.items() if v is not None}
    try:
        if explicit:
            return CostBudget.from_limits(explicit)
        return budget_at(table, LEVELS[args.level], tuple(args.level_kinds))
    except ValueError as exc:
        raise CliError("E_INVALID_INPUT", str(exc)) from None


# --- commands -----------------------------------------------------------------------------


def cmd_make_toy(args, out: Path) -> int:
    """Write a small convnet descriptor, dataset, latency table and search space."""
    net = convnet(1, 8, 4)
    net.descriptor().save(out / FILES["descriptor"])
    save_mpqd(out / FILES["data"], pattern_images(args.samples, 4, 8, noise=1.0, seed=args.seed), 4)
    src = resources.files("mpqplan.data")
    (out / FILES["latency"]).write_text(src.joinpath("toy_latency.csv").read_text())
    (out / FILES["space"]).write_text(src.joinpath("toy_space.toml").read_text())
    print(f"wrote toy fixtures to {out}")
    return EXIT_OK


def cmd_profile(args, out: Path) -> int:
    start = time.perf_counter()
    desc, net = _load_model(args)
    dataset = _load_dataset(args)
    try:
        net.check_inputs(dataset.train.inputs)
    except ValueError as exc:
        raise CliError("E_INVALID_INPUT", f"dataset does not fit the model: {exc}") from None
    params = _load_or_train(args, net, dataset, out)
    batch = dataset.train.take(np.arange(min(args.profile_batch, len(dataset.train))))
    cfg = ProfileConfig(args.probes, args.distribution, args.seed, _quant_spec(args))
    prof = profile(net, params, batch, args.bits, cfg)
    prof.save(out / FILES["profile"])
    _meta(out, "profile", time.perf_counter() - start, probes=args.probes)
    print(f"profile: {len(prof.layer_names)} layers x {len(prof.bit_options)} bit options -> {out / FILES['profile']}")
    return EXIT_OK


def _print_plan(plan: BitPlan, prof: SensitivityProfile, table) -> None:
    print(f"{'layer':<24} {'bits':>4} {'delta':>12} {'size_mb':>10} {'gbops':>10}")
    for i, (name, b) in enumerate(plan.assignment):
        j = prof.bit_options.index(b)
        print(f"{name:<24} {b:>4} {prof.delta[i, j]:>12.4e} {table.size_mb[i, j]:>10.4f} {table.bops[i, j]:>10.4f}")
    cost = plan_cost(plan, table)
    lat = "" if cost.latency is None else f" latency={cost.latency:.4f}"
    print(f"total delta={plan.objective:.6e} size_mb={cost.size_mb:.4f} gbops={cost.bops:.4f}{lat}")


def cmd_plan(args, out: Path) -> int:
    start = time.perf_counter()
    prof = _read(SensitivityProfile.load, _need(args.profile, "E_PROFILE_NOT_FOUND"), "sensitivity profile")
    table = _cost_table(args, prof)
    budget = _budget(args, table)
    if "latency" in budget.limits() and table.latency is None:
        raise CliError("E_INVALID_INPUT", "a latency limit needs --latency")
    instance = IlpInstance(prof, table, budget)
    plan = brute_force(instance) if args.brute_force else solve(instance)
    table.save(out / FILES["cost_table"])
    plan.save(out / FILES["plan"], table, budget)
    sweep = budget_sweep(instance.with_budget(None), DEFAULT_FRACTIONS, tuple(budget.limits()))
    with open(out / FILES["sweep"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fraction", "perturbation", "size_mb", "bops", "bits_csv"])
        for r in sweep:
            if r.plan is None:
                w.writerow([repr(r.fraction), "", "", "", ""])
            else:
                c = plan_cost(r.plan, table)
                w.writerow([repr(r.fraction), repr(r.plan.objective), repr(c.size_mb), repr(c.bops),
                            ",".join(map(str, r.plan.bits))])
    _meta(out, "plan", time.perf_counter() - start, solver="brute_force" if args.brute_force else "branch_and_bound")
    _print_plan(plan, prof, table)
    return EXIT_OK


def cmd_pareto(args, out: Path) -> int:
    from .plotting import frontier_figure

    start = time.perf_counter()
    prof = _read(SensitivityProfile.load, _need(args.profile, "E_PROFILE_NOT_FOUND"), "sensitivity profile")
    table = _cost_table(args, prof)
    if "latency" in args.objectives and table.latency is None:
        raise CliError("E_INVALID_INPUT", "the latency objective needs --latency")
    instance = IlpInstance(prof, table)
    points = frontier(instance, args.objectives, local_moves=args.local_moves)
    write_frontier_csv(out / FILES["frontier"], points)
    budget = _budget(args, table)
    try:
        chosen = select(points, budget, table)
        chosen_dict = chosen.to_dict(table, budget)
    except InfeasibleBudget as exc:
        chosen, chosen_dict = None, {"infeasible": exc.to_dict()}
    L, m = len(prof.layer_names), len(prof.bit_options)
    report = {
        "layers": L,
        "bit_options": prof.bit_options,
        "objectives": ["perturbation", *args.objectives],
        "frontier_points": len(points),
        "space_count": SpaceCount.for_model(m, L).to_dict(),
        "selected": chosen_dict,
    }
    _dump(out / FILES["pareto"], report)
    sel = None
    if chosen is not None:
        sel = (plan_cost(chosen, table).get(args.objectives[0]), chosen.objective)
    frontier_figure(points, out / "frontier.png", args.objectives[0], sel)
    _meta(out, "pareto", time.perf_counter() - start)
    print(f"frontier: {len(points)} points; bit space {m}^{L}; schedule space {report['space_count']['schedule_space']}")
    return EXIT_OK


def cmd_search(args, out: Path) -> int:
    from .plotting import search_figure

    start = time.perf_counter()
    if args.space is not None:
        space = _read(HparamSpace.from_toml, _need(args.space, "E_SPACE_NOT_FOUND"), "search space")
    elif args.synthetic:
        space = synthetic_space()
    else:
        raise CliError("E_SPACE_NOT_FOUND", "--space is required unless --synthetic is given")
    if args.synthetic:
        if space.names != synthetic_space().names:
            raise CliError("E_INVALID_INPUT", "--synthetic needs the built-in synthetic space")
        evaluator = SyntheticEvaluator()
    else:
        _, net = _load_model(args)
        dataset = _load_dataset(args)
        params = _load_or_train(args, net, dataset, out)
        evaluator = ToyQuantEvaluator(net, params, dataset, _train_schedule(args, 1),
                                      args.short_epochs, args.full_epochs, args.seed)
        wanted = {f"bits_{n}" for n in net.quantizable_layers}
        if not wanted <= set(space.names) or not {"channel", "bn_fold", "distill", "clip"} <= set(space.names):
            raise CliError("E_INVALID_INPUT", "search space lacks dimensions the toy evaluator needs",
                           needs=sorted(wanted | {"channel", "bn_fold", "distill", "clip"}))
    M = args.M if args.M is not None else space.size
    try:
        budget = SearchBudget(M, args.N, args.K, args.short_epochs, args.full_epochs, args.rounds, args.seed)
    except ValueError as exc:
        raise CliError("E_INVALID_INPUT", str(exc)) from None
    resume = []
    if args.resume is not None:
        resume = _read(lambda p: read_history(p, space), _need(args.resume, "E_HISTORY_NOT_FOUND"), "history")
    try:
        result = search(space, evaluator, budget, resume=resume, timed=True)
    except ValueError as exc:
        raise CliError("E_INVALID_INPUT", str(exc)) from None
    timings = [e.seconds for e in result.history]
    for e in result.history:
        e.seconds = None  # timings live in the metadata file
    write_history(out / FILES["history"], result.history)
    _dump(out / FILES["best"], {"config": result.best.as_dict(), "score": result.best_score,
                                "budget": budget.to_dict(), "evaluations": len(result.history)})
    search_figure(result.history, out / "search.png")
    _meta(out, "search", time.perf_counter() - start, evaluation_seconds=timings,
          evaluator_calls=result.evaluator_calls, proxy_forward_calls=result.proxy_calls)
    print(f"best score {result.best_score:.4f}: {json.dumps(result.best.as_dict())}")
    return EXIT_OK


def cmd_quantize_eval(args, out: Path) -> int:
    start = time.perf_counter()
    _, net = _load_model(args)
    dataset = _load_dataset(args)
    params = _load_or_train(args, net, dataset, out)
    plan = _read(BitPlan.load, _need(args.plan, "E_PLAN_NOT_FOUND"), "plan")
    if plan.layer_names != net.quantizable_layers:
        raise CliError("E_INVALID_INPUT", "plan layers do not match the model's quantizable layers")
    spec = _quant_spec(args)
    bits = dict(plan.assignment)
    stats = net.bn_statistics(params, dataset.train.inputs) if net.has_batchnorm else None
    result = {
        "float_accuracy": evaluate(net, params, dataset.val, stats),
        "plan_accuracy": plan_accuracy(net, params, dataset, bits, spec, args.bn_fold),
        "uniform_accuracy": {
            str(b): plan_accuracy(net, params, dataset, {n: b for n in bits}, spec, args.bn_fold)
            for b in sorted(set(args.uniform_bits))
        },
        "bits": plan.bits,
        "quant_spec": spec.to_dict(),
        "bn_fold": args.bn_fold,
    }
    _dump(out / FILES["quantize_eval"], result)
    _meta(out, "quantize_eval", time.perf_counter() - start)
    print(f"float {result['float_accuracy']:.4f}  plan {result['plan_accuracy']:.4f}  " +
          "  ".join(f"uniform{b} {a:.4f}" for b, a in result["uniform_accuracy"].items()))
    return EXIT_OK


def cmd_report(args, out: Path) -> int:
    from .plotting import frontier_figure, search_figure, sensitivity_figure

    run = Path(args.run_dir)
    if not run.is_dir():
        raise CliError("E_RUN_DIR_NOT_FOUND", f"{run} is not a directory", path=str(run))
    sections: dict[str, dict] = {}
    lines = ["# mpqplan run report", ""]

    prof_path = run / FILES["profile"]
    if prof_path.is_file():
        prof = _read(SensitivityProfile.load, prof_path, "sensitivity profile")
        sensitivity_figure(prof, out / "sensitivity.png")
        with open(out / "sensitivity_plot.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["layer", "trace_per_param", *[f"delta_{b}" for b in prof.bit_options]])
            for i, name in enumerate(prof.layer_names):
                w.writerow([name, repr(float(prof.trace_per_param[i])), *[repr(float(d)) for d in prof.delta[i]]])
        sections["profile"] = {"status": "present", "artifact": FILES["profile"],
                               "layers": prof.layer_names, "bit_options": prof.bit_options,
                               "figure": "sensitivity.png", "plot_data": "sensitivity_plot.csv"}
        lines += ["## Sensitivity profile", "",
                  "| layer | trace/param | " + " | ".join(f"delta@{b}" for b in prof.bit_options) + " |",
                  "|---|---|" + "---|" * len(prof.bit_options)]
        for i, name in enumerate(prof.layer_names):
            lines.append(f"| {name} | {prof.trace_per_param[i]:.4g} | " +
                         " | ".join(f"{d:.4g}" for d in prof.delta[i]) + " |")
        lines.append("")
    else:
        sections["profile"] = {"status": "absent"}
        lines += ["## Sensitivity profile", "", "absent", ""]

    plan_path = run / FILES["plan"]
    if plan_path.is_file():
        data = _read(lambda p: json.loads(p.read_text()), plan_path, "plan")
        plan = _read(lambda _: BitPlan.from_dict(data), plan_path, "plan")
        sections["plan"] = {"status": "present", "artifact": FILES["plan"], "bits": plan.bits,
                            "objective": plan.objective, "cost": data.get("cost"), "budget": data.get("budget")}
        lines += ["## Bit plan", "", "| layer | bits |", "|---|---|"]
        lines += [f"| {n} | {b} |" for n, b in plan.assignment]
        if data.get("cost"):
            c = data["cost"]
            lines += ["", f"size {c['size_mb']:.4f} MB, {c['bops']:.4f} GBOPs, total sensitivity {plan.objective:.4g}"]
        if (run / FILES["sweep"]).is_file():
            sections["plan"]["sweep"] = FILES["sweep"]
            if run != out:
                shutil.copyfile(run / FILES["sweep"], out / FILES["sweep"])
        lines.append("")
    else:
        sections["plan"] = {"status": "absent"}
        lines += ["## Bit plan", "", "absent", ""]

    front_path = run / FILES["frontier"]
    if front_path.is_file():
        points = _read(read_frontier_csv, front_path, "frontier CSV")
        if run != out:
            shutil.copyfile(front_path, out / FILES["frontier"])
        frontier_figure(points, out / "frontier.png", "size")
        sec = {"status": "present", "artifact": FILES["frontier"], "points": len(points), "figure": "frontier.png"}
        if (run / FILES["pareto"]).is_file():
            rep = _read(lambda p: json.loads(p.read_text()), run / FILES["pareto"], "pareto report")
            sec["space_count"] = rep.get("space_count")
            sec["report"] = FILES["pareto"]
        sections["pareto"] = sec
        lines += ["## Pareto frontier", "", f"{len(points)} non-dominated plans ({FILES['frontier']})."]
        if sec.get("space_count"):
            sc = sec["space_count"]
            lines.append(f"Bit-width space {sc['bit_space']}; ordered schedule space {sc['schedule_space']}.")
        lines.append("")
    else:
        sections["pareto"] = {"status": "absent"}
        lines += ["## Pareto frontier", "", "absent", ""]

    hist_path = run / FILES["history"]
    best_path = run / FILES["best"]
    if hist_path.is_file() and best_path.is_file():
        best = _read(lambda p: json.loads(p.read_text()), best_path, "best config")
        records = [json.loads(line) for line in hist_path.read_text().splitlines() if line.strip()]
        with open(out / "search_plot.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "round", "fidelity", "predicted", "realized"])
            for i, r in enumerate(records):
                pred = "" if r.get("predicted") is None else repr(r["predicted"])
                w.writerow([i, r["round"], r["fidelity"], pred, repr(r["realized"])])

        class _E:  # minimal view for plotting
            def __init__(self, r):
                self.fidelity, self.realized = r["fidelity"], r["realized"]

        search_figure([_E(r) for r in records], out / "search.png")
        sections["search"] = {"status": "present", "artifact": FILES["history"], "best": best,
                              "evaluations": len(records), "figure": "search.png", "plot_data": "search_plot.csv"}
        lines += ["## Hyperparameter search", "", f"{len(records)} evaluations; best score {best['score']:.4f}",
                  "", "```", json.dumps(best["config"], indent=2), "```", ""]
    else:
        sections["search"] = {"status": "absent"}
        lines += ["## Hyperparameter search", "", "absent", ""]

    qe_path = run / FILES["quantize_eval"]
    if qe_path.is_file():
        qe = _read(lambda p: json.loads(p.read_text()), qe_path, "quantize-eval result")
        sections["quantize_eval"] = {"status": "present", "artifact": FILES["quantize_eval"], **qe}
        lines += ["## Quantized accuracy", "", "| model | accuracy |", "|---|---|",
                  f"| float | {qe['float_accuracy']:.4f} |", f"| plan | {qe['plan_accuracy']:.4f} |"]
        lines += [f"| uniform {b}-bit | {a:.4f} |" for b, a in qe["uniform_accuracy"].items()]
        lines.append("")
    else:
        sections["quantize_eval"] = {"status": "absent"}
        lines += ["## Quantized accuracy", "", "absent", ""]

    _dump(out / "report.json", {"run_dir": str(run), "sections": sections})
    (out / "report.md").write_text("\n".join(lines))
    print("\n".join(lines))
    return EXIT_OK


# --- parser -------------------------------------------------------------------------------


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="root seed for every stage (default 0)")
    p.add_argument("--threads", type=int, default=d(1), help="cap on torch intra-op threads (default 1)")
    p.add_argument("--out-dir", default=d("."), help="directory for artifacts (default: current)")
    p.add_argument("--log-level", default=d("WARNING"), choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def _model_flags(p, data=True):
    p.add_argument("--descriptor", help="model descriptor JSON with an 'arch' record")
    if data:
        p.add_argument("--data", help="dataset in .mpqd format")
        p.add_argument("--params", help="float checkpoint (.f8 + .json sidecar); trained from --seed if omitted")
        p.add_argument("--val-fraction", type=float, default=0.25)
        p.add_argument("--train-epochs", type=int, default=30)
        p.add_argument("--lr", type=float, default=0.05)
        p.add_argument("--weight-decay", type=float, default=1e-4)
        p.add_argument("--batch-size", type=int, default=32)


def _quant_flags(p):
    p.add_argument("--granularity", choices=["per_tensor", "per_channel"], default="per_tensor")
    p.add_argument("--scheme", choices=["symmetric", "asymmetric"], default="symmetric")
    p.add_argument("--clip", choices=["minmax", "percentile", "mse"], default="minmax")


def _cost_flags(p):
    p.add_argument("--latency", help="latency table CSV (layer,bits,latency)")
    p.add_argument("--activation-bits", type=int, default=8)
    p.add_argument("--level", choices=sorted(LEVELS), default="medium",
                   help="budget as a fraction of the uniform max-bit cost (high 0.9, medium 0.7, low 0.55)")
    p.add_argument("--level-kinds", type=_kinds, default=["size"], help="costs the level applies to, e.g. size,bops")
    p.add_argument("--size-mb", type=float, help="explicit size limit (overrides --level)")
    p.add_argument("--bops", type=float, help="explicit GBOPs limit (overrides --level)")
    p.add_argument("--latency-limit", type=float, help="explicit latency limit (overrides --level)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpqplan", description="Mixed-precision quantization planning.")
    parser.add_argument("--version", action="version", version=f"mpqplan {__version__}")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-toy", parents=[common], help="write toy fixtures (model, data, latency, space)")
    p.add_argument("--samples", type=int, default=600)
    p.set_defaults(func=cmd_make_toy)

    p = sub.add_parser("profile", parents=[common], help="estimate per-layer sensitivity")
    _model_flags(p)
    _quant_flags(p)
    p.add_argument("--bits", type=_bits, default=[2, 4, 8])
    p.add_argument("--probes", type=int, default=128, help="Hutchinson probes per layer")
    p.add_argument("--distribution", choices=["rademacher", "gaussian"], default="rademacher")
    p.add_argument("--profile-batch", type=int, default=256, help="training samples used for Hessian probes")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("plan", parents=[common], help="solve the bit allocation under a budget")
    p.add_argument("--profile", required=True)
    _model_flags(p, data=False)
    _cost_flags(p)
    p.add_argument("--brute-force", action="store_true", help="use exhaustive enumeration instead of branch and bound")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("pareto", parents=[common], help="sensitivity/cost frontier and search-space counts")
    p.add_argument("--profile", required=True)
    _model_flags(p, data=False)
    _cost_flags(p)
    p.add_argument("--objectives", type=_kinds, default=["size"])
    p.add_argument("--local-moves", type=int, default=2)
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("search", parents=[common], help="surrogate-guided hyperparameter search")
    p.add_argument("--space", help="search space TOML")
    p.add_argument("--synthetic", action="store_true", help="use the built-in synthetic evaluator")
    _model_flags(p)
    p.add_argument("--M", type=int, help="candidate pool size (default: whole space)")
    p.add_argument("--N", type=int, default=8)
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--rounds", type=int, default=4)
    p.add_argument("--short-epochs", type=int, default=0)
    p.add_argument("--full-epochs", type=int, default=2)
    p.add_argument("--resume", help="earlier history JSONL; logged configs are not evaluated again")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("quantize-eval", parents=[common], help="accuracy of a plan on the toy model")
    _model_flags(p)
    _quant_flags(p)
    p.add_argument("--plan", required=True)
    p.add_argument("--bn-fold", action="store_true")
    p.add_argument("--uniform-bits", type=_bits, default=[4, 8])
    p.set_defaults(func=cmd_quantize_eval)

    p = sub.add_parser("report", parents=[common], help="summarize a run directory with figures")
    p.add_argument("--run-dir", default=None, help="directory holding stage artifacts (default: --out-dir)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    torch.set_num_threads(args.threads)
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if getattr(args, "run_dir", "unset") is None:
            args.run_dir = str(out)
        return args.func(args, out)
    except CliError as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return exc.exit_code
    except InfeasibleBudget as exc:
        print(json.dumps({"error": "E_INFEASIBLE", "message": str(exc), **exc.to_dict()}, sort_keys=True),
              file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(json.dumps({"error": "E_IO", "message": str(exc)}, sort_keys=True), file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(json.dumps({"error": "E_INTERNAL", "message": f"{type(exc).__name__}: {exc}"}, sort_keys=True),
              file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
