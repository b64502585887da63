"""Command-line interface: ``swsl <command> [options]``.

Exit codes: 0 on success, 1 when a computation fails, 2 for usage or input
errors (bad arguments, missing or malformed files).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from swsl import __version__
from swsl.benchmark import DEFAULT_METHODS, run_benchmark
from swsl.data import Instance, SwslDataset, load_dataset, make_folds, save_dataset
from swsl.errors import DataError, SolverError
from swsl.evaluation import GridSpec, cross_validate, evaluate
from swsl.features import EMSettings, load_gmm, read_frames_csv, save_gmm, soft_count_histogram, train_gmm
from swsl.models import load_model, save_model
from swsl.pipeline import CONFIG_KEYS, METHODS, TrainSettings, fit_model, score_dataset
from swsl.synth import SynthConfig, generate, load_truth, save_truth

log = logging.getLogger("swsl")


def _keys_help(sections: dict) -> str:
    lines = ["config keys (JSON object, every key optional):"]
    for section, keys in sections.items():
        for key, text in keys.items():
            lines.append(f"  {section}.{key}" + (f": {text}" if text else ""))
    return "\n".join(lines)


TRAIN_HELP = _keys_help(CONFIG_KEYS) + (
    "\n  (solver.* keys other than the lambdas are CCCP and inner-solver "
    "tolerances and iteration caps)")
SYNTH_HELP = "config keys (flat JSON object, every key optional):\n" + "\n".join(
    f"  {f.name} (default {f.default})" for f in fields(SynthConfig))
EM_HELP = "config keys (flat JSON object, every key optional):\n" + "\n".join(
    f"  {f.name} (default {f.default})" for f in fields(EMSettings))
GRID_HELP = ("grid file keys: lambda1_values, lambda2_values, slack_c_values (lists of "
             "positive numbers), selection_metric (AP | MAP); 'default' uses "
             "1e-3 ... 1e3 for every list")


def _read_json(path, what: str):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"{what} file not found: {path}") from None
    except IsADirectoryError:
        raise DataError(f"{what} path is a directory: {path}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def _train_settings(path) -> TrainSettings:
    return TrainSettings.from_dict(_read_json(path, "config")) if path else TrainSettings()


def _flat_config(cls, path, what):
    if not path:
        return {}
    doc = _read_json(path, what)
    if not isinstance(doc, dict):
        raise DataError(f"{path}: config must be a JSON object")
    unknown = set(doc) - {f.name for f in fields(cls)}
    if unknown:
        raise DataError(f"{path}: unknown config key(s) {sorted(unknown)}")
    return doc


def cmd_synth(args) -> int:
    doc = _flat_config(SynthConfig, args.config, "config")
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        config = SynthConfig(**doc)
    except TypeError as exc:
        raise DataError(f"synth config: {exc}") from None
    dataset, truth = generate(config)
    save_dataset(dataset, args.out)
    if args.truth:
        save_truth(truth, args.truth)
    print(f"wrote {len(dataset.instances)} instances, {len(dataset.bags)} bags to {args.out}")
    return 0


def _csv_paths(entries) -> list[Path]:
    paths = []
    for entry in entries:
        p = Path(entry)
        if p.is_dir():
            found = sorted(p.glob("*.csv"))
            if not found:
                raise DataError(f"no .csv files in {p}")
            paths.extend(found)
        elif p.exists():
            paths.append(p)
        else:
            raise DataError(f"frames path not found: {p}")
    return paths


def cmd_gmm_train(args) -> int:
    em = EMSettings(**_flat_config(EMSettings, args.config, "config"))
    seqs = [read_frames_csv(p) for p in _csv_paths(args.frames)]
    start = time.perf_counter()
    gmm = train_gmm(seqs, args.components, seed=args.seed, em=em)
    save_gmm(gmm, args.out)
    trace = gmm.log_likelihood_trace
    print(f"GMM with {args.components} components on {sum(s.frames.shape[0] for s in seqs)} "
          f"frames: {len(trace)} EM iterations, mean log-likelihood {trace[-1]:.6g}, "
          f"{time.perf_counter() - start:.2f} s")
    return 0


def cmd_featurize(args) -> int:
    gmm = load_gmm(args.gmm)
    seqs = [read_frames_csv(p) for p in _csv_paths(args.frames)]
    instances = [Instance(s.segment_id, soft_count_histogram(gmm, s), None) for s in seqs]
    save_dataset(SwslDataset(instances), args.out)
    print(f"wrote {len(instances)} histograms of dimension {gmm.n_components} to {args.out}")
    return 0


def _summary(model) -> str:
    meta = model.meta
    if model.method == "graphswsl":
        trace = meta.get("objective_trace", [])
        return (f"{meta.get('iterations')} CCCP iteration(s), objective {trace[0]:.6g} -> "
                f"{trace[-1]:.6g}, stop: {meta.get('stop_reason')}")
    text = f"KKT gap {meta.get('kkt_gap', float('nan')):.3g}"
    if "outer_iterations" in meta:
        text += f", {meta['outer_iterations']} relabeling round(s)"
    return text


def cmd_train(args) -> int:
    settings = _train_settings(args.config)
    dataset = load_dataset(args.data)
    start = time.perf_counter()
    model = fit_model(dataset, args.method, settings)
    elapsed = time.perf_counter() - start
    save_model(model, args.out)
    print(f"{args.method}: {_summary(model)}; {elapsed:.2f} s")
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.data)
    inst, bags = score_dataset(model, dataset)
    _write_json(args.out, {"method": model.method, "instances": inst, "bags": bags})
    print(f"scored {len(inst)} instances and {len(bags)} bags")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.data)
    truth = load_truth(args.truth)
    report = evaluate(model, dataset, truth, args.level)
    _write_json(args.out, report.to_dict())
    print(f"{args.level}-level MAP {report.map_value:.4f}")
    return 0


def cmd_cv(args) -> int:
    settings = _train_settings(args.config)
    dataset = load_dataset(args.data)
    if args.grid == "default":
        grid = GridSpec()
    else:
        doc = _read_json(args.grid, "grid")
        if not isinstance(doc, dict):
            raise DataError(f"{args.grid}: grid must be a JSON object")
        try:
            grid = GridSpec(**doc)
        except TypeError as exc:
            raise DataError(f"{args.grid}: {exc}") from None
    folds = make_folds(dataset, args.folds, args.seed)
    result = cross_validate(dataset, folds, grid, args.method, settings)
    _write_json(args.out, result.to_dict())
    best_mean = max(r["mean"] for r in result.table if r["mean"] is not None)
    print(f"best {result.best} with mean held-out AP {best_mean:.4f}")
    return 0


def cmd_benchmark(args) -> int:
    config = SynthConfig(**_flat_config(SynthConfig, args.config, "config"))
    settings = _train_settings(args.train_config)
    methods = tuple(args.methods.split(","))
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise DataError(f"unknown method(s) {bad}")
    try:
        noise = tuple(float(v) for v in args.noise.split(","))
    except ValueError:
        raise DataError(f"--noise must be comma-separated numbers, got {args.noise!r}") from None
    if args.num_seeds < 1:
        raise DataError("--num-seeds must be at least 1")
    seeds = range(args.seed, args.seed + args.num_seeds)
    result = run_benchmark(config, noise, seeds, methods, settings)
    print(result.format_table())
    if args.out:
        _write_json(args.out, {"config": config.to_dict(), "train": settings.to_dict(),
                               **result.to_dict()})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swsl", description="Learning from strongly and weakly labeled instances.",
        epilog="exit codes: 0 success, 1 computation failure, 2 usage or input error")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, func, help_text, epilog=None, seed_default=0):
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=epilog,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--seed", type=int, default=seed_default,
                       help="random seed (commands without randomness ignore it)")
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic dataset with ground truth", SYNTH_HELP,
            seed_default=None)
    p.add_argument("--config", help="synth config JSON; --seed overrides its seed")
    p.add_argument("--out", required=True, help="dataset JSON to write")
    p.add_argument("--truth", help="ground-truth JSON to write")

    p = add("gmm-train", cmd_gmm_train, "fit a diagonal GMM on frame CSV files", EM_HELP)
    p.add_argument("--frames", nargs="+", required=True, help="CSV files or directories of them")
    p.add_argument("--components", type=int, required=True)
    p.add_argument("--config", help="EM settings JSON")
    p.add_argument("--out", required=True, help="GMM JSON to write")

    p = add("featurize", cmd_featurize, "soft-count histograms of frame CSV files")
    p.add_argument("--gmm", required=True)
    p.add_argument("--frames", nargs="+", required=True, help="CSV files or directories of them")
    p.add_argument("--out", required=True, help="dataset JSON of unlabeled instances")

    p = add("train", cmd_train, "train a model", TRAIN_HELP)
    p.add_argument("--method", choices=METHODS, default="graphswsl")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="training config JSON")
    p.add_argument("--out", required=True, help="model JSON to write")

    p = add("predict", cmd_predict, "score every instance and bag of a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    for name, level in (("eval", None), ("localize", "instance")):
        text = ("average precision at bag or instance level" if level is None
                else "instance-level average precision (eval --level instance)")
        p = add(name, cmd_eval, text)
        p.add_argument("--model", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--truth", required=True)
        p.add_argument("--out", required=True)
        if level is None:
            p.add_argument("--level", choices=("bag", "instance"), default="bag")
        else:
            p.set_defaults(level=level)

    p = add("cv", cmd_cv, "grid cross-validation over folds of items",
            TRAIN_HELP + "\n\n" + GRID_HELP)
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--method", choices=METHODS, default="graphswsl")
    p.add_argument("--grid", default="default", help="'default' or a grid JSON file")
    p.add_argument("--config", help="training config JSON for settings not on the grid")
    p.add_argument("--out", required=True)

    p = add("benchmark", cmd_benchmark, "compare methods over label-noise levels",
            SYNTH_HELP + "\n\ntrain-config " + TRAIN_HELP)
    p.add_argument("--config", help="synth config JSON for the training sets")
    p.add_argument("--train-config", help="training config JSON shared by all methods")
    p.add_argument("--noise", default="0,0.2", help="comma-separated bag-label noise levels")
    p.add_argument("--num-seeds", type=int, default=5, help="seeds used: seed .. seed+n-1")
    p.add_argument("--methods", default=",".join(DEFAULT_METHODS))
    p.add_argument("--out", help="JSON report to write")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (DataError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"swsl {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"swsl {args.command}: computation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
