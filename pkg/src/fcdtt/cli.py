"""``fcdtt`` command line: synth, preprocess, train, evaluate.

Every command reads an optional JSON config (``--config``) with one section
per command; command-line flags win over the file. Outputs land in
``--out`` (default: current directory) and inputs default to the files the
previous stage wrote there.

Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 data or
validation error, 4 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .estimator import HistoricModel
from .evaluation import ALGORITHMS, blocks_from_paths, evaluate_test
from .exceptions import ConfigurationError, ConvergenceWarning, NumericalError, ValidationError
from .matcher import write_matched_jsonl
from .network import load_network
from .pipeline import (
    PreprocessSettings,
    ProtocolSettings,
    preprocess_traces,
    read_paths_jsonl,
    run_protocol,
    statistics_table,
    train,
    write_paths_jsonl,
)
from .preprocess import StopDetectorConfig, parse_traces
from .synth import SynthConfig, calibrate_vehicles, write_dataset

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

log = logging.getLogger("fcdtt")


def _dump(doc, path):
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _section(args, name):
    if args.config is None:
        return {}
    path = Path(args.config)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} does not exist")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON: {exc}") from None
    section = doc.get(name, {})
    if not isinstance(section, dict):
        raise ConfigurationError(f'config section "{name}" must be an object')
    return dict(section)


def _pick(flag, section, key, default=None):
    if flag is not None:
        return flag
    return section.get(key, default)


def _existing(path, what):
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"{what} {path} does not exist")
    return path


@contextmanager
def _executor(threads):
    if threads is None or threads <= 1:
        yield None
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield pool


@contextmanager
def _count_nonconvergence(counter):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        yield
    counter.append(sum(issubclass(w.category, ConvergenceWarning) for w in caught))


# -- synth --------------------------------------------------------------------

def cmd_synth(args) -> int:
    section = _section(args, "synth")
    target = section.pop("target_paths_per_day", None)
    if args.seed is not None:
        section["seed"] = args.seed
    cfg = SynthConfig.from_dict(section)
    if target is not None:
        cfg = calibrate_vehicles(cfg, float(target))
    out = Path(args.out)
    write_dataset(cfg, out, log=print)
    _dump(cfg.to_dict(), out / "synth_config.json")
    return EXIT_OK


# -- preprocess ---------------------------------------------------------------

def _trace_files(source):
    source = Path(source)
    if source.is_dir():
        return sorted(source.glob("*.csv"))
    return [source]


def cmd_preprocess(args) -> int:
    section = _section(args, "preprocess")
    out = Path(args.out)
    network = _existing(_pick(args.network, section, "network", out / "network.json"), "network file")
    traces_src = _existing(_pick(args.traces, section, "traces", out / "traces"), "trace source")
    window = _pick(args.window, section, "window")
    settings = PreprocessSettings(
        stop=StopDetectorConfig(
            float(_pick(args.d_max_m, section, "d_max_m", 50.0)),
            int(_pick(args.n_max, section, "n_max", 2)),
        ),
        max_snap_m=float(_pick(args.max_snap_m, section, "max_snap_m", 50.0)),
        max_gap_s=float(_pick(args.max_gap_s, section, "max_gap_s", 600.0)),
        window=None if window is None else (float(window[0]), float(window[1])),
    )
    net = load_network(network)
    traces = [t for f in _trace_files(traces_src) for t in parse_traces(f)]
    with _executor(args.threads) as pool:
        day_paths, matched, raw_counts = preprocess_traces(traces, net, settings, pool)

    print(statistics_table(raw_counts, day_paths))
    if not day_paths:
        print(f"0 path integrals from {sum(raw_counts.values())} raw fixes in {len(traces)} traces", file=sys.stderr)
        return EXIT_DATA
    out.mkdir(parents=True, exist_ok=True)
    write_paths_jsonl(day_paths, out / "paths.jsonl")
    dump = _pick(args.dump_matched, section, "dump_matched")
    if dump:
        write_matched_jsonl(matched, dump)
    print(f"{len(day_paths)} path integrals over {len({d for d, _ in day_paths})} days -> {out / 'paths.jsonl'}")
    return EXIT_OK


# -- train / evaluate ---------------------------------------------------------

def _protocol_settings(section, args, lambda2_override=None):
    split = _pick(args.split, section, "split", (10, 6, 6))
    grid1 = section.get("lambda1_grid")
    grid2 = section.get("lambda2_grid")
    return ProtocolSettings(
        split=tuple(int(s) for s in split),
        folds=int(_pick(args.folds, section, "folds", 5)),
        lambda1_grid=None if grid1 is None else tuple(float(x) for x in grid1),
        lambda2_grid=None if grid2 is None else tuple(float(x) for x in grid2),
        lambda2_override=lambda2_override,
    )


def _load_blocks(args, section, out):
    paths_file = _existing(_pick(args.paths, section, "paths", out / "paths.jsonl"), "path-integral file")
    network = _existing(_pick(args.network, section, "network", out / "network.json"), "network file")
    return blocks_from_paths(read_paths_jsonl(paths_file)), load_network(network)


def cmd_train(args) -> int:
    section = _section(args, "train")
    out = Path(args.out)
    blocks, net = _load_blocks(args, section, out)
    seed = int(_pick(args.seed, section, "seed", 0))
    settings = _protocol_settings(section, args)
    nonconv = []
    with _executor(args.threads) as pool, _count_nonconvergence(nonconv):
        result = train(blocks, net, settings, seed, pool)
    doc = result.model_json()
    doc["lasso_nonconverged_fits"] = nonconv[0]
    _dump(doc, out / "model.json")
    _dump(result.split_manifest(), out / "split.json")
    print(f"lambda1={result.model.lambda1:.6g} lambda2={result.lambda2:.6g} -> {out / 'model.json'}")
    if result.model.clamped_links:
        print(f"clamped negative link times to 0 on links {list(result.model.clamped_links)}")
    if nonconv[0]:
        print(f"warning: {nonconv[0]} lasso fits hit the sweep cap during lambda2 selection", file=sys.stderr)
    return EXIT_OK


def _read_model(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    model = HistoricModel(np.asarray(doc["theta"], float), float(doc["lambda1"]), tuple(doc.get("clamped_links", ())))
    baseline = np.array([np.nan if x is None else x for x in doc["baseline_theta"]], dtype=float)
    return doc, model, baseline


def _check_disjoint(manifest):
    train_days = set(manifest["train1"]) | set(manifest["train2"])
    overlap = sorted(train_days & set(manifest["test"]))
    if overlap:
        raise ConfigurationError(f"test days overlap training days: {overlap}")


def _write_predictions(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "index", "true_s", *ALGORITHMS])
        for r in records:
            w.writerow([r.day_id, r.index, repr(r.true_s), *("" if r.predicted[a] is None else repr(r.predicted[a]) for a in ALGORITHMS)])


def cmd_evaluate(args) -> int:
    section = _section(args, "evaluate")
    out = Path(args.out)
    blocks, net = _load_blocks(args, section, out)
    model_doc, model, baseline = _read_model(_existing(_pick(args.model, section, "model", out / "model.json"), "model file"))
    manifest = json.loads(
        _existing(_pick(args.split_manifest, section, "split_manifest", out / "split.json"), "split manifest").read_text(encoding="utf-8")
    )
    _check_disjoint(manifest)
    by_day = {b.day_id: b for b in blocks}
    missing = [d for d in manifest["test"] if d not in by_day]
    if missing:
        raise ValidationError(f"test days missing from the path-integral file: {missing}")
    test = [by_day[d] for d in manifest["test"]]
    if not test:
        raise ConfigurationError("split manifest has no test days")
    lambda2 = _pick(args.lambda2, section, "lambda2", model_doc["lambda2"])

    nonconv = []
    with _executor(args.threads) as pool, _count_nonconvergence(nonconv):
        report = evaluate_test(test, model, float(lambda2), baseline, pool)
    doc = report.to_json()
    doc.update(lambda1=model.lambda1, lambda2=float(lambda2), seed=manifest["seed"], test_days=list(manifest["test"]))

    seeds = _pick(args.seeds, section, "seeds")
    if seeds:
        train_section = _section(args, "train")
        settings = _protocol_settings(train_section, args, lambda2_override=args.lambda2)
        per_seed = {}
        with _executor(args.threads) as pool, _count_nonconvergence(nonconv):
            for s in seeds:
                _, rep = run_protocol(blocks, net, settings, int(s), pool)
                per_seed[str(s)] = rep.to_json()["algorithms"]
        summary = {}
        for name in ALGORITHMS:
            rates = np.array([per_seed[str(s)][name]["error_rate"] for s in seeds], dtype=float)
            summary[name] = {
                "mean_error_rate": float(np.mean(rates)),
                "std_error_rate": float(np.std(rates, ddof=1)) if rates.size > 1 else 0.0,
            }
        doc["multi_seed"] = {"seeds": [int(s) for s in seeds], "per_seed": per_seed, "summary": summary}

    _dump(doc, out / "report.json")
    _write_predictions(report.records, out / "predictions.csv")
    for name, score in report.algorithms.items():
        lo, hi = score.ci95
        print(f"{name:<20} error {100 * score.error_rate:6.2f}%  std {score.std:.3f}  n {score.n:4d}  95% CI [{100 * lo:.2f}, {100 * hi:.2f}]")
    if sum(nonconv):
        print(f"error: {sum(nonconv)} lasso fits did not converge", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


# -- entry point --------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config with per-command sections")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", default=".", help="output directory (also the default input location)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fcdtt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="generate a synthetic corridor dataset")

    p = sub.add_parser("preprocess", parents=[common], help="stop removal, map matching, path integrals")
    p.add_argument("--network")
    p.add_argument("--traces", help="trace CSV file or directory of CSVs")
    p.add_argument("--d-max-m", dest="d_max_m", type=float)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--max-snap-m", dest="max_snap_m", type=float)
    p.add_argument("--max-gap-s", dest="max_gap_s", type=float)
    p.add_argument("--window", type=float, nargs=2, metavar=("START_HOUR", "END_HOUR"))
    p.add_argument("--dump-matched", dest="dump_matched", help="write matched fixes as JSONL")

    for name, help_text in (("train", "two-stage lambda selection and historic fit"), ("evaluate", "three-way test comparison")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--paths")
        p.add_argument("--network")
        p.add_argument("--split", type=int, nargs=3, metavar=("TRAIN1", "TRAIN2", "TEST"))
        p.add_argument("--folds", type=int)
        if name == "evaluate":
            p.add_argument("--model")
            p.add_argument("--split-manifest", dest="split_manifest")
            p.add_argument("--lambda2", type=float, help="override the trained lambda2")
            p.add_argument("--seeds", type=int, nargs="+", help="also rerun the protocol for these split seeds")
    return parser


COMMANDS = {"synth": cmd_synth, "preprocess": cmd_preprocess, "train": cmd_train, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
