"""Command-line entry point: pretrain, estimate, eval, ablate, validate.

Every option resolves with the precedence CLI flag > INVKGE_* environment
variable > --config key=value file > built-in default, and each run echoes
its fully resolved configuration to <out>/config.txt so that
``invkge <cmd> --config <out>/config.txt`` reproduces it bit-for-bit (serial
mode). All randomness flows from a single --seed through named substreams.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .datasets import (BenchmarkSplits, DatasetFormatError, DatasetValidationError,
                       load_split_dir, load_splits)
from .estimation import EstimationError, cap_neighbors, estimate_candidates
from .evaluation import (ablate, format_report, link_prediction, triplet_classification,
                         tune_thresholds, write_report_csv)
from .models import (ROTATE, load_checkpoint, load_vocabulary, save_checkpoint,
                     save_vocabulary)
from .reduction import (CORRELATION, DEGREE, SCHEMES, UNIFORM, build_correlation,
                        candidate_weights, reduce_candidates, save_correlation_csv)
from .seeding import substream
from .training import TrainConfig, TrainingDivergedError, train

ENV_PREFIX = "INVKGE_"
_REQUIRED = object()


class UsageError(Exception):
    """Bad invocation (wrong flags for the requested operation)."""


def _parse_bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# option name -> (cast, default); shared across resolution sources
_COMMON = {
    "seed": (int, 0),
    "threads": (int, 1),
    "out": (str, _REQUIRED),
    "task": (str, "lp"),
}
_SPLIT_PATHS = {
    "train": (str, _REQUIRED),
    "valid": (str, _REQUIRED),
    "aux": (str, _REQUIRED),
    "test": (str, _REQUIRED),
}
_SPECS: dict[str, dict] = {
    "pretrain": {
        **_COMMON, **_SPLIT_PATHS,
        "model": (str, "transe"),
        "dim": (int, 200),
        "gamma": (float, 12.0),
        "alpha": (float, 1.0),
        "neg": (int, 64),
        "l2": (float, 0.0),
        "batch_size": (int, 1024),
        "lr": (float, 1e-3),
        "steps": (int, 10_000),
        "norm": (int, 1),
        "log_every": (int, 100),
        "filter_false_negatives": (_parse_bool, False),
    },
    "estimate": {
        **_COMMON, **_SPLIT_PATHS,
        "checkpoint": (str, _REQUIRED),
        "vocab": (str, None),
        "scheme": (str, DEGREE),
        "delta": (float, 0.1),
        "cap": (int, None),
    },
    "eval": {
        **_COMMON, **_SPLIT_PATHS,
        "checkpoint": (str, _REQUIRED),
        "vocab": (str, None),
        "scheme": (str, None),
        "delta": (float, 0.1),
        "cap": (int, None),
        "dump_correlation": (_parse_bool, False),
    },
    "ablate": {
        **_COMMON,
        "train": (str, None),
        "valid": (str, None),
        "aux": (str, None),
        "test": (str, None),
        "checkpoint": (str, None),
        "vocab": (str, None),
        "scheme": (str, None),
        "delta": (float, 0.1),
        "variants": (str, _REQUIRED),
        "datasets": (str, None),
        "checkpoints": (str, None),
    },
    "validate": {
        **_SPLIT_PATHS,
        "task": (str, "lp"),
    },
}


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _resolve(command: str, args: argparse.Namespace) -> dict:
    spec = _SPECS[command]
    file_values = _read_config_file(args.config) if args.config else {}
    resolved = {}
    for name, (cast, default) in spec.items():
        cli_value = getattr(args, name, None)
        if cli_value is not None:
            resolved[name] = cli_value
            continue
        env_value = os.environ.get(ENV_PREFIX + name.upper())
        if env_value is not None:
            resolved[name] = cast(env_value)
            continue
        if name in file_values and file_values[name] != "":
            resolved[name] = cast(file_values[name])
            continue
        if default is _REQUIRED:
            raise UsageError(f"missing required option --{name.replace('_', '-')}")
        resolved[name] = default
    return resolved


def _echo_config(command: str, resolved: dict, out_dir: Path) -> None:
    lines = [f"command={command}"]
    for key in sorted(resolved):
        value = resolved[key]
        lines.append(f"{key}={'' if value is None else value}")
    (out_dir / "config.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load_benchmark(cfg: dict) -> BenchmarkSplits:
    return load_splits(cfg["train"], cfg["valid"], cfg["aux"], cfg["test"], task=cfg["task"])


def _check_vocab(cfg: dict, splits: BenchmarkSplits) -> None:
    if cfg.get("vocab"):
        vocab = load_vocabulary(cfg["vocab"])
        if vocab != splits.vocab:
            raise UsageError("vocabulary sidecar does not match the split files")


def _load_tables(cfg: dict, splits: BenchmarkSplits):
    tables, _ = load_checkpoint(cfg["checkpoint"])
    if tables.num_entities != splits.vocab.num_entities \
            or tables.num_relations != splits.vocab.num_relations:
        raise UsageError("checkpoint vocabulary sizes do not match the split files")
    return tables


def cmd_pretrain(args: argparse.Namespace) -> int:
    cfg = _resolve("pretrain", args)
    if cfg["threads"] != 1:
        raise UsageError("pretraining is serial; --threads must be 1")
    splits = _load_benchmark(cfg)
    config = TrainConfig(model=cfg["model"], dim=cfg["dim"], margin=cfg["gamma"],
                         temperature=cfg["alpha"], num_negatives=cfg["neg"], l2=cfg["l2"],
                         batch_size=cfg["batch_size"], learning_rate=cfg["lr"],
                         steps=cfg["steps"], seed=cfg["seed"], norm_order=cfg["norm"],
                         filter_false_negatives=cfg["filter_false_negatives"],
                         log_every=cfg["log_every"])
    tables, trace = train(splits, config)
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(tables, out_dir / "checkpoint.bin", seed=cfg["seed"])
    save_vocabulary(splits.vocab, out_dir / "vocab.json")
    with open(out_dir / "loss.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("step,loss\n")
        for step, loss in trace:
            f.write(f"{step},{loss:.8f}\n")
    _echo_config("pretrain", cfg, out_dir)
    print(f"checkpoint written to {out_dir / 'checkpoint.bin'}")
    return 0


def cmd_estimate(args: argparse.Namespace) -> int:
    cfg = _resolve("estimate", args)
    if cfg["threads"] != 1:
        raise UsageError("--threads > 1 is only supported for evaluation")
    if cfg["scheme"] == CORRELATION:
        raise UsageError("correlation weights are query-aware and only defined per "
                         "evaluation query; use --scheme degree or uniform here")
    if cfg["scheme"] not in (DEGREE, UNIFORM):
        raise UsageError(f"unknown scheme {cfg['scheme']!r}")
    splits = _load_benchmark(cfg)
    _check_vocab(cfg, splits)
    tables = _load_tables(cfg, splits)
    from .core import TripleStore  # local import to keep module load light
    aux_store = TripleStore(splits.aux, num_entities=splits.vocab.num_entities,
                            num_relations=splits.vocab.num_relations)
    train_store = TripleStore(splits.train, num_entities=splits.vocab.num_entities,
                              num_relations=splits.vocab.num_relations)

    rows = []
    manifest = []
    dangling = []
    for entity in sorted(splits.ookg_entities):
        try:
            cset = estimate_candidates(tables, aux_store, entity, splits.ikg_entities)
        except EstimationError:
            dangling.append(entity)
            continue
        if cfg["cap"] is not None:
            cset = cap_neighbors(cset, cfg["cap"], substream(cfg["seed"], "capping", entity))
        weights = candidate_weights(cfg["scheme"], cset, train_store=train_store,
                                    smoothing=cfg["delta"])
        vec = reduce_candidates(cset, weights)
        if tables.model == ROTATE:
            vec = np.ascontiguousarray(vec).view(np.float64)  # interleave re/im
        rows.append(vec)
        manifest.append(entity)

    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    matrix = np.stack(rows) if rows else np.zeros((0, tables.entity.shape[1]))
    with open(out_dir / "ookg_embeddings.f32", "wb") as f:
        f.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())
    with open(out_dir / "ookg_manifest.tsv", "w", encoding="utf-8", newline="\n") as f:
        for row, entity in enumerate(manifest):
            f.write(f"{row}\t{entity}\t{splits.vocab.entity_name(entity)}\n")
    with open(out_dir / "dangling.txt", "w", encoding="utf-8", newline="\n") as f:
        for entity in dangling:
            f.write(f"{entity}\t{splits.vocab.entity_name(entity)}\n")
    _echo_config("estimate", cfg, out_dir)
    print(f"estimated {len(manifest)} entities ({len(dangling)} dangling) into {out_dir}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve("eval", args)
    if cfg["scheme"] is not None and cfg["scheme"] not in SCHEMES:
        raise UsageError(f"unknown scheme {cfg['scheme']!r}")
    splits = _load_benchmark(cfg)
    _check_vocab(cfg, splits)
    tables = _load_tables(cfg, splits)
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)

    scheme = cfg["scheme"]
    if cfg["task"] == "lp":
        scheme = scheme or CORRELATION
        report = link_prediction(tables, splits, scheme, smoothing=cfg["delta"],
                                 neighbor_cap=cfg["cap"], seed=cfg["seed"],
                                 threads=cfg["threads"])
        label = f"lp-{scheme}"
    else:
        scheme = scheme or DEGREE
        thresholds = tune_thresholds(tables, splits.valid, splits.valid_labels)
        with open(out_dir / "thresholds.csv", "w", encoding="utf-8", newline="\n") as f:
            f.write("relation,threshold\n")
            for rel in sorted(thresholds.per_relation):
                f.write(f"{splits.vocab.relation_name(rel)},{thresholds.per_relation[rel]!r}\n")
            f.write(f"__default__,{thresholds.default!r}\n")
        report = triplet_classification(tables, splits, scheme, thresholds=thresholds,
                                        smoothing=cfg["delta"], neighbor_cap=cfg["cap"],
                                        seed=cfg["seed"], threads=cfg["threads"])
        label = f"tc-{scheme}"

    if cfg["dump_correlation"]:
        from .core import TripleStore
        train_store = TripleStore(splits.train, num_entities=splits.vocab.num_entities,
                                  num_relations=splits.vocab.num_relations)
        save_correlation_csv(build_correlation(train_store, splits.vocab.num_relations),
                             splits.vocab, out_dir / "correlation.csv")

    write_report_csv(out_dir / "report.csv", [(label, report)])
    (out_dir / "report.txt").write_text(format_report(label, report), encoding="utf-8")
    _echo_config("eval", cfg, out_dir)
    print(format_report(label, report), end="")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _resolve("ablate", args)
    variants = [v for v in cfg["variants"].split(",") if v]
    if not variants:
        raise UsageError("--variants must list at least one variant")

    ratio_runs = None
    if "ratio" in variants:
        if not cfg["datasets"] or not cfg["checkpoints"]:
            raise UsageError("the ratio variant needs --datasets and --checkpoints "
                             "(comma-separated, one checkpoint per dataset)")
        dataset_dirs = cfg["datasets"].split(",")
        checkpoint_paths = cfg["checkpoints"].split(",")
        if len(dataset_dirs) != len(checkpoint_paths):
            raise UsageError("--datasets and --checkpoints must have the same length")
        ratio_runs = []
        for directory, ckpt in zip(dataset_dirs, checkpoint_paths):
            member = load_split_dir(directory, task=cfg["task"])
            member_tables, _ = load_checkpoint(ckpt)
            if member_tables.num_entities != member.vocab.num_entities:
                raise UsageError(f"checkpoint {ckpt} does not match dataset {directory}")
            ratio_runs.append((Path(directory).name, member_tables, member))

    non_ratio = [v for v in variants if v != "ratio"]
    tables = None
    splits = None
    if non_ratio:
        for key in ("train", "valid", "aux", "test", "checkpoint"):
            if not cfg[key]:
                raise UsageError(f"variants {non_ratio} need --{key}")
        splits = _load_benchmark(cfg)
        _check_vocab(cfg, splits)
        tables = _load_tables(cfg, splits)
    elif ratio_runs:
        _, tables, splits = ratio_runs[0]  # ablate() needs a base pair; unused for ratio

    results = ablate(tables, splits, variants, task=cfg["task"], scheme=cfg["scheme"],
                     smoothing=cfg["delta"], seed=cfg["seed"], threads=cfg["threads"],
                     ratio_runs=ratio_runs)

    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    for label, report in results:
        safe = label.replace(":", "_")
        write_report_csv(out_dir / f"report_{safe}.csv", [(label, report)])
        (out_dir / f"report_{safe}.txt").write_text(format_report(label, report),
                                                    encoding="utf-8")
    write_report_csv(out_dir / "summary.csv", results)
    _echo_config("ablate", cfg, out_dir)
    for label, report in results:
        print(format_report(label, report), end="")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    """Check the split files against the benchmark invariants; exit 0/1."""
    cfg = _resolve("validate", args)
    splits = _load_benchmark(cfg)  # raises (exit 1) on format/validation errors
    print(f"train={len(splits.train)} valid={len(splits.valid)} aux={len(splits.aux)} "
          f"test={len(splits.test)} entities={splits.vocab.num_entities} "
          f"relations={splits.vocab.num_relations} in_graph={len(splits.ikg_entities)} "
          f"out_of_graph={len(splits.ookg_entities)} dangling={len(splits.dangling_ookg)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="invkge",
        description="Pretrain translational KG embeddings and evaluate closed-form "
                    "estimation of out-of-graph entities.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, spec: dict) -> None:
        p.add_argument("--config", help="key=value file with option defaults")
        for name, (cast, default) in spec.items():
            flag = "--" + name.replace("_", "-")
            if cast is _parse_bool:
                p.add_argument(flag, action="store_const", const=True, default=None)
            else:
                p.add_argument(flag, type=cast, default=None,
                               help=f"default: {default if default is not _REQUIRED else 'required'}")

    p = sub.add_parser("pretrain", help="train embeddings on the training split")
    add_common(p, _SPECS["pretrain"])
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("estimate", help="dump reduced embeddings for out-of-graph entities")
    add_common(p, _SPECS["estimate"])
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("eval", help="link prediction or triplet classification")
    add_common(p, _SPECS["eval"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="neighbor-cap / uniform-weight / ratio ablations")
    add_common(p, _SPECS["ablate"])
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("validate", help="check split files; exit code 0 iff valid")
    add_common(p, _SPECS["validate"])
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits with 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (DatasetFormatError, DatasetValidationError, TrainingDivergedError,
            EstimationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def console_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_entry()
