"""Command-line harness: generate / train / eval / explain / reproduce.

Exit codes: 0 success, 1 usage error, 2 I/O failure, 3 configuration or
model/regime mismatch, 4 checkpoint/dataset mismatch, 5 explanation-domain
error (e.g. a concept code no training sample carries).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .baselines import BASELINE_KINDS, build_baseline, train_baseline
from .config import MODALITIES, ExperimentConfig, load_config
from .data import generate_xor_and_xor, load_dataset, save_dataset, split
from .errors import CheckpointMismatchError, ConfigurationError, NoSuchConceptError
from .evaluation import append_ledger, evaluate_model
from .explain import (
    build_index,
    cross_modal_retrieve,
    encode_samples,
    neighborhood,
    prototype,
    save_explanation,
    save_pca_csv,
    substitute_missing,
)
from .model import SharedConceptModel, load_model, save_model
from .rng import substream
from .training import save_history, train

MODEL_KINDS = ("shared",) + BASELINE_KINDS

# [kind][metric] -> predicate on the 5-seed mean; the per-seed orderings are
# checked separately in _acceptance_lines.
_MEAN_BOUNDS = {
    "shared": {"acc": lambda v: v >= 0.97, "compl": lambda v: v >= 0.93,
               "miss_graph": lambda v: v >= 0.95, "miss_tab": lambda v: v >= 0.88,
               "retr": lambda v: v >= 0.90},
    "mod_graph": {"acc": lambda v: v <= 0.80},
    "mod_tabular": {"acc": lambda v: v <= 0.80},
    "cbm_graph": {"acc": lambda v: v <= 0.80},
    "cbm_tabular": {"acc": lambda v: v <= 0.80},
    "simple": {"acc": lambda v: v >= 0.97},
    "concept": {"acc": lambda v: v >= 0.97},
    "relative": {"acc": lambda v: v >= 0.97,
                 "miss_graph": lambda v: 0.65 <= v <= 0.92},
}


def _load_cfg(args) -> ExperimentConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if args.config:
        return load_config(args.config, **overrides)
    cfg = ExperimentConfig()
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    cfg.validate()
    return cfg


def _generate(cfg: ExperimentConfig):
    return generate_xor_and_xor(cfg.n_samples, cfg.seed, cfg.random_edge_max,
                                cfg.bijection)


def cmd_generate(args) -> int:
    cfg = _load_cfg(args)
    samples = _generate(cfg)
    out = args.out or "dataset.json"
    save_dataset(samples, out, seed=cfg.seed, random_edge_max=cfg.random_edge_max,
                 bijection=cfg.bijection)
    pos = sum(s.global_label for s in samples)
    print(f"wrote {len(samples)} samples to {out}")
    print(f"global positive rate: {pos / len(samples):.3f}")
    return 0


def _train_one(cfg: ExperimentConfig, samples, kind: str):
    """Build, split and train one model; returns (model, split, history)."""
    ds = split(samples, cfg.split_ratio, cfg.seed)
    if kind == "shared":
        needs_heads = (cfg.plan.regime == "local_pretrain"
                       or any(b > 0 for b in cfg.loss.betas))
        model = SharedConceptModel(cfg, substream(cfg.seed, "init"),
                                   with_local_heads=needs_heads)
        _, history = train(model, ds, cfg)
    elif kind in BASELINE_KINDS:
        if cfg.plan.regime != "end_to_end":
            raise ConfigurationError(f"baseline {kind} supports only end_to_end")
        model = build_baseline(kind, cfg)
        history = train_baseline(model, ds, cfg)
    else:
        raise ConfigurationError(f"unknown model kind {kind!r}")
    return model, ds, history


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    if args.regime:
        cfg = cfg.with_overrides(plan=replace(cfg.plan, regime=args.regime))
    if args.local_supervision:
        cfg = cfg.with_overrides(use_local_supervision=True)
    samples, header = load_dataset(args.dataset)
    fp = cfg.dataset_fingerprint()
    got = {k: header[k] for k in fp}
    if got != fp:
        raise ConfigurationError(
            f"dataset header {got} does not match config {fp}; regenerate or "
            "adjust --seed/--config")
    model, _, history = _train_one(cfg, samples, args.model)
    out_dir = args.out or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    stem = f"{args.model}_seed{cfg.seed}"
    save_model(model, os.path.join(out_dir, f"{stem}.ckpt"))
    save_history(history, os.path.join(out_dir, f"{stem}_history.csv"))
    print(f"final test accuracy: {history[-1]['test_accuracy']:.4f}")
    return 0


def _load_pair(ckpt_path: str, dataset_path: str):
    model = load_model(ckpt_path)
    samples, header = load_dataset(dataset_path)
    fp = model.config.dataset_fingerprint()
    got = {k: header[k] for k in fp}
    if got != fp:
        raise CheckpointMismatchError(
            f"checkpoint was trained on {fp} but dataset is {got}")
    ds = split(samples, model.config.split_ratio, model.config.seed)
    return model, ds


def cmd_eval(args) -> int:
    model, ds = _load_pair(args.checkpoint, args.dataset)
    metrics = tuple(args.metrics.split(",")) if args.metrics else (
        "accuracy", "completeness", "missing", "retrieval")
    index = build_index(model, ds.train) if hasattr(model, "index_spaces") else None
    report = evaluate_model(model, index, ds, model.config.hash(), metrics)
    out_dir = args.out or model.config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    stem = f"{model.kind}_seed{model.config.seed}"
    report.save_json(os.path.join(out_dir, f"{stem}_report.json"))
    append_ledger(report, os.path.join(out_dir, "results.csv"))
    for key, value in report.to_dict().items():
        if key not in ("model", "seed", "config_hash"):
            print(f"{key}: {value}")
    return 0


def _find_sample(samples, sample_id: int):
    for s in samples:
        if s.id == sample_id:
            return s
    raise ConfigurationError(f"sample id {sample_id} not in dataset")


def cmd_explain(args) -> int:
    model, ds = _load_pair(args.checkpoint, args.dataset)
    index = build_index(model, ds.train)
    out_dir = args.out or model.config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    sub = args.subcommand

    if sub == "embedding":
        path = os.path.join(out_dir, "embedding_pca.csv")
        save_pca_csv(index, path)
        print(f"wrote {path}")
        return 0

    if sub == "prototype":
        code = np.array([int(c) for c in args.code], dtype=np.uint8)
        sample_id = prototype(index, code)
        expl_path = os.path.join(out_dir, f"prototype_{args.code}.json")
        with open(expl_path, "w") as fh:
            json.dump({"kind": "prototype", "code": args.code,
                       "sample_id": sample_id}, fh, indent=2)
        print(f"prototype of {args.code}: sample {sample_id}")
        return 0

    all_samples = list(ds.train) + list(ds.test)
    query = _find_sample(all_samples, args.sample_id)
    vecs = encode_samples(model, [query])
    modality = args.modality

    if sub == "neighborhood":
        expl = neighborhood(index, vecs[modality][0], modality, args.radius,
                            query_id=query.id)
    elif sub == "crossmodal":
        kw = {"top_k": args.top_k} if args.radius is None else {"radius": args.radius}
        expl = cross_modal_retrieve(index, vecs[modality][0], modality,
                                    query_id=query.id, **kw)
    elif sub == "substitute":
        missing = [m for m in MODALITIES if m != modality][0]
        _, retrieved, dist = substitute_missing(model, index, vecs[modality][0],
                                                modality, missing)
        from .explain import Explanation
        expl = Explanation("substitution", query.id, modality,
                           [(retrieved, missing, dist)],
                           {"present": modality, "missing": missing})
    else:
        raise ConfigurationError(f"unknown explain subcommand {sub!r}")

    path = os.path.join(out_dir, f"{sub}_{query.id}.json")
    save_explanation(expl, path)
    print(f"wrote {path} ({len(expl.results)} results)")
    return 0


# -- reproduce -------------------------------------------------------------------

def _reproduce_job(cfg_dict: dict, kind: str, seed: int) -> dict:
    cfg = ExperimentConfig.from_dict(cfg_dict).with_overrides(seed=seed)
    samples = _generate(cfg)
    model, ds, history = _train_one(cfg, samples, kind)
    index = build_index(model, ds.train) if hasattr(model, "index_spaces") else None
    report = evaluate_model(model, index, ds, cfg.hash())
    return report.to_dict()


def _mean_stderr(values) -> tuple[float, float]:
    arr = np.array(values, dtype=float)
    stderr = arr.std(ddof=1) / np.sqrt(len(arr)) if len(arr) > 1 else 0.0
    return float(arr.mean()), float(stderr)


def _acceptance_lines(by_kind: dict) -> list[tuple[str, bool, str]]:
    lines = []

    def metric(kind, getter):
        return [getter(r) for r in by_kind[kind]]

    def mean_of(kind, getter):
        return _mean_stderr(metric(kind, getter))[0]

    acc = lambda r: r["accuracy"]
    compl = lambda r: r["completeness"]
    miss_g = lambda r: r["missing_modality"]["graph"]
    miss_t = lambda r: r["missing_modality"]["tabular"]
    retr = lambda r: r["retrieval_label_match_mean"]

    for kind, bounds in _MEAN_BOUNDS.items():
        if kind not in by_kind:
            continue
        for name, ok in bounds.items():
            getter = {"acc": acc, "compl": compl, "miss_graph": miss_g,
                      "miss_tab": miss_t, "retr": retr}[name]
            value = mean_of(kind, getter)
            lines.append((f"{kind} mean {name}", ok(value), f"{value:.4f}"))
    if "shared" in by_kind:
        per_seed = metric("shared", acc)
        lines.append(("shared per-seed acc >= 0.95", min(per_seed) >= 0.95,
                      f"min {min(per_seed):.4f}"))
    if "shared" in by_kind and "concept" in by_kind:
        s, c = by_kind["shared"], by_kind["concept"]
        wins = sum(compl(a) > compl(b) for a, b in zip(s, c))
        lines.append(("shared compl beats concept in >=4/5 seeds", wins >= 4,
                      f"{wins}/{len(s)}"))
        both = all(miss_g(a) > miss_g(b) and miss_t(a) > miss_t(b)
                   for a, b in zip(s, c))
        lines.append(("shared beats concept on missing modality every seed",
                      both, ""))
        retr_wins = all(retr(a) > retr(b) for a, b in zip(s, c))
        lines.append(("shared retrieval match beats concept every seed",
                      retr_wins, ""))
    return lines


def cmd_reproduce(args) -> int:
    cfg = _load_cfg(args)
    seeds = [int(s) for s in args.seeds.split(",")]
    out_dir = args.out or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    jobs = [(kind, seed) for kind in MODEL_KINDS for seed in seeds]
    results = {}
    if args.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = {pool.submit(_reproduce_job, cfg.to_dict(), kind, seed): (kind, seed)
                       for kind, seed in jobs}
            for fut in concurrent.futures.as_completed(futures):
                results[futures[fut]] = fut.result()
    else:
        for kind, seed in jobs:
            results[(kind, seed)] = _reproduce_job(cfg.to_dict(), kind, seed)

    by_kind = {kind: [results[(kind, seed)] for seed in seeds]
               for kind in MODEL_KINDS}
    with open(os.path.join(out_dir, "reproduce_results.json"), "w") as fh:
        json.dump({"seeds": seeds, "reports": {k: v for k, v in by_kind.items()}},
                  fh, indent=2, sort_keys=True)

    def cell(values):
        if any(v is None for v in values):
            return "-"
        m, se = _mean_stderr(values)
        return f"{100 * m:.1f} +/- {100 * se:.1f}"

    header = f"{'model':<12} {'acc':>14} {'compl':>14} {'miss graph':>14} {'miss tab':>14} {'retr':>14}"
    print(header)
    print("-" * len(header))
    for kind in MODEL_KINDS:
        reports = by_kind[kind]
        print(f"{kind:<12}"
              f" {cell([r['accuracy'] for r in reports]):>14}"
              f" {cell([r['completeness'] for r in reports]):>14}"
              f" {cell([r['missing_modality'].get('graph') for r in reports]):>14}"
              f" {cell([r['missing_modality'].get('tabular') for r in reports]):>14}"
              f" {cell([r['retrieval_label_match_mean'] for r in reports]):>14}")
    print()
    all_ok = True
    for name, ok, detail in _acceptance_lines(by_kind):
        print(f"[{'PASS' if ok else 'FAIL'}] {name} {detail}")
        all_ok &= ok
    print("overall:", "PASS" if all_ok else "FAIL")
    return 0


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conceptspace",
        description="shared-concept-space multimodal learning harness")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="root seed override")
    parser.add_argument("--out", help="output file or directory")
    parser.add_argument("--workers", type=int, default=1,
                        help="parallel worker processes (reproduce)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", help="write a dataset JSON file")

    p_train = sub.add_parser("train", help="train a model on a dataset")
    p_train.add_argument("--dataset", required=True)
    p_train.add_argument("--model", required=True, choices=MODEL_KINDS)
    p_train.add_argument("--regime", choices=("end_to_end", "sequential",
                                              "local_pretrain"))
    p_train.add_argument("--local-supervision", action="store_true",
                         help="expose local labels (off by default)")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--metrics",
                        help="comma list: accuracy,completeness,missing,retrieval")

    p_expl = sub.add_parser("explain", help="export explanation artifacts")
    p_expl.add_argument("subcommand", choices=("prototype", "neighborhood",
                                               "crossmodal", "substitute",
                                               "embedding"))
    p_expl.add_argument("--checkpoint", required=True)
    p_expl.add_argument("--dataset", required=True)
    p_expl.add_argument("--code", help="bit string for prototype queries")
    p_expl.add_argument("--sample-id", type=int)
    p_expl.add_argument("--modality", choices=MODALITIES)
    p_expl.add_argument("--radius", type=float)
    p_expl.add_argument("--top-k", type=int, default=5)

    p_rep = sub.add_parser("reproduce", help="run every model over a seed list")
    p_rep.add_argument("--seeds", default="0,1,2,3,4")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    handlers = {
        "generate": cmd_generate,
        "train": cmd_train,
        "eval": cmd_eval,
        "explain": cmd_explain,
        "reproduce": cmd_reproduce,
    }
    try:
        return handlers[args.command](args)
    except NoSuchConceptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    except CheckpointMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())
