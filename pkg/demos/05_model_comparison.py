#!/usr/bin/env python3
"""One-seed comparison of every model kind.

Unimodal models cap near 75% (one XOR tells you the AND only when it is 0);
multimodal models solve the task; only the shared-concept model also aligns
the modalities, which shows up in the missing-modality and retrieval columns.

The full five-seed table with mean +/- standard error and pass/fail bands:

    python -m conceptspace --out results reproduce --seeds 0,1,2,3,4
"""

from conceptspace import build_index, evaluate_model, generate_xor_and_xor, split, train
from conceptspace.baselines import BASELINE_KINDS, build_baseline, train_baseline
from conceptspace.config import ExperimentConfig
from conceptspace.model import SharedConceptModel
from conceptspace.rng import substream

cfg = ExperimentConfig(seed=0)
samples = generate_xor_and_xor(cfg.n_samples, cfg.seed, cfg.random_edge_max)
ds = split(samples, cfg.split_ratio, cfg.seed)


def fmt(v):
    return f"{100 * v:5.1f}" if v is not None else "    -"


print(f"{'model':<12} {'acc':>6} {'compl':>6} {'missG':>6} {'missT':>6} {'retr':>6}")
for kind in ("shared",) + BASELINE_KINDS:
    if kind == "shared":
        model = SharedConceptModel(cfg, substream(cfg.seed, "init"))
        model, _ = train(model, ds, cfg)
    else:
        model = build_baseline(kind, cfg)
        train_baseline(model, ds, cfg)
    index = build_index(model, ds.train) if hasattr(model, "index_spaces") else None
    r = evaluate_model(model, index, ds, cfg.hash()).to_dict()
    print(f"{kind:<12} {fmt(r['accuracy'])} {fmt(r['completeness'])}"
          f" {fmt(r['missing_modality'].get('graph'))}"
          f" {fmt(r['missing_modality'].get('tabular'))}"
          f" {fmt(r['retrieval_label_match_mean'])}")
