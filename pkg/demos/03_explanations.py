#!/usr/bin/env python3
"""Explanation procedures over a trained model's shared concept space:
prototypes, neighborhoods, cross-modal retrieval, and the 2D export."""

import numpy as np

from conceptspace import (
    build_index,
    cross_modal_retrieve,
    encode_samples,
    generate_xor_and_xor,
    neighborhood,
    prototype,
    split,
    train,
)
from conceptspace.config import ExperimentConfig
from conceptspace.explain import save_pca_csv
from conceptspace.model import SharedConceptModel
from conceptspace.rng import substream

cfg = ExperimentConfig(seed=0)
samples = generate_xor_and_xor(cfg.n_samples, cfg.seed, cfg.random_edge_max)
ds = split(samples, cfg.split_ratio, cfg.seed)
model = SharedConceptModel(cfg, substream(cfg.seed, "init"))
print("training...")
model, _ = train(model, ds, cfg)
index = build_index(model, ds.train)
by_id = {s.id: s for s in samples}

# -- prototypes: the sample nearest to each concept cluster's centroid --------
codes, counts = np.unique(index.codes, axis=0, return_counts=True)
order = np.argsort(-counts)
print(f"\n{len(codes)} distinct binarized concept codes in the training set")
print("top clusters and their prototypes:")
for ci in order[:4]:
    code = codes[ci]
    pid = prototype(index, code)
    p = by_id[pid]
    print(f"  code {''.join(map(str, code))} ({counts[ci]:>3} members) -> "
          f"sample {pid}: bits {p.tabular.bits[:2]}, {p.graph.family.value}, "
          f"label {p.global_label}")

# -- neighborhoods: context for a single sample --------------------------------
query = ds.test[0]
vecs = encode_samples(model, [query])
expl = neighborhood(index, vecs["graph"][0], "graph", radius=0.45,
                    query_id=query.id)
print(f"\nsample {query.id} ({query.graph.family.value}): "
      f"{len(expl.results)} training graphs within radius 0.45")
agree = np.mean([by_id[r[0]].local_label_graph == query.local_label_graph
                 for r in expl.results]) if expl.results else float("nan")
print(f"  neighbors sharing its XOR bit: {agree:.0%}")

# -- cross-modal retrieval: explain bits with graphs ----------------------------
expl = cross_modal_retrieve(index, vecs["tabular"][0], "tabular", top_k=5,
                            query_id=query.id)
print(f"\nbits {query.tabular.bits[:2]} (xor={query.local_label_tab}) retrieves graphs:")
for rid, mod, dist in expl.results:
    r = by_id[rid]
    print(f"  sample {rid}: {r.graph.family.value:<14} xor={r.local_label_graph}"
          f"  distance {dist:.4f}")

# -- 2D projection-------------------------------------------------------------
save_pca_csv(index, "shared_space_pca.csv")
print("\nwrote shared_space_pca.csv (id, modality, pc1, pc2, label) for plotting")
