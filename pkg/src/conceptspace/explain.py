"""Explanation machinery over a frozen model's concept space.

A ConceptIndex materializes every training sample's representation in each
modality (computed in eval mode, so values are batch-independent), the
per-sample global concatenation, and its binarization at 0.5. All queries are
exhaustive nearest-neighbor scans: prototypes (sample closest to a concept
cluster's centroid), radius neighborhoods, cross-modal retrieval, and the
nearest-stored-concept substitution used for missing-modality inference.

Rows are stored sorted by sample id, so numpy's first-occurrence argmin
realizes the smallest-id tie-break everywhere.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .config import MODALITIES
from .data import whole_batch
from .errors import NoSuchConceptError

EXPLANATION_KINDS = ("prototype", "neighborhood", "cross_modal", "substitution")


@dataclass
class ConceptIndex:
    ids: np.ndarray                 # (n,) sorted ascending
    spaces: dict                    # modality -> (n, width)
    z: np.ndarray | None            # (n, sum of widths) global concatenation
    codes: np.ndarray | None        # (n, sum of widths) uint8, z >= 0.5
    local_labels: dict              # modality -> (n,)
    global_labels: np.ndarray       # (n,)

    def __len__(self) -> int:
        return len(self.ids)

    def row_of(self, sample_id: int) -> int:
        pos = int(np.searchsorted(self.ids, sample_id))
        if pos >= len(self.ids) or self.ids[pos] != sample_id:
            raise KeyError(f"sample {sample_id} not in index")
        return pos


def build_index(model, samples) -> ConceptIndex:
    """Materialize representations of the training set under a frozen model."""
    if not getattr(model, "trained", False):
        raise RuntimeError("index requires a trained model")
    order = np.argsort([s.id for s in samples])
    ordered = [samples[i] for i in order]
    batch = whole_batch(ordered)
    spaces = model.index_spaces(batch)
    z = codes = None
    if getattr(model, "concept_based", False):
        z = np.concatenate([spaces[m] for m in MODALITIES], axis=1)
        codes = (z >= 0.5).astype(np.uint8)
    return ConceptIndex(
        ids=np.array([s.id for s in ordered]),
        spaces=spaces,
        z=z,
        codes=codes,
        local_labels={m: batch.local[m] for m in MODALITIES},
        global_labels=batch.y,
    )


@dataclass
class Explanation:
    kind: str
    query_id: int
    query_modality: str
    results: list                   # of (sample_id, modality, distance)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EXPLANATION_KINDS:
            raise ValueError(f"unknown explanation kind {self.kind!r}")
        dists = [r[2] for r in self.results]
        if any(d < 0 for d in dists):
            raise ValueError("distances must be nonnegative")
        if any(a > b for a, b in zip(dists, dists[1:])):
            raise ValueError("results must be sorted by ascending distance")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "query": {"id": self.query_id, "modality": self.query_modality},
            "results": [{"id": int(i), "modality": m, "distance": float(d)}
                        for i, m, d in self.results],
            "params": self.params,
        }


def save_explanation(expl: Explanation, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(expl.to_dict(), fh, sort_keys=True, indent=2)


def encode_samples(model, samples) -> dict:
    """Eval-mode representations for arbitrary samples (test or train)."""
    return model.index_spaces(whole_batch(samples))


# -- queries -------------------------------------------------------------------

def prototype(index: ConceptIndex, code) -> int:
    """Training sample nearest to the centroid of all samples whose binarized
    global concatenation equals `code`. The argmin runs over the whole
    training set, not just the cluster."""
    if index.codes is None:
        raise ValueError("index has no binarized codes (not a concept-based model)")
    code = np.asarray(code, dtype=np.uint8)
    if code.shape != (index.codes.shape[1],):
        raise ValueError(f"code must have length {index.codes.shape[1]}")
    members = np.all(index.codes == code, axis=1)
    if not members.any():
        raise NoSuchConceptError(
            "no training sample has code " + "".join(str(int(b)) for b in code))
    centroid = index.z[members].mean(axis=0)
    dists = np.linalg.norm(index.z - centroid, axis=1)
    best = np.flatnonzero(dists == dists.min())
    return int(index.ids[best[0]])   # ids sorted: first hit = smallest id


def neighborhood(index: ConceptIndex, query_vec: np.ndarray, modality: str,
                 radius: float, query_id: int = -1) -> Explanation:
    """Training samples strictly within `radius` of the query, same modality."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    dists = np.linalg.norm(index.spaces[modality] - query_vec, axis=1)
    hit = np.flatnonzero(dists < radius)
    order = hit[np.lexsort((index.ids[hit], dists[hit]))]
    results = [(int(index.ids[i]), modality, float(dists[i])) for i in order]
    return Explanation("neighborhood", query_id, modality, results,
                       {"radius": radius})


def cross_modal_retrieve(index: ConceptIndex, query_vec: np.ndarray,
                         source_modality: str, target_modalities=None,
                         radius: float | None = None, top_k: int | None = None,
                         query_id: int = -1) -> Explanation:
    """Nearest training samples from other modalities.

    Radius mode keeps everything strictly within `radius`; top_k mode keeps
    the k nearest. Exactly one of the two must be given.
    """
    if (radius is None) == (top_k is None):
        raise ValueError("pass exactly one of radius or top_k")
    if target_modalities is None:
        target_modalities = [m for m in MODALITIES if m != source_modality]
    if source_modality in target_modalities:
        raise ValueError("target modalities must differ from the source")
    pool = []
    for mod in target_modalities:
        dists = np.linalg.norm(index.spaces[mod] - query_vec, axis=1)
        pool.extend((float(d), int(i), mod) for d, i in zip(dists, index.ids))
    pool.sort(key=lambda t: (t[0], t[2], t[1]))
    if radius is not None:
        kept = [p for p in pool if p[0] < radius]
    else:
        kept = pool[:top_k]
    results = [(i, mod, d) for d, i, mod in kept]
    params = {"radius": radius} if radius is not None else {"top_k": top_k}
    params["targets"] = list(target_modalities)
    return Explanation("cross_modal", query_id, source_modality, results, params)


def substitute_missing(model, index: ConceptIndex, query_vec: np.ndarray,
                       present_modality: str, missing_modality: str):
    """Replace a missing modality's representation with the stored training
    vector nearest (in the missing modality's rows) to the present modality's
    query vector. Returns (substitute_vector, retrieved_id, distance)."""
    if present_modality == missing_modality:
        raise ValueError("present and missing modality must differ")
    if len(index) == 0:
        raise RuntimeError("empty index")
    dists = np.linalg.norm(index.spaces[missing_modality] - query_vec, axis=1)
    row = int(dists.argmin())        # ids sorted: ties resolve to smallest id
    return index.spaces[missing_modality][row].copy(), int(index.ids[row]), float(dists[row])


def substitute_matrix(index: ConceptIndex, queries: np.ndarray,
                      missing_modality: str):
    """Vectorized substitution for a batch of present-modality vectors."""
    if len(index) == 0:
        raise RuntimeError("empty index")
    stored = index.spaces[missing_modality]
    d2 = ((queries[:, None, :] - stored[None, :, :]) ** 2).sum(axis=2)
    rows = d2.argmin(axis=1)
    return stored[rows].copy(), index.ids[rows]


# -- 2D projection export --------------------------------------------------------

def pca_projection(index: ConceptIndex) -> list:
    """Rows (id, modality, pc1, pc2, global_label) of a 2-component PCA over
    every stored representation from every modality."""
    x = np.concatenate([index.spaces[m] for m in MODALITIES], axis=0)
    centered = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2]
    for i in range(2):               # deterministic sign: dominant loading positive
        j = np.abs(comps[i]).argmax()
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    scores = centered @ comps.T
    rows = []
    n = len(index)
    for k, mod in enumerate(MODALITIES):
        for r in range(n):
            rows.append((int(index.ids[r]), mod,
                         float(scores[k * n + r, 0]), float(scores[k * n + r, 1]),
                         int(index.global_labels[r])))
    return rows


def save_pca_csv(index: ConceptIndex, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("id", "modality", "pc1", "pc2", "label"))
        writer.writerows(pca_projection(index))
