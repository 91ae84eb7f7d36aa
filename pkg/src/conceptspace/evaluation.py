"""Metrics: task accuracy, concept completeness, missing-modality accuracy,
and cross-modal retrieval label agreement.

Completeness asks how much of the task the learned concepts alone can carry:
training samples are grouped by their binarized concept code, a decision tree
maps code bits to labels, and the score is that tree's accuracy on test
codes. Missing-modality accuracy substitutes the absent modality's
representation with its nearest stored training neighbor (queried from the
present modality) before predicting.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .config import MODALITIES
from .data import translation_batch, whole_batch
from .explain import ConceptIndex, substitute_matrix
from .tree import BinaryCodeTree


def accuracy(model, samples) -> float:
    """Fraction of samples whose argmax logit matches the global label."""
    batch = whole_batch(samples)
    out = model.forward(batch, "eval")
    logits = getattr(out, "logits", out)
    return float((logits.argmax(axis=1) == batch.y).mean())


@dataclass
class CompletenessReport:
    score: float
    n_clusters: int
    depth: int
    clusters: list                   # of {"code", "size", "majority_label"}

    def __post_init__(self):
        if not 0 <= self.score <= 1:
            raise ValueError("score must be a fraction")
        if self.n_clusters < 1:
            raise ValueError("at least one cluster required")


def completeness(index: ConceptIndex, test_codes: np.ndarray,
                 test_labels: np.ndarray) -> CompletenessReport:
    """Decision-tree accuracy of binarized concept codes on the test split.

    The tree is fit on the training codes held by the index. Test codes never
    seen in training still route through the tree (codes are plain bit
    features), so the score stays well-defined.
    """
    if index.codes is None:
        raise ValueError("completeness needs a concept-based index")
    tree = BinaryCodeTree().fit(index.codes, index.global_labels)
    score = float((tree.predict(test_codes) == test_labels).mean())
    uniq, inverse = np.unique(index.codes, axis=0, return_inverse=True)
    clusters = []
    for ci in range(len(uniq)):
        members = index.global_labels[inverse == ci]
        values, counts = np.unique(members, return_counts=True)
        clusters.append({
            "code": "".join(str(int(b)) for b in uniq[ci]),
            "size": int(len(members)),
            "majority_label": int(values[counts == counts.max()].min()),
        })
    return CompletenessReport(score=score, n_clusters=len(uniq),
                              depth=tree.depth, clusters=clusters)


def model_codes(model, samples) -> tuple[np.ndarray, np.ndarray]:
    """Binarized concatenated representations plus global labels."""
    batch = whole_batch(samples)
    spaces = model.index_spaces(batch)
    z = np.concatenate([spaces[m] for m in MODALITIES], axis=1)
    return (z >= 0.5).astype(np.uint8), batch.y


def missing_modality_eval(model, index: ConceptIndex, samples,
                          missing_modality: str) -> float:
    """Score predictions when one modality's native rendering is unavailable.

    The missing modality's content arrives re-rendered in the present
    modality (the auxiliary input), is encoded there, and the nearest stored
    training vector from the missing modality's space stands in for it; the
    present modality keeps its own rendering.
    """
    present = [m for m in MODALITIES if m != missing_modality]
    if len(present) != 1:
        raise ValueError(f"unknown modality {missing_modality!r}")
    present = present[0]
    bijection = model.config.bijection
    batch = whole_batch(samples, bijection=bijection)
    spaces = model.index_spaces(batch)
    aux_spaces = model.index_spaces(translation_batch(samples, bijection))
    queries = aux_spaces[present]     # the missing content, seen by the present encoder
    substituted, _ = substitute_matrix(index, queries, missing_modality)
    logits = model.predict({present: spaces[present],
                            missing_modality: substituted})
    return float((logits.argmax(axis=1) == batch.y).mean())


def retrieval_label_match(model, index: ConceptIndex, samples,
                          direction: tuple[str, str]) -> float:
    """Fraction of test queries whose top-1 cross-modal retrieval carries the
    same local label as the query does in its own modality."""
    source, target = direction
    if source == target:
        raise ValueError("retrieval direction must cross modalities")
    batch = whole_batch(samples)
    spaces = model.index_spaces(batch)
    stored = index.spaces[target]
    d2 = ((spaces[source][:, None, :] - stored[None, :, :]) ** 2).sum(axis=2)
    rows = d2.argmin(axis=1)
    retrieved = index.local_labels[target][rows]
    return float((retrieved == batch.local[source]).mean())


def paired_shared_distance(model, samples) -> float:
    """Mean cross-modal Euclidean distance between a sample's own
    representations; the quantity the training regularizer pulls down."""
    batch = whole_batch(samples)
    spaces = model.index_spaces(batch)
    diff = spaces[MODALITIES[0]] - spaces[MODALITIES[1]]
    return float(np.sqrt((diff * diff).sum(axis=1)).mean())


# -- reports ---------------------------------------------------------------------

LEDGER_COLUMNS = ("model", "seed", "acc", "compl", "miss_m1", "miss_m2",
                  "retr_match")


@dataclass
class EvalReport:
    model_kind: str
    seed: int
    config_hash: str
    accuracy: float | None = None
    completeness: float | None = None
    missing: dict = field(default_factory=dict)      # modality -> accuracy
    retrieval: dict = field(default_factory=dict)    # "source->target" -> rate

    def validate(self) -> None:
        for v in [self.accuracy, self.completeness, *self.missing.values(),
                  *self.retrieval.values()]:
            if v is not None and not 0 <= v <= 1:
                raise ValueError("metrics must be fractions in [0, 1]")

    @property
    def retrieval_mean(self) -> float | None:
        if not self.retrieval:
            return None
        return float(np.mean(list(self.retrieval.values())))

    def to_dict(self) -> dict:
        return {
            "model": self.model_kind,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "accuracy": self.accuracy,
            "completeness": self.completeness,
            "missing_modality": self.missing,
            "retrieval_label_match": self.retrieval,
            "retrieval_label_match_mean": self.retrieval_mean,
        }

    def save_json(self, path: str) -> None:
        self.validate()
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)

    def ledger_row(self) -> dict:
        def fmt(v):
            return "" if v is None else f"{v:.6f}"
        return {
            "model": self.model_kind,
            "seed": self.seed,
            "acc": fmt(self.accuracy),
            "compl": fmt(self.completeness),
            "miss_m1": fmt(self.missing.get("graph")),
            "miss_m2": fmt(self.missing.get("tabular")),
            "retr_match": fmt(self.retrieval_mean),
        }


def append_ledger(report: EvalReport, path: str) -> None:
    """One CSV row per evaluation, fixed column order, header written once."""
    report.validate()
    new = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LEDGER_COLUMNS)
        if new:
            writer.writeheader()
        writer.writerow(report.ledger_row())


def evaluate_model(model, index: ConceptIndex | None, split, config_hash: str,
                   metrics=("accuracy", "completeness", "missing", "retrieval"),
                   seed: int | None = None) -> EvalReport:
    """Run the requested metric set; metrics needing an index are skipped
    (reported as None) when the model has no representation space."""
    report = EvalReport(model_kind=model.kind,
                        seed=model.config.seed if seed is None else seed,
                        config_hash=config_hash)
    if "accuracy" in metrics:
        report.accuracy = accuracy(model, split.test)
    indexable = index is not None and hasattr(model, "index_spaces")
    if "completeness" in metrics and indexable and getattr(model, "concept_based", False):
        codes, labels = model_codes(model, split.test)
        report.completeness = completeness(index, codes, labels).score
    if "missing" in metrics and indexable:
        for mod in MODALITIES:
            report.missing[mod] = missing_modality_eval(model, index, split.test, mod)
    if "retrieval" in metrics and indexable:
        for source in MODALITIES:
            target = [m for m in MODALITIES if m != source][0]
            report.retrieval[f"{source}->{target}"] = retrieval_label_match(
                model, index, split.test, (source, target))
    report.validate()
    return report
