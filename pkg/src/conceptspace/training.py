"""Objective and training loops.

The loss is task cross-entropy plus a cross-modal distance term: for a few
randomly drawn samples per batch, the Euclidean distance between the sample's
shared concepts in each pair of modalities is penalized, pulling the
modalities onto one semantic manifold. Optional per-modality local losses can
be added when local supervision exists.

Three regimes: end_to_end trains everything jointly; sequential first trains
encoders with a throwaway head on concatenated local concepts, then freezes
them and trains the shared stage; local_pretrain first trains each encoder on
its own local task, then freezes and proceeds the same way.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .config import MODALITIES, ExperimentConfig, LossConfig
from .data import Batch, DatasetSplit, as_arrays, batches, whole_batch
from .errors import ConfigurationError
from .model import ForwardResult, SharedConceptModel, new_optimizer
from .nn import Adam, MLP, sigmoid
from .rng import substream

MODALITY_PAIRS = tuple(
    (MODALITIES[i], MODALITIES[j])
    for i in range(len(MODALITIES)) for j in range(i + 1, len(MODALITIES))
)


# -- loss pieces ---------------------------------------------------------------

def task_loss(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean binary cross-entropy from logits (fused sigmoid, stable form)."""
    loss, _ = _bce_with_logits(logits, targets)
    return loss


def _bce_with_logits(logits: np.ndarray, targets: np.ndarray):
    if logits.shape != targets.shape:
        raise ValueError(f"shape mismatch: logits {logits.shape} vs targets {targets.shape}")
    # max(z,0) - z*t + log(1 + exp(-|z|))
    per = np.maximum(logits, 0.0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))
    grad = (sigmoid(logits) - targets) / logits.size
    return float(per.mean()), grad


def semantic_regularizer(shared: dict, pairs=MODALITY_PAIRS,
                         sample_idx: np.ndarray | None = None) -> float:
    value, _ = _regularizer_with_grads(shared, pairs, sample_idx)
    return value


def _regularizer_with_grads(shared: dict, pairs, sample_idx):
    """Mean Euclidean distance between paired rows, over (pair, index)."""
    b = shared[MODALITIES[0]].shape[0]
    idx = np.arange(b) if sample_idx is None else np.asarray(sample_idx)
    grads = {m: np.zeros_like(shared[m]) for m in shared}
    if len(idx) == 0:
        warnings.warn("no samples drawn for the distance term; it contributes 0")
        return 0.0, grads
    scale = 1.0 / (len(pairs) * len(idx))
    total = 0.0
    for mi, mq in pairs:
        diff = shared[mi][idx] - shared[mq][idx]
        dist = np.sqrt((diff * diff).sum(axis=1))
        total += dist.sum() * scale
        safe = np.where(dist > 1e-12, dist, 1.0)
        g = diff / safe[:, None] * scale
        g[dist <= 1e-12] = 0.0
        grads[mi][idx] += g
        grads[mq][idx] -= g
    return float(total), grads


def _translation_reg_with_grads(shared: dict, b: int, sample_idx):
    """Distance term over content-matched cross-modal pairs.

    Shared matrices carry 2b rows: task renderings first, then each sample's
    translation into the other modality. For a drawn sample the graph
    rendering is paired with the tabular rendering of the same content (both
    directions), so the pulled-together points always describe one object.
    """
    idx = np.asarray(sample_idx)
    grads = {m: np.zeros_like(shared[m]) for m in shared}
    if len(idx) == 0:
        warnings.warn("no samples drawn for the distance term; it contributes 0")
        return 0.0, grads
    s_g, s_t = shared["graph"], shared["tabular"]
    gather_g = np.concatenate([idx, b + idx])        # graph content, tab content
    gather_t = np.concatenate([b + idx, idx])        # same contents, other modality
    diff = s_g[gather_g] - s_t[gather_t]
    dist = np.sqrt((diff * diff).sum(axis=1))
    scale = 1.0 / len(dist)
    safe = np.where(dist > 1e-12, dist, 1.0)
    g = diff / safe[:, None] * scale
    g[dist <= 1e-12] = 0.0
    np.add.at(grads["graph"], gather_g, g)
    np.add.at(grads["tabular"], gather_t, -g)
    return float(dist.sum() * scale), grads


def draw_distance_samples(batch: Batch, fraction: float, distance_filter: str,
                          rng: np.random.Generator) -> np.ndarray:
    """ceil(fraction * b) batch positions without replacement, then filtered."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    b = len(batch)
    m = int(np.ceil(fraction * b))
    idx = np.sort(rng.choice(b, size=m, replace=False))
    if distance_filter == "positive":
        idx = idx[batch.y[idx] == 1]
    elif distance_filter != "all":
        raise ValueError(f"unknown distance_filter {distance_filter!r}")
    return idx


@dataclass
class LossBreakdown:
    total: float
    task: float
    reg: float
    local: dict

    def components_sum(self, loss_cfg: LossConfig) -> float:
        return (self.task + loss_cfg.lam * self.reg
                + sum(loss_cfg.betas[i] * self.local.get(m, 0.0)
                      for i, m in enumerate(MODALITIES)))


def total_loss(result, batch: Batch, loss_cfg: LossConfig,
               sample_idx: np.ndarray | None = None) -> LossBreakdown:
    breakdown, *_ = _total_loss_with_grads(result, batch, loss_cfg, sample_idx)
    return breakdown


def _local_targets(batch: Batch, mod: str) -> np.ndarray:
    y = batch.local[mod]
    onehot = np.zeros((len(y), 2))
    onehot[np.arange(len(y)), y] = 1.0
    return onehot


def _total_loss_with_grads(result, batch: Batch, loss_cfg: LossConfig,
                           sample_idx: np.ndarray | None):
    task, d_logits = _bce_with_logits(result.logits, batch.y_onehot)
    reg = 0.0
    d_shared = None
    if loss_cfg.lam > 0:
        b = result.logits.shape[0]
        if result.shared[MODALITIES[0]].shape[0] == 2 * b:
            # translation rows present: pair by content
            reg, reg_grads = _translation_reg_with_grads(result.shared, b,
                                                         np.arange(b) if sample_idx is None
                                                         else sample_idx)
        else:
            reg, reg_grads = _regularizer_with_grads(result.shared, MODALITY_PAIRS,
                                                     sample_idx)
        d_shared = {m: loss_cfg.lam * g for m, g in reg_grads.items()}
    local = {}
    d_local = None
    betas = dict(zip(MODALITIES, loss_cfg.betas))
    if any(b > 0 for b in loss_cfg.betas):
        if not result.local_logits:
            raise ConfigurationError(
                "local loss weights set but the model has no local heads")
        d_local = {}
        for mod, beta in betas.items():
            if beta <= 0:
                continue
            value, grad = _bce_with_logits(result.local_logits[mod],
                                           _local_targets(batch, mod))
            local[mod] = value
            d_local[mod] = beta * grad
    total = task + loss_cfg.lam * reg + sum(betas[m] * v for m, v in local.items())
    return LossBreakdown(total, task, reg, local), d_logits, d_shared, d_local


# -- accuracy helper (whole-split eval forward) ---------------------------------

def global_accuracy(model, eval_batch: Batch) -> float:
    logits = model.forward(eval_batch, "eval").logits
    return float((logits.argmax(axis=1) == eval_batch.y).mean())


# -- training loops --------------------------------------------------------------

def train(model: SharedConceptModel, split: DatasetSplit, cfg: ExperimentConfig):
    """Train in place per cfg.plan; returns (model, history).

    History rows: {epoch, task_loss, reg_loss, local_loss_graph,
    local_loss_tabular, test_accuracy}. Two-phase regimes keep numbering
    epochs across phases; phase-1 rows report that phase's own predictive
    path as test accuracy.
    """
    plan, loss_cfg = cfg.plan, cfg.loss
    if any(b > 0 for b in loss_cfg.betas) and not model.local_heads:
        raise ConfigurationError("local loss weights require local heads")
    regime = plan.regime
    if regime == "end_to_end":
        history = _train_end_to_end(model, split, cfg)
    elif regime == "sequential":
        history = _train_sequential(model, split, cfg)
    elif regime == "local_pretrain":
        if not cfg.use_local_supervision:
            raise ConfigurationError(
                "local_pretrain needs local supervision; this dataset withholds it "
                "unless use_local_supervision is set")
        if not model.local_heads:
            raise ConfigurationError("local_pretrain requires local heads")
        history = _train_local_pretrain(model, split, cfg)
    else:
        raise ConfigurationError(f"unknown regime {regime!r}")
    model.trained = True
    return model, history


def _streams(cfg: ExperimentConfig):
    return (substream(cfg.seed, "shuffle"), substream(cfg.seed, "gumbel"),
            substream(cfg.seed, "regdraw"))


def _row(epoch, task, reg, local, acc):
    return {
        "epoch": epoch,
        "task_loss": float(task),
        "reg_loss": float(reg),
        "local_loss_graph": float(local.get("graph", 0.0)),
        "local_loss_tabular": float(local.get("tabular", 0.0)),
        "test_accuracy": float(acc),
    }


def _train_end_to_end(model, split, cfg):
    plan, loss_cfg = cfg.plan, cfg.loss
    shuffle_rng, gumbel_rng, reg_rng = _streams(cfg)
    train_arrays = as_arrays(split.train, cfg.bijection)
    test_batch = whole_batch(split.test, bijection=cfg.bijection)
    opt = new_optimizer(model, plan.learning_rate)
    history = []
    for epoch in range(plan.epochs):
        sums = np.zeros(2)
        local_sums = {m: 0.0 for m in MODALITIES}
        n_batches = 0
        for batch in batches(split.train, plan.batch_size, rng=shuffle_rng,
                             shuffle=True, drop_singleton=True, arrays=train_arrays):
            model.zero_grad()
            result = model.forward(batch, "train", gumbel_rng=gumbel_rng,
                                   with_aux=True)
            idx = None
            if loss_cfg.lam > 0:
                idx = draw_distance_samples(batch, loss_cfg.sample_fraction,
                                            loss_cfg.distance_filter, reg_rng)
            breakdown, d_logits, d_shared, d_local = _total_loss_with_grads(
                result, batch, loss_cfg, idx)
            model.backward(d_logits, d_shared, d_local)
            opt.step(model.grads())
            sums += (breakdown.task, breakdown.reg)
            for m, v in breakdown.local.items():
                local_sums[m] += v
            n_batches += 1
        acc = global_accuracy(model, test_batch)
        history.append(_row(epoch, sums[0] / n_batches, sums[1] / n_batches,
                            {m: v / n_batches for m, v in local_sums.items()}, acc))
    return history


def _train_sequential(model, split, cfg):
    plan = cfg.plan
    shuffle_rng, gumbel_rng, reg_rng = _streams(cfg)
    train_arrays = as_arrays(split.train, cfg.bijection)
    test_batch = whole_batch(split.test, bijection=cfg.bijection)
    k = cfg.local_width

    # phase 1: encoders + throwaway head on concatenated local concepts
    fprime = MLP(len(MODALITIES) * k, cfg.head_hidden, cfg.n_classes,
                 substream(cfg.seed, "misc"), "fprime")
    phase1_params = {}
    for m in MODALITIES:
        phase1_params.update(model.encoders[m].params())
    phase1_params.update(fprime.params())
    opt1 = Adam(phase1_params, plan.learning_rate)
    history = []
    for epoch in range(plan.epochs):
        task_sum, n_batches = 0.0, 0
        for batch in batches(split.train, plan.batch_size, rng=shuffle_rng,
                             shuffle=True, drop_singleton=True, arrays=train_arrays):
            model.zero_grad()
            fprime.zero_grad()
            _, local = model.local_concepts(batch, "train", gumbel_rng=gumbel_rng)
            logits = fprime.forward(np.concatenate([local[m] for m in MODALITIES],
                                                   axis=1))
            task, d_logits = _bce_with_logits(logits, batch.y_onehot)
            gc = fprime.backward(d_logits)
            for i, m in enumerate(MODALITIES):
                gz = model.concept_stages[m].backward(gc[:, i * k:(i + 1) * k])
                model.encoders[m].backward(gz)
            grads = {}
            for m in MODALITIES:
                grads.update(model.encoders[m].grads())
            grads.update(fprime.grads())
            opt1.step(grads)
            task_sum += task
            n_batches += 1
        _, local = model.local_concepts(test_batch, "eval")
        logits = fprime.forward(np.concatenate([local[m] for m in MODALITIES], axis=1))
        acc = float((logits.argmax(axis=1) == test_batch.y).mean())
        history.append(_row(epoch, task_sum / n_batches, 0.0, {}, acc))

    # phase 2: encoders frozen (eval mode), shared stage + predictor train
    history += _train_shared_phase(model, split, cfg, train_arrays, test_batch,
                                   shuffle_rng, reg_rng, start_epoch=plan.epochs)
    return history


def _train_local_pretrain(model, split, cfg):
    plan = cfg.plan
    shuffle_rng, gumbel_rng, reg_rng = _streams(cfg)
    train_arrays = as_arrays(split.train, cfg.bijection)
    test_batch = whole_batch(split.test, bijection=cfg.bijection)
    history = []
    epoch_base = 0
    for mod in MODALITIES:
        head = model.local_heads[mod]
        encoder = model.encoders[mod]
        params = {**encoder.params(), **head.params()}
        opt = Adam(params, plan.learning_rate)
        for epoch in range(plan.epochs):
            loss_sum, n_batches = 0.0, 0
            for batch in batches(split.train, plan.batch_size, rng=shuffle_rng,
                                 shuffle=True, drop_singleton=True,
                                 arrays=train_arrays):
                model.zero_grad()
                z = encoder.forward(*encoder.inputs(batch), mode="train",
                                    rng=gumbel_rng)
                c = model.concept_stages[mod].forward(z, "train")
                logits = head.forward(c)
                value, d_logits = _bce_with_logits(logits, _local_targets(batch, mod))
                gc = head.backward(d_logits)
                gz = model.concept_stages[mod].backward(gc)
                encoder.backward(gz)
                opt.step({**encoder.grads(), **head.grads()})
                loss_sum += value
                n_batches += 1
            z = encoder.forward(*encoder.inputs(test_batch), mode="eval")
            c = model.concept_stages[mod].forward(z, "eval")
            acc = float((head.forward(c).argmax(axis=1) == test_batch.local[mod]).mean())
            history.append(_row(epoch_base + epoch, 0.0, 0.0,
                                {mod: loss_sum / n_batches}, acc))
        epoch_base += plan.epochs
    history += _train_shared_phase(model, split, cfg, train_arrays, test_batch,
                                   shuffle_rng, reg_rng, start_epoch=epoch_base)
    return history


def _train_shared_phase(model, split, cfg, train_arrays, test_batch,
                        shuffle_rng, reg_rng, start_epoch):
    """Common phase 2: frozen encoders in eval mode, shared stage training."""
    plan, loss_cfg = cfg.plan, cfg.loss
    params = {**model.shared_stage.params(), **model.predictor.params()}
    opt = Adam(params, plan.learning_rate)
    history = []
    for epoch in range(plan.phase2_epochs):
        sums = np.zeros(2)
        n_batches = 0
        for batch in batches(split.train, plan.batch_size, rng=shuffle_rng,
                             shuffle=True, drop_singleton=True, arrays=train_arrays):
            model.zero_grad()
            _, local = model.local_concepts(batch, "eval", with_aux=True)
            shared = model.shared_concepts(local, "train")
            b = len(batch)
            logits = model.predict({m: shared[m][:b] for m in MODALITIES})
            result = ForwardResult({}, local, shared, logits, {})
            idx = None
            if loss_cfg.lam > 0:
                idx = draw_distance_samples(batch, loss_cfg.sample_fraction,
                                            loss_cfg.distance_filter, reg_rng)
            breakdown, d_logits, d_shared, _ = _total_loss_with_grads(
                result, batch, loss_cfg, idx)
            model.backward(d_logits, d_shared, frozen_encoders=True)
            opt.step({**model.shared_stage.grads(), **model.predictor.grads()})
            sums += (breakdown.task, breakdown.reg)
            n_batches += 1
        acc = global_accuracy(model, test_batch)
        history.append(_row(start_epoch + epoch, sums[0] / n_batches,
                            sums[1] / n_batches, {}, acc))
    return history


# -- generic task-only loop shared with the baselines ----------------------------

def train_task_only(model_like, split: DatasetSplit, cfg: ExperimentConfig,
                    epochs: int, trainable: dict | None = None,
                    target: str = "global"):
    """Fit any model exposing forward(batch, mode, rng)->logits and
    backward(d_logits) on plain cross-entropy. target selects global labels
    or a modality's local labels."""
    plan = cfg.plan
    shuffle_rng = substream(cfg.seed, "shuffle")
    gumbel_rng = substream(cfg.seed, "gumbel")
    train_arrays = as_arrays(split.train, cfg.bijection)
    test_batch = whole_batch(split.test, bijection=cfg.bijection)
    params = trainable if trainable is not None else model_like.parameters()
    opt = Adam(params, plan.learning_rate)
    history = []
    for epoch in range(epochs):
        loss_sum, n_batches = 0.0, 0
        for batch in batches(split.train, plan.batch_size, rng=shuffle_rng,
                             shuffle=True, drop_singleton=True, arrays=train_arrays):
            model_like.zero_grad()
            logits = model_like.forward(batch, "train", gumbel_rng)
            targets = batch.y_onehot if target == "global" else _local_targets(batch, target)
            value, d_logits = _bce_with_logits(logits, targets)
            model_like.backward(d_logits)
            grads = model_like.grads()
            opt.step({k: grads[k] for k in params})
            loss_sum += value
            n_batches += 1
        logits = model_like.forward(test_batch, "eval", None)
        labels = test_batch.y if target == "global" else test_batch.local[target]
        acc = float((logits.argmax(axis=1) == labels).mean())
        history.append(_row(epoch, loss_sum / n_batches, 0.0, {}, acc))
    model_like.trained = True
    return history


# -- history file -----------------------------------------------------------------

HISTORY_COLUMNS = ("epoch", "task_loss", "reg_loss", "local_loss_graph",
                   "local_loss_tabular", "test_accuracy")


def save_history(history, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_COLUMNS)
        writer.writeheader()
        for row in history:
            writer.writerow({k: row[k] for k in HISTORY_COLUMNS})
