"""Forward architecture: per-modality encoders feeding one shared concept space.

Pipeline per batch (all float64):

    graph:   5x graph conv -> node-concept logits -> straight-through one-hot
             -> occurrence counts -> batch rescale -> sigmoid -> local concepts
    tabular: 2-layer dense net -> batch rescale -> sigmoid -> local concepts
    both:    2-layer projector -> one rescale over the union of all
             modalities' rows -> sigmoid -> shared concepts
    head:    concatenation in fixed modality order -> 2-layer net -> logits

Shared-space rescaling pools statistics across every modality's projections
so the modalities land on a common scale; that is what lets one modality's
concepts be read through another's.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .config import MODALITIES, ExperimentConfig
from .data import Batch, N_BITS
from .errors import CheckpointMismatchError
from .nn import (
    Adam,
    BatchRescale,
    GraphConv,
    GumbelSoftmax,
    LeakyReLU,
    MLP,
    Sigmoid,
)

CHECKPOINT_VERSION = 1


class DenseEncoder:
    """Backbone for bit-string inputs."""

    def __init__(self, cfg: ExperimentConfig, rng, name: str):
        self.mlp = MLP(N_BITS, cfg.dense_hidden, cfg.local_width, rng, name)

    def inputs(self, batch: Batch, with_aux: bool = False):
        if with_aux:
            return (np.concatenate([batch.tab_x, batch.aux_tab_x], axis=0),)
        return (batch.tab_x,)

    def forward(self, x, mode: str = "train", rng=None, gumbel_mode=None):
        if x.ndim != 2 or x.shape[1] != N_BITS:
            raise ValueError(f"tabular input must be (b, {N_BITS})")
        return self.mlp.forward(x)

    def backward(self, g):
        self.mlp.backward(g)

    def params(self):
        return self.mlp.params()

    def grads(self):
        return self.mlp.grads()

    def zero_grad(self):
        self.mlp.zero_grad()


class GraphEncoder:
    """Backbone for node-feature/adjacency inputs.

    With discretize=True each node is assigned a hard one-hot node concept
    (straight-through sampled in training, argmax at eval) and the graph is
    summarized by how often each node concept occurs. With discretize=False
    the raw node embeddings are sum-pooled (used by concept-free baselines).
    """

    def __init__(self, cfg: ExperimentConfig, rng, name: str, discretize: bool = True):
        dims = [1] + [cfg.graph_hidden] * (cfg.graph_layers - 1) + [cfg.local_width]
        # last layer emits node-concept logits: bias starts at zero there
        self.convs = [GraphConv(dims[i], dims[i + 1], rng, f"{name}.conv{i}",
                                zero_bias=(i == cfg.graph_layers - 1))
                      for i in range(cfg.graph_layers)]
        self.acts = [LeakyReLU(cfg.leaky_slope) for _ in range(cfg.graph_layers - 1)]
        self.discretize = discretize
        self.gumbel = GumbelSoftmax(cfg.tau) if discretize else None
        self._n_nodes = None

    def inputs(self, batch: Batch, with_aux: bool = False):
        if with_aux:
            return (np.concatenate([batch.graph_x, batch.aux_graph_x], axis=0),
                    np.concatenate([batch.graph_adj, batch.aux_graph_adj], axis=0))
        return (batch.graph_x, batch.graph_adj)

    def forward(self, h, adj=None, mode: str = "train", rng=None, gumbel_mode=None):
        if h.ndim != 3 or h.shape[1] < 1:
            raise ValueError("graph input must be (b, nodes>=1, 1)")
        self._n_nodes = h.shape[1]
        for i, conv in enumerate(self.convs):
            h = conv.forward(h, adj)
            if i < len(self.acts):
                h = self.acts[i].forward(h)
        if self.discretize:
            node_concepts = self.gumbel.forward(h, gumbel_mode or mode, rng)
            return node_concepts.sum(axis=1)
        return h.sum(axis=1)

    def backward(self, g):
        # undo the node sum: every node sees the same upstream gradient
        gh = np.broadcast_to(g[:, None, :], (g.shape[0], self._n_nodes, g.shape[1]))
        if self.discretize:
            gh = self.gumbel.backward(gh)
        for i in reversed(range(len(self.convs))):
            if i < len(self.acts):
                gh = self.acts[i].backward(gh)
            gh = self.convs[i].backward(gh)

    def params(self):
        out = {}
        for conv in self.convs:
            out.update(conv.params())
        return out

    def grads(self):
        out = {}
        for conv in self.convs:
            out.update(conv.grads())
        return out

    def zero_grad(self):
        for conv in self.convs:
            conv.zero_grad()


class ConceptStage:
    """Batch rescale + sigmoid turning backbone outputs into concepts."""

    def __init__(self, width: int, name: str, momentum: float, eps: float):
        self.rescale = BatchRescale(width, name, momentum, eps)
        self.sig = Sigmoid()

    def forward(self, z, mode):
        return self.sig.forward(self.rescale.forward(z, mode))

    def backward(self, g):
        return self.rescale.backward(self.sig.backward(g))


class SharedStage:
    """Project local concepts and rescale over the union of all modalities.

    One statistics state serves every modality: the rows of all projected
    batches are stacked before standardization, so the result for a row does
    not depend on which modality contributed it.
    """

    def __init__(self, cfg: ExperimentConfig, rng):
        self.projectors = {
            mod: MLP(cfg.local_width, cfg.projector_hidden, cfg.shared_width,
                     rng, f"proj.{mod}")
            for mod in MODALITIES
        }
        self.rescale = BatchRescale(cfg.shared_width, "shared_rescale",
                                    cfg.rescale_momentum, cfg.rescale_eps)
        self.sig = Sigmoid()
        self.rows = 0            # row count of the last forward, per modality

    def forward(self, local_c: dict, mode: str) -> dict:
        sizes = [local_c[m].shape[0] for m in MODALITIES]
        if len(set(sizes)) != 1:
            raise ValueError("modalities must contribute equal batch lengths")
        stacked = np.concatenate([self.projectors[m].forward(local_c[m])
                                  for m in MODALITIES], axis=0)
        out = self.sig.forward(self.rescale.forward(stacked, mode))
        b = sizes[0]
        self.rows = b
        return {m: out[i * b:(i + 1) * b] for i, m in enumerate(MODALITIES)}

    def backward(self, g_shared: dict) -> dict:
        b = g_shared[MODALITIES[0]].shape[0]
        g = np.concatenate([g_shared[m] for m in MODALITIES], axis=0)
        g = self.rescale.backward(self.sig.backward(g))
        return {m: self.projectors[m].backward(g[i * b:(i + 1) * b])
                for i, m in enumerate(MODALITIES)}

    def params(self):
        out = {}
        for m in MODALITIES:
            out.update(self.projectors[m].params())
        return out

    def grads(self):
        out = {}
        for m in MODALITIES:
            out.update(self.projectors[m].grads())
        return out

    def zero_grad(self):
        for m in MODALITIES:
            self.projectors[m].zero_grad()


@dataclass
class ForwardResult:
    pre_rescale: dict      # modality -> (b, k) backbone outputs
    local: dict            # modality -> (b, k) local concepts
    shared: dict           # modality -> (b, t) shared concepts
    logits: np.ndarray     # (b, n_classes)
    local_logits: dict     # modality -> (b, n_classes), empty if no local heads


class SharedConceptModel:
    """Encoders, shared projectors and label predictor as one trainable unit."""

    kind = "shared"
    concept_based = True

    def __init__(self, cfg: ExperimentConfig, rng, with_local_heads: bool = False):
        cfg.validate()
        self.config = cfg
        self.encoders = {
            "graph": GraphEncoder(cfg, rng, "enc.graph"),
            "tabular": DenseEncoder(cfg, rng, "enc.tabular"),
        }
        self.concept_stages = {
            mod: ConceptStage(cfg.local_width, f"local_rescale.{mod}",
                              cfg.rescale_momentum, cfg.rescale_eps)
            for mod in MODALITIES
        }
        self.shared_stage = SharedStage(cfg, rng)
        self.predictor = MLP(len(MODALITIES) * cfg.shared_width, cfg.head_hidden,
                             cfg.n_classes, rng, "predictor")
        self.local_heads = {}
        if with_local_heads:
            self.local_heads = {
                mod: MLP(cfg.local_width, cfg.head_hidden, cfg.n_classes,
                         rng, f"local_head.{mod}")
                for mod in MODALITIES
            }
        self.trained = False

    # -- forward -------------------------------------------------------------

    def local_concepts(self, batch: Batch, mode: str, *, gumbel_rng=None,
                       gumbel_mode=None, with_aux: bool = False) -> tuple[dict, dict]:
        """with_aux appends each sample's cross-modal translation rendering as
        extra rows (2b per modality), giving the regularizer content-matched
        pairs under the same batch statistics."""
        pre, local = {}, {}
        for mod in MODALITIES:
            inputs = self.encoders[mod].inputs(batch, with_aux)
            z = self.encoders[mod].forward(*inputs, mode=mode, rng=gumbel_rng,
                                           gumbel_mode=gumbel_mode)
            pre[mod] = z
            local[mod] = self.concept_stages[mod].forward(z, mode)
        return pre, local

    def shared_concepts(self, local_c: dict, mode: str) -> dict:
        return self.shared_stage.forward(local_c, mode)

    def predict(self, shared: dict) -> np.ndarray:
        missing = [m for m in MODALITIES if m not in shared]
        if missing:
            raise ValueError(f"missing modalities {missing}; substitute them first")
        return self.predictor.forward(
            np.concatenate([shared[m] for m in MODALITIES], axis=1))

    def forward(self, batch: Batch, mode: str, *, gumbel_rng=None,
                gumbel_mode=None, with_aux: bool = False) -> ForwardResult:
        pre, local = self.local_concepts(batch, mode, gumbel_rng=gumbel_rng,
                                         gumbel_mode=gumbel_mode, with_aux=with_aux)
        shared = self.shared_concepts(local, mode)
        b = len(batch)
        logits = self.predict({m: shared[m][:b] for m in MODALITIES})
        local_logits = {mod: head.forward(local[mod][:b])
                        for mod, head in self.local_heads.items()}
        return ForwardResult(pre, local, shared, logits, local_logits)

    def index_spaces(self, batch: Batch) -> dict:
        """Eval-mode shared concepts; the space all explanations live in."""
        _, local = self.local_concepts(batch, "eval")
        return self.shared_concepts(local, "eval")

    # -- backward ------------------------------------------------------------

    def backward(self, d_logits: np.ndarray, d_shared: dict | None = None,
                 d_local_logits: dict | None = None,
                 frozen_encoders: bool = False) -> None:
        """Accumulate gradients. Extra terms enter at the shared concepts
        (distance regularizer, over all rows including translation renderings)
        and at the local heads (local losses, task rows only)."""
        g_concat = self.predictor.backward(d_logits)
        b = g_concat.shape[0]
        rows = self.shared_stage.rows
        t = self.config.shared_width
        gs = {}
        for i, m in enumerate(MODALITIES):
            g = np.zeros((rows, t))
            g[:b] = g_concat[:, i * t:(i + 1) * t]
            gs[m] = g
        if d_shared:
            for m, extra in d_shared.items():
                gs[m] += extra
        gc = self.shared_stage.backward(gs)
        if d_local_logits:
            for m, g in d_local_logits.items():
                gl = self.local_heads[m].backward(g)
                gc[m] = gc[m].copy()
                gc[m][:b] += gl
        if frozen_encoders:
            return
        for mod in MODALITIES:
            gz = self.concept_stages[mod].backward(gc[mod])
            self.encoders[mod].backward(gz)

    # -- parameter bookkeeping -------------------------------------------------

    def param_groups(self) -> dict:
        groups = {f"encoder.{m}": self.encoders[m].params() for m in MODALITIES}
        groups.update({f"projector.{m}": self.shared_stage.projectors[m].params()
                       for m in MODALITIES})
        groups["predictor"] = self.predictor.params()
        for m, head in self.local_heads.items():
            groups[f"local_head.{m}"] = head.params()
        return groups

    def parameters(self) -> dict:
        out = {}
        for g in self.param_groups().values():
            out.update(g)
        return out

    def grads(self) -> dict:
        out = {}
        for m in MODALITIES:
            out.update(self.encoders[m].grads())
        out.update(self.shared_stage.grads())
        out.update(self.predictor.grads())
        for head in self.local_heads.values():
            out.update(head.grads())
        return out

    def zero_grad(self) -> None:
        for m in MODALITIES:
            self.encoders[m].zero_grad()
        self.shared_stage.zero_grad()
        self.predictor.zero_grad()
        for head in self.local_heads.values():
            head.zero_grad()

    def rescale_states(self) -> dict:
        states = {f"local_rescale.{m}": self.concept_stages[m].rescale
                  for m in MODALITIES}
        states["shared_rescale"] = self.shared_stage.rescale
        return states


# -- checkpoints ---------------------------------------------------------------
#
# Layout: 8-byte little-endian manifest length, JSON manifest (sorted keys),
# then raw little-endian float64 blocks in manifest order. The manifest tags
# every block with name and shape; loading validates both against the model
# rebuilt from the embedded config.

def _model_blocks(model) -> list[tuple[str, np.ndarray]]:
    blocks = [(name, arr) for name, arr in sorted(model.parameters().items())]
    for name, state in sorted(model.rescale_states().items()):
        blocks.append((f"{name}.running_mean", state.running_mean))
        blocks.append((f"{name}.running_var", state.running_var))
    return blocks


def save_model(model, path: str) -> None:
    blocks = _model_blocks(model)
    manifest = {
        "version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "config": model.config.to_dict(),
        "modalities": list(MODALITIES),
        "trained": bool(model.trained),
        "rescale_trained": {name: bool(state.trained)
                            for name, state in model.rescale_states().items()},
        "blocks": [{"name": n, "shape": list(a.shape)} for n, a in blocks],
    }
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(mbytes)))
        fh.write(mbytes)
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_manifest(path: str) -> dict:
    with open(path, "rb") as fh:
        (mlen,) = struct.unpack("<Q", fh.read(8))
        return json.loads(fh.read(mlen).decode())


def load_model(path: str):
    from . import baselines  # registry of baseline kinds; deferred to avoid a cycle

    with open(path, "rb") as fh:
        (mlen,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(mlen).decode())
        if manifest.get("version") != CHECKPOINT_VERSION:
            raise CheckpointMismatchError(
                f"unsupported checkpoint version {manifest.get('version')}")
        cfg = ExperimentConfig.from_dict(manifest["config"])
        kind = manifest["kind"]
        if kind == SharedConceptModel.kind:
            has_heads = any(b["name"].startswith("local_head.")
                            for b in manifest["blocks"])
            model = SharedConceptModel(cfg, _throwaway_rng(cfg), with_local_heads=has_heads)
        else:
            model = baselines.build_baseline(kind, cfg, _throwaway_rng(cfg))
        targets = dict(model.parameters())
        for name, state in model.rescale_states().items():
            targets[f"{name}.running_mean"] = state.running_mean
            targets[f"{name}.running_var"] = state.running_var
        for spec in manifest["blocks"]:
            name, shape = spec["name"], tuple(spec["shape"])
            if name not in targets:
                raise CheckpointMismatchError(f"unexpected block {name!r}")
            if targets[name].shape != shape:
                raise CheckpointMismatchError(
                    f"block {name!r} has shape {shape}, expected {targets[name].shape}")
            raw = fh.read(int(np.prod(shape)) * 8 if shape else 8)
            targets[name][...] = np.frombuffer(raw, dtype="<f8").reshape(shape)
        for name, state in model.rescale_states().items():
            state.trained = manifest["rescale_trained"].get(name, False)
        model.trained = manifest["trained"]
        return model


def _throwaway_rng(cfg: ExperimentConfig):
    from .rng import substream
    return substream(cfg.seed, "init")


def new_optimizer(model, lr: float, trainable: dict | None = None) -> Adam:
    params = trainable if trainable is not None else model.parameters()
    return Adam(params, lr)
