"""Synthetic two-modality benchmark: 6-bit tables paired with small graphs.

Each logical sample is rendered twice: as a bit string whose first two bits
carry an XOR sub-task, and as a 10-node graph whose family encodes a second
XOR sub-task. The global label is the AND of the two XOR outcomes, so neither
modality alone can solve the task. Graph node features are normalized
betweenness centralities computed after random-edge injection.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .rng import substream

DATASET_VERSION = 1
NODE_COUNT = 10
N_BITS = 6


class GraphFamily(Enum):
    ISOLATED = "isolated"             # 10 disconnected nodes
    C4 = "c4"                         # 4-cycle plus 6 isolated nodes
    C6 = "c6"                         # 6-cycle plus 4 isolated nodes
    C4_C6_BRIDGED = "c4_c6_bridged"   # 4-cycle and 6-cycle joined by one edge


FAMILIES = (GraphFamily.ISOLATED, GraphFamily.C4, GraphFamily.C6,
            GraphFamily.C4_C6_BRIDGED)

# Two parity-preserving family -> bit-pair assignments. Both send
# {ISOLATED, C4_C6_BRIDGED} to XOR=0 and {C4, C6} to XOR=1, so the task
# labels are identical under either choice.
_BIJECTIONS = {
    "default": {
        GraphFamily.ISOLATED: (0, 0),
        GraphFamily.C4: (0, 1),
        GraphFamily.C6: (1, 0),
        GraphFamily.C4_C6_BRIDGED: (1, 1),
    },
    "swapped": {
        GraphFamily.ISOLATED: (1, 1),
        GraphFamily.C4: (1, 0),
        GraphFamily.C6: (0, 1),
        GraphFamily.C4_C6_BRIDGED: (0, 0),
    },
}


def family_to_bits(family: GraphFamily, bijection: str = "default") -> tuple[int, int]:
    """Map a graph family to its 2-bit code under the chosen bijection."""
    try:
        table = _BIJECTIONS[bijection]
    except KeyError:
        raise ValueError(f"unknown bijection {bijection!r}") from None
    return table[family]


def bits_to_family(code: tuple[int, int], bijection: str = "default") -> GraphFamily:
    """Inverse of family_to_bits (the mapping is a bijection)."""
    table = _BIJECTIONS.get(bijection)
    if table is None:
        raise ValueError(f"unknown bijection {bijection!r}")
    for family, bits in table.items():
        if bits == tuple(code):
            return family
    raise ValueError(f"code {code!r} is not a 2-bit pair")


@dataclass(frozen=True)
class TabularSample:
    bits: tuple[int, ...]

    def __post_init__(self):
        if len(self.bits) != N_BITS or any(b not in (0, 1) for b in self.bits):
            raise ValueError(f"bits must be {N_BITS} values in {{0,1}}")

    @property
    def local_label(self) -> int:
        return self.bits[0] ^ self.bits[1]


@dataclass(frozen=True)
class GraphSample:
    node_count: int
    edges: tuple[tuple[int, int], ...]   # unordered unique pairs, stored i < j
    node_features: tuple[float, ...]     # normalized betweenness per node
    family: GraphFamily

    def __post_init__(self):
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise ValueError("self-loops are not allowed")
            if not (0 <= i < j < self.node_count):
                raise ValueError(f"edge ({i},{j}) out of range or unordered")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i},{j})")
            seen.add((i, j))
        if len(self.node_features) != self.node_count:
            raise ValueError("one feature per node required")


@dataclass(frozen=True)
class PairedSample:
    id: int
    tabular: TabularSample
    graph: GraphSample
    local_label_tab: int
    local_label_graph: int
    global_label: int


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[PairedSample, ...]
    test: tuple[PairedSample, ...]
    seed: int


def _cycle_edges(nodes) -> list[tuple[int, int]]:
    ordered = list(nodes)
    out = []
    for a, b in zip(ordered, ordered[1:] + ordered[:1]):
        out.append((min(a, b), max(a, b)))
    return out


def _family_edges(family: GraphFamily) -> list[tuple[int, int]]:
    if family is GraphFamily.ISOLATED:
        return []
    if family is GraphFamily.C4:
        return _cycle_edges(range(4))
    if family is GraphFamily.C6:
        return _cycle_edges(range(6))
    return _cycle_edges(range(4)) + _cycle_edges(range(4, 10)) + [(0, 4)]


def betweenness(node_count: int, edges) -> np.ndarray:
    """Normalized betweenness centrality (Brandes, unweighted, undirected).

    Normalizer is (n-1)(n-2)/2, the number of node pairs excluding the
    vertex itself; isolated nodes score 0.
    """
    adj = [[] for _ in range(node_count)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    score = np.zeros(node_count)
    for s in range(node_count):
        stack = []
        preds = [[] for _ in range(node_count)]
        sigma = np.zeros(node_count)
        sigma[s] = 1.0
        dist = np.full(node_count, -1)
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = np.zeros(node_count)
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                score[w] += delta[w]
    # each unordered pair was visited from both endpoints
    score /= 2.0
    return score / ((node_count - 1) * (node_count - 2) / 2.0)


def generate_xor_and_xor(n_samples: int, seed: int, random_edge_max: int = 2,
                         bijection: str = "default") -> list[PairedSample]:
    """Draw paired samples: uniform bits, uniform family, 0..max extra edges."""
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    if random_edge_max < 0:
        raise ValueError("random_edge_max must be nonnegative")
    rng = substream(seed, "data")
    samples = []
    for sid in range(n_samples):
        bits = tuple(int(b) for b in rng.integers(0, 2, size=N_BITS))
        family = FAMILIES[rng.integers(0, len(FAMILIES))]
        edges = set(_family_edges(family))
        n_extra = int(rng.integers(0, random_edge_max + 1))
        for _ in range(n_extra):
            free = [(i, j) for i in range(NODE_COUNT) for j in range(i + 1, NODE_COUNT)
                    if (i, j) not in edges]
            if not free:
                break
            edges.add(free[rng.integers(0, len(free))])
        edge_tuple = tuple(sorted(edges))
        feats = betweenness(NODE_COUNT, edge_tuple)
        tab = TabularSample(bits)
        graph = GraphSample(NODE_COUNT, edge_tuple, tuple(float(f) for f in feats), family)
        code = family_to_bits(family, bijection)
        local_graph = code[0] ^ code[1]
        samples.append(PairedSample(
            id=sid, tabular=tab, graph=graph,
            local_label_tab=tab.local_label,
            local_label_graph=local_graph,
            global_label=tab.local_label & local_graph,
        ))
    return samples


def split(samples, ratio: float, seed: int) -> DatasetSplit:
    """Deterministic shuffled split; a sample never straddles the boundary."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")
    rng = substream(seed, "data")
    order = rng.permutation(len(samples))
    n_train = int(round(ratio * len(samples)))
    train = tuple(samples[i] for i in order[:n_train])
    test = tuple(samples[i] for i in order[n_train:])
    return DatasetSplit(train=train, test=test, seed=seed)


# -- cross-modal translation renderings ---------------------------------------
#
# Every sample's content exists in both modalities: the graph's family can be
# re-rendered as a bit string (its 2-bit code plus padding), and the table's
# meaningful bit pair as a canonical family graph. These renderings pair the
# modalities by content for the training regularizer and act as the auxiliary
# inputs that replace a missing modality at inference. They are synthesized
# deterministically from the sample id, never stored.

_AUX_STREAM = 0x7A51


def _aux_rng(sample_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((_AUX_STREAM, sample_id)))


def tabular_rendering(sample: PairedSample, bijection: str = "default") -> tuple[int, ...]:
    """The graph content as a bit string: family code + seeded padding bits."""
    code = family_to_bits(sample.graph.family, bijection)
    padding = _aux_rng(sample.id).integers(0, 2, size=N_BITS - 2)
    return code + tuple(int(b) for b in padding)


def graph_rendering(sample: PairedSample, bijection: str = "default"):
    """The tabular content as a canonical family graph (edges, features)."""
    family = bits_to_family(sample.tabular.bits[:2], bijection)
    edges = tuple(sorted(_family_edges(family)))
    return edges, betweenness(NODE_COUNT, edges)


# -- batching ----------------------------------------------------------------

@dataclass(frozen=True)
class Batch:
    ids: tuple[int, ...]
    graph_x: np.ndarray        # (b, NODE_COUNT, 1) betweenness features
    graph_adj: np.ndarray      # (b, NODE_COUNT, NODE_COUNT) normalized adjacency
    tab_x: np.ndarray          # (b, N_BITS)
    y: np.ndarray              # (b,) global labels
    y_onehot: np.ndarray       # (b, 2)
    local: dict                # modality -> (b,) local labels
    aux_graph_x: np.ndarray | None = None    # graph rendering of the tabular content
    aux_graph_adj: np.ndarray | None = None
    aux_tab_x: np.ndarray | None = None      # tabular rendering of the graph content

    def __len__(self) -> int:
        return len(self.ids)


def normalized_adjacency(node_count: int, edges) -> np.ndarray:
    """Symmetric degree-normalized adjacency with self-loops."""
    a = np.eye(node_count)
    for i, j in edges:
        a[i, j] = 1.0
        a[j, i] = 1.0
    d_inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


def as_arrays(samples, bijection: str = "default", with_aux: bool = True) -> dict:
    """Pack a list of samples into model-ready arrays (in list order)."""
    n = len(samples)
    arr = {
        "ids": np.array([s.id for s in samples], dtype=np.int64),
        "graph_x": np.zeros((n, NODE_COUNT, 1)),
        "graph_adj": np.zeros((n, NODE_COUNT, NODE_COUNT)),
        "tab_x": np.zeros((n, N_BITS)),
        "y": np.array([s.global_label for s in samples], dtype=np.int64),
        "local_graph": np.array([s.local_label_graph for s in samples], dtype=np.int64),
        "local_tab": np.array([s.local_label_tab for s in samples], dtype=np.int64),
    }
    for k, s in enumerate(samples):
        arr["graph_x"][k, :, 0] = s.graph.node_features
        arr["graph_adj"][k] = normalized_adjacency(s.graph.node_count, s.graph.edges)
        arr["tab_x"][k] = s.tabular.bits
    if with_aux:
        arr["aux_graph_x"] = np.zeros((n, NODE_COUNT, 1))
        arr["aux_graph_adj"] = np.zeros((n, NODE_COUNT, NODE_COUNT))
        arr["aux_tab_x"] = np.zeros((n, N_BITS))
        for k, s in enumerate(samples):
            edges, feats = graph_rendering(s, bijection)
            arr["aux_graph_x"][k, :, 0] = feats
            arr["aux_graph_adj"][k] = normalized_adjacency(NODE_COUNT, edges)
            arr["aux_tab_x"][k] = tabular_rendering(s, bijection)
    return arr


def _batch_from_arrays(arr: dict, idx: np.ndarray) -> Batch:
    y = arr["y"][idx]
    onehot = np.zeros((len(idx), 2))
    onehot[np.arange(len(idx)), y] = 1.0
    aux = {}
    if "aux_tab_x" in arr:
        aux = {
            "aux_graph_x": arr["aux_graph_x"][idx],
            "aux_graph_adj": arr["aux_graph_adj"][idx],
            "aux_tab_x": arr["aux_tab_x"][idx],
        }
    return Batch(
        ids=tuple(int(i) for i in arr["ids"][idx]),
        graph_x=arr["graph_x"][idx],
        graph_adj=arr["graph_adj"][idx],
        tab_x=arr["tab_x"][idx],
        y=y,
        y_onehot=onehot,
        local={"graph": arr["local_graph"][idx], "tabular": arr["local_tab"][idx]},
        **aux,
    )


def batches(samples, batch_size: int, *, rng=None, shuffle: bool = False,
            drop_singleton: bool = False, arrays: dict | None = None,
            bijection: str = "default") -> list[Batch]:
    """Partition samples into batches, in id order unless shuffled.

    Training passes drop_singleton=True: a trailing batch of one sample is
    dropped because batch standardization is degenerate there. Evaluation
    batches may have any size (inference runs on running statistics).
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    if arrays is None:
        arrays = as_arrays(samples, bijection)
    n = len(arrays["ids"])
    order = np.arange(n)
    if shuffle:
        if rng is None:
            raise ValueError("shuffle requires an rng (seed or Generator)")
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        order = rng.permutation(n)
    out = []
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        if drop_singleton and len(idx) == 1:
            continue
        out.append(_batch_from_arrays(arrays, idx))
    return out


def whole_batch(samples, arrays: dict | None = None,
                bijection: str = "default") -> Batch:
    """All samples as a single evaluation batch."""
    if arrays is None:
        arrays = as_arrays(samples, bijection)
    return _batch_from_arrays(arrays, np.arange(len(arrays["ids"])))


def translation_batch(samples, bijection: str = "default") -> Batch:
    """A batch whose modality slots hold the cross-modal renderings: the graph
    slot carries each sample's tabular content as a graph, the tabular slot
    the graph content as bits. Encoding it yields the auxiliary
    representations used when a modality is missing."""
    arr = as_arrays(samples, bijection)
    swapped = dict(arr)
    swapped["graph_x"], swapped["aux_graph_x"] = arr["aux_graph_x"], arr["graph_x"]
    swapped["graph_adj"], swapped["aux_graph_adj"] = arr["aux_graph_adj"], arr["graph_adj"]
    swapped["tab_x"], swapped["aux_tab_x"] = arr["aux_tab_x"], arr["tab_x"]
    return _batch_from_arrays(swapped, np.arange(len(arr["ids"])))


# -- serialization -----------------------------------------------------------

def save_dataset(samples, path: str, *, seed: int, random_edge_max: int,
                 bijection: str) -> None:
    """One JSON document: header plus a samples array. Round-trip is lossless."""
    doc = {
        "version": DATASET_VERSION,
        "seed": seed,
        "n_samples": len(samples),
        "random_edge_max": random_edge_max,
        "bijection": bijection,
        "samples": [
            {
                "id": s.id,
                "bits": list(s.tabular.bits),
                "family": s.graph.family.value,
                "edges": [list(e) for e in s.graph.edges],
                "features": list(s.graph.node_features),
                "local_tab": s.local_label_tab,
                "local_graph": s.local_label_graph,
                "global": s.global_label,
            }
            for s in samples
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))


def load_dataset(path: str) -> tuple[list[PairedSample], dict]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != DATASET_VERSION:
        raise ValueError(f"unsupported dataset version {doc.get('version')}")
    samples = []
    for rec in doc["samples"]:
        graph = GraphSample(
            node_count=len(rec["features"]),
            edges=tuple(tuple(e) for e in rec["edges"]),
            node_features=tuple(rec["features"]),
            family=GraphFamily(rec["family"]),
        )
        samples.append(PairedSample(
            id=rec["id"],
            tabular=TabularSample(tuple(rec["bits"])),
            graph=graph,
            local_label_tab=rec["local_tab"],
            local_label_graph=rec["local_graph"],
            global_label=rec["global"],
        ))
    header = {k: doc[k] for k in ("version", "seed", "n_samples", "random_edge_max",
                                  "bijection")}
    return samples, header
