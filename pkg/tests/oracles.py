"""Independent brute-force oracles the tests check the library against.

Everything here takes the slow, exhaustive route on purpose: truth-table
label enumeration, explicit shortest-path enumeration for betweenness, naive
sigmoid-then-log cross-entropy, linear scans for every retrieval query, and
majority-vote-per-cluster for completeness. None of it shares code with the
implementations under test.
"""

from itertools import combinations

import numpy as np

FAMILY_XOR = {"isolated": 0, "c4": 1, "c6": 1, "c4_c6_bridged": 0}


def label_oracle(bits, family_name: str) -> tuple[int, int, int]:
    """(local_tab, local_graph, global) from first principles."""
    local_tab = int(bits[0] != bits[1])
    local_graph = FAMILY_XOR[family_name]
    return local_tab, local_graph, local_tab & local_graph


def betweenness_oracle(node_count: int, edges) -> np.ndarray:
    """Enumerate every shortest path of every pair; count pass-throughs."""
    adj = {v: set() for v in range(node_count)}
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)

    def all_shortest_paths(s, t):
        # BFS layer by layer, keeping every path of the shortest length
        if s == t:
            return []
        frontier = [[s]]
        seen_depth = {s: 0}
        depth = 0
        found = []
        while frontier and not found:
            depth += 1
            nxt = []
            for path in frontier:
                for w in adj[path[-1]]:
                    if seen_depth.get(w, depth) < depth:
                        continue
                    seen_depth[w] = depth
                    if w == t:
                        found.append(path + [w])
                    else:
                        nxt.append(path + [w])
            frontier = nxt
        return found

    score = np.zeros(node_count)
    for s, t in combinations(range(node_count), 2):
        paths = all_shortest_paths(s, t)
        if not paths:
            continue
        for path in paths:
            for v in path[1:-1]:
                score[v] += 1.0 / len(paths)
    return score / ((node_count - 1) * (node_count - 2) / 2.0)


def bce_reference(logits: np.ndarray, targets: np.ndarray) -> float:
    """sigmoid then plain log loss; only valid for moderate logits."""
    p = 1.0 / (1.0 + np.exp(-logits))
    per = -(targets * np.log(p) + (1 - targets) * np.log(1 - p))
    return float(per.mean())


def scan_neighborhood(vectors: np.ndarray, ids, query: np.ndarray, radius: float):
    """(id, distance) strictly inside radius, sorted by (distance, id)."""
    out = []
    for i, row in zip(ids, vectors):
        d = float(np.sqrt(((row - query) ** 2).sum()))
        if d < radius:
            out.append((int(i), d))
    return sorted(out, key=lambda t: (t[1], t[0]))


def scan_nearest(vectors: np.ndarray, ids, query: np.ndarray):
    """(id, distance) of the closest row; ties to the smallest id."""
    best = None
    for i, row in zip(ids, vectors):
        d = float(np.sqrt(((row - query) ** 2).sum()))
        if best is None or d < best[1] or (d == best[1] and int(i) < best[0]):
            best = (int(i), d)
    return best


def scan_prototype(z: np.ndarray, codes: np.ndarray, ids, code) -> int:
    members = [k for k in range(len(ids)) if np.array_equal(codes[k], code)]
    centroid = z[members].mean(axis=0)
    return scan_nearest(z, ids, centroid)[0]


def majority_vote_completeness(train_codes, train_labels, test_codes,
                               test_labels) -> float:
    """Per-cluster majority on train, applied to test; assumes every test
    code was seen in training."""
    table = {}
    for code, y in zip(map(tuple, np.asarray(train_codes)), train_labels):
        table.setdefault(code, []).append(int(y))
    correct = 0
    for code, y in zip(map(tuple, np.asarray(test_codes)), test_labels):
        votes = table[tuple(code)]
        values, counts = np.unique(votes, return_counts=True)
        pred = int(values[counts == counts.max()].min())
        correct += int(pred == y)
    return correct / len(test_labels)
