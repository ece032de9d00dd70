"""Hidden weighted graphs and shortest-path instance datasets.

Nodes are random points on the 3D unit sphere; each node gets directed
edges to its k nearest neighbors, weighted by Euclidean distance (an
alternate mode draws random node pairs instead). Instances are (start, end,
gold shortest path) triples found by an exact Dijkstra oracle; a candidate
is rejected when its path is a contiguous sub-path or super-path of an
already accepted instance's path (duplicates included), and accepted
instances fill train, then valid, then test.

Supply warning: the sub/super dedup saturates small dense k-NN worlds
(their shortest paths are long, so each accepted instance blocks many
pairs); the random edge mode yields shorter paths and roughly twice the
instance capacity at the same size.

The graph itself is hidden from models: they see only the instance node
sequences. The evaluator keeps the graph to judge validity and optimality.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np


@dataclass
class PathWorld:
    positions: np.ndarray            # (n, 3) unit vectors
    edges: dict                      # (u, v) -> weight
    adjacency: list                  # adjacency[u] = [(v, weight)] sorted by v
    k_neighbors: int
    edge_mode: str
    seed: int
    splits: dict = field(default_factory=lambda: {"train": [], "valid": [], "test": []})

    @property
    def n_nodes(self):
        return self.positions.shape[0]

    def path_cost(self, path):
        """Total weight, or None if some hop is not an edge."""
        total = 0.0
        for u, v in zip(path, path[1:]):
            w = self.edges.get((int(u), int(v)))
            if w is None:
                return None
            total += w
        return total


def _unit_sphere_points(rng, n):
    pts = np.empty((n, 3))
    seen = set()
    i = 0
    while i < n:
        p = rng.normal(size=3)
        norm = np.linalg.norm(p)
        if norm == 0.0:
            continue
        p /= norm
        key = p.tobytes()
        if key in seen:
            continue
        seen.add(key)
        pts[i] = p
        i += 1
    return pts


def generate_world(n_nodes, k_neighbors, seed, edge_mode="knn"):
    """Random unit-sphere nodes with k-NN edges (or the same number of
    random directed edges with edge_mode="random")."""
    if edge_mode not in ("knn", "random"):
        raise ValueError(f"edge_mode must be 'knn' or 'random', got {edge_mode!r}")
    if k_neighbors < 1 or n_nodes <= k_neighbors:
        raise ValueError(f"need n_nodes > k_neighbors >= 1, got {n_nodes}/{k_neighbors}")
    rng = np.random.default_rng(seed)
    pts = _unit_sphere_points(rng, n_nodes)
    dists = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    edges = {}
    if edge_mode == "knn":
        ids = np.arange(n_nodes)
        for u in range(n_nodes):
            d = dists[u].copy()
            d[u] = np.inf
            # ties in distance break toward the lower node id
            order = np.lexsort((ids, d))[:k_neighbors]
            for v in order:
                edges[(u, int(v))] = float(dists[u, v])
    else:
        target = n_nodes * k_neighbors
        while len(edges) < target:
            u = int(rng.integers(0, n_nodes))
            v = int(rng.integers(0, n_nodes))
            if u == v or (u, v) in edges:
                continue
            edges[(u, v)] = float(dists[u, v])
    adjacency = [[] for _ in range(n_nodes)]
    for (u, v), w in edges.items():
        adjacency[u].append((v, w))
    for lst in adjacency:
        lst.sort()
    return PathWorld(
        positions=pts,
        edges=edges,
        adjacency=adjacency,
        k_neighbors=k_neighbors,
        edge_mode=edge_mode,
        seed=seed,
    )


def dijkstra(adjacency, source, target):
    """Exact minimum-cost path source -> target, or None when unreachable.

    Equal-cost frontier entries pop lowest node id first and relaxations use
    strict improvement only, so the returned path is deterministic.
    """
    n = len(adjacency)
    dist = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    dist[source] = 0.0
    heap = [(0.0, source)]
    done = np.zeros(n, dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == target:
            break
        for v, w in adjacency[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                parent[v] = u
                heapq.heappush(heap, (nd, v))
    if not np.isfinite(dist[target]):
        return None
    path = [int(target)]
    while path[-1] != source:
        path.append(int(parent[path[-1]]))
    path.reverse()
    return path


def _contiguous_subpaths(path):
    """All contiguous sub-sequences with at least 2 nodes, itself included."""
    n = len(path)
    out = set()
    for i in range(n - 1):
        for j in range(i + 2, n + 1):
            out.add(tuple(path[i:j]))
    return out


def build_dataset(world, sizes, seed, max_attempts_factor=400):
    """Fill world.splits with (start, end, path) instances.

    sizes: (n_train, n_valid, n_test). Start/end pairs are sampled
    uniformly; a pair is rejected when it is unreachable, when its shortest
    path lies inside an accepted instance's path as a contiguous sub-path
    (duplicates included, keeping splits disjoint), or when an accepted
    path lies contiguously inside it. Raises when the sampling budget runs
    out, reporting how many instances were achieved.
    """
    n_train, n_valid, n_test = sizes
    total = n_train + n_valid + n_test
    # salted so passing the world's own seed does not replay the edge
    # sampler's stream (which would flood the draw with direct-edge pairs)
    rng = np.random.default_rng(np.random.SeedSequence([np.uint32(seed), 0x1D5]))
    accepted = []
    accepted_paths = set()
    blocked = set()     # every contiguous subpath of every accepted path
    attempts = 0
    budget = max_attempts_factor * total
    while len(accepted) < total:
        attempts += 1
        if attempts > budget:
            raise RuntimeError(
                f"instance supply exhausted after {attempts - 1} attempts: "
                f"achieved {len(accepted)} of {total} requested instances"
            )
        start = int(rng.integers(0, world.n_nodes))
        end = int(rng.integers(0, world.n_nodes))
        if start == end:
            continue
        path = dijkstra(world.adjacency, start, end)
        if path is None:
            continue
        key = tuple(path)
        subs = _contiguous_subpaths(path)
        # sub-path of an accepted instance, or super-path of one
        if key in blocked or (subs & accepted_paths):
            continue
        accepted.append((start, end, key))
        accepted_paths.add(key)
        blocked |= subs
    world.splits["train"] = accepted[:n_train]
    world.splits["valid"] = accepted[n_train:n_train + n_valid]
    world.splits["test"] = accepted[n_train + n_valid:]
    return world.splits


@dataclass
class PathEvaluation:
    n_instances: int
    n_valid: int
    n_correct: int
    flags: list   # per instance: (valid, correct)

    @property
    def valid_rate(self):
        return self.n_valid / self.n_instances if self.n_instances else 0.0

    @property
    def correct_rate(self):
        return self.n_correct / self.n_instances if self.n_instances else 0.0


def evaluate_paths(predictions, instances, world, tol=1e-9):
    """Judge predicted node sequences against the hidden graph.

    valid: endpoints match the instance and every hop is a hidden edge.
    correct: valid and total weight matches the gold path's within tol.
    Unknown node ids or empty predictions are invalid.
    """
    if len(predictions) != len(instances):
        raise ValueError(f"{len(predictions)} predictions for {len(instances)} instances")
    flags = []
    n_valid = 0
    n_correct = 0
    for pred, (start, end, gold) in zip(predictions, instances):
        pred = [int(x) for x in pred]
        ok = (
            len(pred) >= 2
            and all(0 <= x < world.n_nodes for x in pred)
            and pred[0] == start
            and pred[-1] == end
        )
        cost = world.path_cost(pred) if ok else None
        valid = cost is not None
        correct = False
        if valid:
            optimal = world.path_cost(gold)
            correct = abs(cost - optimal) <= tol
        flags.append((valid, correct))
        n_valid += valid
        n_correct += correct
    return PathEvaluation(len(instances), n_valid, n_correct, flags)


def save_world(path, world):
    """Plain-text world file: node, edge, and instance tables. Floats are
    written with repr-exact precision so reruns are byte-identical."""
    lines = [f"nodes {world.n_nodes} k {world.k_neighbors} mode {world.edge_mode} seed {world.seed}"]
    for i, (x, y, z) in enumerate(world.positions):
        lines.append(f"{i} {float(x)!r} {float(y)!r} {float(z)!r}")
    lines.append(f"edges {len(world.edges)}")
    for (u, v) in sorted(world.edges):
        lines.append(f"{u} {v} {world.edges[(u, v)]!r}")
    n_inst = sum(len(v) for v in world.splits.values())
    lines.append(f"instances {n_inst}")
    for split in ("train", "valid", "test"):
        for start, end, nodes in world.splits[split]:
            lines.append(f"{split} {start} {end} " + " ".join(str(x) for x in nodes))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_world(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    try:
        head = lines[0].split()
        n, k, mode, seed = int(head[1]), int(head[3]), head[5], int(head[7])
        positions = np.empty((n, 3))
        at = 1
        for i in range(n):
            parts = lines[at + i].split()
            positions[int(parts[0])] = [float(parts[1]), float(parts[2]), float(parts[3])]
        at += n
        m = int(lines[at].split()[1])
        at += 1
        edges = {}
        for i in range(m):
            u, v, w = lines[at + i].split()
            edges[(int(u), int(v))] = float(w)
        at += m
        n_inst = int(lines[at].split()[1])
        at += 1
        splits = {"train": [], "valid": [], "test": []}
        for i in range(n_inst):
            parts = lines[at + i].split()
            splits[parts[0]].append((int(parts[1]), int(parts[2]), tuple(int(x) for x in parts[3:])))
    except (IndexError, ValueError, KeyError) as e:
        raise ValueError(f"{path}: malformed world file ({e})") from None
    adjacency = [[] for _ in range(n)]
    for (u, v), w in edges.items():
        adjacency[u].append((v, w))
    for lst in adjacency:
        lst.sort()
    world = PathWorld(
        positions=positions,
        edges=edges,
        adjacency=adjacency,
        k_neighbors=k,
        edge_mode=mode,
        seed=seed,
        splits=splits,
    )
    return world
