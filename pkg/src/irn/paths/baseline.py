"""Hop-count dynamic-programming baseline.

The baseline sees exactly what the model sees: the node sequences of the
training instances, no weights. It collects every consecutive node pair
into an unweighted directed graph and answers each test instance with a
breadth-first hop-minimal path, which is optimal only when hop count and
total weight happen to agree.
"""

from __future__ import annotations

from collections import deque


def observed_edges(train_instances):
    """Directed edge set of all consecutive pairs in training paths."""
    edges = set()
    for _, _, path in train_instances:
        for u, v in zip(path, path[1:]):
            edges.add((int(u), int(v)))
    return edges


def dp_baseline(train_instances, test_instances, n_nodes):
    """Hop-minimal predictions over training-observed edges.

    Returns one node-id list per test instance; unreachable pairs give an
    empty list. Neighbor lists are sorted, so predictions are deterministic.
    """
    adjacency = [[] for _ in range(n_nodes)]
    for u, v in sorted(observed_edges(train_instances)):
        adjacency[u].append(v)
    out = []
    for start, end, _ in test_instances:
        out.append(_bfs_path(adjacency, start, end))
    return out


def _bfs_path(adjacency, start, end):
    if start == end:
        return [start]
    parent = {start: -1}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if v in parent:
                continue
            parent[v] = u
            if v == end:
                path = [v]
                while path[-1] != start:
                    path.append(parent[path[-1]])
                path.reverse()
                return path
            queue.append(v)
    return []
