"""Independent reference implementations used by the test suite.

Everything here recomputes results through a different code path than the
package (scipy graph routines, brute-force enumeration) so agreement is
meaningful evidence.
"""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra as scipy_dijkstra


def brute_force_filtered_rank(scores, source, relation, gold, filter_index):
    """Sort-and-filter reference for filtered ranking: drop known answers
    except gold, then count strictly better scores by explicit enumeration."""
    gold = int(gold)
    keep = [e for e in range(scores.shape[0])
            if e == gold or e not in filter_index.answers(source, relation)]
    ordered = sorted(keep, key=lambda e: -scores[e])
    rank = 1
    for e in ordered:
        if scores[e] > scores[gold]:
            rank += 1
        else:
            break
    return rank


def world_matrix(world):
    """World edges as a scipy CSR adjacency matrix."""
    n = world.n_nodes
    rows, cols, vals = [], [], []
    for (u, v), w in world.edges.items():
        rows.append(u)
        cols.append(v)
        vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def scipy_all_pairs(world):
    """All-pairs shortest distances and predecessors via scipy."""
    return scipy_dijkstra(world_matrix(world), directed=True, return_predecessors=True)


def scipy_path(pred, source, target):
    """Walk a scipy predecessor row back from target to source."""
    path = [int(target)]
    while path[-1] != source:
        p = int(pred[source, path[-1]])
        if p < 0:
            return None
        path.append(p)
    path.reverse()
    return path


def enumerate_dataset(world, sizes, seed, max_attempts_factor=400):
    """Independent replay of dataset construction over the whole pair space.

    Shortest paths come from scipy's Dijkstra (unique for generic float
    weights, so tie handling never diverges); the accept/reject rules and
    the contiguous sub/super-path bookkeeping are re-derived from scratch.
    Only the draw protocol (one salted generator, two integer draws per
    attempt) is shared, since the sampled stream is part of the contract.
    """
    n_train, n_valid, n_test = sizes
    total = n_train + n_valid + n_test
    dist, pred = scipy_all_pairs(world)
    rng = np.random.default_rng(np.random.SeedSequence([np.uint32(seed), 0x1D5]))
    accepted = []
    windows = set()    # every contiguous >= 2-node window of accepted paths
    full = set()       # accepted paths themselves
    attempts = 0
    budget = max_attempts_factor * total
    while len(accepted) < total:
        attempts += 1
        if attempts > budget:
            raise RuntimeError("oracle ran out of attempts")
        start = int(rng.integers(0, world.n_nodes))
        end = int(rng.integers(0, world.n_nodes))
        if start == end:
            continue
        if not np.isfinite(dist[start, end]):
            continue
        path = tuple(scipy_path(pred, start, end))
        mine = {path[i:j] for i in range(len(path) - 1) for j in range(i + 2, len(path) + 1)}
        if path in windows or (mine & full):
            continue
        accepted.append((start, end, path))
        full.add(path)
        windows |= mine
    return {
        "train": accepted[:n_train],
        "valid": accepted[n_train:n_train + n_valid],
        "test": accepted[n_train + n_valid:],
    }
