"""Synthetic knowledge bases for tests and controlled experiments.

The composition KB is the interesting one: two random permutations r1, r2
over the entity set plus their composition r3 = r2 after r1. All r1/r2
facts are observed, but only a small grounding subset of r3; the remaining
r3 facts are answerable only by composing r1 and r2, which is what separates
multi-step inference from single-step memorization.
"""

from __future__ import annotations

import numpy as np


def chain_kb(n_entities):
    """Single-relation chain 0 -> 1 -> ... -> n-1; all facts as one array."""
    if n_entities < 2:
        raise ValueError("chain needs at least 2 entities")
    ids = np.arange(n_entities - 1, dtype=np.int64)
    triples = np.stack([ids, np.zeros_like(ids), ids + 1], axis=1)
    return triples


def random_kb(seed, n_entities, n_relations, n_facts):
    """Uniform random distinct triples."""
    rng = np.random.default_rng(seed)
    seen = set()
    rows = []
    while len(rows) < n_facts:
        h = int(rng.integers(0, n_entities))
        r = int(rng.integers(0, n_relations))
        t = int(rng.integers(0, n_entities))
        if (h, r, t) in seen:
            continue
        seen.add((h, r, t))
        rows.append((h, r, t))
    return np.array(rows, dtype=np.int64)


def composition_kb(seed, n_entities=200, n_ground=60, n_valid=40):
    """Two-permutation composition KB with held-out composed facts.

    Relations: 0 = r1, 1 = r2, 2 = r3 where r3(a) = r2(r1(a)). Train holds
    every r1 and r2 fact plus n_ground r3 facts; the other r3 facts are
    split n_valid / rest into valid / test. Because the permutations are
    unstructured, unseen r3 facts cannot be predicted from r3 training
    pairs alone.

    Returns (train, valid, test, n_entities, n_relations=3).
    """
    if n_ground + n_valid >= n_entities:
        raise ValueError("grounding + validation facts must leave test facts over")
    rng = np.random.default_rng(seed)
    p1 = rng.permutation(n_entities)
    p2 = rng.permutation(n_entities)
    heads = np.arange(n_entities, dtype=np.int64)
    r1 = np.stack([heads, np.full(n_entities, 0, dtype=np.int64), p1], axis=1)
    r2 = np.stack([heads, np.full(n_entities, 1, dtype=np.int64), p2], axis=1)
    r3 = np.stack([heads, np.full(n_entities, 2, dtype=np.int64), p2[p1]], axis=1)
    order = rng.permutation(n_entities)
    ground = r3[order[:n_ground]]
    valid = r3[order[n_ground:n_ground + n_valid]]
    test = r3[order[n_ground + n_valid:]]
    train = np.concatenate([r1, r2, ground], axis=0)
    return train, valid, test, n_entities, 3
