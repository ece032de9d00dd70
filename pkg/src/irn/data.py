"""Triple data handling: vocabularies, loading, reverse-relation
augmentation, filtered-candidate index, negative sampling, batching.

Triples are directed facts (head, relation, tail) over integer ids. A query
(head, relation) asks for the tail. To answer in the other direction each
relation r gains a reverse partner r + n_original_relations, so a
(tail, reverse(r)) query asks for the head; reversed triples are added to
the training set only, while evaluation constructs reversed queries on the
fly.
"""

from __future__ import annotations

import numpy as np


class Vocab:
    """Bidirectional string<->id map. Ids are assigned in first-seen order."""

    def __init__(self):
        self._to_id = {}
        self._to_name = []

    def __len__(self):
        return len(self._to_name)

    def __contains__(self, name):
        return name in self._to_id

    def add(self, name):
        i = self._to_id.get(name)
        if i is None:
            i = len(self._to_name)
            self._to_id[name] = i
            self._to_name.append(name)
        return i

    def id(self, name):
        return self._to_id[name]

    def name(self, i):
        return self._to_name[i]

    def names(self):
        return list(self._to_name)


def load_triples(path, entities, relations, grow=True):
    """Read tab-separated head/relation/tail lines into an (n, 3) id array.

    entities, relations: Vocab instances, extended in place when grow=True;
    with grow=False an unseen name raises (use for valid/test against a
    train-built vocabulary when strictness is wanted).

    Malformed lines raise ValueError naming the file and 1-based line number.
    Exact duplicate triples are dropped with a count returned alongside.
    """
    rows = []
    seen = set()
    dup = 0
    with open(path, "r", encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{ln}: expected 3 tab-separated fields, got {len(parts)}")
            h, r, t = (p.strip() for p in parts)
            if not h or not r or not t:
                raise ValueError(f"{path}:{ln}: empty field")
            if grow:
                hi, ri, ti = entities.add(h), relations.add(r), entities.add(t)
            else:
                try:
                    hi, ri, ti = entities.id(h), relations.id(r), entities.id(t)
                except KeyError as e:
                    raise ValueError(f"{path}:{ln}: unknown name {e.args[0]!r}") from None
            key = (hi, ri, ti)
            if key in seen:
                dup += 1
                continue
            seen.add(key)
            rows.append(key)
    arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
    return arr, dup


def augment_reverse(triples, n_relations):
    """Append the reversed copy of each triple.

    (h, r, t) gains (t, r + n_relations, h). n_relations is the count of
    original (unaugmented) relations. Returns a new array; input order is
    preserved with all reversed triples after all originals.
    """
    if triples.shape[0] == 0:
        return triples.copy()
    rev = triples[:, [2, 1, 0]].copy()
    rev[:, 1] += n_relations
    return np.concatenate([triples, rev], axis=0)


def reverse_queries(triples, n_relations):
    """Reversed evaluation view: (t, r + n_relations) with answer h."""
    rev = triples[:, [2, 1, 0]].copy()
    rev[:, 1] += n_relations
    return rev


class FilterIndex:
    """Known-answer sets per (source entity, relation) over every split.

    Built from all splits in both directions, so both (h, r) -> tails and
    (t, r + n_relations) -> heads lookups work. Used to mask known-true
    answers out of ranking.
    """

    def __init__(self, splits, n_relations):
        self._answers = {}
        for triples in splits:
            for h, r, t in triples:
                self._answers.setdefault((int(h), int(r)), set()).add(int(t))
                self._answers.setdefault((int(t), int(r) + n_relations), set()).add(int(h))

    def answers(self, source, relation):
        return self._answers.get((int(source), int(relation)), frozenset())


def sample_negatives(rng, n_entities, gold, count):
    """Draw ``count`` distinct entity ids, all different from ``gold``.

    Uniform over the other n_entities - 1 ids: a draw from [0, n-1) is
    shifted past the gold id, and collisions within the set are rejected.
    """
    if count > n_entities - 1:
        raise ValueError(f"cannot draw {count} distinct negatives from {n_entities - 1} non-gold entities")
    chosen = set()
    out = np.empty(count, dtype=np.int64)
    k = 0
    while k < count:
        x = int(rng.integers(0, n_entities - 1))
        if x >= gold:
            x += 1
        if x in chosen:
            continue
        chosen.add(x)
        out[k] = x
        k += 1
    return out


def shuffle_in_place(rng, arr):
    """Fisher-Yates over the first axis with draws from ``rng``."""
    n = arr.shape[0]
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        if j != i:
            tmp = arr[i].copy()
            arr[i] = arr[j]
            arr[j] = tmp


def batch_iter(rng, triples, batch_size):
    """Yield shuffled batches; the last one may be short."""
    order = np.arange(triples.shape[0], dtype=np.int64)
    shuffle_in_place(rng, order)
    for start in range(0, order.shape[0], batch_size):
        yield triples[order[start:start + batch_size]]
