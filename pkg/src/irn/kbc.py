"""Knowledge-base-completion head over the reasoning machine.

A query (head entity, relation) is encoded as the concatenation of their
embeddings, the machine unrolls from that state, and every step's state is
decoded to a prediction vector compared to output-entity embeddings by L1
distance. Probabilities over a candidate set come from a sharpened softmax
of negated distances; training maximizes the termination-weighted
probability of the gold entity against sampled negatives, evaluation scores
the full entity set.

Input and output entity tables are separate: the input table is the one
kept at unit L2 norm by the optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape as T
from .machine import Machine, MachineConfig, uniform_init


@dataclass
class KbcConfig:
    n_entities: int = 0
    n_relations: int = 0          # count including reverse relations
    entity_dim: int = 100
    relation_dim: int = 100
    memory_size: int = 64
    memory_dim: int = 200
    t_max: int = 5
    gamma: float = 5.0
    attention_lambda: float = 10.0
    n_negatives: int = 20
    init_scale: float = 0.08
    constrain_output: bool = False
    tie_entities: bool = False    # share one table for query encoding and answer scoring
    gate_bias_init: float = 0.0

    @property
    def state_dim(self):
        return self.entity_dim + self.relation_dim

    def machine_config(self):
        return MachineConfig(
            memory_size=self.memory_size,
            memory_dim=self.memory_dim,
            state_dim=self.state_dim,
            t_max=self.t_max,
            attention_lambda=self.attention_lambda,
            init_scale=self.init_scale,
            gate_bias_init=self.gate_bias_init,
        )


def _unit_normalize_rows(a):
    norms = np.linalg.norm(a, axis=1, keepdims=True)
    np.maximum(norms, 1e-12, out=norms)
    a /= norms
    return a


class KbcModel:
    """Embedding tables, reasoning machine, and the decode/score ops."""

    def __init__(self, config, rng):
        if config.n_entities < 2 or config.n_relations < 1:
            raise ValueError(f"need at least 2 entities and 1 relation, got {config.n_entities}/{config.n_relations}")
        self.config = config
        c = config
        self.input_entities = T.Parameter(
            _unit_normalize_rows(uniform_init(rng, (c.n_entities, c.entity_dim), c.init_scale)),
            "kbc.input_entities",
        )
        # drawn even when tied so tying does not shift later initializations
        out = uniform_init(rng, (c.n_entities, c.entity_dim), c.init_scale)
        if c.tie_entities:
            self.output_entities = self.input_entities
        else:
            if c.constrain_output:
                _unit_normalize_rows(out)
            self.output_entities = T.Parameter(out, "kbc.output_entities")
        self.relations = T.Parameter(
            uniform_init(rng, (c.n_relations, c.relation_dim), c.init_scale), "kbc.relations"
        )
        self.machine = Machine(c.machine_config(), rng)
        self.wo = T.Parameter(uniform_init(rng, (c.state_dim, c.entity_dim), c.init_scale), "kbc.wo")
        self.bo = T.Parameter(np.zeros(c.entity_dim), "kbc.bo")

    def params(self):
        tables = [self.input_entities]
        if self.output_entities is not self.input_entities:
            tables.append(self.output_entities)
        return [
            *tables,
            self.relations,
            *self.machine.params(),
            self.wo,
            self.bo,
        ]

    def _check_ids(self, ids, n, what):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            raise ValueError(f"{what} id out of range [0, {n})")
        return ids

    def encode(self, heads, rels):
        """Initial state: [entity embedding ; relation embedding]."""
        heads = self._check_ids(heads, self.config.n_entities, "entity")
        rels = self._check_ids(rels, self.config.n_relations, "relation")
        return T.concat(T.rows(self.input_entities, heads), T.rows(self.relations, rels))

    def decode(self, s):
        return T.tanh(T.add(T.matmul(s, self.wo), self.bo))

    def candidate_distribution(self, o, candidate_ids=None):
        """Softmax of -gamma * L1 distance from o to candidate embeddings.

        candidate_ids: (B, C) per-query candidate rows, or None to use every
        entity. Returns a simplex over candidates per query.
        """
        if candidate_ids is not None:
            candidate_ids = self._check_ids(candidate_ids, self.config.n_entities, "candidate")
        d = T.l1_distances(o, self.output_entities, candidate_ids)
        return T.softmax(T.scale(d, -self.config.gamma))

    def objective(self, trace, gold, negatives):
        """Mean negated expected reward over the batch.

        Candidates are gold plus that query's negatives; each step's gold
        probability is weighted by the stop-here weight w_t. Returns a
        scalar in [-1, 0], -1 iff every step puts all mass on gold.
        """
        gold = self._check_ids(gold, self.config.n_entities, "gold")
        negatives = self._check_ids(negatives, self.config.n_entities, "negative")
        if negatives.ndim != 2 or negatives.shape[0] != gold.shape[0]:
            raise ValueError(f"negatives must be (batch, n), got {negatives.shape}")
        if np.any(negatives == gold[:, None]):
            raise ValueError("candidate set contains the gold entity among negatives")
        ids = np.concatenate([gold[:, None], negatives], axis=1)
        gold_col = np.zeros(gold.shape[0], dtype=np.int64)
        expected = None
        for s, w in zip(trace.states, trace.w):
            p_gold = T.pick(self.candidate_distribution(self.decode(s), ids), gold_col)
            term = T.mul(w, p_gold)
            expected = term if expected is None else T.add(expected, term)
        return T.scale(T.mean_all(expected), -1.0)

    def score_all_entities(self, heads, rels, t_max=None):
        """Termination-weighted probability of every entity per query.

        Returns a plain (B, n_entities) array; rows sum to 1. Runs without
        a tape, so it is safe for concurrent read-only use.
        """
        heads = np.atleast_1d(np.asarray(heads, dtype=np.int64))
        rels = np.atleast_1d(np.asarray(rels, dtype=np.int64))
        trace = self.machine.unroll(self.encode(heads, rels), t_max)
        scores = np.zeros((heads.shape[0], self.config.n_entities))
        for s, w in zip(trace.states, trace.w):
            p = self.candidate_distribution(self.decode(s))
            scores += w.data[:, None] * p.data
        return scores

    def step_distributions(self, head, rel, t_max=None):
        """Per-step full-entity distributions and the trace for one query.

        Returns (trace, list of (n_entities,) arrays), one per step; used by
        inference tracing where per-step ranks are wanted separately.
        """
        s1 = self.encode(np.array([head]), np.array([rel]))
        trace = self.machine.unroll(s1, t_max)
        dists = [self.candidate_distribution(self.decode(s)).data[0] for s in trace.states]
        return trace, dists
