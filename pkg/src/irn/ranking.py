"""Filtered ranking metrics, per-step inference traces, and memory reports.

Ranking uses the filtered protocol: entities known to be true answers for
the query (from any split) are removed from the race, except the gold one,
and the rank counts only strictly-greater scores, so exact ties never hurt
the gold entity. Aggregates are integer sums of per-query ranks, which
makes evaluation invariant to query order and thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np


@dataclass
class RankingResult:
    ranks: np.ndarray
    mean_rank: float
    hits10: float

    @classmethod
    def from_ranks(cls, ranks):
        ranks = np.asarray(ranks, dtype=np.int64)
        return cls(ranks=ranks, mean_rank=float(ranks.mean()), hits10=float((ranks <= 10).mean()))


def filtered_rank(scores, source, relation, gold, filter_index):
    """1 + the number of in-race entities scoring strictly above gold.

    Known-true answers of (source, relation) other than gold are out of the
    race; gold itself is always in. Ties with gold do not count against it.
    """
    gold = int(gold)
    if gold < 0 or gold >= scores.shape[0]:
        raise ValueError(f"gold id {gold} out of range [0, {scores.shape[0]})")
    higher = scores > scores[gold]
    for e in filter_index.answers(source, relation):
        if e != gold:
            higher[e] = False
    return 1 + int(np.count_nonzero(higher))


def raw_rank(scores, gold):
    """Unfiltered rank under the same strictly-greater convention."""
    return 1 + int(np.count_nonzero(scores > scores[int(gold)]))


def evaluate(model, queries, filter_index, threads=1, chunk_size=64, t_max=None):
    """Filtered MR and Hits@10 over (source, relation, gold) query rows.

    Scoring fans out across threads in fixed-size chunks; per-query integer
    ranks are concatenated in chunk order, so the result does not depend on
    the thread count.
    """
    queries = np.asarray(queries, dtype=np.int64)
    if queries.shape[0] == 0:
        raise ValueError("empty evaluation split")

    def rank_chunk(block):
        scores = model.score_all_entities(block[:, 0], block[:, 1], t_max=t_max)
        return [
            filtered_rank(scores[i], int(q[0]), int(q[1]), int(q[2]), filter_index)
            for i, q in enumerate(block)
        ]

    blocks = [queries[i:i + chunk_size] for i in range(0, queries.shape[0], chunk_size)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(rank_chunk, blocks))
    else:
        parts = [rank_chunk(b) for b in blocks]
    ranks = [r for part in parts for r in part]
    return RankingResult.from_ranks(ranks)


@dataclass
class TraceStep:
    step: int
    termination: float
    mixture_weight: float
    gold_rank: int
    top_entities: list      # (entity id, score) best first
    nearest_queries: list   # ((source, relation), L2 distance) closest first


@dataclass
class InferenceTrace:
    query: tuple
    steps: list = field(default_factory=list)


def trace_inference(model, query, train_queries, top_k=3, t_max=None):
    """Per-step view of one query: stop probability, raw gold rank, top
    entities, and the nearest training (source, relation) pairs to the
    current state by L2 over their encoded initial states.
    """
    source, relation, gold = (int(x) for x in query)
    train_queries = np.asarray(train_queries, dtype=np.int64).reshape(-1, 2)
    pairs = np.unique(train_queries, axis=0)
    encoded = model.encode(pairs[:, 0], pairs[:, 1]).data if pairs.shape[0] else None

    trace, dists = model.step_distributions(source, relation, t_max=t_max)
    v = trace.v_values()[:, 0]
    w = trace.w_values()[:, 0]
    out = InferenceTrace(query=(source, relation, gold))
    for t, p in enumerate(dists):
        top = np.argsort(-p, kind="stable")[:top_k]
        nearest = []
        if encoded is not None:
            state = trace.states[t].data[0]
            d = np.sqrt(((encoded - state) ** 2).sum(axis=1))
            for i in np.argsort(d, kind="stable")[:top_k]:
                nearest.append(((int(pairs[i, 0]), int(pairs[i, 1])), float(d[i])))
        out.steps.append(
            TraceStep(
                step=t + 1,
                termination=float(v[t]),
                mixture_weight=float(w[t]),
                gold_rank=raw_rank(p, gold),
                top_entities=[(int(e), float(p[e])) for e in top],
                nearest_queries=nearest,
            )
        )
    return out


def format_trace(trace, entity_names=None, relation_names=None):
    """Render an InferenceTrace as an aligned text table."""
    def ename(i):
        return entity_names[i] if entity_names else str(i)

    def rname(i):
        return relation_names[i] if relation_names else str(i)

    s, r, g = trace.query
    lines = [f"query: ({ename(s)}, {rname(r)}) gold: {ename(g)}"]
    header = f"{'step':>4} {'term':>8} {'weight':>8} {'gold rank':>9}  top entities | nearest (source, relation)"
    lines.append(header)
    for st in trace.steps:
        tops = ", ".join(f"{ename(e)}:{p:.4f}" for e, p in st.top_entities)
        near = ", ".join(f"({ename(a)}, {rname(b)}):{d:.3f}" for (a, b), d in st.nearest_queries)
        lines.append(
            f"{st.step:>4} {st.termination:>8.4f} {st.mixture_weight:>8.4f} {st.gold_rank:>9}  {tops} | {near}"
        )
    return "\n".join(lines)


@dataclass
class MemoryReport:
    means: np.ndarray   # (n_relations, memory_size) mean attention
    counts: np.ndarray  # (n_relations,) attention observations per relation
    top: list           # per cell: [(relation id, mean)] best first, length <= k


def memory_report(model, train_queries, k=8, t_max=None, batch_size=256):
    """Mean attention per (relation, memory cell) over all steps of all
    queries, plus the top-k relations for each cell.
    """
    t_max = model.config.t_max if t_max is None else t_max
    if t_max < 2:
        raise ValueError("memory_report needs t_max >= 2; a 1-step unroll never reads memory")
    queries = np.asarray(train_queries, dtype=np.int64).reshape(-1, 2)
    if queries.shape[0] == 0:
        raise ValueError("no queries to report on")
    n_rel = model.config.n_relations
    k_mem = model.machine.config.memory_size
    sums = np.zeros((n_rel, k_mem))
    counts = np.zeros(n_rel, dtype=np.int64)
    for start in range(0, queries.shape[0], batch_size):
        block = queries[start:start + batch_size]
        trace = model.machine.unroll(model.encode(block[:, 0], block[:, 1]), t_max)
        for att in trace.attentions:
            np.add.at(sums, block[:, 1], att.data)
            np.add.at(counts, block[:, 1], 1)
    means = np.divide(sums, counts[:, None], out=np.zeros_like(sums), where=counts[:, None] > 0)
    top = []
    present = np.flatnonzero(counts > 0)
    for cell in range(k_mem):
        order = present[np.argsort(-means[present, cell], kind="stable")][:k]
        top.append([(int(r), float(means[r, cell])) for r in order])
    return MemoryReport(means=means, counts=counts, top=top)


def format_memory_report(report, relation_names=None):
    def rname(i):
        return relation_names[i] if relation_names else str(i)

    lines = []
    for cell, entries in enumerate(report.top):
        body = ", ".join(f"{rname(r)}:{m:.4f}" for r, m in entries)
        lines.append(f"cell {cell:>3}: {body}")
    return "\n".join(lines)
