"""Sequence-decoding path model on top of the reasoning machine.

The encoder concatenates the start and end symbol embeddings into the
initial controller state. The machine unrolls as usual; at every step a GRU
decoder emits the node sequence token by token, with that step's controller
state both seeding the decoder and concatenated onto every input token (so
the conditioning does not have to survive in the decoder state). Training
teacher-forces the gold sequence and maximizes the termination-weighted
product of gold-token probabilities; test-time decoding is greedy from the
step with the largest termination weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tape as T
from ..data import shuffle_in_place
from ..machine import Machine, MachineConfig, GruWeights, gru_step, uniform_init
from ..tape import Tape, zero_grads
from ..training import (_generator_state, sgd_step, snapshot_params, restore_params,
                        updatable_params, TrainResult)
from .world import evaluate_paths


@dataclass
class PathConfig:
    n_nodes: int = 0
    symbol_dim: int = 64
    memory_size: int = 64
    memory_dim: int = 200
    t_max: int = 5
    attention_lambda: float = 10.0
    init_scale: float = 0.08
    max_decode_len: int = 0   # 0 = not set yet; fixed by training data

    @property
    def state_dim(self):
        return 2 * self.symbol_dim

    @property
    def vocab_size(self):
        # node ids, then begin-of-sequence, then end-of-sequence
        return self.n_nodes + 2

    @property
    def bos(self):
        return self.n_nodes

    @property
    def eos(self):
        return self.n_nodes + 1

    def machine_config(self):
        return MachineConfig(
            memory_size=self.memory_size,
            memory_dim=self.memory_dim,
            state_dim=self.state_dim,
            t_max=self.t_max,
            attention_lambda=self.attention_lambda,
            init_scale=self.init_scale,
        )


class PathModel:
    """Symbol table, reasoning machine, decoder GRU, and output softmax."""

    def __init__(self, config, rng):
        if config.n_nodes < 2:
            raise ValueError("need at least 2 nodes")
        self.config = config
        c = config
        self.symbols = T.Parameter(
            uniform_init(rng, (c.vocab_size, c.symbol_dim), c.init_scale), "path.symbols"
        )
        self.machine = Machine(c.machine_config(), rng)
        self.decoder = GruWeights(
            rng, c.symbol_dim + c.state_dim, c.state_dim, c.init_scale, "path.decoder"
        )
        self.wv = T.Parameter(uniform_init(rng, (c.state_dim, c.vocab_size), c.init_scale), "path.wv")
        self.bv = T.Parameter(np.zeros(c.vocab_size), "path.bv")

    def params(self):
        return [self.symbols, *self.machine.params(), *self.decoder.params(), self.wv, self.bv]

    def encode(self, starts, ends):
        starts = np.asarray(starts, dtype=np.int64)
        ends = np.asarray(ends, dtype=np.int64)
        for ids in (starts, ends):
            if ids.size and (ids.min() < 0 or ids.max() >= self.config.n_nodes):
                raise ValueError(f"node id out of range [0, {self.config.n_nodes})")
        return T.concat(T.rows(self.symbols, starts), T.rows(self.symbols, ends))

    def _gold_token_probs(self, state, gold):
        """Teacher-forced decode: per position j, the probability assigned
        to gold token j. gold rows are equal-length node sequences; the
        target sequence is the row followed by the end symbol."""
        gold = np.asarray(gold, dtype=np.int64)
        batch, length = gold.shape
        inputs = np.concatenate([np.full((batch, 1), self.config.bos, dtype=np.int64), gold], axis=1)
        targets = np.concatenate([gold, np.full((batch, 1), self.config.eos, dtype=np.int64)], axis=1)
        h = state
        picked = []
        for j in range(length + 1):
            x = T.concat(T.rows(self.symbols, inputs[:, j]), state)
            h = gru_step(self.decoder, h, x)
            p = T.softmax(T.add(T.matmul(h, self.wv), self.bv))
            picked.append(T.pick(p, targets[:, j]))
        return picked

    def sequence_probability(self, state, gold):
        """(B,) product of gold-token probabilities."""
        prob = None
        for picked in self._gold_token_probs(state, gold):
            prob = picked if prob is None else T.mul(prob, picked)
        return prob

    def sequence_log_probability(self, state, gold):
        """(B,) sum of log gold-token probabilities."""
        total = None
        for picked in self._gold_token_probs(state, gold):
            lp = T.log(picked)
            total = lp if total is None else T.add(total, lp)
        return total

    def objective(self, trace, gold):
        """Mean negated termination-weighted gold-sequence probability."""
        expected = None
        for s, w in zip(trace.states, trace.w):
            term = T.mul(w, self.sequence_probability(s, gold))
            expected = term if expected is None else T.add(expected, term)
        return T.scale(T.mean_all(expected), -1.0)

    def log_likelihood_objective(self, trace, gold):
        """Mean negated termination-weighted gold-sequence log probability.

        Warmup surrogate for objective(): the expected-reward gradient is
        proportional to the sequence probability itself, which starts near
        vocab^-length and gives SGD nothing to work with; the log form has
        the same per-step maximizers with usable gradients.
        """
        expected = None
        for s, w in zip(trace.states, trace.w):
            term = T.mul(w, self.sequence_log_probability(s, gold))
            expected = term if expected is None else T.add(expected, term)
        return T.scale(T.mean_all(expected), -1.0)

    def greedy_decode(self, state, max_len):
        """Argmax token-by-token decode from one state vector; stops at the
        end symbol or after max_len tokens (forced end)."""
        cond = T.constant(state)
        h = cond
        tok = self.config.bos
        seq = []
        for _ in range(max_len):
            x = T.concat(T.rows(self.symbols, np.int64(tok)), cond)
            h = gru_step(self.decoder, h, x)
            logits = h.data @ self.wv.data + self.bv.data
            tok = int(np.argmax(logits))
            if tok == self.config.eos:
                break
            seq.append(tok)
        return seq

    def predict(self, start, end, max_len=None, t_max=None):
        """Greedy decode at the step with the largest stop weight."""
        max_len = self.config.max_decode_len if max_len is None else max_len
        if max_len < 1:
            raise ValueError("max_len must be set (training fixes it from the data)")
        s1 = self.encode(np.array([start]), np.array([end]))
        trace = self.machine.unroll(s1, t_max)
        w = trace.w_values()[:, 0]
        t_star = int(np.argmax(w))
        return self.greedy_decode(trace.states[t_star].data[0], max_len)

    def predict_per_step(self, start, end, max_len=None, t_max=None):
        """Every step's greedy decode plus (v, w), for tracing."""
        max_len = self.config.max_decode_len if max_len is None else max_len
        s1 = self.encode(np.array([start]), np.array([end]))
        trace = self.machine.unroll(s1, t_max)
        decodes = [self.greedy_decode(s.data[0], max_len) for s in trace.states]
        return decodes, trace.v_values()[:, 0], trace.w_values()[:, 0]


def _group_by_length(instances):
    groups = {}
    for start, end, path in instances:
        groups.setdefault(len(path), []).append((start, end) + tuple(path))
    return {length: np.array(rows, dtype=np.int64) for length, rows in sorted(groups.items())}


def _expand_subpaths(instances):
    """Add every contiguous window (>= 2 nodes) of each gold path as its own
    training instance. With positive edge weights a subpath of a shortest
    path is the shortest path between its endpoints, so the extra instances
    are exactly as sound as the originals."""
    seen = set()
    out = []
    for _, _, path in instances:
        p = tuple(path)
        for i in range(len(p) - 1):
            for j in range(i + 2, len(p) + 1):
                w = p[i:j]
                if w not in seen:
                    seen.add(w)
                    out.append((w[0], w[-1], list(w)))
    return out


def train_path_model(model, world, config, log=None):
    """Train on world.splits; keeps the parameters of the epoch with the
    most correct greedy decodes on the validation split.

    Instances are batched within equal gold-path lengths so teacher forcing
    stays rectangular; batch order is shuffled across lengths each epoch.
    Training expands each path into all of its contiguous subpaths (see
    _expand_subpaths). Sets model.config.max_decode_len to twice the longest
    training path.

    The first config.warmup_epochs epochs train the log-domain surrogate
    (see log_likelihood_objective); remaining epochs train the expected
    sequence reward itself, which only has usable gradients once the
    decoder assigns non-negligible mass to gold sequences.
    """
    train = world.splits["train"]
    valid = world.splits["valid"]
    if not train or not valid:
        raise ValueError("world needs non-empty train and valid splits")
    model.config.max_decode_len = 2 * max(len(p) for _, _, p in train)
    params = model.params()
    updates = updatable_params(params, config.freeze)
    rng = np.random.default_rng(config.seed)
    groups = _group_by_length(_expand_subpaths(train))
    result = TrainResult()
    best = None
    since_best = 0
    for epoch in range(1, config.epochs + 1):
        batches = []
        for length, rows in groups.items():
            order = np.arange(rows.shape[0], dtype=np.int64)
            shuffle_in_place(rng, order)
            for at in range(0, rows.shape[0], config.batch_size):
                batches.append(rows[order[at:at + config.batch_size]])
        order = np.arange(len(batches), dtype=np.int64)
        shuffle_in_place(rng, order)
        loss_sum = 0.0
        n_seen = 0
        warm = epoch <= config.warmup_epochs
        for batch_idx in order:
            rows = batches[batch_idx]
            zero_grads(params)
            with Tape() as t:
                trace = model.machine.unroll(model.encode(rows[:, 0], rows[:, 1]))
                objective = model.log_likelihood_objective if warm else model.objective
                loss = objective(trace, rows[:, 2:])
                if not np.isfinite(loss.data):
                    raise FloatingPointError(
                        f"non-finite loss at epoch {epoch} batch {int(batch_idx)} (seed {config.seed})"
                    )
                t.backward(loss)
            sgd_step(updates, config.learning_rate, grad_clip=config.grad_clip)
            loss_sum += float(loss.data) * rows.shape[0]
            n_seen += rows.shape[0]
        predictions = [model.predict(s, e) for s, e, _ in valid]
        stats = evaluate_paths(predictions, valid, world)
        result.history.append((epoch, loss_sum / n_seen, stats.correct_rate))
        if log is not None:
            log(
                f"epoch {epoch}: loss {loss_sum / n_seen:.6f} "
                f"valid correct {stats.correct_rate:.4f} valid-rate {stats.valid_rate:.4f}"
            )
        if best is None or stats.correct_rate > result.best_hits10:
            result.best_hits10 = stats.correct_rate
            result.best_epoch = epoch
            best = snapshot_params(params)
            since_best = 0
        else:
            since_best += 1
            if config.patience and since_best >= config.patience:
                break
    restore_params(params, best)
    result.rng_state = _generator_state(rng)
    return result
