"""The task-agnostic reasoning machine.

A GRU controller walks a fixed number of steps; at each transition it reads
a shared trainable memory through cosine attention and feeds the read vector
back into its state. A logistic gate on each state gives a per-step stop
probability; the induced stop-time distribution (stop exactly at t with
probability prod_{i<t}(1-v_i) * v_t, final step forced) weights every step's
prediction in downstream objectives.

All ops run on the autodiff tape when one is active, so the whole unroll is
differentiable end to end, memory included. Task heads (see kbc, paths)
supply the initial state and decode the per-step states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tape as T


def uniform_init(rng, shape, scale):
    return rng.uniform(-scale, scale, size=shape)


def unit_rows(rng, shape):
    """Gaussian rows rescaled to unit L2 norm."""
    m = rng.normal(size=shape)
    m /= np.linalg.norm(m, axis=-1, keepdims=True)
    return m


class GruWeights:
    """One GRU cell: update gate z, reset gate r, candidate n.

    s' = (1 - z) * s + z * n with n = tanh(x Wn + (r * s) Un + bn).
    All-zero weights therefore halve the state: s' = 0.5 * s.
    """

    def __init__(self, rng, input_dim, hidden_dim, scale, prefix):
        def w(name, shape):
            return T.Parameter(uniform_init(rng, shape, scale), f"{prefix}.{name}")

        def b(name):
            return T.Parameter(np.zeros(hidden_dim), f"{prefix}.{name}")

        self.wz, self.uz, self.bz = w("wz", (input_dim, hidden_dim)), w("uz", (hidden_dim, hidden_dim)), b("bz")
        self.wr, self.ur, self.br = w("wr", (input_dim, hidden_dim)), w("ur", (hidden_dim, hidden_dim)), b("br")
        self.wn, self.un, self.bn = w("wn", (input_dim, hidden_dim)), w("un", (hidden_dim, hidden_dim)), b("bn")

    def params(self):
        return [self.wz, self.uz, self.bz, self.wr, self.ur, self.br, self.wn, self.un, self.bn]


def gru_step(w, s, x):
    """One GRU transition; s and x may be single vectors or batches."""
    z = T.sigmoid(T.add(T.add(T.matmul(x, w.wz), T.matmul(s, w.uz)), w.bz))
    r = T.sigmoid(T.add(T.add(T.matmul(x, w.wr), T.matmul(s, w.ur)), w.br))
    n = T.tanh(T.add(T.add(T.matmul(x, w.wn), T.matmul(T.mul(r, s), w.un)), w.bn))
    return T.add(T.mul(T.one_minus(z), s), T.mul(z, n))


@dataclass
class MachineConfig:
    memory_size: int = 64
    memory_dim: int = 200
    state_dim: int = 200
    t_max: int = 5
    attention_lambda: float = 10.0
    init_scale: float = 0.08
    gate_bias_init: float = 0.0   # starting termination bias; negative spreads stop mass late

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError(f"t_max must be >= 1, got {self.t_max}")
        if self.memory_size < 1 or self.memory_dim < 1 or self.state_dim < 1:
            raise ValueError("memory_size, memory_dim and state_dim must be positive")


@dataclass
class StepTrace:
    """Per-step record of one unroll.

    states: s_1 .. s_T; v/w: stop probability and stop-exactly-here weight
    per step (v_T forced to 1); attentions/xs: the T-1 memory reads feeding
    transitions (empty when T=1, which never touches memory).
    """

    states: list = field(default_factory=list)
    attentions: list = field(default_factory=list)
    xs: list = field(default_factory=list)
    v: list = field(default_factory=list)
    w: list = field(default_factory=list)

    def __len__(self):
        return len(self.states)

    def v_values(self):
        return np.stack([t.data for t in self.v])

    def w_values(self):
        return np.stack([t.data for t in self.w])

    def attention_values(self):
        return np.stack([t.data for t in self.attentions]) if self.attentions else np.zeros((0,))


class Machine:
    """Memory, attention projections, controller GRU, termination gate."""

    def __init__(self, config, rng, prefix="machine"):
        self.config = config
        c = config
        self.memory = T.Parameter(unit_rows(rng, (c.memory_size, c.memory_dim)), f"{prefix}.memory")
        # attention space is memory-sized: square on the memory side
        self.w1 = T.Parameter(uniform_init(rng, (c.memory_dim, c.memory_dim), c.init_scale), f"{prefix}.w1")
        self.w2 = T.Parameter(uniform_init(rng, (c.state_dim, c.memory_dim), c.init_scale), f"{prefix}.w2")
        self.gru = GruWeights(rng, c.memory_dim, c.state_dim, c.init_scale, f"{prefix}.gru")
        self.wc = T.Parameter(uniform_init(rng, (c.state_dim,), c.init_scale), f"{prefix}.wc")
        self.bc = T.Parameter(np.full((), c.gate_bias_init), f"{prefix}.bc")

    def params(self):
        return [self.memory, self.w1, self.w2, *self.gru.params(), self.wc, self.bc]

    def attend(self, s):
        """Cosine attention of state(s) over memory.

        Returns (weights, x): weights is a simplex over the memory rows
        (per batch row if s is batched), x the attention-weighted memory
        read. Similarities are sharpened by attention_lambda before the
        softmax.
        """
        proj_m = T.matmul(self.memory, self.w1)
        proj_s = T.matmul(s, self.w2)
        sims = T.cosine_rows(proj_s, proj_m)
        weights = T.softmax(T.scale(sims, self.config.attention_lambda))
        x = T.matmul(weights, self.memory)
        return weights, x

    def termination_prob(self, s):
        return T.sigmoid(T.add(T.matmul(s, self.wc), self.bc))

    def unroll(self, s1, t_max=None):
        """Run the controller for t_max steps from s1, building a StepTrace.

        v_t comes from the gate for t < t_max and is forced to 1 at t_max,
        so the w_t always sum to 1. A t_max of 1 performs no memory read.
        """
        t_max = self.config.t_max if t_max is None else t_max
        if t_max < 1:
            raise ValueError(f"t_max must be >= 1, got {t_max}")
        trace = StepTrace()
        trace.states.append(s1)
        for _ in range(t_max - 1):
            weights, x = self.attend(trace.states[-1])
            trace.attentions.append(weights)
            trace.xs.append(x)
            trace.states.append(gru_step(self.gru, trace.states[-1], x))

        batch_shape = s1.data.shape[:-1]
        survive = None
        for t in range(t_max - 1):
            v = self.termination_prob(trace.states[t])
            trace.v.append(v)
            if survive is None:
                trace.w.append(v)
                survive = T.one_minus(v)
            else:
                trace.w.append(T.mul(survive, v))
                survive = T.mul(survive, T.one_minus(v))
        forced = T.constant(np.ones(batch_shape))
        trace.v.append(forced)
        trace.w.append(survive if survive is not None else forced)
        return trace

    def sample_inference(self, s1, rng, t_max=None):
        """Run the stochastic stopping rule on one query.

        At each step t < t_max draw u ~ U[0,1) and stop if u <= v_t; at
        t_max stop unconditionally. Returns (stop step, prefix StepTrace
        covering exactly the steps taken). The stop step is distributed as
        the w_t mixture of unroll. Call outside a Tape; nothing is recorded.
        """
        t_max = self.config.t_max if t_max is None else t_max
        if t_max < 1:
            raise ValueError(f"t_max must be >= 1, got {t_max}")
        trace = StepTrace()
        trace.states.append(s1)
        t = 1
        while True:
            if t == t_max:
                trace.v.append(T.constant(np.ones(s1.data.shape[:-1])))
                return t, trace
            v = self.termination_prob(trace.states[-1])
            trace.v.append(v)
            if float(rng.uniform()) <= float(v.data):
                return t, trace
            weights, x = self.attend(trace.states[-1])
            trace.attentions.append(weights)
            trace.xs.append(x)
            trace.states.append(gru_step(self.gru, trace.states[-1], x))
            t += 1
