"""Controller/memory unroll semantics: closed-form gate values, stop-weight
arithmetic, attention normalization, trace shapes, and the stochastic
stopping rule's agreement with the stop-weight mixture."""

import mpmath
import numpy as np
import pytest

from irn import tape as T
from irn.machine import GruWeights, Machine, MachineConfig, gru_step, unit_rows


def small_machine(seed, state_dim=6, memory_size=4, memory_dim=5, t_max=4, lam=10.0):
    cfg = MachineConfig(memory_size=memory_size, memory_dim=memory_dim,
                        state_dim=state_dim, t_max=t_max, attention_lambda=lam)
    return Machine(cfg, np.random.default_rng(seed))


def test_config_validation():
    with pytest.raises(ValueError):
        MachineConfig(t_max=0)
    with pytest.raises(ValueError):
        MachineConfig(memory_size=0)


def test_zero_gru_halves_state():
    gru = GruWeights(np.random.default_rng(0), 3, 5, 0.08, "g")
    for p in gru.params():
        p.data[...] = 0.0
    s = T.constant(np.random.default_rng(1).standard_normal(5))
    x = T.constant(np.random.default_rng(2).standard_normal(3))
    out = gru_step(gru, s, x)
    np.testing.assert_array_equal(out.data, 0.5 * s.data)


def test_gru_step_matches_mpmath_reference():
    rng = np.random.default_rng(7)
    gru = GruWeights(rng, 3, 4, 0.5, "g")
    for p in gru.params():
        p.data[...] = rng.standard_normal(p.data.shape)
    s = rng.standard_normal(4)
    x = rng.standard_normal(3)

    with mpmath.workdps(50):
        def mp_vec(a):
            return [mpmath.mpf(float(v)) for v in a]

        def affine(xv, w, sv, u, b):
            out = []
            for j in range(len(b.data)):
                acc = mpmath.mpf(float(b.data[j]))
                for i, xi in enumerate(mp_vec(xv)):
                    acc += xi * mpmath.mpf(float(w.data[i, j]))
                for i, si in enumerate(mp_vec(sv)):
                    acc += si * mpmath.mpf(float(u.data[i, j]))
                out.append(acc)
            return out

        z = [1 / (1 + mpmath.e ** -a) for a in affine(x, gru.wz, s, gru.uz, gru.bz)]
        r = [1 / (1 + mpmath.e ** -a) for a in affine(x, gru.wr, s, gru.ur, gru.br)]
        rs = [ri * mpmath.mpf(float(si)) for ri, si in zip(r, s)]
        n = [mpmath.tanh(a) for a in affine(x, gru.wn, rs, gru.un, gru.bn)]
        expected = np.array([float((1 - zi) * mpmath.mpf(float(si)) + zi * ni)
                             for zi, si, ni in zip(z, s, n)])

    got = gru_step(gru, T.constant(s), T.constant(x)).data
    np.testing.assert_allclose(got, expected, rtol=0, atol=1e-13)


def test_termination_gate_closed_forms():
    m = small_machine(0)
    m.wc.data[...] = 0.0
    s = T.constant(np.ones(6))
    m.bc.data[...] = 10.0
    assert m.termination_prob(s).data == pytest.approx(0.9999546021312976, abs=1e-15)
    m.bc.data[...] = 5.0
    assert m.termination_prob(s).data == pytest.approx(0.9933071490757153, abs=1e-15)


def test_unroll_single_step_never_reads_memory():
    m = small_machine(1)
    s1 = T.constant(np.random.default_rng(0).standard_normal((3, 6)))
    trace = m.unroll(s1, t_max=1)
    assert len(trace.states) == 1 and trace.states[0] is s1
    assert trace.attentions == [] and trace.xs == []
    np.testing.assert_array_equal(trace.w_values(), np.ones((1, 3)))
    np.testing.assert_array_equal(trace.v_values(), np.ones((1, 3)))


def test_unroll_constant_gate_weight_arithmetic():
    m = small_machine(2, t_max=3)
    m.wc.data[...] = 0.0
    m.bc.data[...] = 0.0   # sigmoid(0) = 0.5 exactly
    s1 = T.constant(np.random.default_rng(1).standard_normal(6))
    trace = m.unroll(s1)
    np.testing.assert_array_equal(trace.w_values(), np.array([0.5, 0.25, 0.25]))
    assert trace.v_values()[-1] == 1.0


def test_trace_shapes_and_weight_identity():
    for seed in range(25):
        r = np.random.default_rng(seed)
        t_max = int(r.integers(1, 6))
        m = small_machine(seed, t_max=t_max)
        batch = int(r.integers(1, 4))
        s1 = T.constant(r.standard_normal((batch, 6)))
        trace = m.unroll(s1)
        assert len(trace.states) == t_max
        assert len(trace.attentions) == t_max - 1 == len(trace.xs)
        assert len(trace.v) == t_max == len(trace.w)
        v = trace.v_values()
        w = trace.w_values()
        np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=1e-12)
        # w_t = v_t * prod_{i<t}(1 - v_i), with the final v forced to one
        survive = np.ones(batch)
        for t in range(t_max):
            np.testing.assert_allclose(w[t], survive * v[t], atol=1e-12)
            survive = survive * (1 - v[t])
        np.testing.assert_array_equal(v[-1], np.ones(batch))


def test_attention_matches_manual_formula():
    m = small_machine(3, lam=7.5)
    s = np.random.default_rng(4).standard_normal((2, 6))
    weights, x = m.attend(T.constant(s))

    proj_m = m.memory.data @ m.w1.data
    proj_s = s @ m.w2.data
    sims = np.zeros((2, 4))
    for i in range(2):
        for j in range(4):
            a, b = proj_s[i], proj_m[j]
            sims[i, j] = (a @ b) / max(np.linalg.norm(a) * np.linalg.norm(b), 1e-12)
    e = np.exp(7.5 * sims - (7.5 * sims).max(axis=1, keepdims=True))
    expected = e / e.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(weights.data, expected, atol=1e-12)
    np.testing.assert_allclose(x.data, expected @ m.memory.data, atol=1e-12)
    np.testing.assert_allclose(weights.data.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(weights.data >= 0)


def test_batched_unroll_matches_single():
    m = small_machine(5, t_max=4)
    r = np.random.default_rng(6)
    s = r.standard_normal((2, 6))
    batch = m.unroll(T.constant(s))
    for i in range(2):
        single = m.unroll(T.constant(s[i]))
        for t in range(4):
            np.testing.assert_allclose(batch.states[t].data[i], single.states[t].data, atol=1e-9)
        np.testing.assert_allclose(batch.w_values()[:, i], single.w_values(), atol=1e-9)


def test_unit_rows_are_unit():
    m = unit_rows(np.random.default_rng(0), (10, 7))
    np.testing.assert_allclose(np.linalg.norm(m, axis=1), 1.0, atol=1e-12)


def test_memory_init_rows_unit_norm():
    m = small_machine(8)
    np.testing.assert_allclose(np.linalg.norm(m.memory.data, axis=1), 1.0, atol=1e-12)


def test_sample_inference_stop_frequencies_track_weights():
    m = small_machine(9, t_max=4)
    s1 = T.constant(np.random.default_rng(10).standard_normal(6))
    w = m.unroll(s1).w_values()
    rng = np.random.default_rng(11)
    counts = np.zeros(4)
    n = 20000
    for _ in range(n):
        t, trace = m.sample_inference(s1, rng)
        counts[t - 1] += 1
        assert len(trace.states) == t
        assert len(trace.attentions) == t - 1
    np.testing.assert_allclose(counts / n, w, atol=0.02)


def test_sample_inference_forced_stop_at_t_max():
    m = small_machine(12, t_max=3)
    m.wc.data[...] = 0.0
    m.bc.data[...] = -50.0   # gate essentially zero: always reach the cap
    s1 = T.constant(np.random.default_rng(13).standard_normal(6))
    rng = np.random.default_rng(14)
    for _ in range(50):
        t, trace = m.sample_inference(s1, rng)
        assert t == 3
        assert float(trace.v_values()[-1]) == 1.0


def test_unroll_rejects_bad_t_max():
    m = small_machine(15)
    s1 = T.constant(np.zeros(6))
    with pytest.raises(ValueError):
        m.unroll(s1, t_max=0)
    with pytest.raises(ValueError):
        m.sample_inference(s1, np.random.default_rng(0), t_max=0)
