import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drrnlog.checks import GRAD_CASES, GRAD_RTOL
from drrnlog.hashrep import HashConfig, hash_vec
from drrnlog.neural import autograd as ag
from drrnlog.neural.layers import (
    bidaf,
    bidaf_attention,
    grad_check,
    gru_encode,
    gru_step,
    init_gru,
    init_linear,
    init_mlp,
    inv_dyn_loss,
    q_value,
)
from drrnlog.neural.model import (
    Adam,
    Dims,
    EncoderParams,
    Layout,
    QNetwork,
    StateInputs,
    load_checkpoint,
    save_checkpoint,
)
from drrnlog.neural.text import Vocab, tokenize, words

DIMS = Dims(emb=6, hidden=5, mlp_hidden=7, invdy_hidden=4, hash_dim=8)
CORPUS = ["Take the lantern.", "You are in a dark cellar.", "north south east west", "A key glints."]


def network(layout, seed=0):
    vocab = Vocab.from_corpus(CORPUS)
    params = EncoderParams(DIMS, layout, len(vocab), np.random.default_rng(seed))
    return QNetwork(params, vocab, HashConfig(DIMS.hash_dim))


def state(o="You are in a dark cellar.", i="A key glints.", l="Take the lantern.", keys=()):
    return StateInputs((o, i, l), tuple(keys))


# -- text -------------------------------------------------------------------


def test_tokenize_examples():
    v = Vocab.from_corpus(CORPUS)
    assert tokenize("", v) == []
    assert tokenize("Take the lantern.", v) == [v.stoi["take"], v.stoi["the"], v.stoi["lantern"]]
    assert tokenize("xyzzy", v) == [v.unk_index]
    assert words("It's pitch-black!") == ["it", "s", "pitch", "black"]
    assert v.itos[:2] == ["<pad>", "<unk>"]


# -- GRU --------------------------------------------------------------------


def test_zero_gru_stays_zero():
    p = {k: ag.parameter(np.zeros_like(v.data)) for k, v in init_gru(np.random.default_rng(0), 3, 4).items()}
    final, hiddens = gru_encode(np.random.default_rng(1).normal(size=(5, 3)), p)
    assert np.all(hiddens.data == 0) and np.all(final.data == 0)


def test_gru_hand_case():
    one = lambda v: ag.parameter(np.array(v, dtype=float).reshape(np.shape(v)))
    p = {
        "W_z": one([[0.0]]), "U_z": one([[0.0]]), "b_z": one([50.0]),
        "W_r": one([[0.0]]), "U_r": one([[0.0]]), "b_r": one([0.0]),
        "W_h": one([[1.0]]), "U_h": one([[0.0]]), "b_h": one([0.0]),
    }
    final, _ = gru_encode(np.array([[1.0]]), p)
    assert final.data[0] == pytest.approx(math.tanh(1.0), abs=1e-12)
    assert final.data[0] == pytest.approx(0.7616, abs=1e-4)


def test_gru_empty_sequence():
    p = init_gru(np.random.default_rng(0), 3, 4)
    final, hiddens = gru_encode(np.zeros((0, 3)), p)
    assert final.shape == (4,) and hiddens.shape == (0, 4) and not final.data.any()


def test_gru_shape_mismatch():
    p = init_gru(np.random.default_rng(0), 3, 4)
    with pytest.raises(ValueError):
        gru_encode(np.zeros((2, 5)), p)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_gru_equals_repeated_steps(seed, n):
    rng = np.random.default_rng(seed)
    p = init_gru(rng, 3, 4)
    x = rng.normal(size=(n, 3))
    _, hiddens = gru_encode(x, p)
    h = np.zeros(4)
    for t in range(n):
        h = gru_step(x[t], h, p)
        np.testing.assert_allclose(hiddens.data[t], h, rtol=1e-12, atol=1e-14)


def test_padded_batch_matches_unpadded():
    rng = np.random.default_rng(3)
    p = init_gru(rng, 3, 4)
    a, b = rng.normal(size=(2, 3)), rng.normal(size=(5, 3))
    x = np.zeros((2, 5, 3))
    x[0, :2], x[1] = a, b
    mask = np.array([[1, 1, 0, 0, 0], [1, 1, 1, 1, 1]], dtype=float)
    out = ag.gru_sequence(ag.constant(x), mask, p)
    np.testing.assert_allclose(out.data[0, -1], gru_encode(a, p)[0].data, rtol=1e-12)
    np.testing.assert_allclose(out.data[1, -1], gru_encode(b, p)[0].data, rtol=1e-12)


# -- BiDAF -------------------------------------------------------------------


def test_bidaf_singleton_attention():
    rng = np.random.default_rng(0)
    o, a = ag.constant(rng.normal(size=(1, 3))), ag.constant(rng.normal(size=(1, 3)))
    w, c = bidaf_attention(o, a)
    assert w.data[0, 0] == 1.0
    np.testing.assert_array_equal(c.data, a.data)


def test_bidaf_hand_case():
    o = ag.constant(np.array([[1.0, 0.0]]))
    a = ag.constant(np.array([[1.0, 0.0], [0.0, 1.0]]))
    w, c = bidaf_attention(o, a)
    e = math.e
    np.testing.assert_allclose(w.data[0], [e / (e + 1), 1 / (e + 1)], rtol=1e-12)
    np.testing.assert_allclose(c.data[0], [0.7311, 0.2689], atol=1e-4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6))
def test_bidaf_weights_are_distributions(seed, to, ta):
    rng = np.random.default_rng(seed)
    w, _ = bidaf_attention(ag.constant(rng.normal(size=(to, 4)) * 3), ag.constant(rng.normal(size=(ta, 4)) * 3))
    assert np.all(w.data >= 0)
    np.testing.assert_allclose(w.data.sum(-1), 1.0, rtol=1e-12)


def test_bidaf_errors_and_output():
    rng = np.random.default_rng(0)
    proj = init_linear(rng, 12, 3)
    with pytest.raises(ValueError):
        bidaf(rng.normal(size=(2, 3)), np.zeros((0, 3)), proj)
    with pytest.raises(ValueError):
        bidaf(rng.normal(size=(2, 3)), rng.normal(size=(2, 4)), proj)
    assert bidaf(rng.normal(size=(4, 3)), rng.normal(size=(2, 3)), proj).shape == (3,)


def test_bidaf_masked_batch_matches_single():
    rng = np.random.default_rng(5)
    proj = init_linear(rng, 16, 4)
    o1, a1 = rng.normal(size=(2, 4)), rng.normal(size=(1, 4))
    o = np.zeros((1, 5, 4))
    a = np.zeros((1, 3, 4))
    o[0, :2], a[0, :1] = o1, a1
    om = np.array([[1, 1, 0, 0, 0]], dtype=float)
    am = np.array([[1, 0, 0]], dtype=float)
    batched = bidaf(o, a, proj, om, am).data[0]
    np.testing.assert_allclose(batched, bidaf(o1, a1, proj).data, rtol=1e-12)


# -- heads -------------------------------------------------------------------


def test_q_value_examples():
    rng = np.random.default_rng(0)
    head = init_mlp(rng, 5, 4)
    head["W2"].data[:] = 0.0
    sr, ar = rng.normal(size=3), rng.normal(size=2)
    assert float(q_value(sr, ar, head).data) == pytest.approx(head["b2"].data[0])
    head = init_mlp(rng, 5, 4)
    assert float(q_value(sr, ar, head).data) == float(q_value(sr, ar, head).data)
    with pytest.raises(ValueError):
        q_value(sr, rng.normal(size=3), head)


def test_inv_dyn_examples():
    rng = np.random.default_rng(0)
    head = init_mlp(rng, 2 * 3 + 2, 4)
    s0, s1 = rng.normal(size=3), rng.normal(size=3)
    assert float(inv_dyn_loss(s0, s1, rng.normal(size=(1, 2)), 0, head).data) == pytest.approx(0.0, abs=1e-15)
    same = np.tile(rng.normal(size=(1, 2)), (4, 1))
    assert float(inv_dyn_loss(s0, s1, same, 2, head).data) == pytest.approx(math.log(4))
    with pytest.raises(ValueError):
        inv_dyn_loss(s0, s1, np.zeros((0, 2)), 0, head)
    with pytest.raises(IndexError):
        inv_dyn_loss(s0, s1, same, 4, head)


# -- gradients ---------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(GRAD_CASES))
def test_component_gradients(name):
    rng = np.random.default_rng(11)
    for _ in range(10):
        fn, params = GRAD_CASES[name](rng)
        assert grad_check(fn, params, rng=rng) < GRAD_RTOL


OPS = {
    "sigmoid": lambda x: ag.sigmoid(x),
    "tanh": lambda x: ag.tanh(x),
    "leaky_relu": lambda x: ag.leaky_relu(x, 0.01),
    "exp": lambda x: ag.exp(x * 0.3),
    "log": lambda x: ag.log(ag.exp(x) + 1.0),
    "abs": lambda x: ag.tabs(x),
    "softmax": lambda x: ag.masked_softmax(x, np.array([1.0, 1.0, 0.0, 1.0])) * x,
    "log_softmax": lambda x: ag.masked_log_softmax(x, np.array([1.0, 0.0, 1.0, 1.0])),
    "matmul": lambda x: ag.matmul(ag.reshape(x, (2, 2)), ag.reshape(x, (2, 2))),
    "getitem": lambda x: x[np.array([0, 0, 3])] * x[np.array([1, 2, 2])],
    "concat_sum": lambda x: ag.concat([x, x * x], axis=0).sum(),
    "mean": lambda x: ag.mean(ag.reshape(x, (2, 2)) * x[np.array([0, 1])], axis=1),
}


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(sorted(OPS)), st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_primitive_gradients(op, values):
    x = ag.parameter(np.array(values) + 0.05)  # keep |x| off the kink of abs / leaky relu
    w = np.random.default_rng(0).normal(size=16)

    def fn():
        out = OPS[op](x)
        flat = ag.reshape(out, (-1,))
        return ag.tsum(flat * ag.constant(w[: flat.shape[0]]))

    if op in ("abs", "leaky_relu") and np.any(np.abs(x.data) < 1e-4):
        return
    assert grad_check(fn, [x]) < GRAD_RTOL


def test_no_grad_builds_no_graph():
    x = ag.parameter(np.ones(3))
    with ag.no_grad():
        y = ag.tanh(x) * 2.0
    assert y._parents == () and not y.requires_grad


# -- network -----------------------------------------------------------------


def test_state_dims_per_layout():
    h, d = DIMS.hidden, DIMS.hash_dim
    s = state()
    assert network(Layout()).state_vector(s).shape == (3 * h,)
    assert network(Layout(text_enc=False, n_hash=2)).state_vector(state(keys=("p1", "p2"))).shape == (2 * d,)
    assert network(Layout(text_enc=False, hash_triple=True)).state_vector(s).shape == (3 * d,)
    gt = network(Layout(n_hash=1))
    v = gt.state_vector(state(keys=("12345",)))
    np.testing.assert_array_equal(v[3 * h:], hash_vec("12345", HashConfig(d)).values)
    np.testing.assert_array_equal(v[: 3 * h], network(Layout()).state_vector(s))


def test_hash_triple_vector_is_obs_hash_rep():
    from drrnlog.hashrep import obs_hash_rep

    net = network(Layout(text_enc=False, hash_triple=True))
    s = state()
    np.testing.assert_array_equal(net.state_vector(s), obs_hash_rep(*s.texts, HashConfig(DIMS.hash_dim)))


def test_wrong_number_of_hash_keys():
    with pytest.raises(ValueError):
        network(Layout(n_hash=2)).state_vector(state(keys=("one",)))


@pytest.mark.parametrize(
    "layout",
    [Layout(), Layout(att=True, n_hash=2, invdy=True), Layout(text_enc=False, hash_triple=True), Layout(text_enc=False, n_hash=2)],
)
def test_batched_q_matches_single(layout):
    net = network(layout)
    keys = ("k1", "k2")[: layout.n_hash]
    states = [state(keys=keys), state(o="Take the lantern now please.", keys=keys[::-1])]
    actions = ["north", "take the lantern", "east", "xyzzy plugh"]
    pairs = [(s, a) for s in range(2) for a in range(4)]
    batched = net.q_values(states, actions, pairs).data
    single = np.concatenate([net.q_for_actions(s, actions) for s in states])
    np.testing.assert_allclose(batched, single, rtol=1e-10, atol=1e-12)


def test_attention_state_vector_needs_action():
    net = network(Layout(att=True))
    with pytest.raises(ValueError):
        net.state_vector(state())
    assert net.state_vector(state(), "north").shape == (3 * DIMS.hidden,)


def test_invdy_loss_batch_is_mean_of_singles():
    net = network(Layout(invdy=True))
    s = [state(), state(o="A key glints.")]
    n = [state(o="north"), state(o="Take the lantern.")]
    cands = [("north", "east"), ("take the lantern", "south", "west")]
    taken = [1, 0]
    both = float(net.invdy_loss(s, n, cands, taken).data)
    singles = [float(net.invdy_loss([s[b]], [n[b]], [cands[b]], [taken[b]]).data) for b in range(2)]
    assert both == pytest.approx(np.mean(singles), rel=1e-10)


def test_full_network_gradient():
    net = network(Layout(att=True, n_hash=1, invdy=True))
    states = [state(keys=("a",)), state(o="north", keys=("b",))]
    actions = ["north", "take the lantern"]
    params = list(net.params.tensors.values())

    def fn():
        q = net.q_values(states, actions, [(0, 0), (1, 1), (0, 1)])
        inv = net.invdy_loss(states, states[::-1], [tuple(actions), tuple(actions)], [0, 1])
        return ag.tsum(q * q) + inv

    assert grad_check(fn, params, max_entries=6) < GRAD_RTOL


def test_adam_clips_and_moves():
    net = network(Layout())
    before = net.params.copy_values()
    q = net.q_values([state()], ["north"], [(0, 0)])
    (q * 1e6).sum().backward()
    opt = Adam(net.params, lr=1e-3, clip=5.0)
    norm = opt.step()
    assert norm > 5.0
    after = net.params.copy_values()
    moved = max(np.abs(after[k] - before[k]).max() for k in before)
    assert 0 < moved <= 1e-3 + 1e-12


def test_checkpoint_round_trip(tmp_path):
    net = network(Layout(att=True, n_hash=2, invdy=True), seed=4)
    path = tmp_path / "ck.npz"
    save_checkpoint(path, net.params, net.vocab, {"note": "x"})
    params, vocab, extra = load_checkpoint(path)
    assert vocab == net.vocab and extra == {"note": "x"}
    assert params.layout == net.params.layout and params.dims == net.params.dims
    for k, t in net.params.tensors.items():
        assert np.array_equal(params.tensors[k].data, t.data)
        assert params.tensors[k].data.tobytes() == t.data.tobytes()


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.npz"
    np.savez(path, header=np.array('{"format": "other"}'))
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_parameter_names_and_count():
    p = network(Layout(att=True, n_hash=2, invdy=True)).params
    assert {f"gru{k}.W_z" for k in range(1, 5)} <= set(p.tensors)
    assert "bidaf.W" in p.tensors and p.tensors["bidaf.W"].shape == (4 * DIMS.hidden, DIMS.hidden)
    assert p.count() == sum(t.data.size for t in p.tensors.values())
    hashed = network(Layout(text_enc=False, hash_triple=True)).params
    assert not any(k.startswith(("gru", "emb", "bidaf")) for k in hashed.tensors)
