import json
import math
import random

import numpy as np
import pytest

from helpers import d_minus_trial
from phrase_adapt import nn_scoring as nn
from phrase_adapt.errors import FormatError, InputError, NormalizationError

SRC = [f"s{i}" for i in range(12)]
TGT = [f"t{i}" for i in range(9)]


def make(kind="tm", seed=0, **kw):
    cfg = nn.NnConfig(kind=kind, seed=seed, **kw)
    out_words = nn.build_word_list(TGT if kind == "tm" else SRC)
    return nn.init_model(cfg, nn.build_word_list(SRC), out_words)


def rand_phrase(rng, words, lo=1, hi=7):
    return [rng.choice(words) for _ in range(rng.randint(lo, hi))]


def test_config_validation():
    with pytest.raises(InputError):
        nn.NnConfig(kind="xx")
    with pytest.raises(InputError):
        nn.NnConfig(window=0)
    assert nn.NnConfig(kind="lm").context_len == 6


def test_init_deterministic_and_seeded():
    a, b, c = make(seed=3), make(seed=3), make(seed=4)
    for name in nn.PARAM_NAMES:
        assert np.array_equal(a.params[name], b.params[name])
    assert not np.array_equal(a.params["w_out"], c.params["w_out"])
    assert not a.params["b_hidden"].any() and not a.params["b_out"].any()


def test_init_glorot_bounds():
    m = make()
    w = m.params["w_hidden"]
    assert np.abs(w).max() <= math.sqrt(6.0 / sum(w.shape))


def test_softmax_sums_to_one():
    rng = random.Random(0)
    m = make(seed=2)
    for _ in range(50):
        dist = nn.forward_translation(m, rand_phrase(rng, SRC + ["oov"], hi=10))
        assert abs(dist.sum() - 1.0) <= 1e-9


def test_padding_matches_missing_positions():
    m = make(seed=1)
    row = nn.source_context(m, ["s1"])
    assert row == [m.in_ids(["s1"])[0]] + [nn.PAD] * 6
    explicit = nn.predict(m, [row])[0]
    assert np.array_equal(nn.forward_translation(m, ["s1"]), explicit)


def test_truncation_to_window():
    m = make(seed=1)
    long = SRC[:10]
    assert np.array_equal(nn.forward_translation(m, long), nn.forward_translation(m, long[:7]))
    assert not np.array_equal(nn.forward_translation(m, long[:6]), nn.forward_translation(m, long[:7]))


def test_q_single_word_is_probability():
    rng = random.Random(1)
    for seed in range(20):
        m = make(seed=seed)
        src, w = rand_phrase(rng, SRC), rng.choice(TGT)
        p = nn.forward_translation(m, src)[m.out_ids([w])[0]]
        assert nn.q_score(m, src, [w]) == pytest.approx(p, rel=1e-12)


def test_q_constant_probability():
    m = make(seed=5)
    m.params["w_out"][:] = 0.0
    m.params["b_out"][:] = 0.0
    assert nn.q_score(m, ["s1", "s2"], ["t1", "t4", "t2"]) == pytest.approx(1 / len(m.output_words), rel=1e-12)
    lm = make("lm", seed=5)
    lm.params["w_out"][:] = 0.0
    assert nn.q_score_lm(lm, ["s3", "s1", "s9"]) == pytest.approx(1 / len(lm.output_words), rel=1e-12)


def test_q_permutation_invariance():
    rng = random.Random(7)
    m = make(seed=9)
    for _ in range(30):
        src, tgt = rand_phrase(rng, SRC), rand_phrase(rng, TGT, 2)
        shuffled = tgt[:]
        rng.shuffle(shuffled)
        assert nn.q_score(m, src, shuffled) == pytest.approx(nn.q_score(m, src, tgt), rel=1e-12)


def test_q_lm_is_order_sensitive():
    m = make("lm", seed=2)
    assert nn.q_score_lm(m, ["s1", "s2", "s3"]) != nn.q_score_lm(m, ["s3", "s2", "s1"])


def test_q_lm_history_padding():
    m = make("lm", seed=2)
    rows = nn.history_contexts(m, ["s1", "s2"])
    assert rows[0] == [nn.PAD] * 6
    assert rows[1] == [nn.PAD] * 5 + m.in_ids(["s1"])


def test_q_rejects_empty():
    with pytest.raises(InputError):
        nn.q_score(make(), ["s1"], [])
    with pytest.raises(InputError):
        nn.q_score_lm(make("lm"), [])


def test_d_minus_identity_and_swap():
    a, b = make(seed=1), make(seed=2)
    rng = random.Random(3)
    for _ in range(20):
        item = (rand_phrase(rng, SRC), rand_phrase(rng, TGT))
        assert nn.d_minus(a, a, item) == 0.0
        assert nn.d_minus(a, b, item) == -nn.d_minus(b, a, item)
        assert nn.d_minus(a, b, item) == nn.q_score(a, *item) - nn.q_score(b, *item)


def test_d_minus_vocab_mismatch():
    a = make()
    b = nn.init_model(a.config, a.input_words + ["zzz"], a.output_words)
    with pytest.raises(InputError):
        nn.d_minus(a, b, (["s1"], ["t1"]))


def test_d_minus_separates_domains_one_seed():
    in_mean, out_mean = d_minus_trial(0)
    assert in_mean > out_mean


# -- training --------------------------------------------------------------------


def small_set(m):
    rng = random.Random(0)
    pairs = [(rand_phrase(rng, SRC, 1, 3), [rng.choice(TGT)]) for _ in range(10)]
    return nn.tm_examples(m, pairs)


def test_overfit_small_set():
    cfg = nn.NnConfig(seed=0, learning_rate=0.5, batch_size=10, epochs=200)
    m = nn.init_model(cfg, nn.build_word_list(SRC), nn.build_word_list(TGT))
    _, losses = nn.train(m, small_set(m), cfg)
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 0.1


def test_zero_epochs_unchanged():
    m = make()
    cfg = nn.NnConfig(epochs=0)
    out, losses = nn.train(m, small_set(m), cfg)
    assert losses == []
    for name in nn.PARAM_NAMES:
        assert np.array_equal(out.params[name], m.params[name])


def test_training_deterministic():
    m = make(epochs=3, batch_size=4)
    data = small_set(m)
    a, la = nn.train(m, data)
    b, lb = nn.train(m, data)
    assert la == lb
    for name in nn.PARAM_NAMES:
        assert np.array_equal(a.params[name], b.params[name])


def test_nan_loss_aborts():
    m = make(epochs=1)
    m.params["w_out"][:] = np.nan
    with pytest.raises(NormalizationError, match="epoch 1"):
        nn.train(m, small_set(m))


def test_subsample_seeded():
    items = list(range(1000))
    a = nn.subsample(items, 0.1, 4)
    assert a == nn.subsample(items, 0.1, 4)
    assert 50 < len(a) < 150
    assert nn.subsample(items, 1.0, 4) == items


# -- gradient check ---------------------------------------------------------------


@pytest.mark.parametrize("kind", ["tm", "lm"])
def test_gradient_check(kind):
    m = make(kind, seed=11)
    rng = random.Random(2)
    if kind == "tm":
        data = nn.tm_examples(m, [(rand_phrase(rng, SRC, 1, 4), rand_phrase(rng, TGT, 1, 3)) for _ in range(4)])
    else:
        data = nn.lm_examples(m, [rand_phrase(rng, SRC, 2, 5) for _ in range(4)])
    assert nn.gradient_check(m, data, epsilon=1e-4, n_params=40) < 1e-4


def test_gradient_check_dead_unit():
    m = make(seed=3)
    m.params["w_out"][:, 0] = 0.0
    m.params["w_hidden"][:, 0] = 50.0  # saturated tanh: near-zero gradients
    data = small_set(m)
    assert nn.gradient_check(m, data, n_params=60) < 1e-4


def test_gradient_check_catches_sign_bug(monkeypatch):
    m = make(seed=4)
    data = small_set(m)
    clean = nn.gradient_check(m, data)
    real = nn.loss_and_grads

    def buggy(model, contexts, targets):
        loss, grads = real(model, contexts, targets)
        grads["w_hidden"] = -grads["w_hidden"]
        return loss, grads

    monkeypatch.setattr(nn, "loss_and_grads", buggy)
    assert nn.gradient_check(m, data) > 0.5 > clean


def test_gradient_check_epsilon_range():
    m = make()
    with pytest.raises(InputError):
        nn.gradient_check(m, small_set(m), epsilon=1e-2)


# -- persistence -------------------------------------------------------------------


def test_save_load_round_trip(tmp_path):
    m = make("lm", seed=6)
    path = tmp_path / "m.bin"
    nn.save_model(m, str(path))
    back = nn.load_model(str(path))
    assert back.config == m.config and back.same_vocab(m)
    for name in nn.PARAM_NAMES:
        assert np.array_equal(back.params[name], m.params[name])
    sidecar = json.loads((tmp_path / "m.bin.json").read_text())
    assert sidecar["config"]["kind"] == "lm"


def test_load_detects_corruption(tmp_path):
    path = tmp_path / "m.bin"
    nn.save_model(make(), str(path))
    data = bytearray(path.read_bytes())
    data[40] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="checksum"):
        nn.load_model(str(path))
    path.write_bytes(b"garbage")
    with pytest.raises(FormatError):
        nn.load_model(str(path))
