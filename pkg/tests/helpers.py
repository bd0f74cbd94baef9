"""Shared builders for tests."""
import random

from phrase_adapt.ngram_lm import NgramLm, train_addk_lm
from phrase_adapt.vocab import Vocab


def random_phrases(rng: random.Random, n: int, vocab_size: int, min_len: int = 1, max_len: int = 7):
    return [
        tuple(rng.randrange(1, vocab_size + 1) for _ in range(rng.randint(min_len, max_len)))
        for _ in range(n)
    ]


def random_lm(seed: int, n_words: int = 40, order: int = 3, n_sents: int = 200, k: float = 0.5,
              vocab: Vocab | None = None) -> NgramLm:
    rng = random.Random(seed)
    vocab = vocab if vocab is not None else Vocab()
    words = [f"w{i}" for i in range(n_words)]
    corpus = [[rng.choice(words) for _ in range(rng.randint(1, 8))] for _ in range(n_sents)]
    return train_addk_lm(corpus, order, k, vocab)


def uniform_unigram_lm(vocab: Vocab, words) -> NgramLm:
    import math
    lm = NgramLm(1, vocab)
    ids = [vocab.intern(w) for w in words]
    for i in ids:
        lm.add((i,), math.log10(1.0 / len(ids)))
    return lm


def all_contexts(lm: NgramLm):
    """The empty context plus every entry that can act as a context."""
    return [()] + sorted(ng for ng in lm.probs if len(ng) < lm.order)


DOMAIN_A = ([f"as{i}" for i in range(50)], [f"at{i}" for i in range(50)])
DOMAIN_B = ([f"bs{i}" for i in range(50)], [f"bt{i}" for i in range(50)])


def two_domain_corpus(rng, own, other, n, mix=0.8):
    """Parallel phrase pairs drawn mostly (``mix``) from ``own``'s vocabulary.

    Source word j always translates to target word j of the same domain.
    ``rng`` is a numpy Generator.
    """
    (own_s, own_t), (oth_s, oth_t) = own, other
    out = []
    for _ in range(n):
        src, tgt = [], []
        for _ in range(int(rng.integers(1, 4))):
            vs, vt = (own_s, own_t) if rng.random() < mix else (oth_s, oth_t)
            j = int(rng.integers(50))
            src.append(vs[j])
            tgt.append(vt[j])
        out.append((src, tgt))
    return out


def d_minus_trial(seed: int):
    """Mean D_minus of held-out domain-A and domain-B pairs for one seed."""
    import numpy as np
    from phrase_adapt import nn_scoring as nn

    rng = np.random.default_rng(seed)
    train_a = two_domain_corpus(rng, DOMAIN_A, DOMAIN_B, 300)
    train_b = two_domain_corpus(rng, DOMAIN_B, DOMAIN_A, 300)
    test_a = two_domain_corpus(rng, DOMAIN_A, DOMAIN_B, 50)
    test_b = two_domain_corpus(rng, DOMAIN_B, DOMAIN_A, 50)
    cfg = nn.NnConfig(kind="tm", seed=seed, epochs=10, learning_rate=0.2, batch_size=16)
    model = nn.init_model(cfg, nn.build_word_list(DOMAIN_A[0] + DOMAIN_B[0]),
                          nn.build_word_list(DOMAIN_A[1] + DOMAIN_B[1]))
    m_in, _ = nn.train(model, nn.tm_examples(model, train_a), cfg)
    m_out, _ = nn.train(model, nn.tm_examples(model, train_b), cfg)
    mean = lambda items: float(np.mean([nn.d_minus(m_in, m_out, p) for p in items]))
    return mean(test_a), mean(test_b)


# -- toy adaptation fixture ------------------------------------------------------

CONNECT_TEMPLATES = [
    # (in-domain left pair, in-domain right pair, out-of-domain connecting pair)
    (("the reason", "la raison"), ("why I like", "pourquoi j'aime"), ("reason why", "raison pourquoi")),
] + [
    ((f"l{i}a l{i}b", f"L{i}a L{i}b"), (f"r{i}a r{i}b", f"R{i}a R{i}b"), (f"l{i}b r{i}a", f"L{i}b R{i}a"))
    for i in range(1, 10)
]


def _scores(rng, n=4):
    return " ".join(f"{rng.uniform(0.01, 1):.4g}" for _ in range(n))


def _write(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return str(path)


def build_toy(tmp_path, order: int = 3) -> dict:
    """Files for a small adaptation run: 10 connecting out-of-domain pairs plus 90 that never connect."""
    from phrase_adapt.ngram_lm import serialize_arpa

    rng = random.Random(42)
    in_pairs, out_pairs = [], []
    for left, right, joined in CONNECT_TEMPLATES:
        in_pairs += [left, right]
        out_pairs.append(joined)
    in_pairs += [(f"k{i} k{i}x", f"K{i} K{i}x") for i in range(10)]
    out_pairs += [(f"n{j}a n{j}b", f"N{j}a N{j}b") for j in range(60)]
    # share words with the in-domain side but never as suffix + prefix
    out_pairs += [(f"l{1 + j % 9}a n{j}z", f"L{1 + j % 9}a N{j}z") for j in range(30)]

    in_lines = [f"{s} ||| {t} ||| {_scores(rng)} ||| 0-0" for s, t in sorted(in_pairs)]
    out_lines = [f"{s} ||| {t} ||| {_scores(rng)} ||| 0-0" for s, t in sorted(out_pairs)]
    files = {
        "in_pt": _write(tmp_path / "in.pt", in_lines),
        "out_pt": _write(tmp_path / "out.pt", out_lines),
        "reordering": _write(tmp_path / "in.reo",
                             [f"{s} ||| {t} ||| {_scores(rng, 6)}" for s, t in sorted(in_pairs)]),
        "out_reordering": _write(tmp_path / "out.reo",
                                 [f"{s} ||| {t} ||| {_scores(rng, 6)}" for s, t in sorted(out_pairs)]),
    }
    corpora = {
        "in_lm_src": [s.split() for s, _ in in_pairs],
        "in_lm_tgt": [t.split() for _, t in in_pairs],
        "out_lm": [t.split() for _, t in out_pairs],
    }
    for name, corpus in corpora.items():
        lm = train_addk_lm(corpus, order, 0.5, Vocab())
        with open(tmp_path / f"{name}.arpa", "w", encoding="utf-8") as fh:
            serialize_arpa(lm, fh)
        files[name] = str(tmp_path / f"{name}.arpa")
    return files


def connecting_keys():
    return {joined for _, _, joined in CONNECT_TEMPLATES}


def flags(files: dict) -> list[str]:
    out = []
    for key, value in files.items():
        out += [f"--{key.replace('_', '-')}", value]
    return out
