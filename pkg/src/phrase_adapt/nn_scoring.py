"""Feed-forward phrase scorers trained from scratch with numpy.

Two flavours share one network shape (projection -> tanh -> softmax):

* ``tm``: predicts each target word from the source phrase alone
  (up to ``window`` source words; absent positions project to zero).
* ``lm``: predicts each word from its ``window - 1`` predecessors,
  zero-padded on the left.

A phrase score is the geometric mean of its per-word probabilities.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, InputError, NormalizationError
from .vocab import UNK

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
PAD = -1
MAGIC = b"PADNN\x00"
FORMAT_VERSION = 1
PARAM_NAMES = ("proj", "w_hidden", "b_hidden", "w_out", "b_out")

# full-size network; the NnConfig defaults are scaled down for desk use
LARGE_DIMS = {"window": 7, "projection_dim": 320, "hidden_dim": 512}


@dataclass
class NnConfig:
    kind: str = "tm"
    window: int = 7
    projection_dim: int = 16
    hidden_dim: int = 32
    seed: int = 0
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 32
    sample_rate: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("tm", "lm"):
            raise InputError(f"unknown model kind {self.kind!r}")
        for name in ("window", "projection_dim", "hidden_dim", "batch_size"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise InputError("epochs must be >= 0")
        if not 0.0 < self.sample_rate <= 1.0:
            raise InputError("sample_rate must be in (0, 1]")

    @property
    def context_len(self) -> int:
        return self.window if self.kind == "tm" else self.window - 1


def build_word_list(words: Iterable[str]) -> list[str]:
    """Sorted distinct words with ``<unk>`` at index 0."""
    return [UNK] + sorted(set(words) - {UNK})


@dataclass(eq=False)
class NnModel:
    config: NnConfig
    input_words: list[str]
    output_words: list[str]
    params: dict[str, np.ndarray]
    _in_index: dict[str, int] = field(init=False, repr=False)
    _out_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._in_index = {w: i for i, w in enumerate(self.input_words)}
        self._out_index = {w: i for i, w in enumerate(self.output_words)}

    def copy(self) -> "NnModel":
        return NnModel(
            replace(self.config),
            list(self.input_words),
            list(self.output_words),
            {k: v.copy() for k, v in self.params.items()},
        )

    def in_ids(self, words: Sequence[str]) -> list[int]:
        get = self._in_index.get
        return [get(w, 0) for w in words]

    def out_ids(self, words: Sequence[str]) -> list[int]:
        get = self._out_index.get
        return [get(w, 0) for w in words]

    def same_vocab(self, other: "NnModel") -> bool:
        return (
            self.config.kind == other.config.kind
            and self.config.context_len == other.config.context_len
            and self.input_words == other.input_words
            and self.output_words == other.output_words
        )


def init_model(config: NnConfig, input_words: Sequence[str], output_words: Sequence[str]) -> NnModel:
    """Glorot-uniform weights from a seeded generator; zero biases."""
    rng = np.random.default_rng(config.seed)
    n_in, n_out = len(input_words), len(output_words)
    d, h, c = config.projection_dim, config.hidden_dim, config.context_len

    def uniform(rows, cols):
        bound = math.sqrt(6.0 / (rows + cols))
        return rng.uniform(-bound, bound, size=(rows, cols))

    params = {
        "proj": uniform(n_in, d),
        "w_hidden": uniform(c * d, h),
        "b_hidden": np.zeros(h),
        "w_out": uniform(h, n_out),
        "b_out": np.zeros(n_out),
    }
    return NnModel(config, list(input_words), list(output_words), params)


# -- forward / backward -------------------------------------------------------


def _forward(model: NnModel, contexts: np.ndarray):
    p = model.params
    mask = contexts >= 0
    emb = p["proj"][np.where(mask, contexts, 0)] * mask[..., None]
    x = emb.reshape(len(contexts), -1)
    hidden = np.tanh(x @ p["w_hidden"] + p["b_hidden"])
    logits = hidden @ p["w_out"] + p["b_out"]
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs, (mask, x, hidden)


def predict(model: NnModel, contexts: np.ndarray) -> np.ndarray:
    """Output distributions for a batch of padded context rows."""
    return _forward(model, np.asarray(contexts, dtype=np.int64).reshape(-1, model.config.context_len))[0]


def loss_and_grads(model: NnModel, contexts: np.ndarray, targets: np.ndarray):
    """Mean cross-entropy (nats) over the batch and its parameter gradients."""
    p = model.params
    n = len(targets)
    probs, (mask, x, hidden) = _forward(model, contexts)
    picked = probs[np.arange(n), targets]
    loss = -np.mean(np.log(np.maximum(picked, 1e-300)))

    d_logits = probs.copy()
    d_logits[np.arange(n), targets] -= 1.0
    d_logits /= n
    grads = {
        "w_out": hidden.T @ d_logits,
        "b_out": d_logits.sum(axis=0),
    }
    d_pre = (d_logits @ p["w_out"].T) * (1.0 - hidden ** 2)
    grads["w_hidden"] = x.T @ d_pre
    grads["b_hidden"] = d_pre.sum(axis=0)
    d_emb = (d_pre @ p["w_hidden"].T).reshape(n, model.config.context_len, -1)
    d_proj = np.zeros_like(p["proj"])
    np.add.at(d_proj, contexts[mask], d_emb[mask])
    grads["proj"] = d_proj
    return loss, grads


# -- context construction -----------------------------------------------------


def source_context(model: NnModel, source: Sequence[str]) -> list[int]:
    """Source ids truncated to the window, right-padded with PAD."""
    c = model.config.context_len
    ids = model.in_ids(list(source)[:c])
    return ids + [PAD] * (c - len(ids))


def history_contexts(model: NnModel, words: Sequence[str]) -> list[list[int]]:
    """One left-padded history row per position of ``words``."""
    c = model.config.context_len
    ids = model.in_ids(words)
    rows = []
    for k in range(len(ids)):
        hist = ids[max(0, k - c):k]
        rows.append([PAD] * (c - len(hist)) + hist)
    return rows


def tm_examples(model: NnModel, pairs: Iterable[tuple[Sequence[str], Sequence[str]]]):
    """One (source context, target word) example per target word."""
    ctx, tgt = [], []
    for src, trg in pairs:
        row = source_context(model, src)
        for w in model.out_ids(trg):
            ctx.append(row)
            tgt.append(w)
    return _as_arrays(model, ctx, tgt)


def lm_examples(model: NnModel, sequences: Iterable[Sequence[str]]):
    ctx, tgt = [], []
    for words in sequences:
        ctx.extend(history_contexts(model, words))
        tgt.extend(model.out_ids(words))
    return _as_arrays(model, ctx, tgt)


def _as_arrays(model, ctx, tgt):
    c = model.config.context_len
    return (
        np.asarray(ctx, dtype=np.int64).reshape(-1, c),
        np.asarray(tgt, dtype=np.int64),
    )


def subsample(items: Sequence, rate: float, seed: int) -> list:
    """Seeded Bernoulli subsample keeping each item with probability ``rate``."""
    if rate >= 1.0:
        return list(items)
    keep = np.random.default_rng(seed).random(len(items)) < rate
    return [x for x, k in zip(items, keep) if k]


# -- scoring ------------------------------------------------------------------


def forward_translation(model: NnModel, source: Sequence[str]) -> np.ndarray:
    return predict(model, [source_context(model, source)])[0]


def _geometric_mean(probs: np.ndarray) -> float:
    if np.any(probs < PROB_FLOOR):
        logger.debug("flooring %d word probabilities", int(np.sum(probs < PROB_FLOOR)))
    return float(np.exp(np.mean(np.log(np.maximum(probs, PROB_FLOOR)))))


def q_score(model: NnModel, source: Sequence[str], target: Sequence[str]) -> float:
    """Length-normalized translation score of a phrase pair."""
    if not target:
        raise InputError("empty target phrase")
    dist = forward_translation(model, source)
    return _geometric_mean(dist[model.out_ids(target)])


def q_score_lm(model: NnModel, words: Sequence[str]) -> float:
    """Length-normalized LM score of an n-gram."""
    if not words:
        raise InputError("empty phrase")
    dist = predict(model, history_contexts(model, words))
    return _geometric_mean(dist[np.arange(len(words)), model.out_ids(words)])


def score_item(model: NnModel, item) -> float:
    """``item`` is ``(source, target)`` for tm models, a word list for lm."""
    if model.config.kind == "tm":
        src, tgt = item
        return q_score(model, src, tgt)
    return q_score_lm(model, item)


def d_minus(model_in: NnModel, model_out: NnModel, item) -> float:
    if not model_in.same_vocab(model_out):
        raise InputError("in-domain and out-of-domain models use different vocabularies")
    return score_item(model_in, item) - score_item(model_out, item)


# -- training -----------------------------------------------------------------


def train(model: NnModel, examples: tuple[np.ndarray, np.ndarray], config: NnConfig | None = None):
    """Minibatch SGD on cross-entropy. Returns ``(model, per-epoch mean loss)``.

    The input model is left untouched. The shuffle order comes from
    ``config.seed``, so results are reproducible.
    """
    config = config or model.config
    model = model.copy()
    contexts, targets = examples
    n = len(targets)
    losses: list[float] = []
    if config.epochs == 0 or n == 0:
        return model, losses
    rng = np.random.default_rng(config.seed + 7919)
    lr = config.learning_rate
    params = model.params
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_grads(model, contexts[idx], targets[idx])
            if not math.isfinite(loss):
                raise NormalizationError(
                    f"non-finite loss at epoch {epoch + 1}, batch starting {start}; "
                    f"lr={lr} batch_size={config.batch_size}"
                )
            total += loss * len(idx)
            for name in PARAM_NAMES:
                params[name] -= lr * grads[name]
        losses.append(total / n)
        logger.debug("epoch %d loss %.6f", epoch + 1, losses[-1])
    return model, losses


def gradient_check(
    model: NnModel,
    example: tuple[np.ndarray, np.ndarray],
    epsilon: float = 1e-4,
    n_params: int = 24,
    seed: int = 0,
    abs_tol: float = 1e-8,
) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Parameters are sampled across all arrays; projection rows are drawn
    from rows the example actually uses. Pairs where both gradients are
    below ``abs_tol`` count as exact.
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise InputError("epsilon must be in [1e-6, 1e-3]")
    contexts, targets = (np.atleast_2d(np.asarray(example[0], dtype=np.int64)),
                         np.atleast_1d(np.asarray(example[1], dtype=np.int64)))
    _, grads = loss_and_grads(model, contexts, targets)
    rng = np.random.default_rng(seed)
    used_rows = np.unique(contexts[contexts >= 0])
    worst = 0.0
    for i in range(max(n_params, 20)):
        name = PARAM_NAMES[i % len(PARAM_NAMES)]
        arr = model.params[name]
        if arr.size == 0:
            continue
        if name == "proj" and used_rows.size:
            pos = (int(rng.choice(used_rows)), int(rng.integers(arr.shape[1])))
        else:
            pos = tuple(int(rng.integers(s)) for s in arr.shape)
        saved = arr[pos]
        arr[pos] = saved + epsilon
        up, _ = loss_and_grads(model, contexts, targets)
        arr[pos] = saved - epsilon
        down, _ = loss_and_grads(model, contexts, targets)
        arr[pos] = saved
        numeric = (up - down) / (2.0 * epsilon)
        analytic = grads[name][pos]
        if abs(numeric) < abs_tol and abs(analytic) < abs_tol:
            continue
        err = abs(numeric - analytic) / max(abs(numeric), abs(analytic))
        worst = max(worst, err)
    return worst


# -- serialization ------------------------------------------------------------


def _header(model: NnModel) -> dict:
    return {
        "config": asdict(model.config),
        "input_words": model.input_words,
        "output_words": model.output_words,
        "shapes": {k: list(model.params[k].shape) for k in PARAM_NAMES},
    }


def save_model(model: NnModel, path: str) -> None:
    """Write the binary container plus a ``.json`` config sidecar."""
    header = json.dumps(_header(model), sort_keys=True).encode("utf-8")
    body = bytearray(MAGIC)
    body += struct.pack("<HI", FORMAT_VERSION, len(header))
    body += header
    for name in PARAM_NAMES:
        body += np.ascontiguousarray(model.params[name], dtype="<f8").tobytes()
    body += hashlib.sha256(body).digest()
    with open(path, "wb") as fh:
        fh.write(body)
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump({"format_version": FORMAT_VERSION, "config": asdict(model.config),
                   "input_vocab": len(model.input_words),
                   "output_vocab": len(model.output_words)}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: str) -> NnModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC):
        raise FormatError(f"{path}: not a model container")
    if len(data) < len(MAGIC) + 6 + 32:
        raise FormatError(f"{path}: truncated model container")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise FormatError(f"{path}: checksum mismatch")
    pos = len(MAGIC)
    version, hlen = struct.unpack_from("<HI", body, pos)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    pos += 6
    header = json.loads(body[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    params = {}
    for name in PARAM_NAMES:
        shape = tuple(header["shapes"][name])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=pos).astype(np.float64)
        params[name] = arr.reshape(shape)
        pos += 8 * count
    if pos != len(body):
        raise FormatError(f"{path}: trailing bytes in model container")
    return NnModel(NnConfig(**header["config"]), header["input_words"], header["output_words"], params)
