"""File-level stages shared by the CLI subcommands and ``pipeline``.

Every stage reads its inputs from paths in :class:`RunConfig` or from the
intermediate files of earlier stages in ``output_dir``, and writes its own
outputs there. Running the stages one by one therefore produces the same
files as a single ``pipeline`` run.
"""
from __future__ import annotations

import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from functools import partial

from . import nn_scoring as nn
from .adapt import (
    AdaptReport,
    PenaltyPolicy,
    attach_qin_feature,
    augment_lm,
    merge_phrase_tables,
    select_reordering_entries,
)
from .connecting import (
    AffixIndex,
    ConnectCase,
    ExtractCounts,
    build_affix_index,
    classify_pair,
    extract_monolingual_candidates,
    parse_case_policy,
)
from .errors import FormatError, InputError
from .ngram_lm import NgramLm, parse_arpa, renormalize, serialize_arpa
from .op_scoring import OpScorer, rank_candidates
from .parallel import chunked_map
from .phrase_table import PhrasePair, TableStats, stream_table
from .textio import open_text
from .vocab import Vocab, parse_phrase

logger = logging.getLogger(__name__)

CANDIDATES_PT = "candidates.pt.tsv"
RANKED_PT = "ranked.pt.tsv"
CANDIDATES_LM = "candidates.lm.tsv"
RANKED_LM = "ranked.lm.tsv"
MERGED_PT = "phrase-table"
MERGED_REO = "reordering-table"
MERGED_LM = "lm.arpa"
INDEX_STATS = "index.json"
REPORT = "report.json"
MODEL_FILES = {
    ("tm", "in"): "nn-in-tm.bin",
    ("tm", "out"): "nn-out-tm.bin",
    ("lm", "in"): "nn-in-lm.bin",
    ("lm", "out"): "nn-out-lm.bin",
}

METHODS = ("op", "nn", "none")

# soft throughput targets, reported but never enforced
CLASSIFY_TARGET = 50_000.0  # entries per second
PARSE_TARGET = 200.0  # MB per minute


@dataclass
class RunConfig:
    in_pt: str | None = None
    out_pt: str | None = None
    in_lm_src: str | None = None
    in_lm_tgt: str | None = None
    out_lm: str | None = None
    reordering: str | None = None
    out_reordering: str | None = None
    output_dir: str = "adapt-out"
    candidates: str | None = None
    lm_candidates: str | None = None
    selected: str | None = None
    lm_selected: str | None = None
    method: str = "op"
    case: str = "a"
    top_k: int | None = None
    min_score: float | None = None
    lm_top_k: int | None = None
    lm_min_score: float | None = None
    max_affix_len: int = 7
    occurrence_cap: int = 1000
    seed: int = 0
    threads: int = 1
    lenient: bool = False
    report: str | None = None
    qin: bool = False
    window: int = 7
    projection_dim: int = 16
    hidden_dim: int = 32
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 32
    sample_rate: float = 1.0
    nn_in_tm: str | None = None
    nn_out_tm: str | None = None
    nn_in_lm: str | None = None
    nn_out_lm: str | None = None

    def validate(self) -> None:
        if self.method not in METHODS:
            raise InputError(f"--method must be one of {', '.join(METHODS)}")
        if self.top_k is not None and self.min_score is not None:
            raise InputError("--top-k and --min-score are mutually exclusive")
        if self.lm_top_k is not None and self.lm_min_score is not None:
            raise InputError("--lm-top-k and --lm-min-score are mutually exclusive")
        for name in ("top_k", "lm_top_k"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise InputError(f"--{name.replace('_', '-')} must be >= 0")
        if self.threads < 1:
            raise InputError("--threads must be >= 1")
        try:
            parse_case_policy(self.case)
        except ValueError as exc:
            raise InputError(str(exc)) from None

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)


@dataclass
class Context:
    """Per-run state: one shared vocab plus lazily loaded resources."""

    cfg: RunConfig
    report: AdaptReport = field(default_factory=AdaptReport)
    vocab: Vocab = field(default_factory=Vocab)
    _cache: dict = field(default_factory=dict)

    def require(self, attr: str) -> str:
        value = getattr(self.cfg, attr)
        if not value:
            raise InputError(f"--{attr.replace('_', '-')} is required for this command")
        return value

    def pt(self, attr: str) -> list[PhrasePair]:
        key = ("pt", attr)
        if key not in self._cache:
            path = self.require(attr)
            stats = TableStats()
            with open_text(path) as fh:
                pairs = list(stream_table(fh, self.vocab, strict=not self.cfg.lenient, stats=stats))
            self._cache[("stats", attr)] = stats
            self._cache[key] = pairs
        return self._cache[key]

    def lm(self, attr: str) -> NgramLm:
        key = ("lm", attr)
        if key not in self._cache:
            with open_text(self.require(attr)) as fh:
                self._cache[key] = parse_arpa(fh, self.vocab)
        return self._cache[key]

    def indexes(self) -> tuple[AffixIndex, AffixIndex]:
        if "index" not in self._cache:
            pairs = self.pt("in_pt")
            words = self.vocab.words
            build = partial(build_affix_index, max_affix_len=self.cfg.max_affix_len,
                            cap=self.cfg.occurrence_cap, key=words)
            self._cache["index"] = (build(p.src for p in pairs), build(p.tgt for p in pairs))
        return self._cache["index"]

    def timed(self, stage: str, t0: float) -> None:
        secs = time.perf_counter() - t0
        self.report.stage_seconds[stage] = round(self.report.stage_seconds.get(stage, 0.0) + secs, 6)
        progress(stage=stage, event="done", seconds=round(secs, 6))


def progress(**fields) -> None:
    print(json.dumps(fields, sort_keys=True), file=sys.stderr, flush=True)


# -- TSV helpers ----------------------------------------------------------------


def _write_lines(path: str, lines) -> int:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    n = 0
    with open_text(path, "w") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")
            n += 1
    return n


def _read_tsv(path: str, ncols: int) -> list[list[str]]:
    rows = []
    with open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != ncols:
                raise FormatError(f"{path}: expected {ncols} tab-separated columns", lineno)
            rows.append(cols)
    return rows


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _exists(path: str | None) -> bool:
    return bool(path) and os.path.exists(path)


# -- stages ---------------------------------------------------------------------


def stage_index(ctx: Context) -> dict:
    t0 = time.perf_counter()
    src_index, tgt_index = ctx.indexes()
    info = {"source": src_index.stats(), "target": tgt_index.stats()}
    with open(ctx.cfg.path(INDEX_STATS), "w", encoding="utf-8") as fh:
        json.dump(info, fh, indent=2, sort_keys=True)
        fh.write("\n")
    ctx.timed("index", t0)
    return info


def stage_extract(ctx: Context) -> None:
    cfg, report = ctx.cfg, ctx.report
    t0 = time.perf_counter()
    in_pairs = ctx.pt("in_pt")
    src_index, tgt_index = ctx.indexes()
    policy = parse_case_policy(cfg.case)
    words = ctx.vocab.text

    rows: list[str] = []
    if cfg.out_pt:
        size = os.path.getsize(cfg.out_pt)
        p0 = time.perf_counter()
        out_pairs = ctx.pt("out_pt")
        parse_secs = time.perf_counter() - p0
        keys = {p.key for p in in_pairs}
        c0 = time.perf_counter()
        cases = chunked_map(partial(classify_pair, src_index, tgt_index), out_pairs, cfg.threads)
        classify_secs = time.perf_counter() - c0
        counts = ExtractCounts()
        for pair, case in zip(out_pairs, cases):
            counts.seen += 1
            if case is ConnectCase.NONE:
                continue
            counts.connecting += 1
            if case not in policy:
                continue
            if pair.key in keys:
                counts.duplicates += 1
                continue
            counts.accepted += 1
            rows.append(f"{case.value}\t{words(pair.src)}\t{words(pair.tgt)}")
        report.candidates_seen = counts.seen
        report.connecting = counts.connecting
        report.duplicates_dropped += counts.duplicates
        _record_throughput(report, counts.seen, classify_secs, size, parse_secs)
    _write_lines(cfg.candidates or cfg.path(CANDIDATES_PT), rows)

    if cfg.out_lm:
        out_lm = ctx.lm("out_lm")
        in_lm = ctx.lm("in_lm_tgt") if cfg.in_lm_tgt else None
        max_order = min(out_lm.order, in_lm.order) if in_lm else out_lm.order
        mono = extract_monolingual_candidates(out_lm, tgt_index, max_order, in_lm)
        report.lm_candidates = len(mono)
        _write_lines(cfg.lm_candidates or cfg.path(CANDIDATES_LM),
                     (f"{_fmt(lp)}\t{words(ng)}" for ng, lp in mono))
    ctx.timed("extract", t0)


def _record_throughput(report: AdaptReport, n: int, classify_secs: float, size: int, parse_secs: float) -> None:
    rate = n / classify_secs if classify_secs > 0 else float("inf")
    mb_min = (size / 1e6) / (parse_secs / 60.0) if parse_secs > 0 else float("inf")
    report.throughput = {
        "classified_entries": n,
        "classify_per_second": round(rate, 1) if rate != float("inf") else None,
        "parse_mb_per_minute": round(mb_min, 1) if mb_min != float("inf") else None,
    }
    if n >= 1000 and rate < CLASSIFY_TARGET:
        report.warnings.append(f"classification rate {rate:.0f}/s below {CLASSIFY_TARGET:.0f}/s")
    if size >= 1_000_000 and mb_min < PARSE_TARGET:
        report.warnings.append(f"parse rate {mb_min:.1f} MB/min below {PARSE_TARGET:.0f} MB/min")


def _selector(top_k, min_score, method):
    if method == "none":
        return None, None
    return top_k, min_score


def stage_rank(ctx: Context, method: str | None = None) -> None:
    """Score and select candidates with ``method`` (defaults to the config's)."""
    cfg, report = ctx.cfg, ctx.report
    method = method or cfg.method
    t0 = time.perf_counter()
    report.method = method
    report.top_k, report.min_score = cfg.top_k, cfg.min_score
    vocab = ctx.vocab
    threads = cfg.threads

    cand_pt = cfg.candidates or cfg.path(CANDIDATES_PT)
    if _exists(cand_pt):
        rows = _read_tsv(cand_pt, 3)
        items = [(r[1].split(), r[2].split()) for r in rows]
        if not items:
            def score(i):
                return 0.0
        elif method == "op":
            src_index, tgt_index = ctx.indexes()
            src = OpScorer(src_index, ctx.lm("in_lm_src"))
            tgt = OpScorer(tgt_index, ctx.lm("in_lm_tgt"))
            pairs = [(parse_phrase(vocab, " ".join(s)), parse_phrase(vocab, " ".join(t))) for s, t in items]

            def score(i):
                fs = src.value(pairs[i][0])
                return fs * tgt.value(pairs[i][1]) if fs else 0.0
        elif method == "nn":
            m_in, m_out = _models(ctx, "tm")

            def score(i):
                return nn.d_minus(m_in, m_out, items[i])
        else:
            def score(i):
                return 0.0
        top_k, min_score = _selector(cfg.top_k, cfg.min_score, method)
        ranked = rank_candidates(range(len(items)), score, top_k, min_score,
                                 sort_text=lambda i: (" ".join(items[i][0]), " ".join(items[i][1])),
                                 threads=threads)
        report.selected = len(ranked)
        _write_lines(cfg.selected or cfg.path(RANKED_PT),
                     (f"{_fmt(r.score)}\t{' '.join(items[r.candidate][0])}\t{' '.join(items[r.candidate][1])}"
                      for r in ranked))

    cand_lm = cfg.lm_candidates or cfg.path(CANDIDATES_LM)
    if _exists(cand_lm):
        rows = _read_tsv(cand_lm, 2)
        grams = [r[1].split() for r in rows]
        if not grams:
            def lm_score(i):
                return 0.0
        elif method == "op":
            _, tgt_index = ctx.indexes()
            tgt = OpScorer(tgt_index, ctx.lm("in_lm_tgt"))
            ids = [parse_phrase(vocab, r[1]) for r in rows]

            def lm_score(i):
                return tgt.value(ids[i])
        elif method == "nn":
            m_in, m_out = _models(ctx, "lm")

            def lm_score(i):
                return nn.d_minus(m_in, m_out, grams[i])
        else:
            def lm_score(i):
                return 0.0
        top_k, min_score = _selector(cfg.lm_top_k, cfg.lm_min_score, method)
        ranked = rank_candidates(range(len(grams)), lm_score, top_k, min_score,
                                 sort_text=lambda i: (" ".join(grams[i]),), threads=threads)
        report.lm_selected = len(ranked)
        _write_lines(cfg.lm_selected or cfg.path(RANKED_LM),
                     (f"{_fmt(r.score)}\t{' '.join(grams[r.candidate])}" for r in ranked))
    ctx.timed(f"rank-{method}", t0)


# -- neural models ----------------------------------------------------------------


def _nn_config(cfg: RunConfig, kind: str) -> nn.NnConfig:
    return nn.NnConfig(kind=kind, window=cfg.window, projection_dim=cfg.projection_dim,
                       hidden_dim=cfg.hidden_dim, seed=cfg.seed, learning_rate=cfg.learning_rate,
                       epochs=cfg.epochs, batch_size=cfg.batch_size, sample_rate=cfg.sample_rate)


def _model_path(ctx: Context, kind: str, side: str) -> str:
    return getattr(ctx.cfg, f"nn_{side}_{kind}") or ctx.cfg.path(MODEL_FILES[(kind, side)])


def train_model(ctx: Context, kind: str, side: str) -> nn.NnModel:
    """Train one scorer on a phrase table; vocabularies come from the in-domain table."""
    cfg = ctx.cfg
    conf = _nn_config(cfg, kind)
    vocab = ctx.vocab
    in_pairs = ctx.pt("in_pt")
    tgt_words = nn.build_word_list(w for p in in_pairs for w in vocab.words(p.tgt))
    if kind == "tm":
        src_words = nn.build_word_list(w for p in in_pairs for w in vocab.words(p.src))
        model = nn.init_model(conf, src_words, tgt_words)
    else:
        model = nn.init_model(conf, tgt_words, tgt_words)
    if side == "in":
        data = in_pairs
    else:
        data = nn.subsample(ctx.pt("out_pt") if cfg.out_pt else [], cfg.sample_rate, cfg.seed)
    if kind == "tm":
        examples = nn.tm_examples(model, ((vocab.words(p.src), vocab.words(p.tgt)) for p in data))
    else:
        examples = nn.lm_examples(model, (vocab.words(p.tgt) for p in data))
    model, losses = nn.train(model, examples, conf)
    ctx.report.nn_losses[f"{kind}-{side}"] = [round(x, 6) for x in losses]
    return model


def stage_train_nn(ctx: Context, kinds=("tm", "lm"), sides=("in", "out")) -> None:
    t0 = time.perf_counter()
    for kind in kinds:
        for side in sides:
            path = _model_path(ctx, kind, side)
            model = train_model(ctx, kind, side)
            nn.save_model(model, path)
            ctx._cache[("model", kind, side)] = model
    ctx.timed("train-nn", t0)


def _model(ctx: Context, kind: str, side: str) -> nn.NnModel:
    key = ("model", kind, side)
    if key not in ctx._cache:
        path = _model_path(ctx, kind, side)
        if not os.path.exists(path):
            raise InputError(f"missing {kind} model {path}; run train-nn first")
        ctx._cache[key] = nn.load_model(path)
    return ctx._cache[key]


def _models(ctx: Context, kind: str) -> tuple[nn.NnModel, nn.NnModel]:
    return _model(ctx, kind, "in"), _model(ctx, kind, "out")


# -- merges -------------------------------------------------------------------------


def stage_merge_pt(ctx: Context) -> None:
    cfg, report = ctx.cfg, ctx.report
    t0 = time.perf_counter()
    vocab = ctx.vocab
    in_pairs = ctx.pt("in_pt")
    selected_path = cfg.selected or cfg.path(RANKED_PT)
    chosen: list[PhrasePair] = []
    if _exists(selected_path) and cfg.out_pt:
        wanted = {(r[1], r[2]) for r in _read_tsv(selected_path, 3)}
        seen = set()
        for pair in ctx.pt("out_pt"):
            key = (vocab.text(pair.src), vocab.text(pair.tgt))
            if key in wanted and key not in seen:
                seen.add(key)
                chosen.append(pair)
        missing = len(wanted - seen)
        if missing:
            report.warnings.append(f"{missing} selected pairs not found in the out-of-domain table")
    lines, dropped = merge_phrase_tables(vocab, in_pairs, chosen, PenaltyPolicy())
    report.duplicates_dropped += dropped
    if cfg.qin:
        lines = attach_qin_feature(lines, _model(ctx, "tm", "in"))
    report.output_sizes["phrase_table"] = _write_lines(cfg.path(MERGED_PT), lines)
    ctx.timed("merge-pt", t0)


def stage_merge_reo(ctx: Context) -> None:
    cfg, report = ctx.cfg, ctx.report
    t0 = time.perf_counter()
    vocab = ctx.vocab
    selected_path = cfg.selected or cfg.path(RANKED_PT)
    keys = set()
    if _exists(selected_path):
        for row in _read_tsv(selected_path, 3):
            keys.add((parse_phrase(vocab, row[1]), parse_phrase(vocab, row[2])))
    with open_text(ctx.require("reordering")) as in_fh:
        if cfg.out_reordering:
            with open_text(cfg.out_reordering) as out_fh:
                lines, missing = select_reordering_entries(vocab, in_fh, out_fh, keys)
        else:
            lines, missing = select_reordering_entries(vocab, in_fh, [], keys)
    report.reordering_missing = missing
    report.output_sizes["reordering_table"] = _write_lines(cfg.path(MERGED_REO), lines)
    ctx.timed("merge-reo", t0)


def stage_merge_lm(ctx: Context) -> None:
    cfg, report = ctx.cfg, ctx.report
    t0 = time.perf_counter()
    vocab = ctx.vocab
    in_lm = ctx.lm("in_lm_tgt")
    selected_path = cfg.lm_selected or cfg.path(RANKED_LM)
    entries = []
    if _exists(selected_path) and cfg.out_lm:
        out_lm = ctx.lm("out_lm")
        for row in _read_tsv(selected_path, 2):
            ng = parse_phrase(vocab, row[1])
            if len(ng) > in_lm.order:
                continue
            lp = out_lm.probs.get(ng)
            if lp is None or not out_lm.is_explicit(ng):
                lp = out_lm.cond_logprob(ng[:-1], ng[-1])
            entries.append((ng, lp))
    merged = augment_lm(in_lm, entries) if entries else renormalize(in_lm)
    with open_text(cfg.path(MERGED_LM), "w") as fh:
        serialize_arpa(merged, fh)
    report.output_sizes["lm"] = sum(merged.counts())
    ctx.timed("merge-lm", t0)


def stage_qin(ctx: Context, source: str, target: str) -> None:
    t0 = time.perf_counter()
    with open_text(source) as fh:
        lines = attach_qin_feature(fh, _model(ctx, "tm", "in"))
    ctx.report.output_sizes["phrase_table"] = _write_lines(target, lines)
    ctx.timed("qin-feature", t0)


def write_report(ctx: Context) -> None:
    path = ctx.cfg.report or ctx.cfg.path(REPORT)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(ctx.report.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_pipeline(cfg: RunConfig) -> AdaptReport:
    """All stages in order; outputs land in ``cfg.output_dir``."""
    cfg.validate()
    os.makedirs(cfg.output_dir, exist_ok=True)
    ctx = Context(cfg)
    ctx.require("in_pt")
    if cfg.method == "op" and (cfg.out_pt or cfg.out_lm):
        ctx.require("in_lm_tgt")
        if cfg.out_pt:
            ctx.require("in_lm_src")
    stage_extract(ctx)
    if cfg.method == "nn" or cfg.qin:
        kinds = ("tm", "lm") if cfg.method == "nn" else ("tm",)
        stage_train_nn(ctx, kinds=kinds)
    stage_rank(ctx)
    stage_merge_pt(ctx)
    if cfg.reordering:
        stage_merge_reo(ctx)
    if cfg.in_lm_tgt:
        stage_merge_lm(ctx)
    write_report(ctx)
    return ctx.report
