"""Command-line entry point: ``phrase-adapt <subcommand> [flags]``.

Settings come from flags, then an optional ``--config`` file, then
built-in defaults. The config file is flat ``key = value`` text, one
setting per line, keys spelled like the long flags without the leading
dashes (``top-k = 500``); ``#`` starts a comment.

Exit codes: 0 success, 1 configuration error, 2 input format error,
3 numerical/normalization error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields

from . import pipeline as pl
from .errors import AdaptError, InputError
from .ngram_lm import parse_arpa
from .parallel import THREADS_ENV, default_threads
from .phrase_table import table_stats
from .textio import open_text
from .vocab import Vocab

logger = logging.getLogger("phrase_adapt")

SUBCOMMANDS = {
    "index": "build affix indexes over the in-domain table and report their size",
    "extract": "write connecting candidates (bilingual and/or monolingual)",
    "rank-op": "rank candidates by occurring probability",
    "train-nn": "train in-domain and out-of-domain neural scorers",
    "rank-nn": "rank candidates by neural score difference",
    "merge-pt": "merge selected pairs into the in-domain phrase table",
    "merge-lm": "insert selected n-grams into the in-domain LM and renormalize",
    "merge-reo": "mirror the selection into the reordering table",
    "qin-feature": "append the in-domain neural translation score to a phrase table",
    "stats": "print table and LM statistics",
    "pipeline": "run extract, rank and all merges in one go",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageError(message)


def _common(parser: argparse.ArgumentParser) -> None:
    s = argparse.SUPPRESS
    g = parser.add_argument_group("inputs")
    g.add_argument("--in-pt", default=s, help="in-domain phrase table")
    g.add_argument("--out-pt", default=s, help="out-of-domain phrase table")
    g.add_argument("--in-lm-src", default=s, help="in-domain source-side ARPA LM")
    g.add_argument("--in-lm-tgt", default=s, help="in-domain target-side ARPA LM")
    g.add_argument("--out-lm", default=s, help="out-of-domain target-side ARPA LM")
    g.add_argument("--reordering", default=s, help="in-domain lexicalized reordering table")
    g.add_argument("--out-reordering", default=s, help="out-of-domain lexicalized reordering table")
    g.add_argument("--config", default=s, help="flat key = value settings file")

    g = parser.add_argument_group("outputs")
    g.add_argument("-o", "--output-dir", default=s, help="directory for all outputs (default adapt-out)")
    g.add_argument("--report", default=s, help="JSON report path (default <output-dir>/report.json)")
    g.add_argument("--candidates", default=s, help="bilingual candidate TSV path")
    g.add_argument("--lm-candidates", default=s, help="monolingual candidate TSV path")
    g.add_argument("--selected", default=s, help="ranked bilingual TSV path")
    g.add_argument("--lm-selected", default=s, help="ranked monolingual TSV path")

    g = parser.add_argument_group("selection")
    g.add_argument("--case", default=s, help="accepted pair cases: a, b, c, d or a comma list (default a)")
    g.add_argument("--method", default=s, choices=pl.METHODS, help="ranking method (default op)")
    g.add_argument("--top-k", type=int, default=s, help="keep the k best phrase pairs")
    g.add_argument("--min-score", type=float, default=s, help="keep phrase pairs scoring at least this")
    g.add_argument("--lm-top-k", type=int, default=s, help="keep the k best n-grams (default all)")
    g.add_argument("--lm-min-score", type=float, default=s, help="keep n-grams scoring at least this")
    g.add_argument("--max-affix-len", type=int, default=s)
    g.add_argument("--occurrence-cap", type=int, default=s)
    g.add_argument("--qin", action="store_true", default=s, help="append the Q_in feature to the merged table")

    g = parser.add_argument_group("neural scorer")
    g.add_argument("--kind", default=s, choices=("tm", "lm", "both"), help="train-nn: which scorer(s)")
    g.add_argument("--side", default=s, choices=("in", "out", "both"), help="train-nn: which domain(s)")
    g.add_argument("--window", type=int, default=s)
    g.add_argument("--projection-dim", type=int, default=s)
    g.add_argument("--hidden-dim", type=int, default=s)
    g.add_argument("--learning-rate", type=float, default=s)
    g.add_argument("--epochs", type=int, default=s)
    g.add_argument("--batch-size", type=int, default=s)
    g.add_argument("--sample-rate", type=float, default=s, help="out-of-domain training subsample rate")
    for kind in ("tm", "lm"):
        for side in ("in", "out"):
            g.add_argument(f"--nn-{side}-{kind}", default=s, help=f"{side}-domain {kind} model path")

    g = parser.add_argument_group("execution")
    g.add_argument("--seed", type=int, default=s)
    g.add_argument("--threads", type=int, default=s, help=f"worker threads (env {THREADS_ENV})")
    g.add_argument("--lenient", action="store_true", default=s, help="skip malformed table lines")
    g.add_argument("--input", default=s, help="qin-feature: table to annotate")
    g.add_argument("--output", default=s, help="qin-feature: annotated table path")
    g.add_argument("-v", "--verbose", action="store_true", default=s)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="phrase-adapt", description="Connecting-phrase adaptation of MT assets.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name, help_text in SUBCOMMANDS.items():
        _common(sub.add_parser(name, help=help_text, description=help_text))
    return parser


def read_config_file(path: str) -> dict[str, str]:
    settings = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{lineno}: expected key = value")
            key, value = (x.strip() for x in line.split("=", 1))
            settings[key.replace("-", "_")] = value
    return settings


_EXTRA_KEYS = {"kind", "side", "input", "output", "verbose", "config"}


def _coerce(name: str, value: str, cfg_fields: dict):
    ftype = str(cfg_fields[name].type)
    if "None" in ftype and value.lower() in ("none", ""):
        return None
    if "bool" in ftype:
        return value.lower() in ("1", "true", "yes", "on")
    if "int" in ftype:
        return int(value)
    if "float" in ftype:
        return float(value)
    return value


def make_config(args: argparse.Namespace) -> tuple[pl.RunConfig, dict]:
    """Layer defaults < config file < flags into a RunConfig plus extra settings."""
    given = {k: v for k, v in vars(args).items() if k != "command"}
    cfg_fields = {f.name: f for f in fields(pl.RunConfig)}
    merged: dict = {}
    if "config" in given:
        for key, value in read_config_file(given["config"]).items():
            if key in cfg_fields:
                try:
                    merged[key] = _coerce(key, value, cfg_fields)
                except ValueError:
                    raise InputError(f"bad value for {key}: {value!r}") from None
            elif key in _EXTRA_KEYS:
                merged[key] = value
            else:
                raise InputError(f"unknown config key {key!r}")
    merged.update(given)
    extras = {k: merged.pop(k) for k in list(merged) if k in _EXTRA_KEYS}
    if "threads" not in merged:
        merged["threads"] = default_threads()
    cfg = pl.RunConfig(**merged)
    cfg.validate()
    return cfg, extras


def _pick(value, default):
    return value if value is not None else default


def dispatch(command: str, cfg: pl.RunConfig, extras: dict) -> None:
    os.makedirs(cfg.output_dir, exist_ok=True)
    ctx = pl.Context(cfg)
    if command == "pipeline":
        pl.run_pipeline(cfg)
        return
    if command == "index":
        pl.stage_index(ctx)
    elif command == "extract":
        ctx.require("in_pt")
        if not (cfg.out_pt or cfg.out_lm):
            raise InputError("extract needs --out-pt and/or --out-lm")
        pl.stage_extract(ctx)
    elif command == "rank-op":
        pl.stage_rank(ctx, "op")
    elif command == "rank-nn":
        pl.stage_rank(ctx, "nn")
    elif command == "train-nn":
        ctx.require("in_pt")
        kind = _pick(extras.get("kind"), "both")
        side = _pick(extras.get("side"), "both")
        kinds = ("tm", "lm") if kind == "both" else (kind,)
        sides = ("in", "out") if side == "both" else (side,)
        if "out" in sides:
            ctx.require("out_pt")
        pl.stage_train_nn(ctx, kinds, sides)
    elif command == "merge-pt":
        pl.stage_merge_pt(ctx)
    elif command == "merge-lm":
        pl.stage_merge_lm(ctx)
    elif command == "merge-reo":
        pl.stage_merge_reo(ctx)
    elif command == "qin-feature":
        source = _pick(extras.get("input"), cfg.path(pl.MERGED_PT))
        target = _pick(extras.get("output"), source)
        pl.stage_qin(ctx, source, target)
    elif command == "stats":
        print(json.dumps(collect_stats(cfg), indent=2, sort_keys=True))
        return
    pl.write_report(ctx)


def collect_stats(cfg: pl.RunConfig) -> dict:
    vocab = Vocab()
    out = {}
    for attr in ("in_pt", "out_pt", "reordering", "out_reordering"):
        path = getattr(cfg, attr)
        if path:
            with open_text(path) as fh:
                out[attr] = table_stats(fh, vocab, strict=not cfg.lenient).as_dict()
    for attr in ("in_lm_src", "in_lm_tgt", "out_lm"):
        path = getattr(cfg, attr)
        if path:
            with open_text(path) as fh:
                lm = parse_arpa(fh, vocab)
            out[attr] = {"order": lm.order, "counts": lm.counts()}
    if not out:
        raise InputError("stats needs at least one table or LM")
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg, extras = make_config(args)
        dispatch(args.command, cfg, extras)
    except AdaptError as exc:
        if exc.exit_code == 1:
            parser.print_usage(sys.stderr)
        print(f"phrase-adapt: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"phrase-adapt: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
