"""Command-line front door.

Subcommands cover the full pipeline: frequency extraction, training,
vocabulary building, tokenization (deterministic, sampled, streaming),
detokenization, the BPE baseline, statistics, the noise generator, and color
reports. Every subcommand is deterministic under --seed; exit codes are
0 success, 1 domain error (coverage, divergence), 2 usage or IO error.
"""

from __future__ import annotations

import argparse
import json
import logging
import struct
import sys
from dataclasses import replace

import numpy as np

from . import analysis, bpe, corpus, tokenizer, vocab as vocab_mod
from .autoencoder import Checkpoint, ModelConfig, train
from .errors import FormatError, TrainingDivergedError, VqtokError
from .serialize import parse_symbols, render_symbols

logger = logging.getLogger(__name__)

_TRIPLET_STREAM_MAGIC = b"VQTS"


def _open_input(path: str, binary: bool = True):
    if path == "-":
        return sys.stdin.buffer if binary else sys.stdin
    return open(path, "rb" if binary else "r", encoding=None if binary else "utf-8")


def _open_output(path: str, binary: bool = True):
    if path == "-":
        return sys.stdout.buffer if binary else sys.stdout
    return open(path, "wb" if binary else "w", encoding=None if binary else "utf-8")


def _load_vocabulary(path: str):
    try:
        return vocab_mod.read_vocabulary(path)
    except FileNotFoundError:
        raise FileNotFoundError(f"vocabulary file not found: {path}") from None


# -----------------------------
# subcommands
# -----------------------------

def cmd_freq(args) -> int:
    try:
        stream = _open_input(args.input)
    except FileNotFoundError:
        raise FileNotFoundError(f"corpus file not found: {args.input}") from None
    with stream:
        flist = corpus.extract_frequencies(stream)
    with _open_output(args.out) as out:
        corpus.write_frequency_tsv(flist, out)
    logger.info("%d distinct words, %s total", len(flist), flist.total_words)
    return 0


def _config_from_args(args) -> ModelConfig:
    cfg = ModelConfig()
    overrides = {}
    for name in (
        "codebook_size",
        "latent_dim",
        "hidden_dim",
        "context_width",
        "steps",
        "batch_size",
        "beam_width",
        "lr_initial",
        "lr_final",
        "grad_clip",
        "max_word_length",
    ):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return replace(cfg, **overrides) if overrides else cfg


def cmd_train(args) -> int:
    with _open_input(args.freq) as fh:
        flist = corpus.read_frequency_tsv(fh.read())
    initial = Checkpoint.load(args.resume) if args.resume else None
    config = initial.config if initial else _config_from_args(args)
    if initial and args.steps is not None:
        config = replace(config, steps=args.steps)
        initial = Checkpoint(
            initial.params, initial.ema_params, initial.codebooks,
            initial.usage, config, initial.step, initial.seed,
        )
    try:
        checkpoint = train(flist, config, args.seed, initial=initial)
    except TrainingDivergedError as err:
        dump_path = args.out + ".diagnostics.json"
        with open(dump_path, "w", encoding="utf-8") as fh:
            json.dump({"step": err.step, "loss": repr(err.loss), **err.diagnostics}, fh)
        print(f"training diverged at step {err.step}; diagnostics written to {dump_path}", file=sys.stderr)
        return 1
    checkpoint.save(args.out)
    return 0


def cmd_build_vocab(args) -> int:
    checkpoint = Checkpoint.load(args.checkpoint)
    vocabulary = vocab_mod.build_vocabulary(checkpoint, args.beam_width)
    dawg = vocab_mod.build_dawg(vocabulary)
    vocab_mod.write_vocabulary(args.out, vocabulary, dawg)
    if args.tsv:
        with open(args.tsv, "w", encoding="utf-8", errors="surrogateescape") as fh:
            fh.write(vocab_mod.export_tsv(vocabulary))
    logger.info("%d entries, %d automaton states", len(vocabulary), dawg.state_count)
    return 0


def cmd_vocab_info(args) -> int:
    vocabulary, dawg = _load_vocabulary(args.vocab)
    info = {
        "entries": len(vocabulary),
        "codebook_size": vocabulary.codebook_size,
        "automaton_states": dawg.state_count,
        "covers_all_bytes": vocabulary.covers_all_bytes(),
    }
    if args.format == "json":
        print(json.dumps(info, sort_keys=True))
    else:
        for key, value in info.items():
            print(f"{key}\t{value}")
    return 0


def _render_tokenization(result: tokenizer.Tokenization) -> str:
    return " ".join(
        f"{render_symbols(piece.word.symbols())}:{piece.triplet[0]},{piece.triplet[1]},{piece.triplet[2]}"
        for piece in result.pieces
    )


def _tokenization_json(result: tokenizer.Tokenization) -> str:
    return json.dumps(
        {
            "pieces": [
                {
                    "subword": render_symbols(piece.word.symbols()),
                    "triplet": list(piece.triplet),
                    "score": piece.score,
                }
                for piece in result.pieces
            ],
            "total_score": result.total_score,
        },
        sort_keys=True,
    )


def _write_binary_tokenization(out, result: tokenizer.Tokenization, wide: bool) -> None:
    frame = bytearray()
    from .serialize import write_varint

    write_varint(frame, len(result.pieces))
    for piece in result.pieces:
        frame += struct.pack("<3H" if wide else "<3B", *piece.triplet)
    out.write(bytes(frame))


def cmd_tokenize(args) -> int:
    vocabulary, dawg = _load_vocabulary(args.vocab)
    sampling = args.samples > 0
    params = tokenizer.ScoreParams(
        alpha_split=args.alpha_split,
        sigma_sample=args.sigma_sample,
        mode=tokenizer.SAMPLING if sampling else tokenizer.DETERMINISTIC,
    )
    rng = np.random.default_rng(args.seed)
    runs = args.samples if sampling else 1
    wide = vocabulary.codebook_size > 256
    if args.format == "tsv":  # alias: the text piece stream is the tsv surface
        args.format = "text"
    binary = args.format == "bin"
    out = _open_output(args.out, binary=binary)
    if binary:
        out.write(_TRIPLET_STREAM_MAGIC + (b"\x02" if wide else b"\x01"))
    with _open_input(args.input) as stream:
        for line in stream:
            for raw in corpus.split_words(line):
                word = corpus.BoundedWord.full(raw)
                for _ in range(runs):
                    result = tokenizer.tokenize_word(word, vocabulary, dawg, params, rng if sampling else None)
                    if binary:
                        _write_binary_tokenization(out, result, wide)
                    elif args.format == "json":
                        out.write(_tokenization_json(result) + "\n")
                    else:
                        out.write(_render_tokenization(result) + "\n")
    if out not in (sys.stdout, sys.stdout.buffer):
        out.close()
    return 0


def cmd_detokenize(args) -> int:
    vocabulary, _ = _load_vocabulary(args.vocab)
    triplets = []
    with _open_input(args.input, binary=False) as stream:
        for line in stream:
            for token in line.split():
                parts = token.split(",")
                if len(parts) != 3:
                    raise ValueError(f"expected r,g,b triplet, got {token!r}")
                triplets.append(tuple(int(p) for p in parts))
    data = tokenizer.detokenize(triplets, vocabulary)
    with _open_output(args.out) as out:
        out.write(data + b"\n")
    return 0


def cmd_bpe_train(args) -> int:
    with _open_input(args.freq) as fh:
        flist = corpus.read_frequency_tsv(fh.read())
    table = bpe.train_bpe(flist, args.vocab_size)
    table.save(args.out)
    logger.info("%d merges", len(table))
    return 0


def cmd_bpe_encode(args) -> int:
    table = bpe.MergeTable.load(args.merges)
    rng = np.random.default_rng(args.seed)
    with _open_input(args.input) as stream, _open_output(args.out, binary=False) as out:
        for line in stream:
            for raw in corpus.split_words(line):
                pieces = bpe.encode_bpe(raw, table, args.dropout, rng if args.dropout > 0 else None)
                out.write(" ".join(render_symbols(piece) for piece in pieces) + "\n")
    return 0


def _corpus_words(path: str) -> list[bytes]:
    with _open_input(path) as fh:
        return corpus.split_words(fh.read())


def cmd_stats(args) -> int:
    words = _corpus_words(args.corpus)
    rows: list[tuple] = []
    payload: dict = {}
    if args.report == "splits":
        grid = [float(v) for v in args.grid.split(",")] if args.vocab else [int(v) for v in args.grid.split(",")]
        if args.vocab:
            vocabulary, dawg = _load_vocabulary(args.vocab)

            def make(alpha):
                params = tokenizer.ScoreParams(alpha_split=alpha)
                return lambda word: tokenizer.tokenize_word(
                    corpus.BoundedWord.full(word), vocabulary, dawg, params
                ).pieces

        else:
            table = bpe.MergeTable.load(args.merges)

            def make(size):
                truncated = table.truncated(size)
                return lambda word: bpe.encode_bpe(word, truncated)

        result = analysis.splits_per_word(make, words, grid)
        rows = [("param", "mean_pieces")] + [(param, mean) for param, mean in result.items()]
        payload = {"splits_per_word": {str(k): v for k, v in result.items()}}
    else:  # histogram
        if args.vocab:
            vocabulary, dawg = _load_vocabulary(args.vocab)
            params = tokenizer.ScoreParams(alpha_split=args.alpha_split)
            triplets = [
                piece.triplet
                for word in words
                for piece in tokenizer.tokenize_word(corpus.BoundedWord.full(word), vocabulary, dawg, params).pieces
            ]
            hist = analysis.index_histogram(triplets, vocabulary.codebook_size)
            rows = [("channel", "index", "count")]
            for channel in range(3):
                for index in range(vocabulary.codebook_size):
                    if hist.counts[channel, index]:
                        rows.append((channel, index, int(hist.counts[channel, index])))
            payload = {
                "entropies": list(hist.entropies),
                "normalized_entropies": list(hist.normalized_entropies),
                "counts": hist.counts.tolist(),
            }
        else:
            table = bpe.MergeTable.load(args.merges)
            ids = [
                token
                for word in words
                for token in bpe.token_ids(bpe.encode_bpe(word, table), table)
            ]
            hist = analysis.bpe_token_histogram(ids, 258 + len(table))
            rows = [("token_id", "count")] + sorted(hist.counts.items())
            payload = {
                "entropy": hist.entropy,
                "normalized_entropy": hist.normalized_entropy,
                "counts": {str(k): v for k, v in sorted(hist.counts.items())},
            }
    with _open_output(args.out, binary=False) as out:
        if args.format == "json":
            out.write(json.dumps(payload, sort_keys=True) + "\n")
        else:
            sep = "\t" if args.format == "tsv" else ","
            for row in rows:
                out.write(sep.join(str(v) for v in row) + "\n")
    return 0


def cmd_noise(args) -> int:
    config = analysis.NoiseConfig(p_noise=args.p_noise, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    with _open_input(args.input) as stream, _open_output(args.out) as out:
        text = stream.read().decode("utf-8", errors="surrogateescape")
        noisy = analysis.perturb(text, config, rng)
        out.write(noisy.encode("utf-8", errors="surrogateescape"))
    return 0


def cmd_colorize(args) -> int:
    pieces = []
    with _open_input(args.input, binary=False) as stream:
        for line in stream:
            for token in line.split():
                subword, _, triplet_text = token.rpartition(":")
                if not subword:
                    raise ValueError(f"expected subword:r,g,b, got {token!r}")
                triplet = tuple(int(p) for p in triplet_text.split(","))
                pieces.append((parse_symbols(subword), triplet))
    report = analysis.colorize(pieces, args.codebook_size)
    if args.html:
        with open(args.html, "w", encoding="utf-8") as fh:
            fh.write(report.to_html())
    with _open_output(args.out, binary=False) as out:
        out.write(report.to_text())
    return 0


# -----------------------------
# parser
# -----------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vqtok", description=__doc__)
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("freq", help="extract a word-frequency list from a corpus")
    p.add_argument("input", help="corpus file, or - for stdin")
    p.add_argument("--out", default="-", help="output TSV path")
    p.set_defaults(func=cmd_freq)

    p = sub.add_parser("train", help="train the triplet auto-encoder")
    p.add_argument("--freq", required=True, help="frequency-list TSV")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--codebook-size", dest="codebook_size", type=int)
    p.add_argument("--latent-dim", dest="latent_dim", type=int)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--context-width", dest="context_width", type=int)
    p.add_argument("--beam-width", dest="beam_width", type=int)
    p.add_argument("--max-word-length", dest="max_word_length", type=int)
    p.add_argument("--lr-initial", dest="lr_initial", type=float)
    p.add_argument("--lr-final", dest="lr_final", type=float)
    p.add_argument("--grad-clip", dest="grad_clip", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("build-vocab", help="decode the static vocabulary from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="vocabulary binary output path")
    p.add_argument("--beam-width", dest="beam_width", type=int)
    p.add_argument("--tsv", help="also export a human-readable TSV")
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("vocab-info", help="summarize a vocabulary file")
    p.add_argument("--vocab", required=True)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_vocab_info)

    p = sub.add_parser("tokenize", help="tokenize text into subword triplets")
    p.add_argument("--vocab", required=True)
    p.add_argument("--input", default="-", help="text input, - for stdin")
    p.add_argument("--out", default="-")
    p.add_argument("--alpha-split", dest="alpha_split", type=float, default=0.1)
    p.add_argument("--sigma-sample", dest="sigma_sample", type=float, default=0.02)
    p.add_argument("--samples", type=int, default=0, help="emit N sampled tokenizations per word")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("text", "tsv", "json", "bin"), default="text")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("detokenize", help="reconstruct text from triplets")
    p.add_argument("--vocab", required=True)
    p.add_argument("--input", default="-", help="whitespace-separated r,g,b triplets")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_detokenize)

    p = sub.add_parser("bpe-train", help="train the byte-level BPE baseline")
    p.add_argument("--freq", required=True)
    p.add_argument("--vocab-size", dest="vocab_size", type=int, required=True)
    p.add_argument("--out", required=True, help="merge-table output path")
    p.set_defaults(func=cmd_bpe_train)

    p = sub.add_parser("bpe-encode", help="encode text with a BPE merge table")
    p.add_argument("--merges", required=True)
    p.add_argument("--input", default="-")
    p.add_argument("--out", default="-")
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bpe_encode)

    p = sub.add_parser("stats", help="splits-per-word and index-histogram reports")
    p.add_argument("--corpus", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--vocab")
    group.add_argument("--merges")
    p.add_argument("--report", choices=("splits", "histogram"), default="splits")
    p.add_argument("--grid", default="0,0.1,0.5,1", help="alpha values (vocab) or vocab sizes (merges)")
    p.add_argument("--alpha-split", dest="alpha_split", type=float, default=0.1)
    p.add_argument("--format", choices=("csv", "tsv", "json"), default="csv")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("noise", help="perturb characters with the noise model")
    p.add_argument("--p-noise", dest="p_noise", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input", default="-")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("colorize", help="render a token stream as RGB colors")
    p.add_argument("--input", default="-", help="tokenize text-format output")
    p.add_argument("--out", default="-")
    p.add_argument("--html", help="also write a self-contained HTML fragment")
    p.add_argument("--codebook-size", dest="codebook_size", type=int, default=256)
    p.set_defaults(func=cmd_colorize)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except BrokenPipeError:
        # downstream consumer closed the pipe (e.g. head); not our error
        import os

        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except FormatError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (FileNotFoundError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except VqtokError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
