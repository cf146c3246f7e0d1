#!/usr/bin/env python3
"""Train the frozen BPE merge table shipped as package data.

Usage:
    python3 tools/train_bpe_vocab.py [--merges N] [--corpus FILE] [--out FILE]

Training is deterministic: the most frequent adjacent pair wins each
round, ties broken by the lexicographically smallest pair, so re-running
on the same corpus reproduces the committed file byte for byte.
"""

from __future__ import annotations

import argparse
import collections
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from thermoharvest.bpe import piece_to_symbols, pretokenize  # noqa: E402


def train(corpus: str, n_merges: int) -> list[tuple[str, str]]:
    words = collections.Counter(pretokenize(corpus))
    table: dict[tuple[str, ...], int] = {
        piece_to_symbols(piece): freq for piece, freq in words.items()
    }
    merges: list[tuple[str, str]] = []
    for _ in range(n_merges):
        pair_freq: collections.Counter = collections.Counter()
        for word, freq in table.items():
            for pair in zip(word, word[1:]):
                pair_freq[pair] += freq
        if not pair_freq:
            break
        best_count = max(pair_freq.values())
        if best_count < 2:
            break
        best = min(p for p, c in pair_freq.items() if c == best_count)
        merges.append(best)
        new_table: dict[tuple[str, ...], int] = {}
        for word, freq in table.items():
            out: list[str] = []
            i = 0
            while i < len(word):
                if i + 1 < len(word) and (word[i], word[i + 1]) == best:
                    out.append(word[i] + word[i + 1])
                    i += 2
                else:
                    out.append(word[i])
                    i += 1
            key = tuple(out)
            new_table[key] = new_table.get(key, 0) + freq
        table = new_table
    return merges


def main() -> None:
    here = pathlib.Path(__file__).resolve().parent
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--merges", type=int, default=768)
    ap.add_argument("--corpus", default=str(here / "seed_corpus.txt"))
    ap.add_argument(
        "--out",
        default=str(here.parent / "src" / "thermoharvest" / "data" / "vocab_default.txt"),
    )
    ap.add_argument("--name", default="thermo-bpe-v1")
    args = ap.parse_args()

    corpus = pathlib.Path(args.corpus).read_text(encoding="utf-8")
    merges = train(corpus, args.merges)
    lines = ["#version: 1", f"#name: {args.name}"]
    lines.extend(f"{a} {b}" for a, b in merges)
    pathlib.Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(merges)} merges to {args.out}")


if __name__ == "__main__":
    main()
