#!/usr/bin/env python3
"""Counts dataset statistics straight from the column files of a registry."""

import argparse
import collections
import math
import pathlib


def sentences(path):
    out, cur = [], []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            if cur:
                out.append(cur)
            cur = []
            continue
        token, tag = line.split()
        cur.append((token, tag))
    if cur:
        out.append(cur)
    return out


def to_iobes(tags):
    out = []
    for i, tag in enumerate(tags):
        if tag == "O":
            out.append(tag)
            continue
        kind, label = tag.split("-", 1)
        prev = tags[i - 1] if i > 0 else "O"
        nxt = tags[i + 1] if i + 1 < len(tags) else "O"
        begins = kind in "BS" or prev == "O" or prev.split("-", 1)[1] != label
        continues = nxt != "O" and nxt[0] in "IE" and nxt.split("-", 1)[1] == label
        out.append(("B" if continues else "S") if begins else ("I" if continues else "E"))
        out[-1] += "-" + label
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("registry", type=pathlib.Path)
    ap.add_argument("--entropy-base", type=float, default=2.0)
    args = ap.parse_args()
    root = args.registry.parent
    print("task\ttrain_sentences\tdev_sentences\ttest_sentences\ttrain_tokens\ttrain_types"
          "\ttoken_type_ratio\tlabels\tlabel_entropy")
    for line in args.registry.read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        name, scheme, paths = line.split("\t")
        splits = [sentences(root / p) for p in paths.split(",")]
        convert = to_iobes if scheme == "span-prefixed" else (lambda t: t)
        labels = set()
        for split in splits:
            for s in split:
                labels.update(convert([t for _, t in s]))
        train = splits[0]
        tokens = [tok.lower() for s in train for tok, _ in s]
        counts = collections.Counter(t for s in train for t in convert([t for _, t in s]))
        total = sum(counts.values())
        entropy = -sum(c / total * math.log(c / total, args.entropy_base) for c in counts.values())
        print(f"{name}\t{len(splits[0])}\t{len(splits[1])}\t{len(splits[2])}\t{len(tokens)}"
              f"\t{len(set(tokens))}\t{len(tokens) / len(set(tokens)):.4f}\t{len(labels)}"
              f"\t{abs(entropy):.4f}")


if __name__ == "__main__":
    main()
