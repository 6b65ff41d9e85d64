#!/usr/bin/env python3
"""Write a synthetic binarized term-document matrix (one 0/1 row per document).

Stands in for a stemmed, stop-worded news corpus reduced to its 100 most
frequent terms: 20 latent groups, Zipf-like term frequencies, and a group-
specific block of boosted terms per document.
"""
import argparse
import random


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--docs", type=int, default=2000)
    ap.add_argument("--terms", type=int, default=100)
    ap.add_argument("--groups", type=int, default=20)
    ap.add_argument("--seed", type=int, default=20)
    ap.add_argument("--out", default="corpus_synthetic.txt")
    args = ap.parse_args()

    rng = random.Random(args.seed)
    base = [0.35 / (1 + k) ** 0.6 for k in range(args.terms)]
    boosted = [set(rng.sample(range(args.terms), 8)) for _ in range(args.groups)]

    with open(args.out, "w") as f:
        f.write('# {"source": "synthetic-corpus", "seed": %d}\n' % args.seed)
        for _ in range(args.docs):
            g = rng.randrange(args.groups)
            row = []
            for k in range(args.terms):
                p = min(0.9, base[k] * (6.0 if k in boosted[g] else 1.0))
                row.append("1" if rng.random() < p else "0")
            f.write("".join(row) + "\n")


if __name__ == "__main__":
    main()
