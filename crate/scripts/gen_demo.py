#!/usr/bin/env python3
"""Regenerate the committed data/demo dataset: four homophilous blocks of 50
nodes with block-correlated binary features. Deterministic (seeded)."""

import random

random.seed(4)
blocks, per, dims = 4, 50, 32
n = blocks * per
dims_per = dims // blocks

edges = set()
for i in range(n):
    b = i // per
    for _ in range(3):
        if random.random() < 0.9:
            j = b * per + random.randrange(per)
        else:
            j = random.randrange(n)
        if i != j:
            edges.add((i, j))

with open("data/demo/edges.tsv", "w") as fh:
    for s, d in sorted(edges):
        fh.write(f"{s}\t{d}\n")

with open("data/demo/features.tsv", "w") as fh:
    for i in range(n):
        b = i // per
        row = []
        for c in range(dims):
            p = 0.35 if c // dims_per == b else 0.03
            row.append("1" if random.random() < p else "0")
        fh.write(str(i) + "\t" + "\t".join(row) + "\n")

with open("data/demo/labels.tsv", "w") as fh:
    for i in range(n):
        fh.write(f"{i}\t{i // per}\n")

with open("data/demo/meta", "w") as fh:
    fh.write("name=demo\nfeature_mode=dense\nfeature_dim=32\nbinary=true\n")

print(f"demo dataset: {n} nodes, {len(edges)} edge lines")
