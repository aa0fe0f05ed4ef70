#!/usr/bin/env python3
"""Download the Planetoid citation datasets (cora, citeseer, pubmed) and
convert them into the TSV layout graph-infill reads.

Usage:
    python3 scripts/fetch_planetoid.py cora citeseer --out data/

Needs network access to github.com (raw Planetoid pickles) plus numpy and
scipy. Re-runs use the cached raw files under <out>/_raw/.

Output layout per dataset (see README "Dataset format"):
    <out>/<name>/meta
    <out>/<name>/edges.tsv
    <out>/<name>/features.tsv   (sparse mode: node <TAB> col <TAB> val)
    <out>/<name>/labels.tsv
"""

import argparse
import os
import pickle
import sys
import urllib.request

import numpy as np
import scipy.sparse as sp

BASE_URL = "https://github.com/kimiyoung/planetoid/raw/master/data"
PARTS = ["x", "y", "tx", "ty", "allx", "ally", "graph", "test.index"]


def fetch(name: str, raw_dir: str) -> dict:
    os.makedirs(raw_dir, exist_ok=True)
    blobs = {}
    for part in PARTS:
        fname = f"ind.{name}.{part}"
        path = os.path.join(raw_dir, fname)
        if not os.path.exists(path):
            url = f"{BASE_URL}/{fname}"
            print(f"  fetching {url}")
            urllib.request.urlretrieve(url, path)
        if part == "test.index":
            blobs[part] = np.loadtxt(path, dtype=int)
        else:
            with open(path, "rb") as fh:
                blobs[part] = pickle.load(fh, encoding="latin1")
    return blobs


def assemble(name: str, blobs: dict):
    """Standard Planetoid assembly: stack allx/tx, restore the shuffled test
    block, and fill the isolated citeseer test gaps with zero rows."""
    test_idx = blobs["test.index"]
    test_range = np.sort(test_idx)

    allx, tx = blobs["allx"], blobs["tx"]
    ally, ty = blobs["ally"], blobs["ty"]
    if name == "citeseer":
        # some test ids are missing from tx; pad the gap with zero rows
        full = np.arange(test_range.min(), test_range.max() + 1)
        tx_ext = sp.lil_matrix((len(full), tx.shape[1]))
        tx_ext[test_range - test_range.min(), :] = tx
        tx = tx_ext.tocsr()
        ty_ext = np.zeros((len(full), ty.shape[1]))
        ty_ext[test_range - test_range.min(), :] = ty
        ty = ty_ext
        test_range = full

    features = sp.vstack((allx, tx)).tolil()
    features[test_idx, :] = features[test_range, :]
    features = features.tocsr()
    labels = np.vstack((ally, ty))
    labels[test_idx, :] = labels[test_range, :]

    graph = blobs["graph"]
    return features, labels, graph


def write_dataset(out_dir: str, features, labels, graph) -> None:
    os.makedirs(out_dir, exist_ok=True)
    n, d = features.shape
    csr = features.tocsr()
    binary = all(float(v) in (0.0, 1.0) for v in csr.data)
    with open(os.path.join(out_dir, "features.tsv"), "w") as fh:
        for node in range(n):
            lo, hi = csr.indptr[node], csr.indptr[node + 1]
            if hi == lo:
                # an all-zero row: emit one explicit zero so the id exists
                fh.write(f"{node}\t0\t0\n")
                continue
            for pos in range(lo, hi):
                val = csr.data[pos]
                v = int(val) if binary else repr(float(val))
                fh.write(f"{node}\t{csr.indices[pos]}\t{v}\n")
    with open(os.path.join(out_dir, "edges.tsv"), "w") as fh:
        for src in sorted(graph):
            for dst in graph[src]:
                if 0 <= src < n and 0 <= dst < n:
                    fh.write(f"{src}\t{dst}\n")
    with open(os.path.join(out_dir, "labels.tsv"), "w") as fh:
        classes = labels.argmax(axis=1)
        for node in range(n):
            fh.write(f"{node}\t{int(classes[node])}\n")
    with open(os.path.join(out_dir, "meta"), "w") as fh:
        fh.write(f"name={os.path.basename(out_dir)}\n")
        fh.write("feature_mode=sparse\n")
        fh.write(f"feature_dim={d}\n")
        fh.write(f"binary={'true' if binary else 'false'}\n")
    print(f"  wrote {out_dir}: {n} nodes, {d} dims, binary={binary}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("names", nargs="+", choices=["cora", "citeseer", "pubmed"])
    parser.add_argument("--out", default="data")
    args = parser.parse_args()
    for name in args.names:
        print(f"{name}:")
        blobs = fetch(name, os.path.join(args.out, "_raw"))
        features, labels, graph = assemble(name, blobs)
        write_dataset(os.path.join(args.out, name), features, labels, graph)
    return 0


if __name__ == "__main__":
    sys.exit(main())
