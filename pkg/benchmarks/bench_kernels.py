"""Benchmark the native kernels against the pure-Python fallback.

Times three stages on a clustered synthetic dataset: index build, the
brute-force scan, and tree search. Run from the repo root:

    python benchmarks/bench_kernels.py [--n 10000] [--queries 100] [--dim 64]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from spelunker import brute_force_knn, build_ball_tree, knn_search
from spelunker._kernels import backends
from spelunker.metric import pack_query
from spelunker.preprocess import ProcessedDataset, ScalerStats
from spelunker.schema import (
    DatasetSchema,
    FieldKind,
    FieldSpec,
    Flag,
    Number,
    RawRecord,
    Text,
)


def clustered_dataset(rng, n, dim, clusters=50):
    fields = (FieldSpec("n0", FieldKind.NUMERIC), FieldSpec("n1", FieldKind.NUMERIC),
              FieldSpec("b0", FieldKind.BOOLEAN),
              FieldSpec("c0", FieldKind.CATEGORICAL),
              FieldSpec("c1", FieldKind.CATEGORICAL),
              FieldSpec("c2", FieldKind.CATEGORICAL))
    schema = DatasetSchema(fields=fields)
    n_unique = clusters * 3
    emb = rng.normal(size=(n_unique, dim))
    emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    emb = emb.astype(np.float32).astype(np.float64)
    centers = rng.normal(scale=5.0, size=(clusters, 2))
    cluster = rng.integers(0, clusters, size=n)
    num = centers[cluster] + rng.normal(scale=0.05, size=(n, 2))
    boo = (cluster % 2).astype(np.uint8).reshape(n, 1)
    cat = np.zeros((n, 3), dtype=np.int32)
    for f in range(3):
        cat[:, f] = (cluster * 3 + rng.integers(0, 3, size=n)) % n_unique
    ids = np.arange(n, dtype=np.int64)
    return ProcessedDataset(
        schema=schema, ids=ids,
        num=np.ascontiguousarray(num), num_miss=np.zeros((n, 2), dtype=np.uint8),
        boo=np.ascontiguousarray(boo), boo_miss=np.zeros((n, 1), dtype=np.uint8),
        cat=np.ascontiguousarray(cat), emb=np.ascontiguousarray(emb),
        scalers={"n0": ScalerStats(0, 1, False), "n1": ScalerStats(0, 1, False)},
        embed_dim=dim, embedder_meta={"kind": "local", "dim": dim},
        originals={int(i): RawRecord(id=int(i), values={}) for i in ids})


def make_queries(rng, ds, count):
    out = []
    for _ in range(count):
        row = int(rng.integers(0, ds.n))
        values = {
            "n0": Number(float(ds.num[row, 0] + rng.normal(scale=0.02))),
            "n1": Number(float(ds.num[row, 1] + rng.normal(scale=0.02))),
            "b0": Flag(int(ds.boo[row, 0])),
            "c0": Text(vector=ds.emb[ds.cat[row, 0]], original="q"),
            "c1": Text(vector=ds.emb[ds.cat[row, 1]], original="q"),
            "c2": Text(vector=ds.emb[ds.cat[row, 2]], original="q"),
        }
        out.append(pack_query(ds, values, {name: 1.0 for name in values}))
    return out


def bench(backend_name, ds, queries, k, leaf_size):
    import spelunker._kernels as kernels

    saved = (kernels._impl, kernels.BACKEND, kernels.ref_sq_distances,
             kernels.query_sq_distances, kernels.tree_knn)
    impl = backends()[backend_name]
    kernels._impl = impl
    kernels.BACKEND = backend_name
    kernels.ref_sq_distances = impl.ref_sq_distances
    kernels.query_sq_distances = impl.query_sq_distances
    kernels.tree_knn = getattr(impl, "tree_knn", None)
    try:
        t0 = time.monotonic()
        tree = build_ball_tree(ds, leaf_size=leaf_size)
        build_s = time.monotonic() - t0

        t0 = time.monotonic()
        tree_hits = [knn_search(tree, q, k) for q in queries]
        tree_s = time.monotonic() - t0

        t0 = time.monotonic()
        brute_hits = [brute_force_knn(ds, q, k) for q in queries]
        brute_s = time.monotonic() - t0

        ok = all([h.id for h in a] == [h.id for h in b]
                 for a, b in zip(tree_hits, brute_hits))
        return build_s, tree_s, brute_s, ok
    finally:
        (kernels._impl, kernels.BACKEND, kernels.ref_sq_distances,
         kernels.query_sq_distances, kernels.tree_knn) = saved


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=10_000)
    parser.add_argument("--queries", type=int, default=100)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--k", type=int, default=10)
    parser.add_argument("--leaf-size", type=int, default=16)
    args = parser.parse_args()

    rng = np.random.default_rng(0xBE7C)
    ds = clustered_dataset(rng, args.n, args.dim)
    queries = make_queries(rng, ds, args.queries)

    names = sorted(backends())
    print(f"dataset: {args.n} records, dim {args.dim}; "
          f"{args.queries} queries at k={args.k}, leaf_size={args.leaf_size}")
    print(f"{'backend':<8} {'build':>9} {'tree':>9} {'brute':>9} "
          f"{'tree/brute':>11} {'exact':>6}")
    for name in names:
        build_s, tree_s, brute_s, ok = bench(name, ds, queries,
                                             args.k, args.leaf_size)
        print(f"{name:<8} {build_s:>8.3f}s {tree_s:>8.3f}s {brute_s:>8.3f}s "
              f"{tree_s / brute_s:>10.2f}x {'yes' if ok else 'NO':>6}")


if __name__ == "__main__":
    main()
