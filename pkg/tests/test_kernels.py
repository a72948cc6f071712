import numpy as np
import pytest

from spelunker import combined_distance
from spelunker._kernels import backends
from spelunker.balltree import _query_args
from spelunker.metric import pack_query

from conftest import synth_dataset, synth_query

BACKENDS = backends()


def _all_rows(ds):
    return np.arange(ds.n, dtype=np.int64)


@pytest.mark.skipif("native" not in BACKENDS, reason="native kernels not built")
def test_query_kernels_agree_across_backends():
    rng = np.random.default_rng(17)
    ds = synth_dataset(rng, 80, n_num=2, n_bool=2, n_cat=3, dim=32)
    rows = _all_rows(ds)
    for _ in range(30):
        values, weights = synth_query(rng, ds)
        packed = pack_query(ds, values, weights)
        outs = {}
        for name, impl in BACKENDS.items():
            out = np.empty(ds.n)
            impl.query_sq_distances(*_query_args(ds, packed), rows, out)
            outs[name] = out
        assert np.allclose(outs["native"], outs["python"], atol=1e-12, rtol=0)


@pytest.mark.skipif("native" not in BACKENDS, reason="native kernels not built")
def test_ref_kernels_agree_across_backends():
    rng = np.random.default_rng(23)
    ds = synth_dataset(rng, 60, n_num=1, n_bool=1, n_cat=2, dim=16)
    rows = _all_rows(ds)
    for row in range(0, 60, 7):
        outs = {}
        for name, impl in BACKENDS.items():
            out = np.empty(ds.n)
            impl.ref_sq_distances(ds.num, ds.num_miss, ds.boo, ds.boo_miss,
                                  ds.cat, ds.emb, row, rows, out)
            outs[name] = out
        assert np.allclose(outs["native"], outs["python"], atol=1e-12, rtol=0)
        assert outs["native"][row] == 0.0


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_kernel_matches_scalar_metric_path(name):
    # dual route: array kernels vs the scalar combined_distance
    impl = BACKENDS[name]
    rng = np.random.default_rng(41)
    ds = synth_dataset(rng, 40, n_num=2, n_bool=1, n_cat=2, dim=16)
    rows = _all_rows(ds)
    for _ in range(20):
        values, weights = synth_query(rng, ds)
        packed = pack_query(ds, values, weights)
        out = np.empty(ds.n)
        impl.query_sq_distances(*_query_args(ds, packed), rows, out)
        query = {nm: (v, weights[nm]) for nm, v in values.items()}
        for row in range(0, ds.n, 9):
            record = ds.record_values(int(ds.ids[row]))
            scalar = combined_distance(ds.schema, query, record).total
            assert np.sqrt(out[row]) == pytest.approx(scalar, abs=1e-9)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_ref_kernel_matches_unit_weight_query(name):
    impl = BACKENDS[name]
    rng = np.random.default_rng(59)
    ds = synth_dataset(rng, 30)
    rows = _all_rows(ds)
    for row in (0, 7, 29):
        ref = np.empty(ds.n)
        impl.ref_sq_distances(ds.num, ds.num_miss, ds.boo, ds.boo_miss,
                              ds.cat, ds.emb, row, rows, ref)
        # pack the same record as an all-fields unit-weight query
        values = ds.record_values(int(ds.ids[row]))
        weights = {nm: 1.0 for nm in ds.schema.field_names}
        packed = pack_query(ds, dict(values), weights)
        out = np.empty(ds.n)
        impl.query_sq_distances(*_query_args(ds, packed), rows, out)
        assert np.allclose(ref, out, atol=1e-12, rtol=0)


@pytest.mark.skipif("native" not in BACKENDS, reason="native kernels not built")
def test_native_traversal_matches_python_walker():
    from spelunker import _kernels
    if _kernels.tree_knn is None:
        pytest.skip("active backend has no native traversal")
    from spelunker.balltree import _knn_native, _knn_python
    from spelunker import build_ball_tree, SearchStats

    rng = np.random.default_rng(71)
    for trial in range(15):
        n = int(rng.integers(2, 150))
        ds = synth_dataset(rng, n, shuffle_ids=bool(trial % 2))
        tree = build_ball_tree(ds, leaf_size=int(rng.integers(1, 12)))
        for _ in range(4):
            values, weights = synth_query(rng, ds)
            packed = pack_query(ds, values, weights)
            k = int(rng.choice([1, 3, 10]))
            st_n, st_p = SearchStats(), SearchStats()
            a = _knn_native(tree, packed, k, st_n)
            b = _knn_python(tree, packed, k, st_p)
            assert [h.id for h in a] == [h.id for h in b]
            for x, y in zip(a, b):
                assert abs(x.distance - y.distance) <= 1e-12
            assert (st_n.evaluated, st_n.nodes_visited, st_n.nodes_pruned) == \
                (st_p.evaluated, st_p.nodes_visited, st_p.nodes_pruned)
