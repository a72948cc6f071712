"""Exact k-nearest-neighbor search over a pivot-based ball tree.

Every node bounds its members inside a ball around an actual data record
(the pivot) under the reference metric: the combined distance with all
schema fields at weight 1. Per-query weighted searches stay sound because
``d_w(a, b) <= sqrt(max_weight) * d_ref(a, b)``, so a node can be skipped
once ``d_w(query, pivot) - sqrt(max_weight) * radius`` exceeds the current
k-th best distance. Ties are broken by ascending record id everywhere,
which makes results deterministic and lets the brute-force scan serve as a
bitwise oracle.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kernels
from .errors import EmptyDataset, ValidationError
from .metric import DistanceBreakdown, PackedQuery, breakdown_for_row
from .preprocess import ProcessedDataset

DEFAULT_LEAF_SIZE = 16

# Pruning slack absorbs last-ulp float rounding in the bound computation.
# It can only under-prune, never skip a node that matters.
_PRUNE_SLACK = 1e-12


@dataclass
class BallNode:
    pivot_row: int
    pivot_id: int
    radius: float
    left: "BallNode | None" = None
    right: "BallNode | None" = None
    leaf_rows: np.ndarray | None = None  # id-sorted member rows (leaves only)
    _member_rows: list | None = field(default=None, repr=False, compare=False)

    @property
    def is_leaf(self) -> bool:
        return self.leaf_rows is not None

    @property
    def member_rows(self) -> list:
        """Leaf rows as plain ints (cached; hot path of the search loop)."""
        if self._member_rows is None:
            self._member_rows = [int(r) for r in self.leaf_rows]
        return self._member_rows


@dataclass
class BallTree:
    root: BallNode
    dataset: ProcessedDataset
    leaf_size: int


@dataclass(frozen=True)
class SearchHit:
    id: int
    distance: float
    breakdown: DistanceBreakdown


@dataclass
class SearchStats:
    """Instrumentation: distinct record distance evaluations and node visits."""

    evaluated: int = 0
    nodes_visited: int = 0
    nodes_pruned: int = 0


def _ref_distances(ds: ProcessedDataset, row: int, rows: np.ndarray) -> np.ndarray:
    out = np.empty(rows.shape[0], dtype=np.float64)
    kernels.ref_sq_distances(ds.num, ds.num_miss, ds.boo, ds.boo_miss,
                             ds.cat, ds.emb, int(row), rows, out)
    return np.sqrt(out)


def build_ball_tree(dataset: ProcessedDataset, leaf_size: int = DEFAULT_LEAF_SIZE) -> BallTree:
    """Deterministic construction.

    Per node: seed = lowest-id member; pivot p1 = member farthest from the
    seed (ties to the lower id); p2 = member farthest from p1; members go to
    the nearer of p1/p2 (ties to p1's side), falling back to an id-median
    split when one side comes out empty. Radius = max reference distance
    from p1 to any member. Nodes split until they hold <= leaf_size rows.
    """
    if dataset.n == 0:
        raise EmptyDataset("cannot build an index over an empty dataset")
    if leaf_size < 1:
        raise ValidationError(f"leaf_size must be >= 1, got {leaf_size}")

    ids = dataset.ids
    order = np.argsort(ids, kind="stable")
    root_rows = np.arange(dataset.n, dtype=np.int64)[order]

    def make(rows: np.ndarray) -> BallNode:
        # rows arrive sorted by id, so argmax picks the lowest id among ties
        seed = int(rows[0])
        d_seed = _ref_distances(dataset, seed, rows)
        p1 = int(rows[int(np.argmax(d_seed))])
        d_p1 = _ref_distances(dataset, p1, rows)
        node = BallNode(pivot_row=p1, pivot_id=int(ids[p1]),
                        radius=float(d_p1.max()))
        if rows.shape[0] <= leaf_size:
            node.leaf_rows = rows
            return node
        p2 = int(rows[int(np.argmax(d_p1))])
        d_p2 = _ref_distances(dataset, p2, rows)
        to_p1 = d_p1 <= d_p2
        left_rows = rows[to_p1]
        right_rows = rows[~to_p1]
        if left_rows.shape[0] == 0 or right_rows.shape[0] == 0:
            half = (rows.shape[0] + 1) // 2
            left_rows, right_rows = rows[:half], rows[half:]
        node.left = make(left_rows)
        node.right = make(right_rows)
        return node

    # Explicit recursion limit guard: splits can be very unbalanced.
    import sys
    limit = sys.getrecursionlimit()
    needed = dataset.n + 100
    if needed > limit:
        sys.setrecursionlimit(needed)
    try:
        root = make(root_rows)
    finally:
        if needed > limit:
            sys.setrecursionlimit(limit)
    return BallTree(root=root, dataset=dataset, leaf_size=leaf_size)


def _ids_list(ds: ProcessedDataset) -> list:
    cached = getattr(ds, "_ids_py", None)
    if cached is None:
        cached = ds.ids.tolist()
        ds._ids_py = cached
    return cached


@dataclass
class _FlatTree:
    """Array form of the tree consumed by the native traversal kernel."""

    pivot: np.ndarray       # i64[N] pivot rows, pre-order
    radius: np.ndarray      # f64[N]
    left: np.ndarray        # i32[N], -1 for leaves
    right: np.ndarray       # i32[N]
    leaf_start: np.ndarray  # i32[N] slice into leaf_rows
    leaf_end: np.ndarray    # i32[N]
    leaf_rows: np.ndarray   # i64[n]


def _flatten(tree: BallTree) -> _FlatTree:
    cached = getattr(tree, "_flat", None)
    if cached is not None:
        return cached
    pivot: list[int] = []
    radius: list[float] = []
    left: list[int] = []
    right: list[int] = []
    lstart: list[int] = []
    lend: list[int] = []
    leaf_rows: list[int] = []
    stack: list[tuple[BallNode, int, bool]] = [(tree.root, -1, False)]
    while stack:
        node, parent, is_left = stack.pop()
        idx = len(pivot)
        if parent >= 0:
            if is_left:
                left[parent] = idx
            else:
                right[parent] = idx
        pivot.append(node.pivot_row)
        radius.append(node.radius)
        left.append(-1)
        right.append(-1)
        if node.is_leaf:
            lstart.append(len(leaf_rows))
            leaf_rows.extend(int(r) for r in node.leaf_rows)
            lend.append(len(leaf_rows))
        else:
            lstart.append(0)
            lend.append(0)
            stack.append((node.right, idx, False))
            stack.append((node.left, idx, True))
    flat = _FlatTree(
        pivot=np.asarray(pivot, dtype=np.int64),
        radius=np.asarray(radius, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        leaf_start=np.asarray(lstart, dtype=np.int32),
        leaf_end=np.asarray(lend, dtype=np.int32),
        leaf_rows=np.asarray(leaf_rows, dtype=np.int64),
    )
    tree._flat = flat
    return flat


def _query_args(ds: ProcessedDataset, q: PackedQuery) -> tuple:
    return (ds.num, ds.num_miss, ds.boo, ds.boo_miss, ds.cat, ds.emb,
            q.num_cols, q.num_vals, q.num_miss, q.num_w,
            q.bool_cols, q.bool_vals, q.bool_miss, q.bool_w,
            q.cat_cols, q.cat_vecs, q.cat_miss, q.cat_w)


def knn_search(tree: BallTree, query: PackedQuery, k: int,
               stats: SearchStats | None = None) -> list[SearchHit]:
    """Exact top-k hits under the weighted query metric.

    Depth-first traversal, nearer-pivot child first; a node is skipped only
    when even its closest possible member cannot beat the current k-th best
    distance. Nodes whose bound ties the k-th best are still explored so id
    tie-breaking matches the brute-force ordering.

    Runs inside the native kernel when it is available; the Python walker
    below implements the identical algorithm.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if kernels.tree_knn is not None:
        return _knn_native(tree, query, k, stats)
    return _knn_python(tree, query, k, stats)


def _knn_native(tree: BallTree, query: PackedQuery, k: int,
                stats: SearchStats | None) -> list[SearchHit]:
    ds = tree.dataset
    flat = _flatten(tree)
    stats_out = np.zeros(3, dtype=np.int64)
    dists, ids = kernels.tree_knn(
        *_query_args(ds, query),
        flat.pivot, flat.radius, flat.left, flat.right,
        flat.leaf_start, flat.leaf_end, flat.leaf_rows,
        ds.ids, math.sqrt(query.max_weight), _PRUNE_SLACK,
        min(k, ds.n), stats_out)
    if stats is not None:
        stats.evaluated += int(stats_out[0])
        stats.nodes_visited += int(stats_out[1])
        stats.nodes_pruned += int(stats_out[2])
    order = np.lexsort((ids, dists))
    return [_hit(ds, query, rec_id=int(ids[i]), dist=float(dists[i]))
            for i in order]


def _knn_python(tree: BallTree, query: PackedQuery, k: int,
                stats: SearchStats | None) -> list[SearchHit]:
    ds = tree.dataset
    n = ds.n
    args = _query_args(ds, query)
    s_bound = math.sqrt(query.max_weight)
    ids = _ids_list(ds)
    seen = bytearray(n)
    cache = [0.0] * n
    out_buf = np.empty(max(tree.leaf_size, 2), dtype=np.float64)
    heap: list[tuple[float, int]] = []  # (-distance, -id): root is the worst kept hit

    def consider(dist: float, rec_id: int) -> None:
        item = (-dist, -rec_id)
        if len(heap) < k:
            heapq.heappush(heap, item)
        elif item > heap[0]:
            heapq.heapreplace(heap, item)

    def evaluate(rows) -> None:
        fresh = [r for r in rows if not seen[r]]
        if not fresh:
            return
        m = len(fresh)
        out = out_buf[:m] if m <= out_buf.shape[0] else np.empty(m, dtype=np.float64)
        kernels.query_sq_distances(*args, np.asarray(fresh, dtype=np.int64), out)
        np.sqrt(out, out=out)
        if stats is not None:
            stats.evaluated += m
        for r, dist in zip(fresh, out.tolist()):
            seen[r] = 1
            cache[r] = dist
            consider(dist, ids[r])

    root = tree.root
    evaluate((root.pivot_row,))
    stack = [root]
    while stack:
        node = stack.pop()
        if stats is not None:
            stats.nodes_visited += 1
        worst = -heap[0][0] if len(heap) == k else math.inf
        if cache[node.pivot_row] - s_bound * node.radius > worst + _PRUNE_SLACK:
            if stats is not None:
                stats.nodes_pruned += 1
            continue
        if node.is_leaf:
            evaluate(node.member_rows)
            continue
        left, right = node.left, node.right
        lp, rp = left.pivot_row, right.pivot_row
        if seen[lp] and seen[rp]:
            pass
        else:
            evaluate((lp, rp))
        if cache[lp] <= cache[rp]:
            stack.append(right)
            stack.append(left)
        else:
            stack.append(left)
            stack.append(right)

    ranked = sorted((-neg_d, -neg_id) for neg_d, neg_id in heap)
    return [_hit(ds, query, rec_id=rec_id, dist=dist) for dist, rec_id in ranked]


def brute_force_knn(dataset: ProcessedDataset, query: PackedQuery, k: int) -> list[SearchHit]:
    """Exactness oracle: full scan, sort by (distance, id), truncate to k."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    n = dataset.n
    rows = np.arange(n, dtype=np.int64)
    out = np.empty(n, dtype=np.float64)
    kernels.query_sq_distances(*_query_args(dataset, query), rows, out)
    dists = np.sqrt(out)
    order = np.lexsort((dataset.ids, dists))
    top = order[:min(k, n)]
    return [_hit(dataset, query, rec_id=int(dataset.ids[r]), dist=float(dists[r]))
            for r in top]


def _hit(ds: ProcessedDataset, query: PackedQuery, rec_id: int, dist: float) -> SearchHit:
    breakdown = breakdown_for_row(ds, query, ds.row_of(rec_id))
    return SearchHit(id=rec_id, distance=dist, breakdown=breakdown)


def iter_nodes(tree: BallTree):
    """Pre-order iteration over all nodes."""
    stack = [tree.root]
    while stack:
        node = stack.pop()
        yield node
        if not node.is_leaf:
            stack.append(node.right)
            stack.append(node.left)


def _members_of(node: BallNode) -> list[int]:
    rows: list[int] = []
    stack = [node]
    while stack:
        cur = stack.pop()
        if cur.is_leaf:
            rows.extend(int(r) for r in cur.leaf_rows)
        else:
            stack.append(cur.right)
            stack.append(cur.left)
    return rows


def check_tree_invariants(tree: BallTree) -> None:
    """Validate structure: leaf partition, leaf size, radius coverage."""
    ds = tree.dataset
    all_rows: list[int] = []
    for node in iter_nodes(tree):
        rows = _members_of(node)
        if node.is_leaf:
            if len(rows) > tree.leaf_size:
                raise AssertionError(f"leaf holds {len(rows)} > leaf_size rows")
            all_rows.extend(rows)
        arr = np.asarray(rows, dtype=np.int64)
        d = _ref_distances(ds, node.pivot_row, arr)
        if node.radius < 0:
            raise AssertionError("negative radius")
        if float(d.max()) > node.radius + 1e-9:
            raise AssertionError(
                f"radius {node.radius} does not cover member at {float(d.max())}")
    if sorted(all_rows) != list(range(ds.n)):
        raise AssertionError("leaves do not partition the dataset")
