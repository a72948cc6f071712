"""Binary index persistence.

Layout: magic ``SPLKIDX1``; u32 LE format version; u64 LE header length;
UTF-8 JSON header (schema, scalers, embedder metadata, leaf size, record
count, section table with offsets/lengths/crc32); then the payload sections
in fixed order:

  numerics        f64 LE, row-major (record x numeric field)
  booleans        1 byte per (record, boolean field)
  missing_bitmap  1 bit per (record, schema field), row-major, byte-padded
  embeddings      f32 LE, row-major (record x categorical field x dim)
  original_texts  ids as i64 LE, then per record/field: u8 present flag,
                  u32 LE byte length + UTF-8 when present
  tree_nodes      pre-order; per node: u32 pivot_id, f64 radius, u8 flags
                  (bit0 = leaf), then a length-prefixed u32 member-id array
                  (leaves) or u32 child count (interior)

Saving the same tree twice produces identical bytes, and a load/save round
trip preserves search results exactly (embeddings are stored at the same
f32 precision they are computed with).
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .balltree import BallNode, BallTree
from .errors import BadMagic, ChecksumMismatch, PersistError, Truncated, VersionMismatch
from .preprocess import ProcessedDataset, ScalerStats
from .schema import DatasetSchema, FieldKind, RawRecord, schema_from_json, schema_to_json

MAGIC = b"SPLKIDX1"
FORMAT_VERSION = 1

_SECTION_ORDER = ("numerics", "booleans", "missing_bitmap", "embeddings",
                  "original_texts", "tree_nodes")


def _missing_matrix(ds: ProcessedDataset) -> np.ndarray:
    """(n, #schema fields) uint8 missing indicator in schema order."""
    cols = []
    for spec in ds.schema.fields:
        if spec.kind is FieldKind.NUMERIC:
            cols.append(ds.num_miss[:, ds.num_fields.index(spec.name)])
        elif spec.kind is FieldKind.BOOLEAN:
            cols.append(ds.boo_miss[:, ds.bool_fields.index(spec.name)])
        else:
            cols.append((ds.cat[:, ds.cat_fields.index(spec.name)] < 0).astype(np.uint8))
    if not cols:
        return np.zeros((ds.n, 0), dtype=np.uint8)
    return np.stack(cols, axis=1).astype(np.uint8)


def _encode_embeddings(ds: ProcessedDataset) -> bytes:
    n, fc, dim = ds.n, len(ds.cat_fields), ds.embed_dim
    dense = np.zeros((n, fc, dim), dtype=np.float32)
    for col in range(fc):
        idx = ds.cat[:, col]
        present = idx >= 0
        dense[present, col, :] = ds.emb[idx[present]].astype(np.float32)
    return dense.tobytes()


def _encode_texts(ds: ProcessedDataset) -> bytes:
    buf = io.BytesIO()
    buf.write(np.ascontiguousarray(ds.ids, dtype="<i8").tobytes())
    names = ds.schema.field_names
    for rec_id in (int(i) for i in ds.ids):
        values = ds.originals[rec_id].values
        for name in names:
            raw = values.get(name)
            if raw is None:
                buf.write(b"\x00")
            else:
                data = raw.encode("utf-8")
                buf.write(b"\x01")
                buf.write(struct.pack("<I", len(data)))
                buf.write(data)
    return buf.getvalue()


def _encode_tree(root: BallNode) -> bytes:
    buf = io.BytesIO()
    stack = [root]
    while stack:
        node = stack.pop()
        if node.pivot_id < 0 or node.pivot_id >= 2 ** 32:
            raise PersistError(f"record id {node.pivot_id} does not fit in u32")
        flags = 1 if node.is_leaf else 0
        buf.write(struct.pack("<IdB", node.pivot_id, node.radius, flags))
        if node.is_leaf:
            buf.write(struct.pack("<I", len(node.member_ids)))
            for mid in node.member_ids:
                buf.write(struct.pack("<I", mid))
        else:
            buf.write(struct.pack("<I", 2))
            stack.append(node.right)
            stack.append(node.left)
    return buf.getvalue()


def save_index(tree: BallTree, dataset: ProcessedDataset, path: str | Path) -> None:
    """Serialize the tree and its dataset; deterministic for equal inputs."""
    ds = dataset
    if any(int(i) >= 2 ** 32 or int(i) < 0 for i in ds.ids):
        raise PersistError("record ids must fit in u32 for persistence")
    sections = {
        "numerics": np.ascontiguousarray(ds.num, dtype="<f8").tobytes(),
        "booleans": np.ascontiguousarray(ds.boo, dtype=np.uint8).tobytes(),
        "missing_bitmap": np.packbits(_missing_matrix(ds).reshape(-1)).tobytes(),
        "embeddings": _encode_embeddings(ds),
        "original_texts": _encode_texts(ds),
        "tree_nodes": _encode_tree(_with_member_ids(tree.root, ds)),
    }
    table = []
    offset = 0
    for name in _SECTION_ORDER:
        data = sections[name]
        table.append({"name": name, "offset": offset, "length": len(data),
                      "crc32": zlib.crc32(data) & 0xFFFFFFFF})
        offset += len(data)
    header = {
        "schema": schema_to_json(ds.schema),
        "scalers": {name: {"mean": s.mean, "std": s.std, "constant": s.constant}
                    for name, s in sorted(ds.scalers.items())},
        "embed_dim": ds.embed_dim,
        "embedder": ds.embedder_meta,
        "leaf_size": tree.leaf_size,
        "record_count": ds.n,
        "sections": table,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<I", FORMAT_VERSION))
        handle.write(struct.pack("<Q", len(header_bytes)))
        handle.write(header_bytes)
        for name in _SECTION_ORDER:
            handle.write(sections[name])


def _with_member_ids(root: BallNode, ds: ProcessedDataset):
    """Attach serializable member-id lists to leaves (rows -> ids)."""

    class _View:
        __slots__ = ("pivot_id", "radius", "is_leaf", "member_ids", "left", "right")

    def convert(node: BallNode) -> "_View":
        view = _View()
        view.pivot_id = node.pivot_id
        view.radius = node.radius
        view.is_leaf = node.is_leaf
        if node.is_leaf:
            view.member_ids = [int(ds.ids[r]) for r in node.leaf_rows]
            view.left = view.right = None
        else:
            view.member_ids = None
            view.left = convert(node.left)
            view.right = convert(node.right)
        return view

    import sys
    limit = sys.getrecursionlimit()
    needed = ds.n + 100
    if needed > limit:
        sys.setrecursionlimit(needed)
    try:
        return convert(root)
    finally:
        if needed > limit:
            sys.setrecursionlimit(limit)


class _Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise Truncated(f"needed {count} bytes at offset {self.pos}, "
                            f"file has {len(self.data)}")
        chunk = self.data[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_index(path: str | Path) -> tuple[BallTree, ProcessedDataset]:
    """Load an index file; raises on any corruption."""
    data = Path(path).read_bytes()
    reader = _Reader(data)
    if reader.take(len(MAGIC)) != MAGIC:
        raise BadMagic(f"{path} is not an index file")
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise VersionMismatch(version, FORMAT_VERSION)
    (header_len,) = reader.unpack("<Q")
    header_bytes = reader.take(header_len)
    try:
        header = json.loads(header_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise PersistError(f"corrupt header: {exc}") from exc

    payload_start = reader.pos
    schema = schema_from_json(json.dumps(header["schema"]))
    scalers = {name: ScalerStats(mean=s["mean"], std=s["std"], constant=s["constant"])
               for name, s in header["scalers"].items()}
    embed_dim = int(header["embed_dim"])
    n = int(header["record_count"])

    chunks: dict[str, bytes] = {}
    for entry in header["sections"]:
        start = payload_start + int(entry["offset"])
        end = start + int(entry["length"])
        if end > len(data):
            raise Truncated(f"section {entry['name']} extends past end of file")
        chunk = data[start:end]
        if (zlib.crc32(chunk) & 0xFFFFFFFF) != int(entry["crc32"]):
            raise ChecksumMismatch(entry["name"])
        chunks[entry["name"]] = chunk
    for name in _SECTION_ORDER:
        if name not in chunks:
            raise PersistError(f"missing section {name!r}")

    num_names = schema.names_of(FieldKind.NUMERIC)
    bool_names = schema.names_of(FieldKind.BOOLEAN)
    cat_names = schema.names_of(FieldKind.CATEGORICAL)
    f_all = len(schema.fields)

    num = np.frombuffer(chunks["numerics"], dtype="<f8").reshape(n, len(num_names)).copy()
    boo = np.frombuffer(chunks["booleans"], dtype=np.uint8).reshape(n, len(bool_names)).copy()
    bits = np.unpackbits(np.frombuffer(chunks["missing_bitmap"], dtype=np.uint8),
                         count=n * f_all).reshape(n, f_all)

    miss_col = {spec.name: bits[:, i] for i, spec in enumerate(schema.fields)}
    num_miss = (np.stack([miss_col[f] for f in num_names], axis=1).astype(np.uint8)
                if num_names else np.zeros((n, 0), dtype=np.uint8))
    boo_miss = (np.stack([miss_col[f] for f in bool_names], axis=1).astype(np.uint8)
                if bool_names else np.zeros((n, 0), dtype=np.uint8))

    dense = np.frombuffer(chunks["embeddings"], dtype="<f4")
    expected = n * len(cat_names) * embed_dim
    if dense.size != expected:
        raise Truncated(f"embeddings section holds {dense.size} floats, expected {expected}")
    dense = dense.reshape(n, len(cat_names), embed_dim)

    cat = np.full((n, len(cat_names)), -1, dtype=np.int32)
    emb_rows: list[np.ndarray] = []
    seen: dict[bytes, int] = {}
    for col, name in enumerate(cat_names):
        present = miss_col[name] == 0
        for row in np.nonzero(present)[0]:
            vec = dense[row, col]
            key = vec.tobytes()
            idx = seen.get(key)
            if idx is None:
                idx = len(emb_rows)
                seen[key] = idx
                emb_rows.append(vec.astype(np.float64))
            cat[row, col] = idx
    emb = (np.vstack(emb_rows) if emb_rows
           else np.zeros((0, embed_dim), dtype=np.float64))

    ids, originals = _decode_texts(chunks["original_texts"], schema, n)

    dataset = ProcessedDataset(
        schema=schema, ids=ids, num=num, num_miss=num_miss, boo=boo,
        boo_miss=boo_miss, cat=cat, emb=np.ascontiguousarray(emb),
        scalers=scalers, embed_dim=embed_dim,
        embedder_meta=dict(header.get("embedder", {})),
        originals=originals,
    )
    root = _decode_tree(chunks["tree_nodes"], dataset)
    tree = BallTree(root=root, dataset=dataset, leaf_size=int(header["leaf_size"]))
    return tree, dataset


def _decode_texts(chunk: bytes, schema: DatasetSchema, n: int):
    reader = _Reader(chunk)
    ids = np.frombuffer(reader.take(8 * n), dtype="<i8").copy()
    originals: dict[int, RawRecord] = {}
    names = schema.field_names
    for rec_id in (int(i) for i in ids):
        values: dict[str, str] = {}
        for name in names:
            (present,) = reader.unpack("<B")
            if present:
                (length,) = reader.unpack("<I")
                values[name] = reader.take(length).decode("utf-8")
        originals[rec_id] = RawRecord(id=rec_id, values=values)
    if reader.pos != len(chunk):
        raise PersistError("trailing bytes in original_texts section")
    return ids, originals


def _decode_tree(chunk: bytes, dataset: ProcessedDataset) -> BallNode:
    reader = _Reader(chunk)

    def read_one() -> tuple[BallNode, int]:
        pivot_id, radius, flags = reader.unpack("<IdB")
        node = BallNode(pivot_row=dataset.row_of(int(pivot_id)),
                        pivot_id=int(pivot_id), radius=float(radius))
        if flags & 1:
            (count,) = reader.unpack("<I")
            member_ids = struct.unpack(f"<{count}I", reader.take(4 * count))
            node.leaf_rows = np.asarray(
                [dataset.row_of(int(m)) for m in member_ids], dtype=np.int64)
            return node, 0
        (children,) = reader.unpack("<I")
        if children != 2:
            raise PersistError(f"interior node declares {children} children")
        return node, 2

    root, pending = read_one()
    stack: list[list] = [[root, pending]] if pending else []
    while stack:
        child, child_pending = read_one()
        top = stack[-1]
        parent = top[0]
        if parent.left is None:
            parent.left = child
        else:
            parent.right = child
        top[1] -= 1
        if top[1] == 0:
            stack.pop()
        if child_pending:
            stack.append([child, child_pending])
    if reader.pos != len(chunk):
        raise PersistError("trailing bytes in tree_nodes section")
    return root
