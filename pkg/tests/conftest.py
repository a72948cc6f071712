import numpy as np
import pytest

from spelunker import (
    DatasetSchema,
    FieldKind,
    FieldSpec,
    LocalTrigramEmbedder,
    RawRecord,
    build_ball_tree,
    build_processed_dataset,
    load_csv,
    load_schema,
)
from spelunker.data import fixture_csv, fixture_schema, mock_script, truth_cases_path
from spelunker.gateway import ScriptedMockBackend
from spelunker.pipeline import Engine
from spelunker.preprocess import ProcessedDataset, ScalerStats
from spelunker.schema import MISSING, Flag, Number, Text


@pytest.fixture(scope="session")
def wine_schema():
    return load_schema(fixture_schema())


@pytest.fixture(scope="session")
def wine_records(wine_schema):
    return load_csv(fixture_csv(), wine_schema)


@pytest.fixture(scope="session")
def wine_dataset(wine_records, wine_schema):
    return build_processed_dataset(wine_records, wine_schema, LocalTrigramEmbedder(64))


@pytest.fixture(scope="session")
def wine_tree(wine_dataset):
    return build_ball_tree(wine_dataset)


@pytest.fixture()
def mock_backend():
    return ScriptedMockBackend.from_file(mock_script())


@pytest.fixture()
def wine_engine(wine_dataset, wine_tree, mock_backend):
    return Engine(dataset=wine_dataset, tree=wine_tree,
                  provider=LocalTrigramEmbedder(64), llm_backend=mock_backend)


@pytest.fixture(scope="session")
def truth_cases_file():
    return truth_cases_path()


def canonical_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Random unit vector in the same f32-canonical form embeddings use."""
    vec = rng.normal(size=dim)
    vec /= np.linalg.norm(vec)
    return vec.astype(np.float32).astype(np.float64)


def synth_schema(n_num=2, n_bool=2, n_cat=2) -> DatasetSchema:
    fields = []
    fields += [FieldSpec(f"n{i}", FieldKind.NUMERIC) for i in range(n_num)]
    fields += [FieldSpec(f"b{i}", FieldKind.BOOLEAN) for i in range(n_bool)]
    fields += [FieldSpec(f"c{i}", FieldKind.CATEGORICAL) for i in range(n_cat)]
    return DatasetSchema(fields=tuple(fields))


def synth_dataset(rng: np.random.Generator, n: int, n_num=2, n_bool=2, n_cat=2,
                  dim=16, missing_rate=0.1, n_unique=8, shuffle_ids=False,
                  spread=3.0) -> ProcessedDataset:
    """Random mixed-type dataset straight in processed form."""
    schema = synth_schema(n_num, n_bool, n_cat)
    emb = np.vstack([canonical_unit(rng, dim) for _ in range(n_unique)]) \
        if n_cat else np.zeros((0, dim))
    num = rng.normal(scale=spread, size=(n, n_num))
    num_miss = (rng.random((n, n_num)) < missing_rate).astype(np.uint8)
    num[num_miss.astype(bool)] = 0.0
    boo = rng.integers(0, 2, size=(n, n_bool)).astype(np.uint8)
    boo_miss = (rng.random((n, n_bool)) < missing_rate).astype(np.uint8)
    boo[boo_miss.astype(bool)] = 0
    cat = rng.integers(0, max(n_unique, 1), size=(n, n_cat)).astype(np.int32)
    cat[rng.random((n, n_cat)) < missing_rate] = -1
    ids = np.arange(n, dtype=np.int64)
    if shuffle_ids:
        ids = rng.permutation(n * 3)[:n].astype(np.int64)
    return ProcessedDataset(
        schema=schema,
        ids=ids,
        num=np.ascontiguousarray(num),
        num_miss=np.ascontiguousarray(num_miss),
        boo=np.ascontiguousarray(boo),
        boo_miss=np.ascontiguousarray(boo_miss),
        cat=np.ascontiguousarray(cat),
        emb=np.ascontiguousarray(emb),
        scalers={f"n{i}": ScalerStats(0.0, 1.0, False) for i in range(n_num)},
        embed_dim=dim,
        embedder_meta={"kind": "local", "dim": dim},
        originals={int(i): RawRecord(id=int(i), values={}) for i in ids},
    )


def synth_query(rng: np.random.Generator, dataset: ProcessedDataset,
                missing_chance=0.1, weights_pool=(0.25, 1.0, 4.0)):
    """Random query over a non-empty random field subset, packed values."""
    schema = dataset.schema
    names = list(schema.field_names)
    count = int(rng.integers(1, len(names) + 1))
    chosen = list(rng.choice(names, size=count, replace=False))
    values = {}
    weights = {}
    specs = schema.field_map()
    for name in chosen:
        weights[name] = float(rng.choice(weights_pool))
        if rng.random() < missing_chance:
            values[name] = MISSING
            continue
        kind = specs[name].kind
        if kind is FieldKind.NUMERIC:
            values[name] = Number(float(rng.normal(scale=3.0)))
        elif kind is FieldKind.BOOLEAN:
            values[name] = Flag(int(rng.integers(0, 2)))
        else:
            if dataset.emb.shape[0] and rng.random() < 0.5:
                row = int(rng.integers(0, dataset.emb.shape[0]))
                vec = dataset.emb[row]
            else:
                vec = canonical_unit(rng, dataset.embed_dim)
            values[name] = Text(vector=vec, original="q")
    return values, weights
