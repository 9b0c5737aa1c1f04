"""Synthetic DAG workloads, merged test buckets and on-disk corpora."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from functools import lru_cache
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from app.config import DEFAULT_BUCKETS
from app.dag import DagFormatError, DagGraph, JobNode, dag_from_document, dag_to_document, merge_dags
from app.models import DagDocument, DatasetManifest, GeneratorConfig
from app.session_store import JsonStore

logger = logging.getLogger(__name__)

RUNTIME_TABLE_PATH = Path(__file__).parent / "data" / "runtime_table.json"
MANIFEST_NAME = "manifest.json"
TRAIN_SPLIT = "train"


def bucket_split(size: int) -> str:
    return f"test_{size}"


@lru_cache(maxsize=1)
def runtime_table() -> tuple[np.ndarray, np.ndarray]:
    raw = JsonStore(RUNTIME_TABLE_PATH).load_strict()
    values = np.asarray(raw["values"], dtype=np.float64)
    weights = np.asarray(raw["weights"], dtype=np.float64)
    if values.shape != weights.shape or (values <= 0).any() or (weights < 0).any():
        raise ValueError(f"Malformed runtime table {RUNTIME_TABLE_PATH}")
    return values, weights / weights.sum()


def sample_runtimes(rng: np.random.Generator, count: int, mode: str) -> np.ndarray:
    if mode == "uniform":
        # Uniform on (0, 1]; zero-length tasks never appear.
        return 1.0 - rng.random(count)
    values, weights = runtime_table()
    return rng.choice(values, size=count, p=weights)


def _edges(rng: np.random.Generator, n: int, out_degree: float) -> list[tuple[int, int]]:
    edges: list[tuple[int, int]] = []
    for u in range(n - 1):
        later = np.arange(u + 1, n)
        p = min(1.0, out_degree / len(later))
        picked = later[rng.random(len(later)) < p]
        if picked.size == 0:
            # Every node but the last needs a successor so the graph stays connected.
            picked = np.array([rng.choice(later)])
        edges.extend((u, int(v)) for v in picked)
    return edges


def generate_dag(rng: np.random.Generator, config: GeneratorConfig | None = None) -> DagGraph:
    """One rank-ordered DAG: edges only go from lower to higher rank, and every path ends at the last node."""
    config = config or GeneratorConfig()
    n = int(rng.integers(config.min_nodes, config.max_nodes + 1))
    runtimes = sample_runtimes(rng, n, config.runtime_mode)
    raw = 1.0 - rng.random(n)
    resources = raw / raw.max() * config.resource_dist
    nodes = [JobNode(id=i, runtime=float(runtimes[i]), resource=float(resources[i])) for i in range(n)]
    return DagGraph.build(nodes, _edges(rng, n, config.out_degree))


def build_testsets(
    rng: np.random.Generator,
    sizes: Sequence[int] = DEFAULT_BUCKETS,
    per_bucket: int = 10,
    config: GeneratorConfig | None = None,
) -> dict[int, list[DagGraph]]:
    """``per_bucket`` merged instances of ``size`` DAGs for every requested size."""
    buckets: dict[int, list[DagGraph]] = {}
    for size in sizes:
        if size < 1:
            raise ValueError(f"Bucket size must be positive, got {size}")
        buckets[size] = [
            merge_dags([generate_dag(rng, config) for _ in range(size)]) for _ in range(per_bucket)
        ]
    return buckets


def save_dag(path: Path, g: DagGraph) -> None:
    JsonStore(Path(path)).save(dag_to_document(g))


def load_dag(path: Path) -> DagGraph:
    path = Path(path)
    try:
        document = DagDocument.model_validate(JsonStore(path).load_strict())
    except FileNotFoundError as exc:
        raise DagFormatError(f"DAG file not found: {path}") from exc
    except (ValidationError, ValueError) as exc:
        raise DagFormatError(f"Invalid DAG file {path}: {exc}") from exc
    return dag_from_document(document.model_dump())


def _split_seeds(seed: int, splits: Sequence[str]) -> dict[str, int]:
    children = np.random.SeedSequence(seed).spawn(len(splits))
    return {name: int(child.generate_state(1)[0]) for name, child in zip(splits, children)}


def generate_corpus(
    out_dir: Path,
    seed: int,
    train_count: int = 1000,
    sizes: Sequence[int] = DEFAULT_BUCKETS,
    per_bucket: int = 10,
    config: GeneratorConfig | None = None,
) -> DatasetManifest:
    """Write train DAGs and merged test buckets under ``out_dir`` plus a manifest."""
    config = config or GeneratorConfig()
    out_dir = Path(out_dir)
    split_names = [TRAIN_SPLIT] + [bucket_split(size) for size in sizes]
    seeds = _split_seeds(seed, split_names)
    splits: dict[str, list[str]] = {}

    train_rng = np.random.default_rng(seeds[TRAIN_SPLIT])
    splits[TRAIN_SPLIT] = []
    for index in range(train_count):
        relative = f"{TRAIN_SPLIT}/dag_{index:05d}.json"
        save_dag(out_dir / relative, generate_dag(train_rng, config))
        splits[TRAIN_SPLIT].append(relative)

    for size in sizes:
        name = bucket_split(size)
        bucket = build_testsets(np.random.default_rng(seeds[name]), [size], per_bucket, config)[size]
        splits[name] = []
        for index, g in enumerate(bucket):
            relative = f"{name}/merged_{index:03d}.json"
            save_dag(out_dir / relative, g)
            splits[name].append(relative)

    manifest = DatasetManifest(seed=seed, generator=config, splits=splits, seeds=seeds)
    JsonStore(out_dir / MANIFEST_NAME).save(manifest.model_dump(mode="json"))
    logger.info(
        "Wrote %d train DAGs and %d test buckets to %s", train_count, len(sizes), out_dir
    )
    return manifest


def load_manifest(path: Path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        return DatasetManifest.model_validate(JsonStore(path).load_strict())
    except FileNotFoundError as exc:
        raise DagFormatError(f"Manifest not found: {path}") from exc
    except (ValidationError, ValueError) as exc:
        raise DagFormatError(f"Invalid manifest {path}: {exc}") from exc


def load_split(manifest_path: Path, split: str) -> list[DagGraph]:
    manifest_path = Path(manifest_path)
    root = manifest_path if manifest_path.is_dir() else manifest_path.parent
    manifest = load_manifest(manifest_path)
    if split not in manifest.splits:
        raise KeyError(f"Unknown split '{split}'; available: {sorted(manifest.splits)}")
    return [load_dag(root / relative) for relative in manifest.splits[split]]


def load_test_buckets(manifest_path: Path) -> dict[int, list[DagGraph]]:
    manifest = load_manifest(manifest_path)
    buckets: dict[int, list[DagGraph]] = {}
    for split in manifest.splits:
        if split.startswith("test_"):
            buckets[int(split.removeprefix("test_"))] = load_split(manifest_path, split)
    return dict(sorted(buckets.items()))
