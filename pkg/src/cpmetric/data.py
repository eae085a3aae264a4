"""Random CP-net generation and labeled-pair dataset construction.

A dataset is built from a library of distinct CP-nets: every pair of
library nets (ordered or unordered) becomes one sample labeled with the
normalized exact distance, and each cross-validation fold randomly splits
the library into a train generative set and a test generative set.  A
fold's training samples are the pairs whose two nets both belong to the
train side; its test samples pair nets from the test side.

Randomness comes from numpy's PCG64 generator.  Purposes draw from
separate seeded streams (net structure, cp-table fills, fold splits), so
changing one stage never perturbs the others.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json
import os

import numpy as np

from . import cpnet as cp
from . import encoding
from .cpnet import CPNet
from .metric import check_penalty, ktd_matrix

# seed-stream tags (second word of the generator seed)
_STREAM_GENERATION = 0
_STREAM_SPLITS = 1

LIBRARY_FILENAME = "library.json"
RECORDS_FILENAME = "records.bin"
MANIFEST_FILENAME = "dataset.json"


class GenerationError(RuntimeError):
    """Rejection-sampling budget exhausted (pathological configuration)."""


@dataclass(frozen=True)
class GenConfig:
    n: int
    count: int
    seed: int
    max_indegree: int | None = None  # None = n - 1 (unbounded within acyclicity)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        indeg = self.indegree_bound
        if not 0 <= indeg < self.n:
            raise ValueError(f"max_indegree must lie in [0, n), got {indeg}")
        if self.n <= 4:
            space = cp.count_cpnets(self.n, indeg)
            if self.count > space:
                raise ValueError(
                    f"count={self.count} exceeds the {space} distinct CP-nets "
                    f"on n={self.n} variables"
                )

    @property
    def indegree_bound(self) -> int:
        return self.n - 1 if self.max_indegree is None else self.max_indegree


def random_cpnet(cfg: GenConfig, rng: np.random.Generator) -> CPNet:
    """Draw one acyclic non-degenerate binary CP-net.

    Structure: a random variable permutation; each variable picks a random
    number of parents (uniform up to the in-degree bound) from the
    variables before it in the permutation.  Tables: rows drawn uniformly,
    redrawn until every listed parent has a real effect.  Structure and
    table draws consume separate child streams of ``rng``.
    """
    n = cfg.n
    rng_structure, rng_tables = rng.spawn(2)
    perm = rng_structure.permutation(n)
    parent_sets = [()] * n
    for pos in range(n):
        cap = min(pos, cfg.indegree_bound)
        k = int(rng_structure.integers(0, cap + 1))
        if k:
            chosen = rng_structure.choice(perm[:pos], size=k, replace=False)
            parent_sets[perm[pos]] = tuple(sorted(int(p) for p in chosen))

    tables = []
    for i in range(n):
        parents = parent_sets[i]
        rows = 1 << len(parents)
        for _ in range(1000):
            prefs = tuple(int(b) for b in rng_tables.integers(0, 2, size=rows))
            if _all_parents_real(prefs, len(parents)):
                break
        else:
            raise GenerationError(
                f"could not draw a non-degenerate cp-table for variable {i} "
                f"with {len(parents)} parents"
            )
        tables.append(cp.CPTable(i, parents, prefs))
    return CPNet(cp._default_variables(n), tuple(tables))


def _all_parents_real(prefs: tuple, k: int) -> bool:
    return all(
        any(prefs[row] != prefs[row | (1 << shift)]
            for row in range(1 << k) if not row & (1 << shift))
        for shift in range(k)
    )


def generate_library(cfg: GenConfig) -> list:
    """``cfg.count`` distinct random CP-nets, deterministic given the seed."""
    rng = np.random.default_rng([cfg.seed, _STREAM_GENERATION])
    nets = []
    seen = set()
    budget = max(10_000, 200 * cfg.count)
    for _ in range(budget):
        net = random_cpnet(cfg, rng)
        key = net.tables
        if key not in seen:
            seen.add(key)
            nets.append(net)
            if len(nets) == cfg.count:
                return nets
    raise GenerationError(
        f"drew {budget} nets but found only {len(nets)} distinct ones "
        f"(requested {cfg.count})"
    )


def bin_label(y: float, m: int) -> int:
    """Interval index of a normalized distance: min(floor(y*m), m-1)."""
    if not 0.0 <= y <= 1.0:
        raise ValueError(f"label must lie in [0, 1], got {y}")
    return min(int(y * m), m - 1)


def bin_labels(y: np.ndarray, m: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.size and (y.min() < 0.0 or y.max() > 1.0):
        raise ValueError("labels must lie in [0, 1]")
    return np.minimum((y * m).astype(np.int64), m - 1)


def pair_list(count: int, ordered: bool) -> np.ndarray:
    """Canonical pair order: row-major over (i, j), upper triangle if
    unordered, all i != j if ordered."""
    if ordered:
        i, j = np.meshgrid(np.arange(count), np.arange(count), indexing="ij")
        mask = i != j
        return np.column_stack([i[mask], j[mask]])
    iu = np.triu_indices(count, k=1)
    return np.column_stack(iu)


@dataclass
class Dataset:
    library: list                 # CPNet
    pair_index: np.ndarray        # (P, 2) int, canonical order
    y: np.ndarray                 # (P,) float64 normalized distances
    bins: np.ndarray              # (P,) int, bin_label(y, m)
    features: np.ndarray          # (P, record_width-1) float32 encoded pairs
    folds: list                   # of (train_members, test_members) int arrays
    p: float
    m: int
    ordered: bool
    seed: int
    config: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.library[0].n

    def fold_rows(self, fold: int, side: str) -> np.ndarray:
        """Row indices of the samples whose nets both lie on the given
        generative-set side ("train" or "test") of the fold."""
        train, test = self.folds[fold]
        members = {"train": train, "test": test}[side]
        mask = np.isin(self.pair_index[:, 0], members) & np.isin(
            self.pair_index[:, 1], members
        )
        return np.flatnonzero(mask)


def dataset_from_library(
    library: list,
    folds: int,
    p: float,
    m: int,
    ordered: bool,
    seed: int,
    train_fraction: float = 0.9,
    train_size: int | None = None,
    budget_n: int | None = None,
    workers: int = 1,
) -> Dataset:
    """Label and encode all pairs of a fixed library and draw fold splits."""
    check_penalty(p)
    if folds < 1:
        raise ValueError("folds must be >= 1")
    count = len(library)
    if count < 2:
        raise ValueError("need at least 2 nets to form pairs")

    dist = ktd_matrix(library, p=p, budget_n=budget_n, workers=workers)
    pairs = pair_list(count, ordered)
    y = dist[pairs[:, 0], pairs[:, 1]]
    bins = bin_labels(y, m)

    lap = np.stack([encoding.net_features(net)[0] for net in library])
    cpt = np.stack([encoding.net_features(net)[1] for net in library])
    ia, ib = pairs[:, 0], pairs[:, 1]
    features = np.concatenate([lap[ia], cpt[ia], lap[ib], cpt[ib]], axis=1)

    n_train = train_size if train_size is not None else round(count * train_fraction)
    if not 0 < n_train < count:
        raise ValueError(f"train side must keep 1..{count - 1} nets, got {n_train}")
    fold_splits = []
    for f in range(folds):
        rng = np.random.default_rng([seed, _STREAM_SPLITS, f])
        order = rng.permutation(count)
        fold_splits.append(
            (np.sort(order[:n_train]), np.sort(order[n_train:]))
        )

    return Dataset(
        library=library,
        pair_index=pairs,
        y=y,
        bins=bins,
        features=features,
        folds=fold_splits,
        p=p,
        m=m,
        ordered=ordered,
        seed=seed,
        config={"train_size": int(n_train)},
    )


def build_dataset(
    gen: GenConfig,
    folds: int,
    p: float,
    m: int,
    ordered: bool = True,
    train_fraction: float = 0.9,
    train_size: int | None = None,
    budget_n: int | None = None,
    workers: int = 1,
) -> Dataset:
    """Generate a random library and build the labeled pair dataset."""
    library = generate_library(gen)
    ds = dataset_from_library(
        library,
        folds,
        p,
        m,
        ordered,
        gen.seed,
        train_fraction=train_fraction,
        train_size=train_size,
        budget_n=budget_n,
        workers=workers,
    )
    ds.config.update(
        {"n": gen.n, "count": gen.count, "max_indegree": gen.indegree_bound}
    )
    return ds


def distance_histogram(ds: Dataset, bins: int) -> np.ndarray:
    """Pair counts per distance interval; sums to the number of pairs."""
    if len(ds.y) == 0:
        raise ValueError("dataset has no pairs")
    return np.bincount(bin_labels(ds.y, bins), minlength=bins)


# --- on-disk layout ----------------------------------------------------------
#
# A dataset directory holds:
#   library.json       {"nets": [CP-net JSON objects in library order]}
#   records.bin(+meta) encoded samples in canonical pair order (encoding module)
#   dataset.json       seed, n, p, m, ordered flag, fold definitions, file paths
#
# All content is a pure function of the manifest, so a rerun with the same
# manifest reproduces every file byte for byte.


def save_dataset(ds: Dataset, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    lib_doc = {"nets": [json.loads(cp.serialize_cpnet(net)) for net in ds.library]}
    with open(os.path.join(out_dir, LIBRARY_FILENAME), "w", encoding="utf-8") as f:
        json.dump(lib_doc, f, indent=2, ensure_ascii=False)
        f.write("\n")

    encoding.write_records(
        os.path.join(out_dir, RECORDS_FILENAME), ds.features, ds.y, ds.n, ds.m
    )

    manifest = {
        "seed": ds.seed,
        "n": ds.n,
        "count": len(ds.library),
        "p": ds.p,
        "m": ds.m,
        "ordered": ds.ordered,
        "config": ds.config,
        "folds": [
            {"train": train.tolist(), "test": test.tolist()}
            for train, test in ds.folds
        ],
        "library": LIBRARY_FILENAME,
        "records": RECORDS_FILENAME,
        "encoding_version": encoding.ENCODING_VERSION,
    }
    with open(os.path.join(out_dir, MANIFEST_FILENAME), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


def load_dataset(in_dir) -> Dataset:
    with open(os.path.join(in_dir, MANIFEST_FILENAME), encoding="utf-8") as f:
        manifest = json.load(f)
    with open(os.path.join(in_dir, manifest["library"]), encoding="utf-8") as f:
        lib_doc = json.load(f)
    library = [cp.parse_cpnet(json.dumps(obj)) for obj in lib_doc["nets"]]

    features, y, header = encoding.read_records(
        os.path.join(in_dir, manifest["records"])
    )
    if header["n"] != manifest["n"] or header["m"] != manifest["m"]:
        raise ValueError("records header disagrees with the dataset manifest")

    pairs = pair_list(len(library), manifest["ordered"])
    if pairs.shape[0] != features.shape[0]:
        raise ValueError(
            f"{features.shape[0]} records for {pairs.shape[0]} canonical pairs"
        )
    return Dataset(
        library=library,
        pair_index=pairs,
        y=y,
        bins=bin_labels(y, manifest["m"]),
        features=features,
        folds=[
            (np.asarray(fd["train"]), np.asarray(fd["test"]))
            for fd in manifest["folds"]
        ],
        p=manifest["p"],
        m=manifest["m"],
        ordered=manifest["ordered"],
        seed=manifest["seed"],
        config=manifest.get("config", {}),
    )
