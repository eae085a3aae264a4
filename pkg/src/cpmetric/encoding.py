"""Matrix encodings of CP-nets consumed by the neural network.

Each net is represented by two matrices: the normalized Laplacian of its
(symmetrized) dependency graph, and an n x 2^(n-1) preference matrix whose
cell (i, j) holds variable i's preferred value index under the j-th
assignment to all other variables.  A training sample concatenates the
flattened encodings of two nets with the normalized distance label.

Encoding conventions (version tag "cpmetric-enc-1"):

* Laplacian: edges are symmetrized, L = I - D^(-1/2) A D^(-1/2); vertices
  with no edges get a zero row and zero diagonal, so an edgeless graph
  encodes as the zero matrix.
* Preference matrix rows follow ascending variable-index order; column j
  is decoded as a binary number over the other variables in ascending
  index order, most significant bit = lowest index, bit value = domain
  value index.
"""

from __future__ import annotations

from dataclasses import dataclass
import json

import numpy as np

from . import cpnet
from .cpnet import CPNet

ENCODING_VERSION = "cpmetric-enc-1"


def adjacency_matrix(net: CPNet) -> np.ndarray:
    """Dependency graph as an n x n 0/1 matrix; entry (i, j) = 1 iff Xi -> Xj."""
    n = net.n
    adj = np.zeros((n, n), dtype=np.int8)
    for parent, child in cpnet.edges(net):
        adj[parent, child] = 1
    return adj


def normalized_laplacian(net: CPNet) -> np.ndarray:
    adj = adjacency_matrix(net)
    sym = ((adj + adj.T) > 0).astype(np.float64)
    deg = sym.sum(axis=1)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    lap = -np.outer(inv_sqrt, inv_sqrt) * sym
    lap[np.diag_indices_from(lap)] = nz
    return lap + 0.0  # drop negative zeros


def cpt_matrix(net: CPNet) -> np.ndarray:
    """Preference matrix, n x 2^(n-1), values in {0, 1}.

    Row i holds variable Xi's preferred value replicated over all
    assignments to the other variables.  Rows follow variable-index order
    in every net, so a cell means the same thing across all nets over a
    variable set and a pair of matrices can be compared positionally.
    """
    n = net.n
    n_cols = 1 << (n - 1)
    cols = np.arange(n_cols)
    out = np.zeros((n, n_cols), dtype=np.int8)
    for v in range(n):
        table = net.tables[v]
        others = [u for u in range(n) if u != v]
        row_idx = np.zeros(n_cols, dtype=np.int64)
        for p in table.parents:
            t = others.index(p)
            row_idx = (row_idx << 1) | ((cols >> (n - 2 - t)) & 1)
        prefs = np.asarray(table.prefs, dtype=np.int8)
        out[v] = prefs[row_idx]
    return out


def net_features(net: CPNet) -> tuple:
    """Flattened (laplacian, preference-matrix) float32 feature vectors."""
    lap = normalized_laplacian(net).astype(np.float32).ravel()
    cpt = cpt_matrix(net).astype(np.float32).ravel()
    return lap, cpt


def feature_dims(n: int) -> tuple:
    return n * n, n * (1 << (n - 1))


@dataclass(frozen=True)
class EncodedSample:
    lap_a: np.ndarray
    cpt_a: np.ndarray
    lap_b: np.ndarray
    cpt_b: np.ndarray
    y: float
    bin: int


def encode_pair(A: CPNet, B: CPNet, y: float, m: int) -> EncodedSample:
    if not 0.0 <= y <= 1.0:
        raise ValueError(f"label must lie in [0, 1], got {y}")
    lap_a, cpt_a = net_features(A)
    lap_b, cpt_b = net_features(B)
    from .data import bin_label

    return EncodedSample(lap_a, cpt_a, lap_b, cpt_b, float(y), bin_label(y, m))


# --- binary record file -----------------------------------------------------
#
# One record per sample: [lap_a | cpt_a | lap_b | cpt_b | y] as little-endian
# 32-bit floats.  A JSON sidecar (<records path> + ".meta.json") stores n, m,
# the record count, and the encoding-convention version tag.


def record_width(n: int) -> int:
    lap_dim, cpt_dim = feature_dims(n)
    return 2 * (lap_dim + cpt_dim) + 1


def meta_path(records_path) -> str:
    return str(records_path) + ".meta.json"


def write_records(path, features: np.ndarray, y: np.ndarray, n: int, m: int) -> None:
    """Write encoded samples; ``features`` is (count, width-1) float32 and
    ``y`` is (count,)."""
    count = features.shape[0]
    width = record_width(n)
    if features.shape[1] != width - 1:
        raise ValueError(
            f"feature width {features.shape[1]} does not match n={n} "
            f"(expected {width - 1})"
        )
    records = np.empty((count, width), dtype="<f4")
    records[:, :-1] = features
    records[:, -1] = y
    with open(path, "wb") as f:
        f.write(records.tobytes())
    header = {
        "encoding_version": ENCODING_VERSION,
        "n": n,
        "m": m,
        "count": count,
        "record_floats": width,
    }
    with open(meta_path(path), "w", encoding="utf-8") as f:
        json.dump(header, f, indent=2)
        f.write("\n")


def read_records(path) -> tuple:
    """Read a record file; returns (features, y, header)."""
    with open(meta_path(path), encoding="utf-8") as f:
        header = json.load(f)
    if header.get("encoding_version") != ENCODING_VERSION:
        raise ValueError(
            f"unsupported encoding version {header.get('encoding_version')!r}"
        )
    width = record_width(header["n"])
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != header["count"] * width:
        raise ValueError(
            f"record file holds {raw.size} floats, header promises "
            f"{header['count']} x {width}"
        )
    records = raw.reshape(header["count"], width)
    return records[:, :-1], records[:, -1].astype(np.float64), header


def split_features(features: np.ndarray, n: int) -> dict:
    """Split packed feature rows into the four named blocks."""
    lap_dim, cpt_dim = feature_dims(n)
    offs = np.cumsum([0, lap_dim, cpt_dim, lap_dim, cpt_dim])
    return {
        "lap_a": features[:, offs[0]:offs[1]],
        "cpt_a": features[:, offs[1]:offs[2]],
        "lap_b": features[:, offs[2]:offs[3]],
        "cpt_b": features[:, offs[3]:offs[4]],
    }
