"""Random Gaussian sketches of graphs.

A row of a sketch pairs a 0/1 sampling matrix over vertex pairs with an
independent Gaussian vector ``g``; its projection is ``g S B(G)``, an
``n``-vector. The sketcher owns the Gaussian seed; decoders receive the
sampling matrices and projections only.

Gaussian entries are rounded to multiples of ``2**-28``. Every projection
coordinate is then a sum of grid values well inside float64's exact range, so
sums do not depend on evaluation order: linearity, stream updates and
insert/delete cancellation hold bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from ._rng import derive_seed, gaussian_grid_block, gaussians, keyed_bits, uniforms
from .errors import ContractViolation
from .graph import Graph, num_pairs, pair_index, pair_unindex_array

GRID = 2.0**-28
_KINDS = ("all", "explicit", "bernoulli", "level")


def quantize(values: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(values) / GRID) * GRID


@dataclass(frozen=True)
class SamplingMatrix:
    """Diagonal 0/1 selector over the ``size`` pair indices of a graph.

    ``kind`` picks the base rule:

    * ``all`` keeps every pair;
    * ``explicit`` keeps ``pairs``;
    * ``bernoulli`` keeps each pair independently with probability ``p``;
    * ``level`` keeps each pair with probability ``2**-level``. Levels that
      share ``(seed, label)`` are nested.

    Implicit rules hash ``(seed, label, pair)``. Optional restrictions
    intersect the base rule with the pairs whose bit ``bit`` is set and/or the
    pairs hashed into bucket ``bucket`` of ``buckets``.
    """

    size: int
    kind: str = "all"
    pairs: tuple[int, ...] = ()
    p: float = 1.0
    level: int = 0
    seed: int = 0
    label: int = 0
    bit: int | None = None
    buckets: int | None = None
    bucket: int = 0

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ContractViolation(f"unknown sampling rule {self.kind!r}")
        if self.kind == "explicit":
            object.__setattr__(self, "pairs", tuple(sorted(set(int(e) for e in self.pairs))))
            if self.pairs and not (0 <= self.pairs[0] and self.pairs[-1] < self.size):
                raise ContractViolation("explicit sampling set holds an invalid pair index")
        if not (0.0 <= self.p <= 1.0):
            raise ContractViolation("bernoulli probability must lie in [0, 1]")
        if self.level < 0:
            raise ContractViolation("level must be non-negative")

    @classmethod
    def for_graph(cls, n: int, **kwargs) -> "SamplingMatrix":
        return cls(num_pairs(n), **kwargs)

    @classmethod
    def explicit_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "SamplingMatrix":
        return cls(num_pairs(n), "explicit", pairs=tuple(pair_index(min(e), max(e), n) for e in edges))

    def _hash_uniform(self, idx: np.ndarray, tag: str) -> np.ndarray:
        key = keyed_bits(derive_seed(self.seed, tag), np.uint64(self.label))
        return uniforms(int(key), idx)

    def mask(self, indices) -> np.ndarray:
        """Membership of each pair index in the sample."""
        idx = np.asarray(indices, dtype=np.int64)
        if self.kind == "all":
            keep = np.ones(idx.shape, dtype=bool)
        elif self.kind == "explicit":
            keep = np.isin(idx, np.asarray(self.pairs, dtype=np.int64))
        elif self.kind == "bernoulli":
            keep = self._hash_uniform(idx, "sample") < self.p
        else:
            keep = self._hash_uniform(idx, "sample") < 2.0**-self.level
        if self.bit is not None:
            keep &= ((idx >> self.bit) & 1).astype(bool)
        if self.buckets is not None:
            b = np.floor(self._hash_uniform(idx, "bucket") * self.buckets).astype(np.int64)
            keep &= b == self.bucket
        return keep

    def contains(self, index: int) -> bool:
        return bool(self.mask(np.array([index]))[0])

    def sampled_pairs(self) -> np.ndarray:
        idx = np.arange(self.size, dtype=np.int64)
        return idx[self.mask(idx)]

    def graph(self, n: int) -> Graph:
        """``graph(S)``: the graph on all sampled pairs."""
        self._check_n(n)
        u, v = pair_unindex_array(self.sampled_pairs(), n)
        return Graph(n, frozenset(zip(u.tolist(), v.tolist())))

    def restrict(self, g: Graph) -> Graph:
        """``G(S)``: the edges of ``g`` that the matrix samples."""
        self._check_n(g.n)
        arr = g.edge_array()
        keep = self.mask(g.pair_indices())
        return Graph(g.n, frozenset(map(tuple, arr[keep].tolist())))

    def _check_n(self, n: int) -> None:
        if num_pairs(n) != self.size:
            raise ContractViolation(f"sampling matrix over {self.size} pairs does not fit n={n}")

    def descriptor(self) -> dict:
        d: dict = {"size": self.size, "kind": self.kind}
        if self.kind == "explicit":
            d["pairs"] = list(self.pairs)
        if self.kind == "bernoulli":
            d["p"] = self.p
        if self.kind == "level":
            d["level"] = self.level
        if self.kind in ("bernoulli", "level") or self.buckets is not None:
            d["seed"] = self.seed
            d["label"] = self.label
        if self.bit is not None:
            d["bit"] = self.bit
        if self.buckets is not None:
            d["buckets"] = self.buckets
            d["bucket"] = self.bucket
        return d

    @classmethod
    def from_descriptor(cls, d: dict) -> "SamplingMatrix":
        return cls(
            size=int(d["size"]),
            kind=d.get("kind", "all"),
            pairs=tuple(d.get("pairs", ())),
            p=float(d.get("p", 1.0)),
            level=int(d.get("level", 0)),
            seed=int(d.get("seed", 0)),
            label=int(d.get("label", 0)),
            bit=d.get("bit"),
            buckets=d.get("buckets"),
            bucket=int(d.get("bucket", 0)),
        )


def _row_keys(master_seed: int, row_labels) -> np.ndarray:
    return keyed_bits(derive_seed(master_seed, "gauss"), np.asarray(row_labels, dtype=np.uint64))


@dataclass(frozen=True)
class GaussianStream:
    """Standard normals indexed by pair index, fixed by ``(master_seed, row_label)``."""

    master_seed: int
    row_label: int

    def values(self, indices) -> np.ndarray:
        key = _row_keys(self.master_seed, self.row_label)
        return quantize(gaussians(key, np.asarray(indices, dtype=np.uint64)))


def gaussian_block(master_seed: int, row_labels, indices) -> np.ndarray:
    """Values of several streams at once: ``out[i, j]`` is row ``row_labels[i]`` at ``indices[j]``."""
    return gaussian_grid_block(_row_keys(master_seed, row_labels), indices, GRID)


def gaussian_pairs(master_seed: int, row_labels, indices) -> np.ndarray:
    """Elementwise: ``out[k]`` is row ``row_labels[k]`` at ``indices[k]``."""
    keys = _row_keys(master_seed, row_labels)
    return quantize(gaussians(keys, np.asarray(indices, dtype=np.uint64)))


def _scatter(n: int, us: np.ndarray, vs: np.ndarray, vals: np.ndarray) -> np.ndarray:
    p = np.zeros(n)
    np.add.at(p, us, vals)
    np.add.at(p, vs, -vals)
    return p


def project(g: Graph, s: SamplingMatrix, stream: GaussianStream) -> np.ndarray:
    """``p = g S B(G)``: +g_e at the smaller endpoint of each sampled edge, -g_e at the larger."""
    s._check_n(g.n)
    arr = g.edge_array()
    idx = g.pair_indices()
    keep = s.mask(idx)
    vals = stream.values(idx[keep])
    return _scatter(g.n, arr[keep, 0], arr[keep, 1], vals)


def project_rows(
    g: Graph, matrices: Sequence[SamplingMatrix], master_seed: int, row_labels: Sequence[int] | None = None
) -> np.ndarray:
    """Projections of ``g`` for many rows; row ``i`` uses stream ``row_labels[i]`` (default ``i``)."""
    if row_labels is None:
        row_labels = range(len(matrices))
    out = np.zeros((len(matrices), g.n))
    arr = g.edge_array()
    idx = g.pair_indices()
    for i, (s, label) in enumerate(zip(matrices, row_labels)):
        s._check_n(g.n)
        keep = s.mask(idx)
        if keep.any():
            vals = GaussianStream(master_seed, int(label)).values(idx[keep])
            out[i] = _scatter(g.n, arr[keep, 0], arr[keep, 1], vals)
    return out


@dataclass(frozen=True)
class SketchView:
    """What a decoder sees: sampling matrices and projections, no Gaussian seed."""

    n: int
    matrices: tuple[SamplingMatrix, ...]
    projections: np.ndarray = field(compare=False)

    @property
    def s(self) -> int:
        return len(self.matrices)

    def column_combine(self, vertices: Iterable[int]) -> np.ndarray:
        return column_combine(self, vertices)

    def to_json(self) -> str:
        rows = [
            {"sampling": m.descriptor(), "projection": self.projections[i].tolist()}
            for i, m in enumerate(self.matrices)
        ]
        return json.dumps({"n": self.n, "s": self.s, "rows": rows})

    @classmethod
    def from_json(cls, text: str) -> "SketchView":
        obj = json.loads(text)
        matrices = tuple(SamplingMatrix.from_descriptor(r["sampling"]) for r in obj["rows"])
        proj = np.array([r["projection"] for r in obj["rows"]], dtype=float).reshape(len(matrices), obj["n"])
        return cls(obj["n"], matrices, proj)


@dataclass(frozen=True)
class Sketch:
    """Sketcher-side state: rows plus the secret seed and the current edge set."""

    n: int
    matrices: tuple[SamplingMatrix, ...]
    projections: np.ndarray = field(compare=False)
    sketcher_secret: int = field(repr=False, default=0)
    edges: frozenset = field(default=frozenset(), repr=False)

    @property
    def s(self) -> int:
        return len(self.matrices)

    @property
    def rows(self) -> list[tuple[SamplingMatrix, np.ndarray]]:
        return list(zip(self.matrices, self.projections))

    def decoder_view(self) -> SketchView:
        return SketchView(self.n, self.matrices, self.projections.copy())

    def column_combine(self, vertices: Iterable[int]) -> np.ndarray:
        return column_combine(self, vertices)


def sketch_graph(g: Graph, matrices: Sequence[SamplingMatrix], master_seed: int) -> Sketch:
    """Dimension-``len(matrices)`` sketch; row ``i`` uses ``GaussianStream(master_seed, i)``."""
    matrices = tuple(matrices)
    proj = project_rows(g, matrices, master_seed)
    return Sketch(g.n, matrices, proj, master_seed, g.edges)


def empty_sketch(n: int, matrices: Sequence[SamplingMatrix], master_seed: int) -> Sketch:
    return sketch_graph(Graph.empty(n), matrices, master_seed)


def update(sk: Sketch, edge: tuple[int, int], sign: int) -> Sketch:
    """Stream update: insert (``sign=+1``) or delete (``sign=-1``) one edge."""
    if sign not in (1, -1):
        raise ContractViolation("sign must be +1 or -1")
    u, v = min(edge), max(edge)
    if u == v or not (0 <= u and v < sk.n):
        raise ContractViolation(f"invalid edge {edge} for n={sk.n}")
    e = (u, v)
    if sign == 1 and e in sk.edges:
        raise ContractViolation(f"edge {e} already present; the graph must stay simple")
    if sign == -1 and e not in sk.edges:
        raise ContractViolation(f"cannot delete edge {e}: it was never inserted")
    idx = np.array([pair_index(u, v, sk.n)])
    proj = sk.projections.copy()
    for i, s in enumerate(sk.matrices):
        if s.mask(idx)[0]:
            val = GaussianStream(sk.sketcher_secret, i).values(idx)[0]
            proj[i, u] += sign * val
            proj[i, v] -= sign * val
    edges = sk.edges | {e} if sign == 1 else sk.edges - {e}
    return replace(sk, projections=proj, edges=edges)


def column_combine(sk: Sketch | SketchView, vertices: Iterable[int]) -> np.ndarray:
    """Per-row sum of projection coordinates over ``vertices``."""
    verts = sorted(set(int(v) for v in vertices))
    if verts and not (0 <= verts[0] and verts[-1] < sk.n):
        raise ContractViolation("vertex set outside [0, n)")
    if not verts:
        return np.zeros(sk.s)
    return sk.projections[:, verts].sum(axis=1)


def empirical_covariance(g: Graph, s: SamplingMatrix, trials: int, seed: int) -> np.ndarray:
    """Sample covariance of ``project(g, s, .)`` over ``trials`` independent streams."""
    if trials < 1:
        raise ContractViolation("trials must be >= 1")
    sub = s.restrict(g)
    if sub.m == 0:
        return np.zeros((g.n, g.n))
    arr = sub.edge_array()
    idx = sub.pair_indices()
    inc = np.zeros((sub.m, g.n))
    inc[np.arange(sub.m), arr[:, 0]] = 1.0
    inc[np.arange(sub.m), arr[:, 1]] = -1.0
    cov = np.zeros((g.n, g.n))
    total = np.zeros(g.n)
    chunk = max(1, 2_000_000 // sub.m)
    for start in range(0, trials, chunk):
        labels = np.arange(start, min(trials, start + chunk))
        samples = gaussian_block(seed, labels, idx) @ inc
        cov += samples.T @ samples
        total += samples.sum(axis=0)
    mean = total / trials
    if trials == 1:
        return np.zeros((g.n, g.n))
    return (cov - trials * np.outer(mean, mean)) / (trials - 1)
