"""Sparse-recovery primitives built from Gaussian sketch rows.

Every estimator row here is an ordinary sketch row: a sampling rule over the
index universe paired with its own Gaussian stream. Decoders see the public
layout (which determines every sampling matrix) and the measured values,
never the Gaussian seed.

The l0-sampler subsamples the universe at nested levels ``2**-j``, estimates
the squared norm of each level and of each (level, bit) restriction, and
reads off the index of a level that holds exactly one nonzero. Spanning
forests come from Borůvka rounds, with each component querying an l0-sampler
on the sum of its vertices' sketch columns, i.e. on its cut vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy import stats

from ._rng import derive_seed, keyed_bits, uniforms
from .errors import ContractViolation
from .graph import Graph, UnionFind, num_pairs, pair_unindex
from .sketch import SamplingMatrix, gaussian_block, gaussian_pairs

ROWS_PER_LOG = 24
ZERO_THRESHOLD = 0.1
SINGLETON_RANGE = (2.0 / 3.0, 4.0 / 3.0)
REP_FAILURE = 1.0 / 3.0
HH_ACCEPT = 0.75
HH_REJECT = 1.0 / 16.0
# median of a chi-square variable with one degree of freedom
CHI2_1_MEDIAN = float(stats.chi2.ppf(0.5, 1))


def log2_ceil(x: int) -> int:
    return max(1, math.ceil(math.log2(max(x, 2))))


def rows_per_estimate(universe: int) -> int:
    return ROWS_PER_LOG * log2_ceil(universe)


def l2_from_measurements(values) -> float:
    """Mean of squared Gaussian dot products; unbiased for the squared norm."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ContractViolation("need at least one measurement")
    return float(np.mean(values * values))


def l2_estimate(indices, values, rows: int, master_seed: int) -> float:
    """Estimate ``||x||^2`` for the sparse vector ``x[indices] = values`` from ``rows`` Gaussian rows."""
    if rows < 1:
        raise ContractViolation("rows must be >= 1")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        return 0.0
    g = gaussian_block(master_seed, np.arange(rows), idx)
    return l2_from_measurements(g @ np.asarray(values, dtype=float))


# -- l0 sampler --------------------------------------------------------------


@dataclass(frozen=True)
class L0Layout:
    """Public structure of an l0-sampler sketch over ``universe`` indices.

    Each repetition owns one nested level hash (sampling label ``rep``). Its
    rows are ordered level by level; within a level, ``r`` norm rows come
    first, then ``r`` rows for each bit plane.
    """

    universe: int
    seed: int
    delta: float
    r: int
    levels: int
    bits: int
    reps: int

    @classmethod
    def create(cls, universe: int, delta: float, seed: int, r: int | None = None) -> "L0Layout":
        if not (0.0 < delta < 1.0):
            raise ContractViolation("delta must lie in (0, 1)")
        if universe < 1:
            raise ContractViolation("universe must be non-empty")
        lg = log2_ceil(universe)
        reps = max(1, math.ceil(math.log(1.0 / delta) / math.log(1.0 / REP_FAILURE)))
        return cls(universe, seed, delta, r or rows_per_estimate(universe), lg + 1, lg, reps)

    @property
    def rows_per_level(self) -> int:
        return self.r * (1 + self.bits)

    @property
    def rows_per_rep(self) -> int:
        return self.levels * self.rows_per_level

    @property
    def row_count(self) -> int:
        return self.reps * self.rows_per_rep

    def matrices(self, rep: int) -> list[SamplingMatrix]:
        out = []
        for j in range(self.levels):
            for b in [None] + list(range(self.bits)):
                m = SamplingMatrix(self.universe, "level", level=j, seed=self.seed, label=rep, bit=b)
                out.extend([m] * self.r)
        return out

    def row_labels(self, rep: int) -> np.ndarray:
        start = rep * self.rows_per_rep
        return np.arange(start, start + self.rows_per_rep)

    def level_uniforms(self, rep: int, indices) -> np.ndarray:
        # must agree with SamplingMatrix(kind="level", label=rep).mask
        key = keyed_bits(derive_seed(self.seed, "sample"), np.uint64(rep))
        return uniforms(int(key), np.asarray(indices, dtype=np.int64))

    def in_level(self, rep: int, level: int, index: int) -> bool:
        return bool(self.level_uniforms(rep, [index])[0] < 2.0**-level)

    def rep_blocks(self, rep: int, indices: np.ndarray, master_seed: int):
        """Yield ``(row_slice, idx_positions, G)`` per level.

        ``G[i, k]`` is row ``i``'s sampled Gaussian weight on ``indices[positions[k]]``
        (zero where the row's sampling matrix excludes it).
        """
        indices = np.asarray(indices, dtype=np.int64)
        u = self.level_uniforms(rep, indices)
        labels = self.row_labels(rep)
        r = self.r
        for j in range(self.levels):
            pos = np.flatnonzero(u < 2.0**-j)
            if pos.size == 0:
                continue
            base = j * self.rows_per_level
            sub = indices[pos]
            g = np.zeros((self.rows_per_level, pos.size))
            g[:r] = gaussian_block(master_seed, labels[base : base + r], sub)
            for b in range(self.bits):
                # bit-plane rows only sample indices whose bit b is set
                cols = np.flatnonzero((sub >> b) & 1)
                lo = base + (b + 1) * r
                if cols.size:
                    g[(b + 1) * r : (b + 2) * r, cols] = gaussian_block(master_seed, labels[lo : lo + r], sub[cols])
            yield slice(base, base + self.rows_per_level), pos, g


class MeasurementSource(Protocol):
    def rep_values(self, rep: int) -> np.ndarray: ...


class VectorL0Sketch:
    """Sketcher for a sparse vector; repetitions are materialized on first use."""

    def __init__(self, layout: L0Layout, indices, values, master_seed: int):
        self.layout = layout
        self._idx = np.asarray(indices, dtype=np.int64)
        self._val = np.asarray(values, dtype=float)
        self.__secret = master_seed
        self._cache: dict[int, np.ndarray] = {}

    def rep_values(self, rep: int) -> np.ndarray:
        if rep not in self._cache:
            out = np.zeros(self.layout.rows_per_rep)
            for rows, pos, g in self.layout.rep_blocks(rep, self._idx, self.__secret):
                out[rows] = g @ self._val[pos]
            self._cache[rep] = out
        return self._cache[rep]


@dataclass(frozen=True)
class L0Result:
    index: int | None
    zero: bool = False
    rep: int | None = None
    level: int | None = None

    @property
    def failed(self) -> bool:
        return self.index is None


def _decode_rep(layout: L0Layout, rep: int, y: np.ndarray) -> tuple[int | None, int | None]:
    r = layout.r
    lo, hi = SINGLETON_RANGE
    for j in range(layout.levels):
        block = y[j * layout.rows_per_level : (j + 1) * layout.rows_per_level].reshape(1 + layout.bits, r)
        est = np.mean(block * block, axis=1)
        level_est = est[0]
        if not (lo <= level_est <= hi):
            continue
        bit_est = est[1:]
        ones = bit_est > level_est / 2.0
        # a singleton level has each bit plane either exactly empty or the full singleton
        consistent = np.all((bit_est < ZERO_THRESHOLD) | ((bit_est >= lo) & (bit_est <= hi)))
        if not consistent:
            continue
        index = int(np.sum(ones.astype(np.int64) << np.arange(layout.bits)))
        if index >= layout.universe or not layout.in_level(rep, j, index):
            continue
        return index, j
    return None, None


def l0_query(layout: L0Layout, source: MeasurementSource) -> L0Result:
    """Decode one nonzero coordinate, report a zero vector, or FAIL (``index=None``)."""
    for rep in range(layout.reps):
        y = source.rep_values(rep)
        if rep == 0 and l2_from_measurements(y[: layout.r]) < ZERO_THRESHOLD:
            return L0Result(None, zero=True)
        index, level = _decode_rep(layout, rep, y)
        if index is not None:
            return L0Result(index, rep=rep, level=level)
    return L0Result(None)


def l0_decode(layout: L0Layout, source: MeasurementSource) -> int | None:
    """A nonzero coordinate of the sketched vector, or ``None`` (FAIL)."""
    return l0_query(layout, source).index


def l0_sample_vector(indices, values, delta: float, seed: int, universe: int) -> L0Result:
    """Sketch ``x`` with fresh randomness derived from ``seed`` and decode it."""
    vals = np.asarray(values)
    if vals.size and not np.all(np.isin(vals, (-1, 0, 1))):
        raise ContractViolation("l0-sampler expects entries in {-1, 0, +1}")
    layout = L0Layout.create(universe, delta, derive_seed(seed, "l0-sampling"))
    sk = VectorL0Sketch(layout, indices, values, derive_seed(seed, "l0-gauss"))
    return l0_query(layout, sk)


# -- heavy hitters -----------------------------------------------------------


@dataclass(frozen=True)
class HHLayout:
    """``reps`` independent hashings into ``buckets`` buckets; one Gaussian row per bucket."""

    universe: int
    phi: float
    seed: int
    buckets: int
    reps: int

    @classmethod
    def create(cls, universe: int, phi: float, seed: int, reps: int | None = None) -> "HHLayout":
        if not (0.0 < phi < 1.0):
            raise ContractViolation("phi must lie in (0, 1)")
        return cls(universe, phi, seed, math.ceil(4.0 / phi), reps or rows_per_estimate(universe))

    def matrices(self) -> list[SamplingMatrix]:
        return [
            SamplingMatrix(self.universe, "all", seed=self.seed, label=rep, buckets=self.buckets, bucket=b)
            for rep in range(self.reps)
            for b in range(self.buckets)
        ]

    def bucket_of(self, indices) -> np.ndarray:
        """``(reps, len(indices))`` bucket assignments."""
        idx = np.asarray(indices, dtype=np.int64)
        key = keyed_bits(derive_seed(self.seed, "bucket"), np.arange(self.reps, dtype=np.uint64))
        u = uniforms(key[:, None], idx[None, :])
        return np.floor(u * self.buckets).astype(np.int64)


def hh_sketch(layout: HHLayout, indices, values, master_seed: int) -> np.ndarray:
    """Measurements ``(reps, buckets)`` of the sparse vector ``x[indices] = values``."""
    idx = np.asarray(indices, dtype=np.int64)
    val = np.asarray(values, dtype=float)
    out = np.zeros((layout.reps, layout.buckets))
    if idx.size == 0:
        return out
    buckets = layout.bucket_of(idx)
    labels = np.arange(layout.reps * layout.buckets).reshape(layout.reps, layout.buckets)
    for rep in range(layout.reps):
        g = gaussian_pairs(master_seed, labels[rep, buckets[rep]], idx)
        np.add.at(out[rep], buckets[rep], g * val)
    return out


def hh_decode(layout: HHLayout, measurements: np.ndarray) -> list[int]:
    """Elements whose estimated square reaches ``HH_ACCEPT * phi`` of the estimated squared norm."""
    y2 = np.asarray(measurements, dtype=float) ** 2
    norm2 = float(np.mean(y2.sum(axis=1)))
    if norm2 == 0.0:
        return []
    out = []
    chunk = 4096
    for start in range(0, layout.universe, chunk):
        idx = np.arange(start, min(layout.universe, start + chunk))
        b = layout.bucket_of(idx)
        est = np.median(np.take_along_axis(y2, b, axis=1), axis=0) / CHI2_1_MEDIAN
        out.extend(idx[est >= HH_ACCEPT * layout.phi * norm2].tolist())
    return out


# -- spanning forest ---------------------------------------------------------


class GraphL0Batch:
    """l0-sampler rows over the pair universe of a graph, for one Borůvka round.

    Sketcher side: holds the graph and Gaussian seed. Projections of each
    repetition are computed on first request.
    """

    def __init__(self, g: Graph, layout: L0Layout, master_seed: int):
        self.n = g.n
        self.layout = layout
        self._graph = g
        self.__secret = master_seed
        self._cache: dict[int, np.ndarray] = {}

    def projections(self, rep: int) -> np.ndarray:
        """``(rows_per_rep, n)`` projections ``g S B(G)`` of repetition ``rep``."""
        if rep not in self._cache:
            g = self._graph
            out = np.zeros((self.layout.rows_per_rep, g.n))
            if g.m:
                arr = g.edge_array()
                inc = np.zeros((g.m, g.n))
                inc[np.arange(g.m), arr[:, 0]] = 1.0
                inc[np.arange(g.m), arr[:, 1]] = -1.0
                for rows, pos, blk in self.layout.rep_blocks(rep, g.pair_indices(), self.__secret):
                    out[rows] = blk @ inc[pos]
            self._cache[rep] = out
        return self._cache[rep]


class _RoundMeasurements:
    """Column-combined measurements of every active component in one Borůvka round."""

    def __init__(self, batch: GraphL0Batch, indicator: np.ndarray):
        self._batch = batch
        self._indicator = indicator
        self._cache: dict[int, np.ndarray] = {}

    def values(self, rep: int) -> np.ndarray:
        if rep not in self._cache:
            self._cache[rep] = self._batch.projections(rep) @ self._indicator
        return self._cache[rep]


class _CutSource:
    def __init__(self, round_values: _RoundMeasurements, column: int):
        self._round = round_values
        self._column = column

    def rep_values(self, rep: int) -> np.ndarray:
        return self._round.values(rep)[:, self._column]


def cut_vector(g: Graph, vertices) -> dict[int, int]:
    """Signed cut indicator ``sum_{v in S} B^v`` as ``{pair index: +-1}``."""
    from .graph import pair_index

    inside = set(vertices)
    out = {}
    for u, v in g.edges:
        if (u in inside) != (v in inside):
            out[pair_index(u, v, g.n)] = 1 if u in inside else -1
    return out


@dataclass
class ForestResult:
    edges: list[tuple[int, int]]
    success: bool
    rounds_used: int
    queries: int
    failed_queries: int
    delta: float
    components: list[list[int]] = field(default_factory=list)

    @property
    def success_lower_bound(self) -> float:
        """Union bound on every l0 query having succeeded."""
        return max(0.0, 1.0 - self.queries * self.delta)


def forest_batches(g: Graph, delta: float, seed: int) -> list[GraphL0Batch]:
    rounds = log2_ceil(g.n)
    universe = max(1, num_pairs(g.n))
    return [
        GraphL0Batch(
            g,
            L0Layout.create(universe, delta, derive_seed(seed, "forest-sampling", k), r=rows_per_estimate(g.n)),
            derive_seed(seed, "forest-gauss", k),
        )
        for k in range(rounds)
    ]


def spanning_forest_from_batches(n: int, batches) -> ForestResult:
    """Borůvka over sketch batches, one fresh batch per round."""
    uf = UnionFind(n)
    forest: list[tuple[int, int]] = []
    done: set[int] = set()  # roots whose cut vector was measured as zero
    queries = failed = rounds = 0
    delta = batches[0].layout.delta if batches else 0.0
    for batch in batches:
        comps = _components(uf, n)
        active = [c for c in comps if uf.find(c[0]) not in done]
        if len(comps) <= 1 or not active:
            break
        rounds += 1
        indicator = np.zeros((n, len(active)))
        for k, c in enumerate(active):
            indicator[c, k] = 1.0
        measured = _RoundMeasurements(batch, indicator)
        picked = []
        for k, c in enumerate(active):
            queries += 1
            res = l0_query(batch.layout, _CutSource(measured, k))
            if res.zero:
                done.add(uf.find(c[0]))
                continue
            if res.index is None:
                failed += 1
                continue
            u, v = pair_unindex(res.index, n)
            inside = set(c)
            if (u in inside) == (v in inside):
                failed += 1
                continue
            picked.append((u, v))
        for u, v in picked:
            if uf.union(u, v):
                forest.append((u, v))
    comps = _components(uf, n)
    success = n <= 1 or len(comps) == 1 or all(uf.find(c[0]) in done for c in comps)
    return ForestResult(sorted(forest), success, rounds, queries, failed, delta, comps)


def spanning_forest(g: Graph, delta: float = 0.01, seed: int = 0) -> ForestResult:
    """Recover a spanning forest of ``g`` from ``ceil(log2 n)`` independent l0 sketch batches."""
    return spanning_forest_from_batches(g.n, forest_batches(g, delta, seed))


def _components(uf: UnionFind, n: int) -> list[list[int]]:
    groups: dict[int, list[int]] = {}
    for v in range(n):
        groups.setdefault(uf.find(v), []).append(v)
    return sorted(groups.values(), key=lambda c: c[0])
