"""Expander decompositions, vertex sampling and balanced paths of expanders.

``expander_decompose`` prunes low-degree vertices, splits disconnected pieces,
and cuts along sets of conductance below ``eps`` until every remaining piece
is certified. Every removed edge is charged either to a pruned vertex or to
the smaller side of a sparse cut, which gives the hard bound

    |E_0| <= 8 * eps * m * log2(n) + n * d_min

checked on every run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._rng import numpy_rng
from .errors import ContractViolation, NumericalFailure
from .graph import Edge, Graph
from .spectral import EXACT_LIMIT, Certificate, Cut, certify_expander, make_cut, multi_sweep_cut, refine_cut, sweep_with_gap


@dataclass(frozen=True)
class Part:
    vertices: tuple[int, ...]
    certificate: Certificate
    min_degree: int
    edges: int


@dataclass
class DecompositionResult:
    parts: list[Part]
    leftover: list[Edge]
    eps: float
    d_min: float
    n: int
    m: int
    pruned_edges: int = 0
    cut_edges: int = 0

    @property
    def edge_bound(self) -> float:
        return leftover_bound(self.eps, self.m, self.n, self.d_min)

    def part_edges(self, g: Graph) -> list[list[Edge]]:
        out = []
        for p in self.parts:
            members = set(p.vertices)
            out.append(sorted(e for e in g.edges if e[0] in members and e[1] in members))
        return out

    def to_json_obj(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "eps": self.eps,
            "d_min": self.d_min,
            "parts": [
                {
                    "vertices": list(p.vertices),
                    "edges": p.edges,
                    "min_degree": p.min_degree,
                    "certificate": {"method": p.certificate.method, "value": p.certificate.value},
                }
                for p in self.parts
            ],
            "E0": [list(e) for e in self.leftover],
            "E0_bound": self.edge_bound,
        }


def leftover_bound(eps: float, m: int, n: int, d_min: float) -> float:
    return 8.0 * eps * m * math.log2(max(n, 1)) + n * d_min


def _prune(g: Graph, vertices: set[int], d_min: float, removed: list[Edge]) -> set[int]:
    """Iteratively drop vertices whose degree inside ``vertices`` is below ``d_min``."""
    alive = set(vertices)
    adj = {v: set() for v in alive}
    for u, v in g.edges:
        if u in alive and v in alive:
            adj[u].add(v)
            adj[v].add(u)
    stack = [v for v in alive if len(adj[v]) < d_min]
    while stack:
        v = stack.pop()
        if v not in alive:
            continue
        alive.discard(v)
        for w in adj.pop(v):
            removed.append((min(v, w), max(v, w)))
            adj[w].discard(v)
            if len(adj[w]) < d_min and w in alive:
                stack.append(w)
    return alive


def _sparse_cut(h: Graph, eps: float, cert: Certificate) -> Cut:
    """A cut of conductance below ``eps`` in an uncertified piece, or NumericalFailure."""
    if cert.method == "exact":
        assert cert.cut is not None and cert.cut.conductance < eps
        return cert.cut
    cut, lam = sweep_with_gap(h)
    if cut.conductance < eps:
        return cut
    cut = multi_sweep_cut(h, 3)
    if cut.conductance < eps:
        return cut
    cut = refine_cut(h, cut.side_S)
    if cut.conductance < eps:
        return cut
    raise NumericalFailure(
        f"certification gap on a {len(h.edges)}-edge piece: lambda={lam:.6g} < 2*eps={2 * eps:.6g} "
        f"but best sweep/refined conductance {cut.conductance:.6g} >= eps"
    )


def expander_decompose(g: Graph, eps: float, d_min: float) -> DecompositionResult:
    """Partition the edges of ``g`` into certified ``eps``-expanders of min degree ``d_min`` plus ``E_0``.

    ``d_min`` may be fractional (hierarchical levels use ``|F|/(36 n)``).
    """
    if not (0.0 < eps < 0.5):
        raise ContractViolation("eps must lie in (0, 1/2)")
    if not d_min > 0:
        raise ContractViolation("d_min must be positive")
    removed_prune: list[Edge] = []
    removed_cut: list[Edge] = []
    parts: list[Part] = []
    work: list[set[int]] = [set(range(g.n))]
    while work:
        verts = _prune(g, work.pop(), d_min, removed_prune)
        if not verts:
            continue
        h = g.induced(verts)
        comps = [c for c in h.components() if c[0] in verts]
        if len(comps) > 1:
            work.extend(set(c) for c in reversed(comps))
            continue
        cert = certify_expander(h, eps)
        if cert.certified:
            deg = h.degrees()
            parts.append(Part(tuple(sorted(verts)), cert, int(deg[sorted(verts)].min()), h.m))
            continue
        cut = _sparse_cut(h, eps, cert)
        side = set(cut.side_S)
        removed_cut.extend(sorted((u, v) for u, v in h.edges if (u in side) != (v in side)))
        work.append(verts - side)
        work.append(side)
    parts.sort(key=lambda p: p.vertices)
    leftover = sorted(removed_prune + removed_cut)
    res = DecompositionResult(parts, leftover, eps, d_min, g.n, g.m, len(removed_prune), len(removed_cut))
    if len(leftover) > res.edge_bound + 1e-9:
        raise NumericalFailure(f"|E_0| = {len(leftover)} exceeds the bound {res.edge_bound:.6g}")
    if sum(p.edges for p in parts) + len(leftover) != g.m:
        raise NumericalFailure("parts and E_0 do not tile the edge set")
    return res


# -- hierarchical ------------------------------------------------------------


@dataclass
class Level:
    index: int
    m_in: int  # |F_{i-1}|, the edges entering this level
    d_min: float
    decomposition: DecompositionResult
    edges: list[Edge]  # E_i: edges captured by this level's expanders
    leftover: list[Edge]  # F_i


@dataclass
class HierarchicalDecomposition:
    n: int
    m: int
    eps: float
    levels: list[Level]
    terminal: list[Edge]
    t: int
    auto_threshold: float | None = None
    auto_attainable: bool | None = None

    def edge_counts(self) -> list[int]:
        """``m_1, ..., m_t, |F_t|``."""
        return [lv.m_in for lv in self.levels] + [len(self.terminal)]

    def to_json_obj(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "eps": self.eps,
            "t": self.t,
            "auto_threshold": self.auto_threshold,
            "auto_attainable": self.auto_attainable,
            "levels": [
                {
                    "i": lv.index,
                    "m_i": lv.m_in,
                    "D_i": lv.d_min,
                    "E_i": len(lv.edges),
                    "F_i": len(lv.leftover),
                    "expanders": [
                        {"vertices": list(p.vertices), "method": p.certificate.method, "value": p.certificate.value}
                        for p in lv.decomposition.parts
                    ],
                }
                for lv in self.levels
            ],
            "terminal": [list(e) for e in self.terminal],
        }


def auto_threshold(n: int, d: float, delta: float) -> float:
    return n ** (1.0 + delta) * d**1.5


def hierarchical_decompose(
    g: Graph, t: int | None = None, *, d: float | None = None, delta: float | None = None
) -> HierarchicalDecomposition:
    """Repeatedly decompose the leftover edges with ``eps = 1/(36 log2 n)`` and ``D_i = |F_{i-1}|/(36 n)``.

    With ``t`` given, exactly ``t`` levels run. Otherwise ``d`` and ``delta``
    set the threshold ``n^(1+delta) d^(3/2)`` and levels run until the edges
    entering a level drop below it; that level is the last.
    """
    if g.n < 2:
        raise ContractViolation("need at least two vertices")
    if t is None:
        if d is None or delta is None:
            raise ContractViolation("give t, or both d and delta for the automatic rule")
        thr = auto_threshold(g.n, d, delta)
    else:
        if t < 1:
            raise ContractViolation("t must be >= 1")
        thr = None
    eps = 1.0 / (36.0 * math.log2(g.n))
    current = g.sorted_edges()
    levels: list[Level] = []
    i = 0
    while True:
        i += 1
        m_in = len(current)
        f_graph = g.edge_subgraph(current)
        d_i = m_in / (36.0 * g.n)
        if m_in == 0:
            dec = DecompositionResult([], [], eps, d_i, g.n, 0)
        else:
            dec = expander_decompose(f_graph, eps, d_i)
        left = dec.leftover
        if len(left) > m_in / 4.0:
            raise NumericalFailure(f"level {i}: |F_i| = {len(left)} > |F_(i-1)|/4 = {m_in / 4:.6g}")
        if levels and m_in > levels[-1].m_in / 2.0:
            raise NumericalFailure(f"level {i}: m_i = {m_in} > m_(i-1)/2")
        kept = sorted(set(current) - set(left))
        levels.append(Level(i, m_in, d_i, dec, kept, left))
        current = left
        if t is not None and i >= t:
            break
        if thr is not None and m_in < thr:
            break
    attainable = None if thr is None else g.m >= thr
    return HierarchicalDecomposition(g.n, g.m, eps, levels, current, len(levels), thr, attainable)


# -- vertex sampling and layered graphs -------------------------------------


def vertex_sample(g: Graph, p: float, seed: int) -> Graph:
    """Keep each vertex independently with probability ``p``; labels are preserved."""
    if not (0.0 < p <= 1.0):
        raise ContractViolation("p must lie in (0, 1]")
    if p == 1.0:
        return g
    keep = np.flatnonzero(numpy_rng(seed, "vertex-sample").random(g.n) < p)
    return g.induced(keep.tolist())


def layer_assignment(layers: Sequence[Iterable[int]], n: int) -> np.ndarray:
    """Vertex -> layer index for a partition of ``range(n)``; validates coverage."""
    out = np.full(n, -1, dtype=np.int64)
    for i, part in enumerate(layers):
        for v in part:
            if not 0 <= v < n:
                raise ContractViolation(f"vertex {v} out of range")
            if out[v] >= 0:
                raise ContractViolation(f"vertex {v} is in two layers")
            out[v] = i
    if (out < 0).any():
        raise ContractViolation(f"layers miss vertex {int(np.flatnonzero(out < 0)[0])}")
    return out


def partition_intersect(h: Graph, layers: Sequence[Iterable[int]]) -> Graph:
    """Edges of ``h`` inside a layer or between consecutive layers."""
    lay = layer_assignment(layers, h.n)
    return Graph(h.n, frozenset(e for e in h.edges if abs(lay[e[0]] - lay[e[1]]) <= 1))


def layer_pair_counts(h: Graph, layers: Sequence[Iterable[int]]) -> dict[tuple[int, int], int]:
    """Ordered-pair counts ``|{u in V_i, v in V_j : uv in E}|`` for ``|i - j| <= 1``."""
    lay = layer_assignment(layers, h.n)
    d = len(layers)
    out = {(i, j): 0 for i in range(d) for j in range(d) if abs(i - j) <= 1}
    for u, v in h.edges:
        a, b = int(lay[u]), int(lay[v])
        if abs(a - b) <= 1:
            out[(a, b)] += 1
            out[(b, a)] += 1
    return out


@dataclass
class BalancedPath:
    graph: Graph
    layers: list[list[int]]
    phi: float
    window_certificates: list[Certificate]
    cond1: bool
    cond2: bool
    cond3: bool
    worst_vol_ratio: float  # max_i vol(U_i) / (3 min_j vol_{H_j}(U_j)); <= 1 passes
    worst_internal_ratio: float  # min over (i, j) of 2|E(V_j,V_j)| / (vol_{H_i}(U_i)/8); >= 1 passes

    @property
    def d(self) -> int:
        return len(self.layers)

    @property
    def ok(self) -> bool:
        return self.cond1 and self.cond2 and self.cond3

    def window(self, i: int) -> list[int]:
        return sorted(self.layers[i] + self.layers[i + 1])

    def to_json_obj(self) -> dict:
        return {
            "phi": self.phi,
            "d": self.d,
            "conditions": {"1": self.cond1, "2": self.cond2, "3": self.cond3},
            "worst_vol_ratio": self.worst_vol_ratio,
            "worst_internal_ratio": self.worst_internal_ratio,
            "windows": [{"method": c.method, "value": c.value, "certified": c.certified} for c in self.window_certificates],
        }


def check_balanced_path(h: Graph, layers: Sequence[Iterable[int]], phi: float) -> BalancedPath:
    """Evaluate the three balanced-path conditions on windows ``U_i = V_i + V_(i+1)``.

    Within-layer edges are counted as ordered pairs, matching the volume
    convention on the other side of condition (3).
    """
    layers = [sorted(int(v) for v in part) for part in layers]
    if len(layers) < 2:
        raise ContractViolation("need at least two layers")
    layer_assignment(layers, h.n)
    deg = h.degrees()
    certs, inner_vol, outer_vol = [], [], []
    cond1 = True
    for i in range(len(layers) - 1):
        u = layers[i] + layers[i + 1]
        hi = h.induced(u)
        cert = certify_expander(hi, phi)
        # every window vertex must take part in the window expander
        full = len(u) >= 2 and hi.relabeled(u)[0].is_connected()
        cond1 = cond1 and cert.certified and full
        certs.append(cert)
        inner_vol.append(2 * hi.m)
        outer_vol.append(int(deg[u].sum()))
    min_inner = min(inner_vol)
    worst_vol = max(outer_vol) / (3.0 * min_inner) if min_inner > 0 else math.inf
    internal = [2 * h.induced(part).m for part in layers]
    ratios = []
    for i in range(len(layers) - 1):
        for j in (i, i + 1):
            need = inner_vol[i] / 8.0
            ratios.append(internal[j] / need if need > 0 else (math.inf if internal[j] > 0 else 0.0))
    worst_int = min(ratios)
    return BalancedPath(h, layers, phi, certs, cond1, worst_vol <= 1.0, worst_int >= 1.0, worst_vol, worst_int)


@dataclass(frozen=True)
class ExpansionReport:
    min_ratio: float
    worst_set: tuple[int, ...]
    tested: int
    exhaustive: bool
    floor: float

    @property
    def flagged(self) -> bool:
        return self.min_ratio < self.floor


def check_expansion_lb(
    path: BalancedPath, trials: int = 2000, seed: int = 0, floor: float = 0.05
) -> ExpansionReport:
    """Minimum of ``|E(S, V-S)| / (phi * min(vol S, vol U_1))`` over sets with ``vol S <= vol V / 2``.

    All sets are enumerated when at most 22 vertices have positive degree;
    otherwise layer prefixes, windows, single vertices and ``trials`` random
    sets are tested.
    """
    g = path.graph
    deg = g.degrees()
    verts = np.flatnonzero(deg > 0)
    total = int(deg.sum())
    vol_u1 = int(deg[path.window(0)].sum())
    if verts.size <= EXACT_LIMIT:
        return _expansion_exhaustive(g, verts, deg, total, vol_u1, path.phi, floor)
    rng = numpy_rng(seed, "expansion-lb")
    candidates: list[list[int]] = []
    for k in range(1, path.d):
        candidates.append(sorted(v for part in path.layers[:k] for v in part))
    candidates.extend(path.window(i) for i in range(path.d - 1))
    candidates.extend([[int(v)] for v in verts])
    for _ in range(trials):
        size = int(rng.integers(1, verts.size))
        candidates.append(sorted(rng.choice(verts, size=size, replace=False).tolist()))
    best, best_set, tested = math.inf, (), 0
    for s in candidates:
        cut = make_cut(g, s)
        side = cut.side_S
        vol_s = cut.vol_S
        if vol_s == 0 or 2 * vol_s > total:
            continue
        tested += 1
        r = cut.crossing_edges / (path.phi * min(vol_s, vol_u1))
        if r < best:
            best, best_set = r, side
    return ExpansionReport(best, best_set, tested, False, floor)


def _expansion_exhaustive(g, verts, deg, total, vol_u1, phi, floor) -> ExpansionReport:
    k = verts.size
    pos = {int(v): i for i, v in enumerate(verts)}
    masks = np.arange(1, 1 << k, dtype=np.int64)
    vol = np.zeros(masks.size, dtype=np.int64)
    for i, v in enumerate(verts):
        vol += ((masks >> i) & 1) * int(deg[v])
    inner = np.zeros(masks.size, dtype=np.int64)
    for u, v in g.edges:
        inner += ((masks >> pos[u]) & (masks >> pos[v]) & 1)
    crossing = vol - 2 * inner
    ok = 2 * vol <= total
    ratio = np.where(ok, crossing / (phi * np.minimum(vol, vol_u1).clip(min=1)), np.inf)
    j = int(np.argmin(ratio))
    side = tuple(int(verts[i]) for i in range(k) if (masks[j] >> i) & 1)
    return ExpansionReport(float(ratio[j]), side, int(ok.sum()), True, floor)


def decomposition_report_json(res: DecompositionResult) -> str:
    return json.dumps(res.to_json_obj(), sort_keys=True)
