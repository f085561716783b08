"""Conductance, spectral gap, Cheeger sweeps, effective resistance, walk-matrix powers.

All spectral quantities live on the degree-positive vertices of a graph;
isolated vertices have no normalized Laplacian row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NumericalFailure
from .graph import Graph, UnionFind, adjacency_matrix, laplacian, normalized_laplacian

EIG_TOL = 1e-9
EXACT_LIMIT = 22


@dataclass(frozen=True)
class Cut:
    side_S: tuple[int, ...]
    crossing_edges: int
    vol_S: int
    vol_complement: int

    @property
    def conductance(self) -> float:
        denom = min(self.vol_S, self.vol_complement)
        if denom == 0:
            return math.inf
        return self.crossing_edges / denom


@dataclass(frozen=True)
class SpectralProfile:
    lambda_: float
    conductance_lb: float
    min_degree: int
    conductance_exact: float | None = None


@dataclass(frozen=True)
class Certificate:
    """Evidence that a graph is (or is not) an ``eps``-expander."""

    method: str  # "exact" or "spectral"
    value: float  # exact conductance, or lambda/2 (a lower bound on it)
    certified: bool
    lambda_: float | None = None
    cut: Cut | None = field(default=None, compare=False)


def make_cut(g: Graph, side) -> Cut:
    """Cut of ``g`` along ``side``, normalized so that ``vol_S <= vol_complement``."""
    side = set(int(v) for v in side)
    deg = g.degrees()
    vol_s = int(sum(deg[v] for v in side))
    total = int(deg.sum())
    crossing = sum(1 for u, v in g.edges if (u in side) != (v in side))
    other = total - vol_s
    comp = tuple(sorted(v for v in range(g.n) if v not in side and deg[v] > 0))
    mine = tuple(sorted(side))
    if vol_s > other or (vol_s == other and comp < mine):
        return Cut(comp, crossing, other, vol_s)
    return Cut(mine, crossing, vol_s, other)


def _eigh(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(mat)
    return vals, vecs


def spectral_gap(g: Graph) -> float:
    """Second smallest eigenvalue of the normalized Laplacian."""
    lt, support = normalized_laplacian(g)
    if len(support) < 2:
        raise ContractViolation("spectral gap needs at least two degree-positive vertices")
    vals = np.linalg.eigvalsh(lt)
    return float(np.clip(vals[1], 0.0, 2.0))


def _compact(g: Graph) -> tuple[Graph, list[int]]:
    deg = g.degrees()
    return g.relabeled(int(v) for v in np.flatnonzero(deg > 0))


def conductance_exact(g: Graph) -> tuple[float, Cut]:
    """Minimum conductance by enumerating every cut of the degree-positive vertices.

    Ties go to the lexicographically smallest side (after normalizing each cut
    to its smaller-volume side).
    """
    h, labels = _compact(g)
    k = h.n
    if k > EXACT_LIMIT:
        raise ContractViolation(
            f"exact conductance enumerates 2^{k - 1} cuts; limit is {EXACT_LIMIT} "
            "degree-positive vertices (use spectral_gap / Cheeger bounds instead)"
        )
    if k < 2:
        raise ContractViolation("conductance needs at least two degree-positive vertices")
    deg = h.degrees()
    adj_mask = [0] * k
    for u, v in h.edges:
        adj_mask[u] |= 1 << v
        adj_mask[v] |= 1 << u
    # masks over vertices 0..k-2; vertex k-1 always lies on the complement
    size = 1 << (k - 1)
    internal = np.zeros(size, dtype=np.int64)
    vol = np.zeros(size, dtype=np.int64)
    for b in range(k - 1):
        lo = np.arange(1 << b, dtype=np.int64)
        hi = slice(1 << b, 1 << (b + 1))
        internal[hi] = internal[: 1 << b] + np.bitwise_count(lo & adj_mask[b])
        vol[hi] = vol[: 1 << b] + deg[b]
    total = int(deg.sum())
    crossing = vol - 2 * internal
    denom = np.minimum(vol, total - vol)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(denom > 0, crossing / np.where(denom > 0, denom, 1), np.inf)
    phi[0] = np.inf
    best = float(phi.min())
    full = (1 << k) - 1
    sides = []
    for mask in np.flatnonzero(phi == best):
        mask = int(mask)
        comp = full ^ mask
        v_s = int(vol[mask])
        if v_s < total - v_s:
            sides.append(mask)
        elif v_s > total - v_s:
            sides.append(comp)
        else:
            sides.append(min(mask, comp, key=_bits))
    side_mask = min(sides, key=_bits)
    side = [labels[i] for i in _bits(side_mask)]
    return best, make_cut(g, side)


def _bits(mask: int) -> tuple[int, ...]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def conductance(g: Graph, side) -> float:
    return make_cut(g, side).conductance


def _sweep_vector(h: Graph, a: np.ndarray, deg: np.ndarray, x: np.ndarray) -> tuple[float, int, np.ndarray]:
    """Best prefix of the ordering by ``x``; returns (conductance, prefix size, order)."""
    order = np.argsort(x, kind="stable")
    ap = a[np.ix_(order, order)]
    internal = np.cumsum(np.tril(ap, -1).sum(axis=1))
    vol = np.cumsum(deg[order])
    total = vol[-1]
    crossing = vol - 2 * internal
    denom = np.minimum(vol, total - vol)[:-1]
    crossing = crossing[:-1]
    phi = np.where(denom > 0, crossing / np.maximum(denom, 1), np.inf)
    best = phi.min()
    ties = np.flatnonzero(phi == best)
    # smaller-volume side among equal-conductance prefixes
    pick = int(ties[np.argmin(denom[ties])])
    return float(best), pick + 1, order


def _sweep(g: Graph, n_vectors: int = 1) -> tuple[Cut, float]:
    h, labels = _compact(g)
    if h.n < 2:
        raise ContractViolation("sweep cut needs at least two degree-positive vertices")
    a = adjacency_matrix(h)
    deg = a.sum(axis=1)
    lt = np.eye(h.n) - a / np.sqrt(np.outer(deg, deg))
    vals, vecs = _eigh(lt)
    lam = float(np.clip(vals[1], 0.0, 2.0))
    best: tuple[float, int, np.ndarray] | None = None
    for j in range(1, min(1 + n_vectors, h.n)):
        cand = _sweep_vector(h, a, deg, vecs[:, j] / np.sqrt(deg))
        if best is None or cand[0] < best[0]:
            best = cand
    _, size, order = best
    cut = make_cut(g, [labels[i] for i in order[:size]])
    return cut, lam


def sweep_with_gap(g: Graph) -> tuple[Cut, float]:
    """Fiedler sweep cut together with the spectral gap it came from."""
    return _sweep(g)


def sweep_cut(g: Graph) -> Cut:
    """Fiedler sweep cut, checked against the Cheeger guarantee ``phi <= sqrt(2 lambda)``."""
    cut, lam = _sweep(g)
    if cut.conductance > math.sqrt(2.0 * lam) + EIG_TOL:
        raise NumericalFailure(
            f"sweep cut conductance {cut.conductance:.6g} exceeds sqrt(2*lambda)={math.sqrt(2 * lam):.6g}"
        )
    return cut


def multi_sweep_cut(g: Graph, n_vectors: int = 3) -> Cut:
    """Best sweep cut over the first ``n_vectors`` nontrivial eigenvectors."""
    return _sweep(g, n_vectors)[0]


def refine_cut(g: Graph, side, max_moves: int | None = None) -> Cut:
    """Greedy local search: move single vertices across the cut while conductance drops."""
    h, labels = _compact(g)
    pos = {v: i for i, v in enumerate(labels)}
    a = adjacency_matrix(h)
    deg = a.sum(axis=1)
    total = deg.sum()
    mask = np.zeros(h.n, dtype=bool)
    mask[[pos[v] for v in side if v in pos]] = True
    inside = a @ mask
    crossing = float(deg[mask].sum() - inside[mask].sum())
    vol = float(deg[mask].sum())

    def phi(c, v):
        d = np.minimum(v, total - v)
        return np.where(d > 0, c / np.where(d > 0, d, 1), np.inf)

    current = float(phi(crossing, vol))
    for _ in range(max_moves if max_moves is not None else 4 * h.n):
        # moving v out of S adds 2*in_v - deg_v crossing edges; moving in adds deg_v - 2*in_v
        delta_c = np.where(mask, 2 * inside - deg, deg - 2 * inside)
        delta_v = np.where(mask, -deg, deg)
        cand = phi(crossing + delta_c, vol + delta_v)
        j = int(np.argmin(cand))
        if not cand[j] < current - 1e-15:
            break
        crossing += delta_c[j]
        vol += delta_v[j]
        current = float(cand[j])
        sign = -1.0 if mask[j] else 1.0
        mask[j] = not mask[j]
        inside += sign * a[:, j]
    return make_cut(g, [labels[i] for i in np.flatnonzero(mask)])


def spectral_profile(g: Graph) -> SpectralProfile:
    lam = spectral_gap(g)
    deg = g.degrees()
    exact = None
    if np.count_nonzero(deg) <= EXACT_LIMIT:
        exact = conductance_exact(g)[0]
    return SpectralProfile(lam, lam / 2.0, int(deg[deg > 0].min()), exact)


def certify_expander(g: Graph, eps: float, prefer_exact: bool = True) -> Certificate:
    """Certify ``phi(g) >= eps`` exactly (small graphs) or via ``lambda/2 >= eps``."""
    deg = g.degrees()
    k = int(np.count_nonzero(deg))
    if k < 2:
        return Certificate("spectral", 0.0, False)
    if prefer_exact and k <= EXACT_LIMIT:
        phi, cut = conductance_exact(g)
        return Certificate("exact", phi, phi >= eps, cut=cut)
    lam = spectral_gap(g)
    return Certificate("spectral", lam / 2.0, lam / 2.0 >= eps, lambda_=lam)


# -- effective resistance ------------------------------------------------------


def laplacian_pinv(lap: np.ndarray) -> np.ndarray:
    """Pseudoinverse by eigendecomposition with a relative cutoff of ``1e-9 * lambda_max``."""
    vals, vecs = np.linalg.eigh(lap)
    if vals.size == 0:
        return np.zeros_like(lap)
    cutoff = EIG_TOL * max(float(vals[-1]), 0.0)
    inv = np.zeros_like(vals)
    keep = vals > cutoff
    inv[keep] = 1.0 / vals[keep]
    return (vecs * inv) @ vecs.T


def effective_resistance(g: Graph, u: int, v: int) -> float:
    """``b^T L^+ b`` for ``b = e_u - e_v``; ``math.inf`` when ``u`` and ``v`` are disconnected."""
    if u == v:
        raise ContractViolation("effective resistance needs distinct vertices")
    if not (0 <= u < g.n and 0 <= v < g.n):
        raise ContractViolation(f"vertices ({u}, {v}) out of range for n={g.n}")
    uf = UnionFind(g.n)
    for a, b in g.edges:
        uf.union(a, b)
    if not uf.connected(u, v):
        return math.inf
    lp = laplacian_pinv(laplacian(g))
    return float(lp[u, u] + lp[v, v] - 2.0 * lp[u, v])


def resistance_matrix(g: Graph) -> np.ndarray:
    """All-pairs effective resistances (``inf`` across components, 0 on the diagonal)."""
    lp = laplacian_pinv(laplacian(g))
    d = np.diag(lp)
    r = d[:, None] + d[None, :] - 2.0 * lp
    uf = UnionFind(g.n)
    for a, b in g.edges:
        uf.union(a, b)
    roots = np.array([uf.find(x) for x in range(g.n)])
    r[roots[:, None] != roots[None, :]] = np.inf
    np.fill_diagonal(r, 0.0)
    return r


# -- lazy walk matrix ----------------------------------------------------------


def walk_matrix(g: Graph) -> np.ndarray:
    """``I - L~/2`` on the degree-positive vertices."""
    lt, support = normalized_laplacian(g)
    if len(support) == 0:
        raise ContractViolation("walk matrix needs a degree-positive vertex")
    return np.eye(len(support)) - 0.5 * lt


def trace_power(m: np.ndarray, t: int) -> float:
    if t < 1:
        raise ContractViolation("power t must be >= 1")
    return float(np.trace(np.linalg.matrix_power(m, t)))


def lambda2_upper(m: np.ndarray, t: int) -> float:
    """Upper bound ``(tr(M^t) - 1)^(1/t)`` on the second largest eigenvalue of ``M``."""
    tr = trace_power(m, t)
    excess = tr - 1.0
    if excess < -EIG_TOL * max(1.0, tr):
        raise NumericalFailure(f"trace of M^{t} is {tr!r} < 1")
    return max(excess, 0.0) ** (1.0 / t)


@dataclass(frozen=True)
class EntryBoundReport:
    k: int
    eps: float
    d_min: float
    total_volume: int
    max_ratio: float  # max over entries of (M^k)_uv / bound_uv
    min_slack: float  # min over entries of bound_uv - (M^k)_uv
    passed: bool


def entry_bound_check(h: Graph, eps: float, d_min: float | None = None, k: int = 1) -> EntryBoundReport:
    """Check ``(M^k)_uv <= sqrt(d_u d_v) (1/D + (1/d_min - 1/D) exp(-eps^2 k / 4))`` entrywise."""
    lam = spectral_gap(h)
    if lam < eps * eps / 2.0 - EIG_TOL:
        raise ContractViolation(f"spectral gap {lam:.6g} < eps^2/2 = {eps * eps / 2:.6g}")
    deg = h.degrees().astype(float)
    deg = deg[deg > 0]
    if d_min is None:
        d_min = float(deg.min())
    total = float(deg.sum())
    m = walk_matrix(h)
    mk = np.linalg.matrix_power(m, k)
    bound = np.sqrt(np.outer(deg, deg)) * (1.0 / total + (1.0 / d_min - 1.0 / total) * math.exp(-eps * eps * k / 4.0))
    slack = bound - mk
    return EntryBoundReport(
        k=k,
        eps=eps,
        d_min=d_min,
        total_volume=int(total),
        max_ratio=float((mk / bound).max()),
        min_slack=float(slack.min()),
        passed=bool(slack.min() >= -1e-12),
    )
