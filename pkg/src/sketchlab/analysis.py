"""KL divergences between sketch distributions and the Monte Carlo experiments built on them.

A sketch row ``p = g S B(G)`` is a zero-mean Gaussian with covariance
``L(G(S))``. Planting one extra edge ``e`` turns the covariance into
``L + b_e b_e^T``; the divergence between the two depends only on the
effective resistance ``R`` of ``e``:

    KL( N(0, L - b b^T) || N(0, L) ) = (-ln(1 - R) - R) / 2

for an edge of the larger graph, and is infinite when ``e`` is a bridge.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import linalg

from ._rng import derive_seed, numpy_rng
from .decomposition import check_balanced_path, vertex_sample
from .errors import ContractViolation
from .graph import Graph, UnionFind, adjacency_matrix, laplacian, pair_index
from .instances import chain_adjacency, sample_mu, sample_mu_prime
from .sketch import SamplingMatrix, SketchView, sketch_graph
from .spectral import certify_expander, effective_resistance, resistance_matrix

SPAN_TOL = 1e-7
BRIDGE_TOL = 1e-9
RANK_TOL = 1e-9


# -- KL ------------------------------------------------------------------------


def _range(sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(sigma)
    top = max(float(vals[-1]), 0.0) if vals.size else 0.0
    keep = vals > RANK_TOL * max(top, 1e-300)
    return vals[keep], vecs[:, keep]


def _check_psd(sigma: np.ndarray, name: str) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ContractViolation(f"{name} must be a square matrix")
    if not np.allclose(sigma, sigma.T, atol=1e-10):
        raise ContractViolation(f"{name} must be symmetric")
    return (sigma + sigma.T) / 2.0


def kl_gaussian_zero_mean(sigma1, sigma2) -> float:
    """``KL(N(0, sigma1) || N(0, sigma2))`` for PSD matrices sharing one range.

    With ``sigma2 = A A^T`` for a full-column-rank ``A`` of rank ``k`` and
    ``M = A^+ sigma1 (A^+)^T``, the divergence is ``(tr M - k - ln det M)/2``.
    Returns ``math.inf`` when the ranges differ.
    """
    s1 = _check_psd(sigma1, "sigma1")
    s2 = _check_psd(sigma2, "sigma2")
    if s1.shape != s2.shape:
        raise ContractViolation("covariances must have the same shape")
    vals1, vecs1 = _range(s1)
    vals2, vecs2 = _range(s2)
    if vals1.size != vals2.size:
        return math.inf
    k = vals2.size
    if k == 0:
        return 0.0
    if np.max(linalg.subspace_angles(vecs1, vecs2)) > SPAN_TOL:
        return math.inf
    a_pinv = vecs2.T / np.sqrt(vals2)[:, None]
    m = a_pinv @ s1 @ a_pinv.T
    sign, logdet = np.linalg.slogdet(m)
    if sign <= 0:
        return math.inf
    return 0.5 * (float(np.trace(m)) - k - logdet)


def kl_closed_form(r: float) -> float:
    """``(-ln(1 - R) - R) / 2``; infinite at ``R >= 1``."""
    if r < 0:
        raise ContractViolation("effective resistance must be non-negative")
    if r >= 1.0:
        return math.inf
    return 0.5 * (-math.log1p(-r) - r)


@dataclass(frozen=True)
class KLReport:
    R: float
    kl_exact: float
    kl_bound_quarter: float
    kl_min1: float
    bridge_flag: bool


def kl_report_from_resistance(r: float) -> KLReport:
    if r >= 1.0 - BRIDGE_TOL:
        return KLReport(r, math.inf, r / 4.0, 1.0, True)
    kl = kl_closed_form(r)
    return KLReport(r, kl, r / 4.0, min(1.0, kl), False)


def kl_edge_exact(g: Graph, u: int, v: int) -> KLReport:
    """Divergence between sketch rows of ``g - e`` and ``g`` for an edge ``e = (u, v)`` of ``g``."""
    if not g.has_edge(u, v):
        raise ContractViolation(f"edge ({u}, {v}) is not in the graph")
    return kl_report_from_resistance(effective_resistance(g, u, v))


def kl_edge_oracle(g: Graph, u: int, v: int) -> float:
    """The same divergence from the general covariance formula."""
    if not g.has_edge(u, v):
        raise ContractViolation(f"edge ({u}, {v}) is not in the graph")
    lap = laplacian(g)
    b = np.zeros(g.n)
    b[u], b[v] = 1.0, -1.0
    return kl_gaussian_zero_mean(lap - np.outer(b, b), lap)


def logdet_check(a) -> bool:
    """``ln det(I + A) >= tr(A) - tr(A^2)`` for symmetric ``A`` with spectral norm at most 1/2."""
    a = _check_psd(a, "A")
    if np.linalg.norm(a, 2) > 0.5 + 1e-12:
        raise ContractViolation("spectral norm of A must be at most 1/2")
    sign, logdet = np.linalg.slogdet(np.eye(a.shape[0]) + a)
    return bool(sign > 0 and logdet >= np.trace(a) - np.trace(a @ a) - 1e-12)


# -- resistances by grounded solves ---------------------------------------------


def _component_labels(n: int, edges: Iterable[tuple[int, int]]) -> np.ndarray:
    uf = UnionFind(n)
    for a, b in edges:
        uf.union(a, b)
    return np.array([uf.find(x) for x in range(n)])


def grounded_potentials(lap: np.ndarray, comp: np.ndarray, u: int, v: int) -> np.ndarray:
    """Potentials ``x`` with ``L x = e_u - e_v`` on the component of ``u`` (zero elsewhere).

    ``u`` and ``v`` must share a component; ``v`` is grounded.
    """
    members = np.flatnonzero(comp == comp[u])
    others = members[members != v]
    b = np.zeros(lap.shape[0])
    b[u] = 1.0
    x = np.zeros(lap.shape[0])
    if others.size:
        x[others] = linalg.solve(lap[np.ix_(others, others)], b[others], assume_a="pos")
    return x


def resistance_from_laplacian(lap: np.ndarray, u: int, v: int) -> float:
    """``R(u, v)`` by a grounded solve; ``math.inf`` across components."""
    n = lap.shape[0]
    adj = -np.triu(lap, 1)
    us, vs = np.nonzero(adj)
    comp = _component_labels(n, zip(us.tolist(), vs.tolist()))
    if comp[u] != comp[v]:
        return math.inf
    x = grounded_potentials(lap, comp, u, v)
    return float(x[u] - x[v])


# -- samplers and the parallel runner -------------------------------------------


@dataclass(frozen=True)
class SamplerSpec:
    """Per-trial sampling rule: ``all``, ``none``, ``bernoulli:<p>`` or ``level:<j>``."""

    kind: str = "all"
    p: float = 1.0
    level: int = 0

    @classmethod
    def parse(cls, text: str) -> "SamplerSpec":
        head, _, arg = text.partition(":")
        if head in ("all", "none") and not arg:
            return cls(head)
        try:
            if head == "bernoulli":
                p = float(arg)
                if not 0.0 <= p <= 1.0:
                    raise ValueError
                return cls("bernoulli", p=p)
            if head == "level":
                j = int(arg)
                if j < 0:
                    raise ValueError
                return cls("level", level=j)
        except ValueError:
            pass
        raise ContractViolation(f"bad sampler {text!r}; use all, none, bernoulli:<p> or level:<j>")

    @property
    def name(self) -> str:
        if self.kind == "bernoulli":
            return f"bernoulli:{self.p:g}"
        if self.kind == "level":
            return f"level:{self.level}"
        return self.kind

    def build(self, n: int, seed: int, label: int = 0) -> SamplingMatrix:
        if self.kind == "all":
            return SamplingMatrix.for_graph(n)
        if self.kind == "none":
            return SamplingMatrix.for_graph(n, kind="explicit")
        if self.kind == "bernoulli":
            return SamplingMatrix.for_graph(n, kind="bernoulli", p=self.p, seed=seed, label=label)
        return SamplingMatrix.for_graph(n, kind="level", level=self.level, seed=seed, label=label)


def resolve_workers(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("SKETCHLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ContractViolation(f"SKETCHLAB_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def trial_seeds(seed: int, label: str, trials: int) -> list[int]:
    return [derive_seed(seed, label, t) for t in range(trials)]


def run_trials(fn: Callable, seeds: Sequence[int], workers: int | None = None) -> list:
    """``[fn(s) for s in seeds]``, optionally across processes; order is preserved."""
    workers = min(resolve_workers(workers), max(1, len(seeds)))
    if workers == 1:
        return [fn(s) for s in seeds]
    chunk = max(1, len(seeds) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seeds, chunksize=chunk))


def mean_stderr(values: Sequence[float]) -> tuple[float, float]:
    k = len(values)
    mean = math.fsum(values) / k
    if k < 2:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2 for x in values) / (k - 1)
    return mean, math.sqrt(var / k)


# -- expected divergence over the planted-edge distribution -----------------------


@dataclass(frozen=True)
class ScalingRow:
    n: int
    d: int
    s: int
    sampler: str
    trials: int
    mean_min1_kl: float
    stderr: float


def planted_kl_trial(seed: int, n: int, d: int, spec: SamplerSpec) -> float:
    """``min(1, KL)`` for one draw of ``(G, e*)``, or 0 when ``S`` misses ``e*``."""
    inst = sample_mu(n, d, seed)
    u, v = inst.e_star
    s = spec.build(n, derive_seed(seed, "sampler"))
    if not s.contains(pair_index(u, v, n)):
        return 0.0
    if spec.kind == "all":
        adj = chain_adjacency(np.asarray(inst.layers)).astype(float)
    else:
        adj = adjacency_matrix(s.restrict(inst.graph))
    adj[u, v] = adj[v, u] = 1.0  # G(S) + e*, as a set of edges
    lap = np.diag(adj.sum(axis=1)) - adj
    return kl_report_from_resistance(resistance_from_laplacian(lap, u, v)).kl_min1


def estimate_planted_kl(
    spec: SamplerSpec, n: int, d: int, trials: int, seed: int, workers: int | None = None
) -> ScalingRow:
    if trials < 1:
        raise ContractViolation("trials must be >= 1")
    fn = partial(planted_kl_trial, n=n, d=d, spec=spec)
    vals = run_trials(fn, trial_seeds(seed, f"planted-kl/{n}/{d}", trials), workers)
    mean, err = mean_stderr(vals)
    return ScalingRow(n, d, 1, spec.name, trials, mean, err)


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


# -- distinguishing theta from sketches ----------------------------------------------


def _row_llr(base: Graph, e_star: tuple[int, int], s: SamplingMatrix, p: np.ndarray, cache: dict) -> float:
    """Log-likelihood ratio (theta=1 over theta=0) of one row."""
    u, v = e_star
    n = base.n
    if not s.contains(pair_index(u, v, n)):
        return 0.0
    key = s
    if key not in cache:
        sub = s.restrict(base)
        comp = _component_labels(n, sub.edges)
        if comp[u] != comp[v]:
            cache[key] = ("split", comp)
        else:
            lap = laplacian(sub)
            x = grounded_potentials(lap, comp, u, v)
            cache[key] = ("joined", x, float(x[u] - x[v]))
    entry = cache[key]
    if entry[0] == "split":
        comp = entry[1]
        # theta=0 keeps every component sum at exactly zero (grid-valued Gaussians)
        sums = np.zeros(n)
        np.add.at(sums, comp, p)
        return math.inf if np.any(sums != 0.0) else -math.inf
    _, x, r0 = entry
    proj = float(x @ p)
    return 0.5 * proj * proj / (1.0 + r0) - 0.5 * math.log1p(r0)


def llr_prefix(view: SketchView, base: Graph, e_star: tuple[int, int], s: int) -> list[float]:
    """Cumulative log-likelihood ratios over the first ``s`` rows (entry ``k`` covers ``k`` rows)."""
    cache: dict = {}
    llr = [0.0]
    for i in range(s):
        llr.append(llr[-1] + _row_llr(base, e_star, view.matrices[i], view.projections[i], cache))
    return llr


def _decide(total: float, coin: int) -> int:
    return 1 if total > 0 else 0 if total < 0 else coin


def decide_theta(view: SketchView, base: Graph, e_star: tuple[int, int], s: int, coin: int) -> int:
    """Likelihood-ratio decision from the first ``s`` rows of a decoder view.

    Ties, and instances where ``e*`` is already an edge, fall back to ``coin``.
    """
    if base.has_edge(*e_star):
        return coin
    return _decide(llr_prefix(view, base, e_star, s)[s], coin)


def distinguish_trial(seed: int, n: int, d: int, s_values: tuple[int, ...], spec: SamplerSpec) -> tuple[int, ...]:
    """1/0 correctness of the decision at each ``s``; rows for smaller ``s`` are prefixes."""
    ti = sample_mu_prime(n, d, seed)
    base, e_star = ti.base.graph, ti.base.e_star
    coin = int(numpy_rng(seed, "coin").integers(0, 2))
    if base.has_edge(*e_star):
        return tuple(int(coin == ti.theta) for _ in s_values)
    s_max = max(s_values) if s_values else 0
    mats = [spec.build(n, derive_seed(seed, "sampler"), label=i) for i in range(s_max)]
    view = sketch_graph(ti.realized_graph, mats, derive_seed(seed, "sketch")).decoder_view()
    llr = llr_prefix(view, base, e_star, s_max)
    return tuple(int(_decide(llr[s], coin) == ti.theta) for s in s_values)


@dataclass(frozen=True)
class DistinguishRow:
    n: int
    d: int
    s: int
    trials: int
    success_rate: float

    @property
    def tvd_lb(self) -> float:
        return 2.0 * (self.success_rate - 0.5)


def distinguish_curve(
    n: int,
    d: int,
    s_values: Sequence[int],
    spec: SamplerSpec,
    trials: int,
    seed: int,
    workers: int | None = None,
) -> list[DistinguishRow]:
    """Success rates at each ``s`` with common random numbers across ``s``."""
    if trials < 1:
        raise ContractViolation("trials must be >= 1")
    if any(s < 0 for s in s_values):
        raise ContractViolation("s must be non-negative")
    s_values = tuple(int(s) for s in s_values)
    fn = partial(distinguish_trial, n=n, d=d, s_values=s_values, spec=spec)
    res = run_trials(fn, trial_seeds(seed, f"distinguish/{n}/{d}", trials), workers)
    return [
        DistinguishRow(n, d, s, trials, sum(r[k] for r in res) / trials) for k, s in enumerate(s_values)
    ]


def distinguish_theta(
    n: int, d: int, s: int, spec: SamplerSpec, trials: int, seed: int, workers: int | None = None
) -> DistinguishRow:
    return distinguish_curve(n, d, [s], spec, trials, seed, workers)[0]


# -- resistance audit on balanced paths ------------------------------------------------


@dataclass(frozen=True)
class ResistanceAudit:
    max_resistance: float
    bound_term: float
    fitted_constant: float
    pairs_tested: int
    precondition_ok: bool
    worst_pair: tuple[int, int] | None


def resistance_audit(
    g: Graph, layers: Sequence[Sequence[int]], phi: float, pairs: int | None = None, seed: int = 0
) -> ResistanceAudit:
    """Largest ``R(u, v)`` relative to ``1/(phi^2 d_min) + d/(phi^2 vol(U_1))``.

    ``pairs=None`` tests every pair; otherwise that many random pairs.
    """
    verts = sorted(v for part in layers for v in part)
    h, labels = g.relabeled(verts)
    deg = h.degrees()
    d = len(layers)
    u1 = list(layers[0]) + (list(layers[1]) if d > 1 else [])
    vol_u1 = int(g.induced(verts).degrees()[u1].sum())
    if h.n < 2 or not h.is_connected() or deg.min() == 0:
        return ResistanceAudit(math.inf, math.nan, math.inf, 0, False, None)
    term = 1.0 / (phi * phi * float(deg.min())) + d / (phi * phi * vol_u1)
    r = resistance_matrix(h)
    if pairs is None:
        iu, iv = np.triu_indices(h.n, 1)
    else:
        rng = numpy_rng(seed, "resistance-audit")
        iu = rng.integers(0, h.n, size=pairs)
        iv = (iu + rng.integers(1, h.n, size=pairs)) % h.n
    vals = r[iu, iv]
    k = int(np.argmax(vals))
    worst = (labels[int(iu[k])], labels[int(iv[k])])
    return ResistanceAudit(float(vals[k]), term, float(vals[k]) / term, int(vals.size), True, worst)


def resistance_audit_balanced_path(path, pairs: int | None = None, seed: int = 0) -> ResistanceAudit:
    if not path.ok:
        return ResistanceAudit(math.inf, math.nan, math.inf, 0, False, None)
    return resistance_audit(path.graph, path.layers, path.phi, pairs, seed)


def non_increasing(values: Sequence[float], rel_tol: float = 1e-9) -> bool:
    return all(b <= a * (1.0 + rel_tol) for a, b in zip(values, values[1:]))


# -- vertex sampling and layered-graph experiments ----------------------------------------


def vertex_sample_trial(seed: int, n: int, p: float, floor: float) -> tuple[int, float, int]:
    """(certified, certificate value, kept vertices) for a vertex-sampled ``K_n``."""
    h = vertex_sample(Graph.complete(n), p, seed)
    cert = certify_expander(h, floor)
    return int(cert.certified), float(cert.value), int(np.count_nonzero(h.degrees()))


@dataclass(frozen=True)
class RateRow:
    trials: int
    rate: float
    worst_value: float


def vertex_sample_experiment(n: int, p: float, trials: int, seed: int, floor: float = 0.05, workers=None) -> RateRow:
    fn = partial(vertex_sample_trial, n=n, p=p, floor=floor)
    res = run_trials(fn, trial_seeds(seed, f"vertex-sample/{n}/{p!r}", trials), workers)
    return RateRow(trials, sum(r[0] for r in res) / trials, min(r[1] for r in res))


def layer_statistics(adj: np.ndarray, layer_of: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Ordered-pair edge counts between layers and the degrees of the layered subgraph."""
    ind = np.zeros((adj.shape[0], d))
    ind[np.arange(adj.shape[0]), layer_of] = 1.0
    ap = adj @ ind
    counts = ind.T @ ap
    near = np.abs(np.arange(d)[None, :] - layer_of[:, None]) <= 1
    degrees = (ap * near).sum(axis=1)
    return counts, degrees


def balanced_path_trial(seed: int, n: int, d: int, phi: float, with_conditions: bool) -> dict:
    """One i.i.d. layering of ``K_n``: volume-concentration ratios and, optionally, the path conditions."""
    inst = sample_mu(n, d, seed)
    layer_of = np.asarray(inst.layers, dtype=np.int64)
    adj = np.ones((n, n)) - np.eye(n)
    m = n * (n - 1) / 2
    counts, degrees = layer_statistics(adj, layer_of, d)
    target = 2.0 * m / d**2
    near = [(i, j) for i in range(d) for j in range(d) if abs(i - j) <= 1]
    ratios = np.array([counts[i, j] / target for i, j in near])
    present = np.bincount(layer_of, minlength=d)[layer_of] > 0
    min_deg = float(degrees[present].min())
    out = {
        "count_ratio_min": float(ratios.min()),
        "count_ratio_max": float(ratios.max()),
        "counts_ok": bool(ratios.min() >= 49 / 64 and ratios.max() <= 81 / 64),
        "min_degree_ratio": min_deg / (7 / 8 * (n - 1) / d),
        "degree_ok": bool(min_deg >= 7 / 8 * (n - 1) / d),
    }
    if with_conditions:
        bp = check_balanced_path(inst.graph, inst.layer_sets(), phi)
        out.update(cond1=bp.cond1, cond2=bp.cond2, cond3=bp.cond3, path_ok=bp.ok)
    return out


def balanced_path_experiment(
    n: int, d: int, phi: float, trials: int, seed: int, with_conditions: bool = True, workers=None
) -> dict:
    fn = partial(balanced_path_trial, n=n, d=d, phi=phi, with_conditions=with_conditions)
    res = run_trials(fn, trial_seeds(seed, f"balanced-path/{n}/{d}", trials), workers)
    keys = ["counts_ok", "degree_ok"] + (["cond1", "cond2", "cond3", "path_ok"] if with_conditions else [])
    summary = {f"rate_{k}": sum(int(r[k]) for r in res) / trials for k in keys}
    summary["worst_count_ratio_min"] = min(r["count_ratio_min"] for r in res)
    summary["worst_count_ratio_max"] = max(r["count_ratio_max"] for r in res)
    summary["worst_min_degree_ratio"] = min(r["min_degree_ratio"] for r in res)
    summary["trials"] = trials
    return summary


# -- CSV -------------------------------------------------------------------------


def fmt(x: float) -> str:
    return f"{x:.12g}"


def scaling_csv(rows: Iterable[ScalingRow]) -> str:
    lines = ["n,d,s,sampler,trials,mean_min1_kl,stderr"]
    for r in rows:
        lines.append(f"{r.n},{r.d},{r.s},{r.sampler},{r.trials},{fmt(r.mean_min1_kl)},{fmt(r.stderr)}")
    return "\n".join(lines) + "\n"


def distinguish_csv(rows: Iterable[DistinguishRow]) -> str:
    lines = ["n,d,s,trials,success_rate,tvd_lb"]
    for r in rows:
        lines.append(f"{r.n},{r.d},{r.s},{r.trials},{fmt(r.success_rate)},{fmt(r.tvd_lb)}")
    return "\n".join(lines) + "\n"

