"""The clique-chain distribution and its planted-edge variants.

Vertices are dropped into ``d`` layers independently and uniformly; every
pair of vertices in the same or in adjacent layers is joined. A uniformly
random pair ``e*`` is drawn independently of the graph. Layers are numbered
``0..d-1`` in code and in files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from ._rng import numpy_rng
from .errors import ContractViolation, GraphParseError
from .graph import Edge, Graph, bfs_distances, graph_from_json_obj, graph_to_json_obj, num_pairs, pair_unindex


def clique_chain(layers: np.ndarray) -> Graph:
    """All pairs whose layers differ by at most one."""
    layers = np.asarray(layers, dtype=np.int64)
    n = layers.size
    gap = np.abs(layers[:, None] - layers[None, :])
    us, vs = np.nonzero(np.triu(gap <= 1, k=1))
    return Graph.from_edges(n, zip(us.tolist(), vs.tolist()))


def chain_adjacency(layers: np.ndarray) -> np.ndarray:
    layers = np.asarray(layers, dtype=np.int64)
    adj = np.abs(layers[:, None] - layers[None, :]) <= 1
    np.fill_diagonal(adj, False)
    return adj


def dense_bfs(adj: np.ndarray, source: int) -> np.ndarray:
    """Level-synchronous BFS on a boolean adjacency matrix; ``-1`` marks unreachable."""
    dist = np.full(adj.shape[0], -1, dtype=np.int64)
    dist[source] = 0
    frontier = np.zeros(adj.shape[0], dtype=bool)
    frontier[source] = True
    level = 0
    while frontier.any():
        level += 1
        reached = adj[frontier].any(axis=0) & (dist < 0)
        dist[reached] = level
        frontier = reached
    return dist


@dataclass(frozen=True)
class HardInstance:
    e_star: Edge
    layers: tuple[int, ...]
    d: int

    @cached_property
    def graph(self) -> Graph:
        return clique_chain(np.asarray(self.layers))

    @property
    def n(self) -> int:
        return len(self.layers)

    def layer_sizes(self) -> list[int]:
        return np.bincount(np.asarray(self.layers, dtype=np.int64), minlength=self.d).tolist()

    def layer_sets(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.d)]
        for v, i in enumerate(self.layers):
            out[i].append(v)
        return out

    @property
    def has_empty_layer(self) -> bool:
        return min(self.layer_sizes()) == 0


@dataclass(frozen=True)
class ThetaInstance:
    base: HardInstance
    theta: int

    @property
    def realized_graph(self) -> Graph:
        if self.theta:
            return self.base.graph.add_edge(*self.base.e_star)
        return self.base.graph

    @property
    def e_star_in_base(self) -> bool:
        return self.base.graph.has_edge(*self.base.e_star)


@dataclass(frozen=True)
class EndpointInstance:
    theta_instance: ThetaInstance
    a: int
    b: int

    @property
    def realized_graph(self) -> Graph:
        u, v = self.theta_instance.base.e_star
        g = self.theta_instance.realized_graph
        return Graph.from_edges(g.n + 2, list(g.edges) + [(u, self.a), (v, self.b)])


def sample_mu(n: int, d: int, seed: int) -> HardInstance:
    if d < 2:
        raise ContractViolation("d must be at least 2")
    if n < d:
        raise ContractViolation(f"need n >= d, got n={n}, d={d}")
    layers = numpy_rng(seed, "mu", "layers").integers(0, d, size=n)
    k = int(numpy_rng(seed, "mu", "e_star").integers(0, num_pairs(n)))
    return HardInstance(pair_unindex(k, n), tuple(layers.tolist()), d)


def sample_mu_prime(n: int, d: int, seed: int) -> ThetaInstance:
    theta = int(numpy_rng(seed, "mu", "theta").integers(0, 2))
    return ThetaInstance(sample_mu(n, d, seed), theta)


def sample_mu_double_prime(n: int, d: int, seed: int) -> EndpointInstance:
    return EndpointInstance(sample_mu_prime(n, d, seed), n, n + 1)


def check_distance_property(inst: HardInstance) -> bool:
    """True iff ``dist_G(u*, v*) > d/2`` (unreachable counts as infinite)."""
    u, v = inst.e_star
    dist = int(dense_bfs(chain_adjacency(np.asarray(inst.layers)), u)[v])
    return dist < 0 or dist > inst.d / 2


def verify_spanner(g: Graph, h: Graph, stretch: float) -> bool:
    """True iff every edge of ``g`` has its endpoints within ``stretch`` hops in ``h``."""
    if g.n != h.n:
        raise ContractViolation("spanner must live on the same vertex set")
    if not h.edges <= g.edges:
        raise ContractViolation("spanner must be an edge subset of the graph")
    adj = h.adjacency_lists()
    by_source: dict[int, list[int]] = {}
    for u, v in g.edges:
        by_source.setdefault(u, []).append(v)
    for u, targets in by_source.items():
        dist = bfs_distances(h, u, adj)
        for v in targets:
            if dist[v] < 0 or dist[v] > stretch:
                return False
    return True


# -- files -------------------------------------------------------------------


def instance_to_json_obj(inst: HardInstance | ThetaInstance | EndpointInstance) -> dict:
    """The realized graph plus the planted pair, layers and (when present) theta."""
    if isinstance(inst, EndpointInstance):
        base, theta, variant = inst.theta_instance.base, inst.theta_instance.theta, "mu_double_prime"
        graph = inst.realized_graph
        extra = {"a": inst.a, "b": inst.b}
    elif isinstance(inst, ThetaInstance):
        base, theta, variant, graph, extra = inst.base, inst.theta, "mu_prime", inst.realized_graph, {}
    else:
        base, theta, variant, graph, extra = inst, None, "mu", inst.graph, {}
    obj = {"variant": variant, **graph_to_json_obj(graph), "d": base.d, "e_star": list(base.e_star), "layers": list(base.layers)}
    if theta is not None:
        obj["theta"] = theta
    obj.update(extra)
    return obj


def instance_from_json_obj(obj: object, where: str = "<instance>") -> HardInstance | ThetaInstance | EndpointInstance:
    graph = graph_from_json_obj(obj, where)
    assert isinstance(obj, dict)
    variant = obj.get("variant", "mu")
    d = obj.get("d")
    layers = obj.get("layers")
    e_star = obj.get("e_star")
    if not isinstance(d, int) or d < 2:
        raise GraphParseError(f"{where}: field 'd' must be an integer >= 2")
    base_n = graph.n - 2 if variant == "mu_double_prime" else graph.n
    if not isinstance(layers, list) or len(layers) != base_n or not all(isinstance(x, int) and 0 <= x < d for x in layers):
        raise GraphParseError(f"{where}: field 'layers' must list {base_n} layer indices in [0, {d})")
    if not (isinstance(e_star, list) and len(e_star) == 2 and all(isinstance(x, int) for x in e_star)):
        raise GraphParseError(f"{where}: field 'e_star' must be a pair of integers")
    u, v = e_star
    if not (0 <= u < v < base_n):
        raise GraphParseError(f"{where}: e_star must satisfy 0 <= u < v < {base_n}")
    base = HardInstance((u, v), tuple(layers), d)
    if variant == "mu":
        out: HardInstance | ThetaInstance | EndpointInstance = base
    elif variant in ("mu_prime", "mu_double_prime"):
        theta = obj.get("theta")
        if theta not in (0, 1):
            raise GraphParseError(f"{where}: field 'theta' must be 0 or 1")
        out = ThetaInstance(base, theta)
        if variant == "mu_double_prime":
            out = EndpointInstance(out, base_n, base_n + 1)
    else:
        raise GraphParseError(f"{where}: unknown variant {variant!r}")
    realized = out.graph if isinstance(out, HardInstance) else out.realized_graph
    if realized.edges != graph.edges:
        raise GraphParseError(f"{where}: edges do not match the layers, e_star and theta")
    return out


def save_instance(inst, path: str | Path) -> None:
    Path(path).write_bytes((json.dumps(instance_to_json_obj(inst)) + "\n").encode())


def load_instance(path: str | Path):
    path = Path(path)
    try:
        obj = json.loads(path.read_bytes().decode())
    except json.JSONDecodeError as exc:
        raise GraphParseError(f"{path}:{exc.lineno}: {exc.msg}") from None
    return instance_from_json_obj(obj, str(path))
