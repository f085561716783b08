"""Simple undirected graphs over vertices ``0..n-1``.

Vertex pairs are indexed lexicographically: ``(0,1), (0,2), ..., (0,n-1),
(1,2), ...``. Every sampling matrix and Gaussian stream in the package is
addressed by this index.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ContractViolation, GraphParseError

Edge = tuple[int, int]


def num_pairs(n: int) -> int:
    return n * (n - 1) // 2


def pair_index(u: int, v: int, n: int) -> int:
    """Lexicographic rank of the pair ``(u, v)`` with ``u < v``."""
    if not (0 <= u < v < n):
        raise ContractViolation(f"pair_index needs 0 <= u < v < n, got ({u}, {v}) with n={n}")
    # pairs preceding row u: (n-1) + (n-2) + ... + (n-u)
    return u * (2 * n - u - 1) // 2 + (v - u - 1)


def pair_unindex(index: int, n: int) -> Edge:
    if not (0 <= index < num_pairs(n)):
        raise ContractViolation(f"pair index {index} out of range for n={n}")
    # largest u with offset(u) <= index, via the quadratic formula then a fix-up
    b = 2 * n - 1
    u = int((b - np.sqrt(b * b - 8 * index)) // 2)
    while u > 0 and u * (2 * n - u - 1) // 2 > index:
        u -= 1
    while (u + 1) * (2 * n - u - 2) // 2 <= index:
        u += 1
    v = index - u * (2 * n - u - 1) // 2 + u + 1
    return u, v


def pair_index_array(us: np.ndarray, vs: np.ndarray, n: int) -> np.ndarray:
    us = np.asarray(us, dtype=np.int64)
    vs = np.asarray(vs, dtype=np.int64)
    return us * (2 * n - us - 1) // 2 + (vs - us - 1)


def pair_unindex_array(index: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    index = np.asarray(index, dtype=np.int64)
    b = 2 * n - 1
    u = np.floor((b - np.sqrt(b * b - 8.0 * index)) / 2).astype(np.int64)
    offset = u * (2 * n - u - 1) // 2
    u = np.where(offset > index, u - 1, u)
    nxt = (u + 1) * (2 * n - u - 2) // 2
    u = np.where(nxt <= index, u + 1, u)
    v = index - u * (2 * n - u - 1) // 2 + u + 1
    return u, v


def _canonical(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Graph:
    """An immutable simple graph. ``edges`` holds sorted pairs ``(u, v)``, ``u < v``."""

    n: int
    edges: frozenset[Edge]

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ContractViolation("vertex count must be non-negative")
        for u, v in self.edges:
            if u == v:
                raise ContractViolation(f"self-loop at vertex {u}")
            if not (0 <= u < v < self.n):
                raise ContractViolation(f"edge ({u}, {v}) is not a canonical pair for n={self.n}")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        canon = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ContractViolation(f"self-loop at vertex {u}")
            canon.add(_canonical(u, v))
        return cls(n, frozenset(canon))

    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls(n, frozenset())

    @classmethod
    def complete(cls, n: int) -> "Graph":
        return cls(n, frozenset((u, v) for u in range(n) for v in range(u + 1, n)))

    @classmethod
    def path(cls, n: int) -> "Graph":
        return cls(n, frozenset((i, i + 1) for i in range(n - 1)))

    @classmethod
    def cycle(cls, n: int) -> "Graph":
        return cls.from_edges(n, [(i, (i + 1) % n) for i in range(n)])

    @property
    def m(self) -> int:
        return len(self.edges)

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def edge_array(self) -> np.ndarray:
        """``(m, 2)`` int array of edges in pair-index order."""
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(self.sorted_edges(), dtype=np.int64)

    def pair_indices(self) -> np.ndarray:
        arr = self.edge_array()
        return pair_index_array(arr[:, 0], arr[:, 1], self.n)

    def has_edge(self, u: int, v: int) -> bool:
        return _canonical(u, v) in self.edges

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        arr = self.edge_array()
        np.add.at(deg, arr[:, 0], 1)
        np.add.at(deg, arr[:, 1], 1)
        return deg

    def adjacency_lists(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.sorted_edges():
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def volume(self, vertices: Iterable[int] | None = None) -> int:
        deg = self.degrees()
        if vertices is None:
            return int(deg.sum())
        return int(sum(deg[v] for v in vertices))

    def add_edge(self, u: int, v: int) -> "Graph":
        return Graph.from_edges(self.n, list(self.edges) + [(u, v)])

    def remove_edge(self, u: int, v: int) -> "Graph":
        e = _canonical(u, v)
        if e not in self.edges:
            raise ContractViolation(f"edge {e} not in graph")
        return Graph(self.n, self.edges - {e})

    def union(self, other: "Graph") -> "Graph":
        _same_n(self, other)
        return Graph(self.n, self.edges | other.edges)

    def induced(self, vertices: Iterable[int]) -> "Graph":
        """Induced subgraph on ``vertices``, keeping the original labels and ``n``."""
        keep = set(vertices)
        return Graph(self.n, frozenset(e for e in self.edges if e[0] in keep and e[1] in keep))

    def relabeled(self, vertices: Iterable[int]) -> tuple["Graph", list[int]]:
        """Induced subgraph on ``vertices`` compacted to labels ``0..k-1``.

        Returns the compact graph and the list mapping new labels to old ones.
        """
        order = sorted(set(vertices))
        pos = {v: i for i, v in enumerate(order)}
        edges = frozenset(
            (pos[u], pos[v]) for u, v in self.edges if u in pos and v in pos
        )
        return Graph(len(order), edges), order

    def edge_subgraph(self, edges: Iterable[Edge]) -> "Graph":
        return Graph.from_edges(self.n, edges)

    def components(self) -> list[list[int]]:
        """Connected components as sorted vertex lists, ordered by smallest vertex."""
        uf = UnionFind(self.n)
        for u, v in self.edges:
            uf.union(u, v)
        groups: dict[int, list[int]] = {}
        for v in range(self.n):
            groups.setdefault(uf.find(v), []).append(v)
        return sorted(groups.values(), key=lambda g: g[0])

    def is_connected(self) -> bool:
        return self.n <= 1 or len(self.components()) == 1


def _same_n(g: Graph, h: Graph) -> None:
    if g.n != h.n:
        raise ContractViolation(f"vertex counts differ: {g.n} vs {h.n}")


def intersect(g: Graph, h: Graph) -> Graph:
    _same_n(g, h)
    return Graph(g.n, g.edges & h.edges)


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True

    def connected(self, a: int, b: int) -> bool:
        return self.find(a) == self.find(b)


@dataclass(frozen=True)
class GraphMatrices:
    adjacency: np.ndarray
    degree: np.ndarray
    incidence: np.ndarray
    laplacian: np.ndarray
    normalized_laplacian: np.ndarray
    # vertices indexing the rows/columns of normalized_laplacian
    support: np.ndarray


def incidence_matrix(g: Graph) -> np.ndarray:
    """Signed incidence matrix with one row per vertex pair (``n choose 2`` rows)."""
    b = np.zeros((num_pairs(g.n), g.n))
    arr = g.edge_array()
    rows = g.pair_indices()
    b[rows, arr[:, 0]] = 1.0
    b[rows, arr[:, 1]] = -1.0
    return b


def adjacency_matrix(g: Graph) -> np.ndarray:
    a = np.zeros((g.n, g.n))
    arr = g.edge_array()
    a[arr[:, 0], arr[:, 1]] = 1.0
    a[arr[:, 1], arr[:, 0]] = 1.0
    return a


def laplacian(g: Graph) -> np.ndarray:
    a = adjacency_matrix(g)
    return np.diag(a.sum(axis=1)) - a


def normalized_laplacian(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    """``I - D^{-1/2} A D^{-1/2}`` restricted to degree-positive vertices.

    Returns the matrix together with the vertex labels of its rows.
    """
    a = adjacency_matrix(g)
    deg = a.sum(axis=1)
    support = np.flatnonzero(deg > 0)
    a = a[np.ix_(support, support)]
    inv_sqrt = 1.0 / np.sqrt(deg[support])
    return np.eye(len(support)) - inv_sqrt[:, None] * a * inv_sqrt[None, :], support


def build_matrices(g: Graph) -> GraphMatrices:
    a = adjacency_matrix(g)
    lt, support = normalized_laplacian(g)
    return GraphMatrices(
        adjacency=a,
        degree=np.diag(a.sum(axis=1)),
        incidence=incidence_matrix(g),
        laplacian=np.diag(a.sum(axis=1)) - a,
        normalized_laplacian=lt,
        support=support,
    )


def bfs_distances(g: Graph, source: int, adj: list[list[int]] | None = None) -> np.ndarray:
    """Hop distances from ``source``; unreachable vertices get ``-1``."""
    if adj is None:
        adj = g.adjacency_lists()
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            if dist[y] < 0:
                dist[y] = dist[x] + 1
                queue.append(y)
    return dist


def bfs_distance(g: Graph, u: int, v: int) -> int | None:
    """Shortest-path hop count, or ``None`` when ``v`` is unreachable from ``u``."""
    if not (0 <= u < g.n and 0 <= v < g.n):
        raise ContractViolation(f"vertices ({u}, {v}) out of range for n={g.n}")
    d = int(bfs_distances(g, u)[v])
    return None if d < 0 else d


# -- file formats ------------------------------------------------------------


def graph_to_json_obj(g: Graph) -> dict:
    return {"n": g.n, "edges": [list(e) for e in g.sorted_edges()]}


def graph_from_json_obj(obj: object, where: str = "<json>") -> Graph:
    if not isinstance(obj, dict):
        raise GraphParseError(f"{where}: top level must be an object")
    n = obj.get("n")
    if not isinstance(n, int) or isinstance(n, bool) or n < 0:
        raise GraphParseError(f"{where}: field 'n' must be a non-negative integer")
    raw = obj.get("edges")
    if not isinstance(raw, list):
        raise GraphParseError(f"{where}: field 'edges' must be a list")
    seen: set[Edge] = set()
    for i, item in enumerate(raw):
        loc = f"{where}: edges[{i}]"
        if (
            not isinstance(item, list)
            or len(item) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) for x in item)
        ):
            raise GraphParseError(f"{loc}: expected a pair of integers")
        u, v = item
        _check_edge(u, v, n, seen, loc)
    return Graph(n, frozenset(seen))


def _check_edge(u: int, v: int, n: int, seen: set[Edge], loc: str) -> None:
    if u == v:
        raise GraphParseError(f"{loc}: self-loop at vertex {u}")
    if not (0 <= u < n and 0 <= v < n):
        raise GraphParseError(f"{loc}: vertex out of range [0, {n})")
    if u > v:
        raise GraphParseError(f"{loc}: edge must be written with u < v")
    if (u, v) in seen:
        raise GraphParseError(f"{loc}: duplicate edge ({u}, {v})")
    seen.add((u, v))


def dumps_edgelist(g: Graph) -> str:
    lines = [f"# n={g.n}"] + [f"{u} {v}" for u, v in g.sorted_edges()]
    return "\n".join(lines) + "\n"


def loads_edgelist(text: str, where: str = "<edgelist>") -> Graph:
    lines = text.split("\n")
    header = lines[0].strip() if lines else ""
    if not header.startswith("# n="):
        raise GraphParseError(f"{where}:1: expected header '# n=<N>'")
    try:
        n = int(header[4:])
    except ValueError:
        raise GraphParseError(f"{where}:1: bad vertex count {header[4:]!r}") from None
    if n < 0:
        raise GraphParseError(f"{where}:1: vertex count must be non-negative")
    seen: set[Edge] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphParseError(f"{where}:{lineno}: expected 'u v'")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphParseError(f"{where}:{lineno}: non-integer vertex") from None
        _check_edge(u, v, n, seen, f"{where}:{lineno}")
    return Graph(n, frozenset(seen))


def _format_for(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("json", "edgelist"):
            raise ValueError(f"unknown graph format {fmt!r}")
        return fmt
    return "json" if path.suffix == ".json" else "edgelist"


def save_graph(g: Graph, path: str | Path, fmt: str | None = None) -> None:
    path = Path(path)
    if _format_for(path, fmt) == "json":
        text = json.dumps(graph_to_json_obj(g)) + "\n"
    else:
        text = dumps_edgelist(g)
    path.write_bytes(text.encode())


def load_graph(path: str | Path, fmt: str | None = None) -> Graph:
    path = Path(path)
    text = path.read_bytes().decode()
    if _format_for(path, fmt) == "json":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GraphParseError(f"{path}:{exc.lineno}: {exc.msg}") from None
        return graph_from_json_obj(obj, str(path))
    return loads_edgelist(text, str(path))
