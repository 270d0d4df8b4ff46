"""Erdős–Rényi graphs in a compressed adjacency layout and the queries run on them."""

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import ParameterError
from .output import atomic_write_text
from .workers import GENERATOR_ID, make_rng

__all__ = (
    "Graph",
    "GraphMeta",
    "ball",
    "bfs_distances",
    "diameter",
    "generate",
    "giant_component",
    "is_tree_ball",
    "normalized_degrees",
    "read_edge_list",
    "sphere",
    "write_edge_list",
)

logger = logging.getLogger(__name__)

#: Above this size ``diameter`` falls back to the double-sweep estimate.
EXACT_DIAMETER_LIMIT = 20_000
_SOURCE_CHUNK = 256
_HEADER = re.compile(r"#\s*n=(\d+)\s+d=(\S+)\s+seed=(-?\d+)")


@dataclass(frozen=True)
class GraphMeta:
    n: int
    d: float
    seed: int
    generator: str = GENERATOR_ID


class Graph:
    """Immutable undirected simple graph on the vertices ``0..n-1``.

    Neighbor lists are stored in CSR form (``indptr``/``indices``) and are sorted ascending.
    """

    def __init__(
        self, n: int, indptr: np.ndarray, indices: np.ndarray, meta: Optional[GraphMeta] = None
    ) -> None:
        self.n = int(n)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.meta = meta
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)
        self._adjacency: Optional[csr_matrix] = None

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Union[np.ndarray, Iterable[Tuple[int, int]]],
        meta: Optional[GraphMeta] = None,
    ) -> "Graph":
        if n < 0:
            raise ParameterError(f"vertex count must be >= 0, got {n}")
        pairs = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges)
        pairs = pairs.reshape(-1, 2).astype(np.int64)
        if pairs.size:
            if pairs.min() < 0 or pairs.max() >= n:
                raise ParameterError(f"edge endpoint outside 0..{n - 1}")
            if np.any(pairs[:, 0] == pairs[:, 1]):
                raise ParameterError("self-loops are not allowed")
        lo = np.minimum(pairs[:, 0], pairs[:, 1])
        hi = np.maximum(pairs[:, 0], pairs[:, 1])
        # each undirected edge once, then both orientations
        keys = np.unique(lo * max(n, 1) + hi)
        lo, hi = keys // max(n, 1), keys % max(n, 1)
        rows = np.concatenate([lo, hi])
        cols = np.concatenate([hi, lo])
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
        return cls(n, indptr, cols, meta)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def edge_count(self) -> int:
        return int(self.indices.size // 2)

    @property
    def adjacency(self) -> csr_matrix:
        """The 0/1 adjacency matrix ``A`` sharing this graph's index arrays."""
        if self._adjacency is None:
            data = np.ones(self.indices.size, dtype=np.float64)
            self._adjacency = csr_matrix(
                (data, self.indices, self.indptr), shape=(self.n, self.n)
            )
        return self._adjacency

    def neighbors(self, x: int) -> np.ndarray:
        self._check_vertex(x)
        return self.indices[self.indptr[x] : self.indptr[x + 1]]

    def has_edge(self, x: int, y: int) -> bool:
        row = self.neighbors(x)
        pos = np.searchsorted(row, y)
        return bool(pos < row.size and row[pos] == y)

    def gather_neighbors(self, vertices: np.ndarray) -> np.ndarray:
        """Concatenated neighbor lists of ``vertices`` (with repetitions)."""
        vertices = np.asarray(vertices, dtype=np.int64)
        starts = self.indptr[vertices]
        lengths = self.indptr[vertices + 1] - starts
        total = int(lengths.sum())
        if total == 0:
            return np.empty(0, dtype=np.int64)
        offsets = np.repeat(starts - np.cumsum(lengths) + lengths, lengths)
        return self.indices[offsets + np.arange(total)]

    def edges(self) -> np.ndarray:
        """All edges as ``(u, v)`` rows with ``u < v``, ascending lexicographic."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        keep = rows < self.indices
        return np.column_stack([rows[keep], self.indices[keep]])

    def subgraph(self, vertices: np.ndarray) -> Tuple["Graph", np.ndarray]:
        """Induced subgraph relabelled to ``0..len(vertices)-1``; returns it with the label map."""
        vertices = np.unique(np.asarray(vertices, dtype=np.int64))
        relabel = np.full(self.n, -1, dtype=np.int64)
        relabel[vertices] = np.arange(vertices.size)
        pairs = self.edges()
        keep = (relabel[pairs[:, 0]] >= 0) & (relabel[pairs[:, 1]] >= 0)
        return Graph.from_edges(vertices.size, relabel[pairs[keep]]), vertices

    def _check_vertex(self, x: int) -> None:
        if not 0 <= x < self.n:
            raise ParameterError(f"vertex {x} outside 0..{self.n - 1}")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, edges={self.edge_count}, meta={self.meta})"


def _pair_from_index(k: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    # row u holds the pairs (u, u+1..n-1) and starts at offset u*n - u*(u+1)/2
    def offset(u: np.ndarray) -> np.ndarray:
        return u * n - u * (u + 1) // 2

    b = 2 * n - 1
    u = np.floor((b - np.sqrt(np.maximum(b * b - 8.0 * k, 0.0))) / 2).astype(np.int64)
    u = np.clip(u, 0, n - 2)
    u = np.where(offset(u) > k, u - 1, u)
    u = np.where(offset(u + 1) <= k, u + 1, u)
    return u, k - offset(u) + u + 1


def generate(n: int, d: float, seed: int) -> Graph:
    """Sample 𝔾(n, d/n) by geometric skipping over the ``C(n, 2)`` pair stream."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if not 0 <= d <= n:
        raise ParameterError(f"expected degree d must lie in [0, n={n}], got {d}")

    meta = GraphMeta(n=n, d=float(d), seed=seed)
    total = n * (n - 1) // 2
    p = d / n
    if total == 0 or p == 0:
        return Graph.from_edges(n, np.empty((0, 2), dtype=np.int64), meta)
    if p >= 1:
        u, v = np.triu_indices(n, k=1)
        return Graph.from_edges(n, np.column_stack([u, v]), meta)

    rng = make_rng(seed)
    mean = total * p
    batch = int(mean + 6 * math.sqrt(mean) + 16)
    chunks = []
    last = -1
    while True:
        positions = last + np.cumsum(rng.geometric(p, size=batch))
        inside = positions[positions < total]
        chunks.append(inside)
        if inside.size < positions.size:
            break
        last = int(positions[-1])
    k = np.concatenate(chunks)
    u, v = _pair_from_index(k, n)
    graph = Graph.from_edges(n, np.column_stack([u, v]), meta)
    logger.debug("generated %r", graph)
    return graph


def bfs_distances(g: Graph, x: int, r_max: Optional[int] = None) -> np.ndarray:
    """Graph distance from ``x`` to every vertex, ``-1`` beyond ``r_max`` or unreachable."""
    g._check_vertex(x)
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[x] = 0
    frontier = np.array([x], dtype=np.int64)
    depth = 0
    while frontier.size and (r_max is None or depth < r_max):
        nbrs = g.gather_neighbors(frontier)
        fresh = np.unique(nbrs[dist[nbrs] < 0])
        depth += 1
        dist[fresh] = depth
        frontier = fresh
    return dist


def ball(g: Graph, x: int, r: int) -> np.ndarray:
    if r < 0:
        raise ParameterError(f"radius must be >= 0, got {r}")
    dist = bfs_distances(g, x, r)
    return np.flatnonzero(dist >= 0)


def sphere(g: Graph, x: int, r: int) -> np.ndarray:
    if r < 0:
        raise ParameterError(f"radius must be >= 0, got {r}")
    dist = bfs_distances(g, x, r)
    return np.flatnonzero(dist == r)


def normalized_degrees(g: Graph, d: float) -> np.ndarray:
    if d <= 0:
        raise ParameterError(f"degree scale d must be > 0, got {d}")
    alphas = g.degrees / d
    if g.n > 1 and alphas.max(initial=0.0) > 10 * math.log(g.n) / d:
        logger.warning(
            "max normalized degree %.3f exceeds 10 log(n)/d = %.3f",
            alphas.max(),
            10 * math.log(g.n) / d,
        )
    return alphas


def is_tree_ball(g: Graph, x: int, r: int) -> bool:
    members = ball(g, x, r)
    inside = np.zeros(g.n, dtype=bool)
    inside[members] = True
    nbrs = g.gather_neighbors(members)
    internal_edges = int(inside[nbrs].sum()) // 2
    # a BFS ball is connected, so it is a tree iff it has |B| - 1 edges
    return internal_edges == members.size - 1


def giant_component(g: Graph) -> np.ndarray:
    if g.n == 0:
        return np.empty(0, dtype=np.int64)
    count, labels = connected_components(g.adjacency, directed=False)
    sizes = np.bincount(labels, minlength=count)
    smallest = np.full(count, g.n, dtype=np.int64)
    np.minimum.at(smallest, labels, np.arange(g.n))
    best = max(range(count), key=lambda c: (sizes[c], -smallest[c]))
    return np.flatnonzero(labels == best)


def _eccentricity(g: Graph, x: int) -> Tuple[int, int]:
    dist = bfs_distances(g, x)
    far = int(dist.max())
    return far, int(np.flatnonzero(dist == far)[0])


def diameter(g: Graph, exact: Optional[bool] = None) -> int:
    """Diameter of the giant component.

    ``exact=None`` picks all-pairs BFS up to ``EXACT_DIAMETER_LIMIT`` vertices and the
    double-sweep lower bound above.
    """
    if g.n == 0:
        raise ParameterError("diameter of an empty graph is undefined")
    component = giant_component(g)
    sub, _ = g.subgraph(component)
    if exact is None:
        exact = sub.n <= EXACT_DIAMETER_LIMIT

    if not exact:
        _, far = _eccentricity(sub, 0)
        ecc, _ = _eccentricity(sub, far)
        return ecc

    best = 0
    for start in range(0, sub.n, _SOURCE_CHUNK):
        sources = np.arange(start, min(start + _SOURCE_CHUNK, sub.n))
        dist = shortest_path(sub.adjacency, unweighted=True, directed=False, indices=sources)
        best = max(best, int(dist.max()))
    return best


def write_edge_list(g: Graph, path: Union[str, Path]) -> None:
    lines = []
    if g.meta is not None:
        lines.append(f"# n={g.meta.n} d={g.meta.d:.17g} seed={g.meta.seed}")
    lines.extend(f"{u} {v}" for u, v in g.edges())
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def read_edge_list(path: Union[str, Path]) -> Graph:
    meta = None
    pairs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            match = _HEADER.match(line)
            if match and meta is None:
                meta = GraphMeta(int(match.group(1)), float(match.group(2)), int(match.group(3)))
            continue
        try:
            u, v = (int(tok) for tok in line.split())
        except ValueError:
            raise ParameterError(f"malformed edge line '{line}' in {path}")
        pairs.append((u, v))
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    if meta is not None:
        n = meta.n
    else:
        n = int(edges.max()) + 1 if edges.size else 0
    return Graph.from_edges(n, edges, meta)
