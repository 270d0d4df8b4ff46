"""Anticoncentration laboratory: the ι regularizer, robust vertices, the cavity recursion for
diagonal Green values, Lévy concentration estimates and eigenvalue-spacing statistics."""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ContractError, ConvergenceError, DomainError, ParameterError, StructureError
from .graph import Graph, GraphMeta, ball, bfs_distances, is_tree_ball
from .linalg import DEFAULT_TOL, SparseSymOperator, green_diagonal, lanczos_topk
from .theory import lambda_of_alpha
from .workers import derive_seed, make_rng

__all__ = (
    "CavityState",
    "ConcentrationEstimate",
    "KestenResult",
    "SpacingStats",
    "cavity_recursion",
    "default_depth",
    "default_threshold",
    "gw_robust_prob",
    "iota",
    "kesten_check",
    "levy_q_estimate",
    "levy_q_from_samples",
    "reduced_vertex_set",
    "resample_boundary",
    "robust_set",
    "spacing_ratios",
    "spacing_stats",
    "z_grid",
)

logger = logging.getLogger(__name__)

Sampler = Callable[[np.random.Generator, Union[int, Tuple[int, int]]], np.ndarray]

Z_95 = 1.959963984540054
MIN_SAMPLES = 100
SPECTRUM_CLEARANCE = 1e-6


@dataclass(frozen=True)
class ConcentrationEstimate:
    q_hat: float
    L: float
    samples: int
    ci_half_width: float

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "q_hat": self.q_hat,
            "samples": self.samples,
            "ci": self.ci_half_width,
        }


@dataclass(frozen=True)
class KestenResult:
    n_terms: int
    term: ConcentrationEstimate
    total: ConcentrationEstimate

    @property
    def lhs(self) -> float:
        return self.total.q_hat

    @property
    def rhs_factor(self) -> float:
        return self.term.q_hat / math.sqrt(self.n_terms)

    @property
    def ratio(self) -> float:
        return self.lhs * math.sqrt(self.n_terms) / self.term.q_hat

    def to_dict(self) -> dict:
        return {
            "n_terms": self.n_terms,
            "lhs": self.lhs,
            "rhs_factor": self.rhs_factor,
            "ratio": self.ratio,
            "q_term": self.term.q_hat,
            "ci_term": self.term.ci_half_width,
            "ci_sum": self.total.ci_half_width,
        }


@dataclass
class CavityState:
    root: int
    r: int
    z: float
    T: float
    d: float
    g: Dict[int, float] = field(default_factory=dict)
    depth: Dict[int, int] = field(default_factory=dict)
    boundary: Dict[int, float] = field(default_factory=dict)

    def rows(self) -> List[Tuple[int, int, float]]:
        """``(vertex, depth, g_value)`` sorted by depth, then vertex."""
        return sorted(((x, self.depth[x], value) for x, value in self.g.items()), key=_by_depth)


def _by_depth(row: Tuple[int, int, float]) -> Tuple[int, int]:
    return row[1], row[0]


@dataclass(frozen=True)
class SpacingStats:
    min_gap: float
    median_gap: float
    count: int
    lower: float
    #: the larger eigenvalue of each gap
    upper: np.ndarray = field(repr=False)
    gaps: np.ndarray = field(repr=False)
    mean_ratio: float = math.nan

    def rows(self) -> List[Tuple[float, float]]:
        return list(zip(self.upper.tolist(), self.gaps.tolist()))

    def to_dict(self) -> dict:
        return {
            "min_gap": self.min_gap,
            "median_gap": self.median_gap,
            "count": self.count,
            "lower": self.lower,
            "mean_ratio": self.mean_ratio,
        }


def iota(t: Union[float, np.ndarray], T: float) -> Union[float, np.ndarray]:
    """1/t on [1/T, T], and the reflection -t + T + 1/T elsewhere."""
    if not T > 1:
        raise ParameterError(f"iota threshold T must be > 1, got {T}")
    x = np.asarray(t, dtype=np.float64)
    inside = (x >= 1.0 / T) & (x <= T)
    out = np.where(inside, np.divide(1.0, x, out=np.ones_like(x), where=inside), T + 1.0 / T - x)
    return float(out) if out.ndim == 0 else out


def default_threshold(n: int, d: float, kappa: float) -> float:
    """T = 10 max(√(log n / d), 1/κ)."""
    if d <= 0 or not 0 < kappa < 1:
        raise ParameterError(f"need d > 0 and 0 < kappa < 1, got d={d}, kappa={kappa}")
    return 10.0 * max(math.sqrt(math.log(n) / d), 1.0 / kappa)


def default_depth(n: int, d: float, eta: float) -> int:
    """r = ⌊(η/2) log n / log d⌋ - 1, at least 1."""
    if eta <= 0:
        raise ParameterError(f"eta must be > 0, got {eta}")
    if d <= 1:
        return 1
    return max(1, int(math.floor(0.5 * eta * math.log(n) / math.log(d))) - 1)


def z_grid(
    alpha_star: float, kappa: float, d: float, offsets: Sequence[float] = (0.0,)
) -> np.ndarray:
    """Spectral parameters Λ(α*) + κ/2 + offset, all inside [Λ(α*) + κ/4, √d/2]."""
    base = float(lambda_of_alpha(alpha_star))
    z = base + kappa / 2.0 + np.asarray(offsets, dtype=np.float64)
    low, high = base + kappa / 4.0, math.sqrt(d) / 2.0
    outside = z[(z < low) | (z > high)]
    if outside.size:
        raise DomainError(f"z values {outside.tolist()} lie outside [{low:.6g}, {high:.6g}]")
    return z


def _children_counts(
    g: Graph, parents: np.ndarray, dist: np.ndarray, weights: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    # per parent: number of neighbors one level deeper and the sum of their weights
    lengths = g.indptr[parents + 1] - g.indptr[parents]
    nbrs = g.gather_neighbors(parents)
    owner = np.repeat(np.arange(parents.size), lengths)
    below = dist[nbrs] == dist[parents][owner] + 1
    counts = np.bincount(owner[below], minlength=parents.size)
    sums = np.bincount(owner[below], weights=weights[nbrs[below]], minlength=parents.size)
    return counts, sums


def robust_set(g: Graph, b: int, r: int, d: float) -> np.ndarray:
    """Vertices of B_r(b) that lie in S_r(b) or have at least d/2 robust children."""
    if r < 0:
        raise ParameterError(f"depth must be >= 0, got {r}")
    dist = bfs_distances(g, b, r)
    robust = np.zeros(g.n, dtype=bool)
    robust[dist == r] = True
    for i in range(r - 1, -1, -1):
        level = np.flatnonzero(dist == i)
        _, robust_children = _children_counts(g, level, dist, robust.astype(np.float64))
        robust[level] = robust_children >= d / 2.0
    return np.flatnonzero(robust)


def _robust_subtrees(
    rng: np.random.Generator, count: int, depth: int, r: int, d: float, need: int
) -> np.ndarray:
    """Robustness of ``count`` independent Poisson(d) subtrees rooted at ``depth``.

    Children are generated lazily: a vertex stops drawing subtrees once ``need`` robust
    children are reached or can no longer be reached.
    """
    if depth == r:
        return np.ones(count, dtype=bool)
    offspring = rng.poisson(d, size=count)
    if depth == r - 1:
        # children sit in S_r and are robust by definition
        return offspring >= need
    found = np.zeros(count, dtype=np.int64)
    left = offspring.astype(np.int64)
    while True:
        undecided = np.flatnonzero((found < need) & (found + left >= need))
        if undecided.size == 0:
            break
        batch = np.minimum(need - found[undecided], left[undecided])
        results = _robust_subtrees(rng, int(batch.sum()), depth + 1, r, d, need)
        owner = np.repeat(undecided, batch)
        hits = np.bincount(owner, weights=results.astype(np.float64), minlength=count)
        found += hits.astype(np.int64)
        left[undecided] -= batch
    return found >= need


def gw_robust_prob(d: float, r: int, trials: int, seed: int = 0) -> Tuple[float, float]:
    """Monte-Carlo frequency of a robust root in a Poisson(d) Galton–Watson tree of depth r.

    Every trial is an independent tree, so the 95% half-width is the binomial one.
    """
    if d <= 0:
        raise ParameterError(f"offspring mean must be > 0, got {d}")
    if trials < 1:
        raise ParameterError(f"trials must be >= 1, got {trials}")
    if r < 0:
        raise ParameterError(f"depth must be >= 0, got {r}")
    need = math.ceil(d / 2.0)
    robust = _robust_subtrees(make_rng(seed), trials, 0, r, d, need)
    freq = float(robust.mean())
    return freq, Z_95 * math.sqrt(freq * (1.0 - freq) / trials)


def _check_clearance(op: SparseSymOperator, z: float, seed: int) -> None:
    k = min(6, op.active_count)
    values = [pair.value for pair in lanczos_topk(op, k, which="both", tol=1e-8, seed=seed)]
    closest = min(abs(z - value) for value in values)
    if closest < SPECTRUM_CLEARANCE:
        raise DomainError(f"z={z} lies within {closest:.2e} of the spectrum")


def reduced_vertex_set(
    g: Graph,
    X: Sequence[int],
    d: float,
    alpha_star: float,
    candidates: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """𝒱^{(X)} = {y ∉ X : |S₁(y) ∖ X| / d >= α*}, drawn from ``candidates`` when given."""
    if d <= 0:
        raise ParameterError(f"degree scale d must be > 0, got {d}")
    in_x = np.zeros(g.n, dtype=bool)
    in_x[np.asarray(X, dtype=np.int64)] = True
    inside_neighbors = g.adjacency @ in_x.astype(np.float64)
    reduced = (g.degrees - inside_neighbors) / d
    keep = ~in_x & (reduced >= alpha_star)
    if candidates is not None:
        chosen = np.zeros(g.n, dtype=bool)
        chosen[np.asarray(candidates, dtype=np.int64)] = True
        keep &= chosen
    return np.flatnonzero(keep)


def cavity_recursion(
    g: Graph,
    H: Optional[SparseSymOperator],
    V: Sequence[int],
    b: int,
    r: int,
    z: float,
    T: float,
    d: Optional[float] = None,
    boundary: Optional[Mapping[int, float]] = None,
    tol: float = DEFAULT_TOL,
    jobs: Optional[int] = 1,
    seed: int = 0,
    alpha_star: Optional[float] = None,
) -> CavityState:
    """g_x(z) = -ι(z + (1/d) Σ_{y ∈ S₁⁺(x)} g_y) inward from the ball boundary.

    Children of a vertex in S_r(b) contribute the diagonal Green values of
    H^{(B_r(b) ∪ 𝒱^{(B_r(b))})}, where 𝒱^{(B_r(b))} keeps the vertices of ``V`` whose degree
    outside the ball is still at least ``alpha_star * d``. Pass ``boundary`` to supply the
    values instead of solving.
    """
    if r < 1:
        raise ParameterError(f"cavity depth must be >= 1, got {r}")
    if d is None:
        if H is None:
            raise ParameterError("either H or d is required")
        d = H.d
    if not is_tree_ball(g, b, r):
        raise StructureError(f"ball B_{r}({b}) contains a cycle")

    dist = bfs_distances(g, b, r + 1)
    if boundary is None:
        if H is None:
            raise ParameterError("H is required to compute boundary Green values")
        inner = ball(g, b, r)
        V = np.asarray(V, dtype=np.int64)
        if V.size and alpha_star is None:
            raise ParameterError("alpha_star is required to remove high-degree vertices")
        if V.size:
            V = reduced_vertex_set(g, inner, d, alpha_star, candidates=V)
        removed = np.union1d(inner, V)
        outer = np.setdiff1d(np.flatnonzero(dist == r + 1), removed)
        op = H.with_removed(removed)
        _check_clearance(op, z, derive_seed(seed, "cavity", b))
        try:
            solved = green_diagonal(op, z, outer, tol=tol, jobs=jobs)
        except ConvergenceError:
            logger.error("boundary solve failed for root %d at z=%s", b, z)
            raise
        boundary = dict(zip(outer.tolist(), solved.tolist()))
    else:
        boundary = {int(y): float(v) for y, v in boundary.items()}

    # outer vertices without a Green value are absent from H(r)
    outer = np.flatnonzero(dist == r + 1)
    dist[outer[~np.isin(outer, list(boundary))]] = -1
    values = np.zeros(g.n)
    state = CavityState(root=int(b), r=int(r), z=float(z), T=float(T), d=float(d))
    for y, value in boundary.items():
        if dist[y] == r + 1:
            values[y] = value
            state.boundary[y] = value

    for i in range(r, 0, -1):
        level = np.flatnonzero(dist == i)
        _, sums = _children_counts(g, level, dist, values)
        level_values = -np.asarray(iota(z + sums / d, T)).reshape(-1)
        if not np.all(np.isfinite(level_values)):
            raise ConvergenceError(f"non-finite cavity value at depth {i}")
        values[level] = level_values
        state.g.update(zip(level.tolist(), level_values.tolist()))
        state.depth.update((x, i) for x in level.tolist())
    return state


def resample_boundary(g: Graph, b: int, r: int, d: float, seed: int) -> Graph:
    """Redraw every edge between S_r(b) and the outside of B_r(b); the ball itself is kept."""
    dist = bfs_distances(g, b, r)
    inside = dist >= 0
    edges = g.edges()
    u_shell = dist[edges[:, 0]] == r
    v_shell = dist[edges[:, 1]] == r
    crossing = (u_shell & ~inside[edges[:, 1]]) | (v_shell & ~inside[edges[:, 0]])
    kept = edges[~crossing]

    rng = make_rng(seed)
    p = min(1.0, d / g.n)
    outside = np.flatnonzero(~inside)
    fresh = []
    for x in np.flatnonzero(dist == r).tolist():
        count = rng.binomial(outside.size, p)
        if count:
            targets = rng.choice(outside, size=count, replace=False)
            fresh.append(np.column_stack([np.full(count, x), targets]))
    if fresh:
        kept = np.vstack([kept] + fresh)
    meta = GraphMeta(g.n, d, seed) if g.meta is None else GraphMeta(g.n, g.meta.d, seed)
    return Graph.from_edges(g.n, kept, meta)


def levy_q_from_samples(samples: np.ndarray, L: float) -> ConcentrationEstimate:
    """Largest fraction of samples in a closed window of width 2L."""
    if L <= 0:
        raise ParameterError(f"half-width L must be > 0, got {L}")
    xs = np.sort(np.asarray(samples, dtype=np.float64).reshape(-1))
    if xs.size == 0:
        raise ParameterError("no samples")
    # windows start at samples, which attains the empirical supremum
    ends = np.searchsorted(xs, xs + 2.0 * L, side="right")
    best = int((ends - np.arange(xs.size)).max())
    q = best / xs.size
    return ConcentrationEstimate(
        q_hat=q,
        L=float(L),
        samples=int(xs.size),
        ci_half_width=Z_95 * math.sqrt(q * (1.0 - q) / xs.size),
    )


def levy_q_estimate(
    sampler: Sampler, L: float, samples: int, seed: int = 0
) -> ConcentrationEstimate:
    """Estimate Q(X, L) = sup_t ℙ(X ∈ [t - L, t + L]) from ``samples`` draws."""
    if samples < MIN_SAMPLES:
        raise ParameterError(f"need at least {MIN_SAMPLES} samples, got {samples}")
    return levy_q_from_samples(sampler(make_rng(seed), samples), L)


def kesten_check(
    sampler: Sampler, n_terms: int, L: float, samples: int, seed: int = 0
) -> KestenResult:
    """Q̂ of a sum of ``n_terms`` i.i.d. draws against Q̂ of one draw."""
    if n_terms < 1:
        raise ParameterError(f"n_terms must be >= 1, got {n_terms}")
    term = levy_q_estimate(sampler, L, samples, derive_seed(seed, "kesten-term"))
    # the hypothesis Q <= 1/2 is rejected only beyond sampling error
    if term.q_hat - term.ci_half_width > 0.5:
        raise ContractError(f"Q(X, L) = {term.q_hat:.4f} exceeds 1/2")
    rng = make_rng(derive_seed(seed, "kesten-sum", n_terms))
    sums = sampler(rng, (samples, n_terms)).sum(axis=1)
    total = levy_q_from_samples(sums, L)
    return KestenResult(n_terms=n_terms, term=term, total=total)


def spacing_ratios(eigs: Sequence[float]) -> np.ndarray:
    """min/max ratio of each pair of consecutive gaps."""
    eigs = np.sort(np.asarray(eigs, dtype=np.float64))
    right = eigs[2:] - eigs[1:-1]
    left = eigs[1:-1] - eigs[:-2]
    big = np.maximum(left, right)
    return np.divide(np.minimum(left, right), big, out=np.zeros_like(big), where=big > 0)


def spacing_stats(
    eigs: Sequence[float], lower: float, both_edges: bool = False
) -> Optional[SpacingStats]:
    """Consecutive gaps among eigenvalues ``>= lower``; ``None`` when fewer than two qualify.

    With ``both_edges`` the eigenvalues ``<= -lower`` form a second run; gaps never cross from
    one edge to the other.
    """
    if both_edges and lower <= 0:
        raise ParameterError(f"both edges need lower > 0, got {lower}")
    values = np.sort(np.asarray(eigs, dtype=np.float64))[::-1]
    edges = [values[values >= lower]]
    if both_edges:
        edges.append(values[values <= -lower])
    runs = [edge for edge in edges if edge.size >= 2]
    if not runs:
        return None
    gaps = np.concatenate([edge[:-1] - edge[1:] for edge in runs])
    ratios = np.concatenate([spacing_ratios(edge) for edge in runs])
    return SpacingStats(
        min_gap=float(gaps.min()),
        median_gap=float(np.median(gaps)),
        count=int(sum(edge.size for edge in edges)),
        lower=float(lower),
        upper=np.concatenate([edge[:-1] for edge in runs]),
        gaps=gaps,
        mean_ratio=float(ratios.mean()) if ratios.size else math.nan,
    )
