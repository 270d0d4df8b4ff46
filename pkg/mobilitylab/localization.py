"""Profile vectors, approximate eigenpairs around high-degree vertices and the diagnostics
that classify an eigenvector as localized or delocalized."""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.csgraph import shortest_path

from .errors import DomainError, ParameterError, StructureError
from .graph import Graph, ball, bfs_distances
from .linalg import (
    DEFAULT_TOL,
    DENSE_LIMIT,
    EigenPair,
    SparseSymOperator,
    dense_block_eigs,
    lanczos_topk,
)
from .theory import lambda_of_alpha
from .workers import derive_seed, map_ordered

__all__ = (
    "CLASSES",
    "REPORT_HEADER",
    "ApproxEigenpair",
    "LocalizationReport",
    "Match",
    "ProfileCoeffs",
    "build_v_r",
    "build_w_r",
    "classify_eigenvector",
    "compute_all_u_x",
    "compute_u_x",
    "decay_profile",
    "default_depth",
    "inverse_participation_ratio",
    "ll_prediction",
    "localization_length",
    "match_eigenvalues",
    "profile_coeffs",
    "vertex_sets",
)

logger = logging.getLogger(__name__)

LOCALIZED = "localized"
DELOCALIZED = "delocalized"
UNCLASSIFIED = "unclassified"
CLASSES = (LOCALIZED, DELOCALIZED, UNCLASSIFIED)

REPORT_HEADER = (
    "lambda",
    "center",
    "alpha_center",
    "center_mass",
    "ell",
    "sup_sq",
    "overlap_v",
    "overlap_w",
    "class",
    "ipr",
)

#: Number of heaviest vertices tried as localization centers in candidate mode.
CANDIDATE_COUNT = 64
EXACT_CENTER_LIMIT = 2000
_SOURCE_CHUNK = 256


@dataclass(frozen=True)
class ProfileCoeffs:
    alpha: float
    r: int
    u: np.ndarray = field(repr=False)

    @property
    def center_mass(self) -> float:
        return float(self.u[0] ** 2)


@dataclass
class LocalizationReport:
    eigenvalue: float
    center: int
    alpha_center: float
    center_mass: float
    decay: np.ndarray = field(repr=False)
    ell: float
    sup_sq: float
    ipr: float
    overlap_v: float
    overlap_w: float
    category: str

    def to_dict(self) -> dict:
        return {
            "lambda": self.eigenvalue,
            "center": self.center,
            "alpha_center": self.alpha_center,
            "center_mass": self.center_mass,
            "decay": self.decay,
            "ell": self.ell,
            "sup_sq": self.sup_sq,
            "ipr": self.ipr,
            "overlap_v": self.overlap_v,
            "overlap_w": self.overlap_w,
            "class": self.category,
        }

    def csv_row(self) -> tuple:
        return (
            self.eigenvalue,
            self.center,
            self.alpha_center,
            self.center_mass,
            self.ell,
            self.sup_sq,
            self.overlap_v,
            self.overlap_w,
            self.category,
            self.ipr,
        )


@dataclass
class ApproxEigenpair:
    """λ(x) = λ₂(H^{(𝒱∖{x})}) and its eigenvector u(x)."""

    vertex: int
    value: float
    vector: np.ndarray = field(repr=False)
    gap: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "vertex": self.vertex,
            "lambda": self.value,
            "gap": self.gap,
            "degenerate": self.degenerate,
            "center_mass": float(self.vector[self.vertex] ** 2),
        }


@dataclass(frozen=True)
class Match:
    vertex: int
    alpha: float
    predicted: float
    eigenvalue: float

    @property
    def gap(self) -> float:
        return abs(self.eigenvalue - self.predicted)

    def to_dict(self) -> dict:
        return {
            "vertex": self.vertex,
            "alpha": self.alpha,
            "predicted": self.predicted,
            "lambda": self.eigenvalue,
            "gap": self.gap,
        }


def default_depth(n: int, d: float) -> int:
    """max(2, ⌊log n / (6 log d)⌋)."""
    if d <= 1 or n < 2:
        return 2
    return max(2, int(math.floor(math.log(n) / (6.0 * math.log(d)))))


def profile_coeffs(alpha: float, r: int) -> ProfileCoeffs:
    if not alpha > 2:
        raise DomainError(f"profile coefficients need alpha > 2, got {alpha}")
    if r < 2:
        raise ParameterError(f"profile depth must be >= 2, got {r}")
    i = np.arange(1, r, dtype=np.float64)
    ratios = np.empty(r)
    ratios[0] = 1.0
    decay = np.exp(-0.5 * (i - 1.0) * math.log(alpha - 1.0))
    ratios[1:] = math.sqrt(alpha / (alpha - 1.0)) * decay
    u0 = 1.0 / math.sqrt(math.fsum(ratios**2))
    return ProfileCoeffs(alpha=float(alpha), r=int(r), u=u0 * ratios)


def build_v_r(g: Graph, x: int, r: int, alpha_x: float) -> np.ndarray:
    """Σᵢ uᵢ(α_x) 1_{Sᵢ(x)} / |Sᵢ(x)|^{1/2} over the spheres of depth 0..r-1."""
    v = np.zeros(g.n)
    if r == 1:
        v[x] = 1.0
        return v
    coeffs = profile_coeffs(alpha_x, r)
    dist = bfs_distances(g, x, r - 1)
    sizes = np.bincount(dist[dist >= 0], minlength=r)
    empty = np.flatnonzero(sizes[:r] == 0)
    if empty.size:
        raise StructureError(f"sphere S_{int(empty[0])}({x}) is empty below depth {r}")
    inside = dist >= 0
    v[inside] = coeffs.u[dist[inside]] / np.sqrt(sizes[dist[inside]])
    return v


def _fix_center_sign(vector: np.ndarray, x: int) -> np.ndarray:
    return -vector if vector[x] < 0 else vector


def build_w_r(g: Graph, H: SparseSymOperator, x: int, r: int) -> EigenPair:
    """Top eigenpair of H|_{B_r(x)}, embedded in length n with a nonnegative entry at ``x``."""
    members = ball(g, x, r)
    restricted = H.restricted_to(members)
    if members.size <= DENSE_LIMIT:
        top = dense_block_eigs(restricted)[0]
    else:
        top = lanczos_topk(restricted, 1, seed=derive_seed(0, "w_r", x))[0]
    top.vector = _fix_center_sign(top.vector, x)
    return top


def vertex_sets(
    alphas: np.ndarray, alpha_star: float, kappa: float
) -> Tuple[np.ndarray, np.ndarray]:
    """𝒱 = {α_x ≥ α*} and 𝒲 = {x ∈ 𝒱 : Λ(α_x) ≥ Λ(α*) + κ/2}."""
    if alpha_star < 2:
        raise DomainError(f"alpha_star must be >= 2, got {alpha_star}")
    alphas = np.asarray(alphas, dtype=np.float64)
    V = np.flatnonzero(alphas >= alpha_star)
    if V.size == 0:
        return V, V.copy()
    lam = np.asarray(lambda_of_alpha(alphas[V])).reshape(-1)
    W = V[lam >= lambda_of_alpha(alpha_star) + kappa / 2.0]
    return V, W


def compute_u_x(
    H: SparseSymOperator,
    V: Sequence[int],
    x: int,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> ApproxEigenpair:
    V = np.asarray(V, dtype=np.int64)
    if x not in set(V.tolist()):
        raise ParameterError(f"vertex {x} is not in the vertex set")
    op = H.with_removed(V[V != x])
    k = min(3, op.active_count)
    if op.active_count <= DENSE_LIMIT:
        pairs = dense_block_eigs(op)[:k]
    else:
        pairs = lanczos_topk(op, k, which="largest", tol=tol, seed=seed)
    if len(pairs) < 2:
        raise StructureError(f"H with {op.active_count} active vertices has no second eigenvalue")
    second = pairs[1]
    others = [p.value for i, p in enumerate(pairs) if i != 1]
    gap = min(abs(second.value - value) for value in others)
    if gap < 1e-8:
        logger.warning("lambda(x) for x=%d is within %.2e of a neighbor eigenvalue", x, gap)
    return ApproxEigenpair(
        vertex=int(x),
        value=second.value,
        vector=_fix_center_sign(second.vector, x),
        gap=gap,
        degenerate=gap < 1e-8 or second.degenerate,
    )


def compute_all_u_x(
    H: SparseSymOperator,
    V: Sequence[int],
    W: Sequence[int],
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    jobs: Optional[int] = 1,
) -> List[ApproxEigenpair]:
    def one(x: int) -> ApproxEigenpair:
        return compute_u_x(H, V, x, tol=tol, seed=derive_seed(seed, "u_x", x))

    return map_ordered(one, [int(x) for x in W], jobs, kind="thread")


def decay_profile(w: np.ndarray, g: Graph, x: int, r_max: int) -> np.ndarray:
    """‖w|_{B_i(x)^c}‖ for i = 0..r_max."""
    w = np.asarray(w, dtype=np.float64)
    dist = bfs_distances(g, x, r_max)
    sq = w * w
    far = float(sq[dist < 0].sum())
    by_depth = np.bincount(dist[dist >= 0], weights=sq[dist >= 0], minlength=r_max + 1)
    # mass strictly deeper than i, summed from the outside in
    deeper = np.concatenate([np.cumsum(by_depth[::-1])[::-1][1:], [0.0]])
    return np.sqrt(far + deeper)


def inverse_participation_ratio(w: np.ndarray) -> float:
    sq = np.asarray(w, dtype=np.float64) ** 2
    total = sq.sum()
    return float((sq * sq).sum() / (total * total)) if total > 0 else math.nan


def _distance_rows(g: Graph, sources: np.ndarray) -> np.ndarray:
    rows = []
    for start in range(0, sources.size, _SOURCE_CHUNK):
        chunk = sources[start : start + _SOURCE_CHUNK]
        dist = shortest_path(g.adjacency, unweighted=True, directed=False, indices=chunk)
        rows.append(np.atleast_2d(dist))
    dist = np.vstack(rows)
    # unreachable vertices sit at distance n
    dist[~np.isfinite(dist)] = g.n
    return dist


def localization_length(
    w: np.ndarray,
    g: Graph,
    candidates: Optional[Sequence[int]] = None,
    exact: Optional[bool] = None,
) -> Tuple[float, int]:
    """ℓ(w) = min_x Σ_y d(x, y) w_y² and its minimizing center (smallest id on ties)."""
    sq = np.asarray(w, dtype=np.float64) ** 2
    if exact is None:
        exact = candidates is None and g.n <= EXACT_CENTER_LIMIT
    if exact:
        centers = np.arange(g.n)
    elif candidates is not None:
        centers = np.unique(np.asarray(candidates, dtype=np.int64))
    else:
        heavy = np.argsort(-sq, kind="stable")[:CANDIDATE_COUNT]
        centers = np.unique(np.append(heavy, int(np.argmax(g.degrees))))
    lengths = _distance_rows(g, centers) @ sq
    best = int(np.argmin(lengths))
    return float(lengths[best]), int(centers[best])


def ll_prediction(lam: float) -> float:
    """|λ| / (2√(λ² - 4))."""
    a = abs(lam)
    if a <= 2:
        raise DomainError(f"localization length diverges at |lambda| <= 2, got {lam}")
    return a / (2.0 * math.sqrt((a - 2.0) * (a + 2.0)))


def _overlap_v(w: np.ndarray, g: Graph, x: int, r: int, alpha: float) -> float:
    if not alpha > 2:
        return math.nan
    try:
        return abs(float(w @ build_v_r(g, x, r, alpha)))
    except StructureError:
        return math.nan


def classify_eigenvector(
    pair: EigenPair,
    g: Graph,
    alphas: np.ndarray,
    V: Sequence[int],
    kappa: float,
    d: float,
    r: Optional[int] = None,
    perron: bool = False,
    exact: Optional[bool] = None,
) -> LocalizationReport:
    """Localization diagnostics for one eigenvector and its class.

    Localized means ``|λ| >= 2 + κ`` with a center in 𝒱, delocalized means ``|λ| <= 2 - κ``;
    the band in between and the Perron vector stay unclassified.
    """
    w = pair.vector
    r = default_depth(g.n, d) if r is None else r
    ell, center = localization_length(w, g, exact=exact)
    alpha_center = float(alphas[center])
    H = SparseSymOperator(g, d)
    overlap_w = abs(float(w @ build_w_r(g, H, center, r).vector))

    lam = abs(pair.value)
    if perron:
        category = UNCLASSIFIED
    elif lam >= 2 + kappa and center in set(np.asarray(V).tolist()):
        category = LOCALIZED
    elif lam <= 2 - kappa:
        category = DELOCALIZED
    else:
        category = UNCLASSIFIED

    return LocalizationReport(
        eigenvalue=pair.value,
        center=center,
        alpha_center=alpha_center,
        center_mass=float(w[center] ** 2),
        decay=decay_profile(w, g, center, r),
        ell=ell,
        sup_sq=float(np.max(w * w)),
        ipr=inverse_participation_ratio(w),
        overlap_v=_overlap_v(w, g, center, r, alpha_center),
        overlap_w=overlap_w,
        category=category,
    )


def match_eigenvalues(
    eigs: Sequence[float], alphas: np.ndarray, W: Sequence[int]
) -> List[Match]:
    """Pair the largest non-Perron eigenvalues with 𝒲 sorted by Λ(α_x), both descending."""
    W = np.asarray(W, dtype=np.int64)
    if W.size == 0:
        return []
    values = np.sort(np.asarray(eigs, dtype=np.float64))[::-1][: W.size]
    predicted = np.asarray(lambda_of_alpha(np.asarray(alphas, dtype=np.float64)[W])).reshape(-1)
    order = np.lexsort((W, -predicted))
    return [
        Match(
            vertex=int(W[i]),
            alpha=float(alphas[W[i]]),
            predicted=float(predicted[i]),
            eigenvalue=float(value),
        )
        for i, value in zip(order, values)
    ]
