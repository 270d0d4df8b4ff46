"""The rescaled adjacency operator H = A/√d with vertex masks, and its eigensolvers."""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg as la
from scipy.sparse.linalg import LinearOperator, minres

from .errors import CapacityError, ContractError, ConvergenceError, ParameterError
from .graph import Graph
from .workers import make_rng, map_ordered

__all__ = (
    "DEFAULT_TOL",
    "DENSE_LIMIT",
    "EigenPair",
    "PerturbationBound",
    "SparseSymOperator",
    "build_operator",
    "count_above",
    "dense_block_eigs",
    "dense_eigs",
    "green_diagonal",
    "lanczos_topk",
    "matvec",
    "perturb_bound",
)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DENSE_LIMIT = 4000
DEGENERACY_TOL = 1e-8
PERTURBATION_CONSTANT = 4.0
_PERTURBATION_CHECK_LIMIT = 2000
_MAX_RESTARTS = 30
_WHICH = ("largest", "smallest", "both")


class SparseSymOperator:
    """H^{(X)} or H|_X over an immutable graph.

    ``removed`` zeroes the rows and columns of the listed vertices; ``restriction`` zeroes
    everything else. The two are mutually exclusive. Masking is a bitmap applied inside
    ``matvec`` so many masked views can share one adjacency.
    """

    def __init__(
        self,
        graph: Graph,
        d: float,
        removed: Optional[Sequence[int]] = None,
        restriction: Optional[Sequence[int]] = None,
    ) -> None:
        if d <= 0:
            raise ParameterError(f"degree scale d must be > 0, got {d}")
        if removed is not None and restriction is not None:
            raise ParameterError("removed and restriction are mutually exclusive")
        self.graph = graph
        self.d = float(d)
        self.scale = 1.0 / math.sqrt(d)
        self.n = graph.n
        self._matrix = graph.adjacency * self.scale

        self.removed = self._vertex_array(removed)
        self.restriction = self._vertex_array(restriction)
        if self.removed is not None and self.removed.size:
            keep = np.ones(self.n, dtype=bool)
            keep[self.removed] = False
        elif self.restriction is not None:
            keep = np.zeros(self.n, dtype=bool)
            keep[self.restriction] = True
        else:
            keep = None
        self.keep = keep
        self._keep_f = None if keep is None else keep.astype(np.float64)

    def _vertex_array(self, vertices: Optional[Sequence[int]]) -> Optional[np.ndarray]:
        if vertices is None:
            return None
        arr = np.unique(np.asarray(vertices, dtype=np.int64))
        if arr.size and (arr[0] < 0 or arr[-1] >= self.n):
            raise ParameterError(f"vertex ids must lie in 0..{self.n - 1}")
        return arr

    @property
    def active(self) -> np.ndarray:
        if self.keep is None:
            return np.arange(self.n)
        return np.flatnonzero(self.keep)

    @property
    def active_count(self) -> int:
        return self.n if self.keep is None else int(self.keep.sum())

    def with_removed(self, removed: Sequence[int]) -> "SparseSymOperator":
        return SparseSymOperator(self.graph, self.d, removed=removed)

    def restricted_to(self, vertices: Sequence[int]) -> "SparseSymOperator":
        return SparseSymOperator(self.graph, self.d, restriction=vertices)

    def project(self, v: np.ndarray) -> np.ndarray:
        """Zero the masked coordinates of ``v`` (rows for 2-D input)."""
        if self._keep_f is None:
            return v
        return v * (self._keep_f if v.ndim == 1 else self._keep_f[:, None])

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape[0] != self.n:
            raise ParameterError(f"vector length {v.shape[0]} does not match n={self.n}")
        return self.project(self._matrix @ self.project(v))

    def to_dense(self) -> np.ndarray:
        dense = self._matrix.toarray()
        if self.keep is not None:
            dense[~self.keep, :] = 0.0
            dense[:, ~self.keep] = 0.0
        return dense

    def dense_block(self) -> Tuple[np.ndarray, np.ndarray]:
        """The active vertex ids and the dense submatrix of H on them."""
        idx = self.active
        return idx, self._matrix[idx][:, idx].toarray()

    def as_linear_operator(self, shift: float = 0.0) -> LinearOperator:
        return LinearOperator(
            (self.n, self.n),
            matvec=lambda v: self.matvec(np.ravel(v)) - shift * np.ravel(v),
            dtype=np.float64,
        )

    def __repr__(self) -> str:
        return f"SparseSymOperator(n={self.n}, d={self.d}, active={self.active_count})"


@dataclass
class EigenPair:
    value: float
    vector: np.ndarray = field(repr=False)
    residual: float
    iterations: int = 0
    method: str = "dense"
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "residual": self.residual,
            "iterations": self.iterations,
            "method": self.method,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class PerturbationBound:
    epsilon: float
    shift: float
    shift_remainder: float
    window: Tuple[float, float]
    vector_distance: float


def build_operator(
    g: Graph, d: float, removed: Optional[Sequence[int]] = None
) -> SparseSymOperator:
    return SparseSymOperator(g, d, removed=removed)


def matvec(op: SparseSymOperator, v: np.ndarray) -> np.ndarray:
    return op.matvec(v)


def _fix_sign(vector: np.ndarray) -> np.ndarray:
    pivot = int(np.argmax(np.abs(vector)))
    return -vector if vector[pivot] < 0 else vector


def _residuals(op: SparseSymOperator, values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    return np.linalg.norm(op.matvec(vectors) - vectors * values, axis=0)


def _pairs_from_dense(
    op: SparseSymOperator, values: np.ndarray, vectors: np.ndarray
) -> List[EigenPair]:
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]
    residuals = _residuals(op, values, vectors)
    close = np.zeros(values.size, dtype=bool)
    if values.size > 1:
        gaps = np.abs(np.diff(values)) < DEGENERACY_TOL
        close[:-1] |= gaps
        close[1:] |= gaps
    return [
        EigenPair(
            value=float(values[i]),
            vector=_fix_sign(vectors[:, i]),
            residual=float(residuals[i]),
            method="dense",
            degenerate=bool(close[i]),
        )
        for i in range(values.size)
    ]


def dense_eigs(op: SparseSymOperator) -> List[EigenPair]:
    """Full eigendecomposition (Householder tridiagonalization + implicit QL), descending."""
    if op.n > DENSE_LIMIT:
        raise CapacityError(f"dense_eigs is limited to n <= {DENSE_LIMIT}, got n={op.n}")
    values, vectors = la.eigh(op.to_dense(), driver="ev")
    return _pairs_from_dense(op, values, vectors)


def dense_block_eigs(op: SparseSymOperator) -> List[EigenPair]:
    """Eigenpairs of H on its active block only, embedded back into length-n vectors."""
    idx, block = op.dense_block()
    if idx.size > DENSE_LIMIT:
        raise CapacityError(f"dense block limited to {DENSE_LIMIT} vertices, got {idx.size}")
    values, local = la.eigh(block, driver="ev")
    vectors = np.zeros((op.n, idx.size))
    vectors[idx, :] = local
    return _pairs_from_dense(op, values, vectors)


def _random_unit(op: SparseSymOperator, rng: np.random.Generator, basis: np.ndarray) -> np.ndarray:
    for _ in range(5):
        v = op.project(rng.standard_normal(op.n))
        for _ in range(2):
            if basis.shape[0]:
                v -= basis.T @ (basis @ v)
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            return v / norm
    raise ConvergenceError("could not draw a start vector outside the Krylov basis")


def _wanted(count: int, which: str, size: int) -> np.ndarray:
    # indices into ascending Ritz values
    if which == "largest":
        return np.arange(size - count, size)
    if which == "smallest":
        return np.arange(count)
    top = (count + 1) // 2
    return np.concatenate([np.arange(count - top), np.arange(size - top, size)])


def lanczos_topk(
    op: SparseSymOperator,
    k: int,
    which: str = "largest",
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    max_iter: Optional[int] = None,
    max_restarts: int = _MAX_RESTARTS,
) -> List[EigenPair]:
    """Extremal eigenpairs by thick-restart Lanczos with full reorthogonalization.

    ``which="both"`` returns ``ceil(k/2)`` largest and ``floor(k/2)`` smallest pairs.
    ``max_iter`` caps the Krylov basis (default ``10*k + 300``); the basis is thick-restarted
    at most ``max_restarts`` times. Results are sorted by descending eigenvalue.
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if tol <= 0:
        raise ParameterError(f"tol must be > 0, got {tol}")
    if which not in _WHICH:
        raise ParameterError(f"which must be one of {_WHICH}, got '{which}'")
    n_active = op.active_count
    if k > n_active:
        raise ParameterError(f"k={k} exceeds the {n_active} active coordinates")

    cap = min(max_iter or 10 * k + 300, n_active)
    cap = max(cap, min(k + 2, n_active))
    keep_count = min(max(2 * k, k + 10), max(cap // 2, k))
    rng = make_rng(seed)

    Q = np.zeros((cap + 1, op.n))
    T = np.zeros((cap + 1, cap + 1))
    Q[0] = _random_unit(op, rng, Q[:0])
    m = 1
    matvecs = 0
    restarts = 0
    best = math.inf

    while True:
        q = Q[m - 1]
        w = op.matvec(q)
        matvecs += 1
        basis = Q[:m]
        h = basis @ w
        w -= basis.T @ h
        h2 = basis @ w
        w -= basis.T @ h2
        h += h2
        T[:m, m - 1] = h
        T[m - 1, :m] = h
        beta = float(np.linalg.norm(w))

        scale = max(1.0, float(np.abs(np.diag(T[:m, :m])).max(initial=0.0)))
        if beta <= 1e-12 * scale:
            # a full basis spans an invariant subspace, so its Ritz pairs are exact
            if m >= cap:
                break
            # invariant subspace reached: continue from a fresh orthogonal direction
            Q[m] = _random_unit(op, rng, Q[:m])
            T[m, m - 1] = T[m - 1, m] = 0.0
            m += 1
            continue
        if m >= k and (m % 5 == 0 or m == cap):
            theta, S = la.eigh(T[:m, :m])
            wanted = _wanted(k, which, m)
            estimates = beta * np.abs(S[m - 1, wanted])
            best = min(best, float(estimates.max()))
            if np.all(estimates <= tol):
                break

        if m < cap:
            Q[m] = w / beta
            T[m, m - 1] = T[m - 1, m] = beta
            m += 1
            continue

        restarts += 1
        if restarts > max_restarts:
            raise ConvergenceError(
                f"Lanczos did not reach tol={tol} after {matvecs} matvecs",
                best_residual=best,
                iterations=matvecs,
            )
        theta, S = la.eigh(T[:m, :m])
        kept = _wanted(min(keep_count, m - 1), which, m)
        coupling = beta * S[m - 1, kept]
        ritz = S[:, kept].T @ Q[:m]
        p = kept.size
        Q[:p] = ritz
        Q[p] = w / beta
        Q[p + 1 :] = 0.0
        T[:] = 0.0
        T[np.arange(p), np.arange(p)] = theta[kept]
        T[p, :p] = T[:p, p] = coupling
        m = p + 1
        logger.debug("Lanczos restart %d after %d matvecs", restarts, matvecs)

    theta, S = la.eigh(T[:m, :m])
    wanted = _wanted(k, which, m)
    vectors = Q[:m].T @ S[:, wanted]
    vectors /= np.linalg.norm(vectors, axis=0)
    values = theta[wanted]
    residuals = _residuals(op, values, vectors)
    worst = float(residuals.max())
    if worst > tol:
        raise ConvergenceError(
            f"Lanczos residual {worst:.3e} above tol={tol}",
            best_residual=worst,
            iterations=matvecs,
        )

    pairs = []
    for local, idx in enumerate(wanted):
        others = np.delete(theta, idx)
        degenerate = bool(others.size and np.min(np.abs(others - theta[idx])) < DEGENERACY_TOL)
        pairs.append(
            EigenPair(
                value=float(values[local]),
                vector=_fix_sign(vectors[:, local]),
                residual=float(residuals[local]),
                iterations=matvecs,
                method="lanczos",
                degenerate=degenerate,
            )
        )
    pairs.sort(key=lambda pair: -pair.value)
    return pairs


def perturb_bound(
    op: SparseSymOperator, lam_hat: float, v: np.ndarray, delta: float
) -> PerturbationBound:
    """Eigenvalue shift and eigenvector distance for an approximate eigenpair ``(lam_hat, v)``.

    Requires ``5 ε <= delta`` with ``ε = ‖(H - lam_hat) v‖`` and exactly one eigenvalue in
    ``[lam_hat - delta, lam_hat + delta]``; the second condition is checked on small operators.
    """
    v = np.asarray(v, dtype=np.float64)
    if delta <= 0:
        raise ContractError(f"delta must be > 0, got {delta}")
    if abs(np.linalg.norm(v) - 1.0) > 1e-8:
        raise ContractError("v must be a unit vector")
    residual = op.matvec(v) - lam_hat * v
    eps = float(np.linalg.norm(residual))
    if 5 * eps > delta:
        raise ContractError(f"5*eps={5 * eps:.3e} exceeds delta={delta:.3e}")
    if op.n <= _PERTURBATION_CHECK_LIMIT:
        values = np.array([pair.value for pair in dense_eigs(op)])
        inside = int(np.count_nonzero(np.abs(values - lam_hat) <= delta))
        if inside != 1:
            raise ContractError(
                f"{inside} eigenvalues in [{lam_hat - delta}, {lam_hat + delta}], need exactly 1"
            )
    shift = float(v @ residual)
    remainder = PERTURBATION_CONSTANT * eps * eps / delta
    return PerturbationBound(
        epsilon=eps,
        shift=shift,
        shift_remainder=remainder,
        window=(lam_hat + shift - remainder, lam_hat + shift + remainder),
        vector_distance=PERTURBATION_CONSTANT * eps / delta,
    )


def green_diagonal(
    op: SparseSymOperator,
    z: float,
    vertices: Sequence[int],
    tol: float = DEFAULT_TOL,
    jobs: Optional[int] = 1,
) -> np.ndarray:
    """Diagonal entries ``(H - z)⁻¹_{yy}`` by MINRES solves, one per vertex."""
    shifted = op.as_linear_operator(shift=z)

    def solve(y: int) -> float:
        rhs = np.zeros(op.n)
        rhs[y] = 1.0
        solution, info = minres(shifted, rhs, rtol=tol, maxiter=20 * op.n)
        if info != 0:
            raise ConvergenceError(f"MINRES failed for vertex {y} at z={z} (info={info})")
        return float(solution[y])

    return np.array(map_ordered(solve, [int(y) for y in vertices], jobs, kind="thread"))


def _jackson(degree: int) -> np.ndarray:
    k = np.arange(degree + 1)
    a = math.pi / (degree + 2)
    return ((degree + 2 - k) * np.cos(a * k) + np.sin(a * k) / math.tan(a)) / (degree + 2)


def count_above(
    op: SparseSymOperator,
    thresholds: Sequence[float],
    probes: int = 32,
    degree: int = 200,
    seed: int = 0,
) -> np.ndarray:
    """Stochastic-trace estimate of ``#{λ >= t}`` on the active subspace for each threshold.

    Hutchinson probes with Rademacher entries, Chebyshev moments of the rescaled operator and
    a Jackson-damped expansion of the step function.
    """
    ends = lanczos_topk(op, 2, which="both", tol=1e-6, seed=seed)
    upper, lower = ends[0].value, ends[-1].value
    center = 0.5 * (upper + lower)
    half = 0.5 * (upper - lower) * 1.01 + 1e-12

    rng = make_rng(seed)
    Z = op.project(rng.choice([-1.0, 1.0], size=(op.n, probes)))

    def scaled(X: np.ndarray) -> np.ndarray:
        return (op.matvec(X) - center * X) / half

    moments = np.empty(degree + 1)
    prev, cur = Z, scaled(Z)
    moments[0] = np.sum(Z * prev) / probes
    moments[1] = np.sum(Z * cur) / probes
    for k in range(2, degree + 1):
        prev, cur = cur, 2.0 * scaled(cur) - prev
        moments[k] = np.sum(Z * cur) / probes

    damping = _jackson(degree)
    k = np.arange(1, degree + 1)
    counts = []
    for t in thresholds:
        x = (t - center) / half
        if x >= 1:
            counts.append(0.0)
            continue
        if x <= -1:
            counts.append(float(op.active_count))
            continue
        angle = math.acos(x)
        coeff = np.concatenate([[angle / math.pi], 2.0 * np.sin(k * angle) / (k * math.pi)])
        counts.append(float(max(0.0, np.sum(coeff * damping * moments))))
    return np.array(counts)
