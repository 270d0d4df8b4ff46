"""End-to-end experiments: phase scans over one generated graph, localization-length curves,
the deformed Wigner toy model and the summary report."""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
from scipy import linalg as la

from .errors import DomainError, ParameterError
from .graph import diameter, generate, normalized_degrees
from .linalg import (
    DEFAULT_TOL,
    DENSE_LIMIT,
    EigenPair,
    build_operator,
    count_above,
    dense_eigs,
    lanczos_topk,
)
from .localization import (
    CLASSES,
    LOCALIZED,
    LocalizationReport,
    Match,
    classify_eigenvector,
    ll_prediction,
    match_eigenvalues,
    vertex_sets,
)
from .output import format_csv
from .spacing import SpacingStats, spacing_stats
from .theory import B_STAR, alpha_star_exact, lambda_of_alpha, phase_constants, rho_b
from .version import version
from .workers import GENERATOR_ID, derive_seed, make_rng, map_ordered

__all__ = (
    "LL_CURVE_HEADER",
    "OVERLAP_HEADER",
    "PHASE_POINT_HEADER",
    "DosExponents",
    "PhasePoint",
    "PhaseScan",
    "WignerResult",
    "deformed_wigner",
    "dos_exponents",
    "ll_curve",
    "mobility_report",
    "phase_scan",
    "points_of",
)

logger = logging.getLogger(__name__)

PHASE_POINT_HEADER = ("b", "n", "seed", "lambda", "ell", "ell_pred", "sup_sq", "class")
LL_CURVE_HEADER = ("lambda", "ell", "ell_pred")
OVERLAP_HEADER = (
    "index",
    "lambda",
    "basis",
    "overlap",
    "hybridized",
    "delta",
    "criterion",
    "mott",
)
DOS_THRESHOLDS = (2.0, 2.1, 2.2)
DEFAULT_BULK = 20
#: Max basis overlap below which an eigenvector of M(t) counts as hybridized.
HYBRIDIZATION_THRESHOLD = 0.5
_METHODS = ("auto", "dense", "lanczos")


@dataclass
class PhasePoint:
    b: float
    n: int
    seed: int
    eigenvalue: float
    ell: float
    ell_pred: float
    sup_sq: float
    category: str

    def row(self) -> tuple:
        return (
            self.b,
            self.n,
            self.seed,
            self.eigenvalue,
            self.ell,
            self.ell_pred,
            self.sup_sq,
            self.category,
        )


@dataclass(frozen=True)
class DosExponents:
    thresholds: np.ndarray
    counts: np.ndarray
    exponents: np.ndarray
    rho: np.ndarray
    monotone_agrees: bool

    def to_dict(self) -> dict:
        return {
            "thresholds": self.thresholds,
            "counts": self.counts,
            "exponents": self.exponents,
            "rho": self.rho,
            "monotone_agrees": self.monotone_agrees,
        }


@dataclass
class PhaseScan:
    config: Dict[str, Any]
    method: str
    alpha_star: float
    V: np.ndarray = field(repr=False)
    W: np.ndarray = field(repr=False)
    perron: EigenPair = field(repr=False)
    perron_report: LocalizationReport = field(repr=False)
    points: List[PhasePoint] = field(default_factory=list)
    reports: List[LocalizationReport] = field(default_factory=list)
    eigenvalues: np.ndarray = field(default=None, repr=False)
    matches: List[Match] = field(default_factory=list)
    spacing: Optional[SpacingStats] = None
    dos: Optional[DosExponents] = None
    diameter: int = 0


@dataclass
class WignerResult:
    t: float
    values: np.ndarray
    vectors: np.ndarray = field(repr=False)
    overlaps: np.ndarray = field(repr=False)
    basis: np.ndarray = field(repr=False)
    hybridized: np.ndarray = field(repr=False)
    delta: np.ndarray = field(repr=False)
    criterion: np.ndarray = field(repr=False)
    mott: np.ndarray = field(repr=False)

    def rows(self) -> List[tuple]:
        # basis-side diagnostics are reported for the basis vector each eigenvector follows
        return [
            (
                i,
                self.values[i],
                int(self.basis[i]),
                self.overlaps[i],
                bool(self.hybridized[i]),
                self.delta[self.basis[i]],
                self.criterion[self.basis[i]],
                self.mott[self.basis[i]],
            )
            for i in range(self.values.size)
        ]


def _check_sparseness(n: int, d: float) -> None:
    log_n = math.log(n)
    lower = math.sqrt(log_n) * math.log(log_n) if log_n > 1 else 0.0
    if d < lower:
        logger.warning("d=%.3f is below sqrt(log n) log log n = %.3f", d, lower)
    if d > 3 * log_n:
        logger.warning("d=%.3f is above 3 log n = %.3f", d, 3 * log_n)


def _bulk_indices(count: int, available: int) -> np.ndarray:
    if count <= 0 or available <= 0:
        return np.empty(0, dtype=np.int64)
    picks = np.linspace(0, available - 1, min(count, available)).round()
    return np.unique(picks.astype(np.int64))


def _ell_pred(lam: float, diam: int) -> float:
    return ll_prediction(lam) if abs(lam) > 2 else float(diam)


def _dos_counts(
    method: str,
    values: np.ndarray,
    op,
    perron: float,
    thresholds: Sequence[float],
    seed: int,
) -> np.ndarray:
    thresholds = np.sort(np.asarray(thresholds, dtype=np.float64))
    if method == "dense":
        return np.array([np.count_nonzero(values >= t) for t in thresholds], dtype=np.float64)
    estimate = count_above(op, thresholds, seed=derive_seed(seed, "dos"))
    # the stochastic count includes the Perron value
    return np.maximum(estimate - (perron >= thresholds), 0.0)


def phase_scan(
    n: int,
    b: float,
    mu: float,
    kappa: float,
    k_top: int,
    seed: int,
    bulk: int = DEFAULT_BULK,
    method: str = "auto",
    tol: float = DEFAULT_TOL,
    jobs: Optional[int] = 1,
    dos_thresholds: Sequence[float] = DOS_THRESHOLDS,
) -> PhaseScan:
    """Generate G(n, b log n / n), classify its top-k and a bulk sample of eigenvectors.

    ``method="auto"`` uses the dense solver for n <= 4000. The Lanczos path only sees the two
    spectral edges, so it has no bulk sample and estimates eigenvalue counts stochastically.
    """
    if method not in _METHODS:
        raise ParameterError(f"method must be one of {_METHODS}, got '{method}'")
    if k_top < 1:
        raise ParameterError(f"k_top must be >= 1, got {k_top}")
    if b <= 0:
        raise ParameterError(f"b must be > 0, got {b}")
    d = b * math.log(n)
    _check_sparseness(n, d)
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "lanczos"

    g = generate(n, d, seed)
    alphas = normalized_degrees(g, d)
    alpha_star = alpha_star_exact(mu, n, d, kappa)
    V, W = vertex_sets(alphas, alpha_star, kappa)
    H = build_operator(g, d)
    logger.info("n=%d d=%.3f |V|=%d |W|=%d alpha*=%.4f", n, d, V.size, W.size, alpha_star)

    if method == "dense":
        pairs = dense_eigs(H)
        perron, rest = pairs[0], pairs[1:]
        top = rest[:k_top]
        remaining = rest[k_top:]
        chosen = top + [remaining[i] for i in _bulk_indices(bulk, len(remaining))]
        values = np.array([pair.value for pair in pairs])
    else:
        upper_seed, lower_seed = derive_seed(seed, "lanczos", 0), derive_seed(seed, "lanczos", 1)
        upper = lanczos_topk(H, k_top + 1, which="largest", tol=tol, seed=upper_seed)
        lower = lanczos_topk(H, k_top, which="smallest", tol=tol, seed=lower_seed)
        perron = upper[0]
        chosen = upper[1:] + lower
        values = np.array([pair.value for pair in upper + lower])

    diam = diameter(g)
    config = {
        "n": n,
        "b": b,
        "d": d,
        "mu": mu,
        "kappa": kappa,
        "seed": seed,
        "version": version,
        "generator": GENERATOR_ID,
    }

    def classify(pair: EigenPair) -> LocalizationReport:
        return classify_eigenvector(pair, g, alphas, V, kappa, d)

    reports = map_ordered(classify, chosen, jobs, kind="thread")
    perron_report = classify_eigenvector(perron, g, alphas, V, kappa, d, perron=True)
    points = [
        PhasePoint(
            b=b,
            n=n,
            seed=seed,
            eigenvalue=report.eigenvalue,
            ell=report.ell,
            ell_pred=_ell_pred(report.eigenvalue, diam),
            sup_sq=report.sup_sq,
            category=report.category,
        )
        for report in reports
    ]

    non_perron = np.sort(values[values < perron.value])[::-1]
    counts = _dos_counts(
        method, values[values < perron.value], H, perron.value, dos_thresholds, seed
    )
    return PhaseScan(
        config=config,
        method=method,
        alpha_star=alpha_star,
        V=V,
        W=W,
        perron=perron,
        perron_report=perron_report,
        points=points,
        reports=reports,
        eigenvalues=values,
        matches=match_eigenvalues(non_perron, alphas, W),
        spacing=spacing_stats(
            non_perron, float(lambda_of_alpha(alpha_star)) + kappa, both_edges=True
        ),
        dos=dos_exponents(non_perron, n, b, dos_thresholds, counts=counts),
        diameter=diam,
    )


def ll_curve(points: Sequence[PhasePoint], config: Optional[Mapping[str, Any]] = None) -> str:
    """CSV of ``(lambda, ell, ell_pred)``; localized points are predicted by ``ll_prediction``."""
    rows = []
    for point in points:
        if point.category == LOCALIZED:
            pred = ll_prediction(point.eigenvalue)
        else:
            pred = point.ell_pred
        rows.append((point.eigenvalue, point.ell, pred))
    return format_csv(LL_CURVE_HEADER, rows, config)


def deformed_wigner(
    lambdas: Sequence[float],
    t: float,
    seed: int,
    threshold: float = HYBRIDIZATION_THRESHOLD,
) -> WignerResult:
    """Eigenvectors of M(t) = D + √t W and their largest overlap with the standard basis.

    W is a real symmetric Gaussian matrix with off-diagonal variance 1/m and diagonal variance
    2/m. Per basis vector the result also carries the spacing Δ of D, t/(m Δ²) and t/Δ².
    """
    D = np.asarray(lambdas, dtype=np.float64)
    if D.ndim != 1 or D.size == 0:
        raise ParameterError("lambdas must be a non-empty sequence")
    if np.any(np.abs(D) < 2):
        raise DomainError("every diagonal entry must satisfy |lambda| >= 2")
    if t < 0:
        raise ParameterError(f"t must be >= 0, got {t}")
    m = D.size
    G = make_rng(seed).standard_normal((m, m))
    M = np.diag(D) + math.sqrt(t) * (G + G.T) / math.sqrt(2.0 * m)
    values, vectors = la.eigh(M)

    weights = vectors**2
    basis = np.argmax(weights, axis=0)
    overlaps = weights[basis, np.arange(m)]

    if m > 1:
        diffs = np.abs(D[:, None] - D[None, :])
        np.fill_diagonal(diffs, np.inf)
        delta = diffs.min(axis=1)
    else:
        delta = np.full(1, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        mott = np.where(delta > 0, t / delta**2, np.inf)
    return WignerResult(
        t=float(t),
        values=values,
        vectors=vectors,
        overlaps=overlaps,
        basis=basis,
        hybridized=overlaps < threshold,
        delta=delta,
        criterion=mott / m,
        mott=mott,
    )


def dos_exponents(
    eigs: Sequence[float],
    n: int,
    b: float,
    thresholds: Sequence[float],
    counts: Optional[Sequence[float]] = None,
) -> DosExponents:
    """log(#{λ >= ℓ₀}) / log n next to ρ_b(ℓ₀) for each threshold ℓ₀."""
    thresholds = np.sort(np.asarray(thresholds, dtype=np.float64))
    if counts is None:
        values = np.asarray(eigs, dtype=np.float64)
        counts = np.array([np.count_nonzero(values >= t) for t in thresholds], dtype=np.float64)
    else:
        counts = np.asarray(counts, dtype=np.float64)
    with np.errstate(divide="ignore"):
        exponents = np.where(counts >= 1, np.log(np.maximum(counts, 1.0)) / math.log(n), np.nan)
    rho = np.asarray(rho_b(thresholds, b)).reshape(-1)
    finite = np.isfinite(exponents)
    empirical_steps = np.diff(exponents[finite])
    theory_steps = np.diff(rho[finite])
    agrees = bool(np.all(empirical_steps <= 1e-12) and np.all(theory_steps <= 1e-12))
    return DosExponents(
        thresholds=thresholds,
        counts=counts,
        exponents=exponents,
        rho=rho,
        monotone_agrees=agrees,
    )


def _summarize(scan: PhaseScan) -> Dict[str, Any]:
    counts = {name: 0 for name in CLASSES}
    for point in scan.points:
        counts[point.category] += 1
    b = scan.config["b"]
    d = scan.config["d"]
    theory_max = phase_constants(b).lambda_max if 0 < b <= B_STAR else None
    non_perron = scan.eigenvalues[scan.eigenvalues < scan.perron.value]
    second = float(non_perron.max()) if non_perron.size else math.nan
    return {
        "config": scan.config,
        "method": scan.method,
        "counts": counts,
        "alpha_star": scan.alpha_star,
        "V": int(scan.V.size),
        "W": int(scan.W.size),
        "perron": {
            "lambda": scan.perron.value,
            "sqrt_d": math.sqrt(d),
            "separation": scan.perron.value - second,
        },
        "lambda_max_empirical": second,
        "lambda_max_theory": theory_max,
        "spacing": scan.spacing,
        "matches": scan.matches,
        "dos": scan.dos,
        "diameter": scan.diameter,
    }


def mobility_report(scans: Sequence[PhaseScan]) -> Dict[str, Any]:
    """Per-run summaries plus class counts summed over runs."""
    runs = [_summarize(scan) for scan in scans]
    totals = {name: sum(run["counts"][name] for run in runs) for name in CLASSES}
    return {"runs": runs, "totals": totals}


def points_of(scans: Sequence[PhaseScan]) -> List[PhasePoint]:
    return [point for scan in scans for point in scan.points]
