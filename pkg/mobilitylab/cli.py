"""``mobilitylab`` command line: one subcommand per experiment, artifacts written atomically."""

import argparse
import logging
import math
import sys
from functools import partial
from pathlib import Path
from typing import Any, Callable, Dict, List, NoReturn, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence

from . import localization, phase, spacing, theory
from .config import COMMANDS, REGISTRY, RunConfig, build_config, parse_seeds
from .errors import ConvergenceError, MobilityLabError, ParameterError
from .graph import (
    Graph,
    ball,
    generate,
    normalized_degrees,
    read_edge_list,
    sphere,
    write_edge_list,
)
from .linalg import DENSE_LIMIT, build_operator, dense_eigs, green_diagonal, lanczos_topk
from .output import atomic_write_text, format_float, write_csv, write_json
from .version import version
from .workers import GENERATOR_ID, derive_seed, map_ordered

__all__ = ("main", "run")

logger = logging.getLogger(__name__)

SPECTRUM_HEADER = ("seed", "index", "lambda", "residual", "iterations", "method", "degenerate")
GAPS_HEADER = ("seed", "lambda", "gap")
CAVITY_HEADER = ("seed", "z", "vertex", "depth", "g_value")
CONCENTRATION_HEADER = ("seed", "L", "q_hat", "ci", "samples")
KESTEN_HEADER = ("seed", "L", "n_terms", "lhs", "rhs_factor", "ratio")
GW_HEADER = ("seed", "d", "r", "trials", "frequency", "ci", "exact")
#: Numerical failures raised by numpy and scipy, reported like a solver that did not converge.
SOLVER_ERRORS = (np.linalg.LinAlgError, ArpackNoConvergence)
LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"

HELP = {
    "gen": "generate an Erdős–Rényi graph and write its edge list",
    "spectrum": "top eigenpairs of H = A/sqrt(d)",
    "localize": "approximate eigenpairs around high-degree vertices and eigenvector reports",
    "phase": "phase scan: classify eigenvectors and compare with the predicted phase diagram",
    "spacing": "cavity recursion and robust vertices around the highest-degree vertex",
    "anticoncentration": "Lévy concentration estimates and Kesten checks",
    "gw-robust": "robust-root frequency of Poisson Galton–Watson trees",
    "toy-wigner": "hybridization in the deformed Wigner toy model",
    "theory": "print closed-form quantities",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise ParameterError(message)


def _parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mobilitylab", description="Mobility edge laboratory for sparse graphs")
    parser.add_argument("--version", action="version", version=f"%(prog)s {version}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for command in COMMANDS:
        cmd = sub.add_parser(command, help=HELP[command], description=HELP[command])
        cmd.add_argument(
            "--config", dest="config_path", type=Path, default=None, help="YAML run file"
        )
        cmd.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
        if "seeds" in {option.name for option in REGISTRY.for_command(command)}:
            cmd.add_argument(
                "--seed",
                dest="seeds",
                type=parse_seeds,
                default=argparse.SUPPRESS,
                help="alias of --seeds",
            )
        REGISTRY.add_arguments(cmd, command)
    return parser


def _setup_logging(verbosity: int) -> None:
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(stream=sys.stderr, level=level, format=LOG_FORMAT)
    logging.getLogger("mobilitylab").setLevel(level)


def _degree(config: RunConfig, n: int) -> float:
    return config.d if config.d is not None else config.b * math.log(n)


def _load_graph(config: RunConfig, seed: int) -> Tuple[Graph, float]:
    if config.graph is None:
        d = _degree(config, config.n)
        return generate(config.n, d, seed), d
    g = read_edge_list(config.graph)
    if config.d is not None or config.b is not None:
        return g, _degree(config, g.n)
    if g.meta is None:
        raise ParameterError(f"{config.graph} has no header; pass --d or --b")
    return g, g.meta.d


def _meta(config: RunConfig, **extra: Any) -> Dict[str, Any]:
    block = config.to_dict()
    block.update(version=version, generator=GENERATOR_ID)
    block.update(extra)
    return block


def _target(config: RunConfig, name: str) -> Path:
    return config.out / name


def _gen(config: RunConfig) -> None:
    seed = config.seeds[0]
    g = generate(config.n, _degree(config, config.n), seed)
    target = config.out / f"graph_{seed}.txt" if config.out.is_dir() else config.out
    write_edge_list(g, target)
    logger.info("wrote %r to %s", g, target)


def _top_pairs(H, k: int, method: str, tol: float, seed: int):
    if method == "dense" or (method == "auto" and H.n <= DENSE_LIMIT):
        return dense_eigs(H)[:k]
    return lanczos_topk(H, k, which="largest", tol=tol, seed=derive_seed(seed, "lanczos"))


def _spectrum(config: RunConfig) -> None:
    def one(seed: int) -> List[tuple]:
        g, d = _load_graph(config, seed)
        pairs = _top_pairs(build_operator(g, d), config.k_top, config.method, config.tol, seed)
        return [
            (seed, i, p.value, p.residual, p.iterations, p.method, p.degenerate)
            for i, p in enumerate(pairs)
        ]

    rows = [row for rows in map_ordered(one, config.seeds, config.jobs) for row in rows]
    if config.format == "json":
        records = [dict(zip(SPECTRUM_HEADER, row)) for row in rows]
        write_json(_target(config, "spectrum.json"), {"config": _meta(config), "pairs": records})
    else:
        write_csv(_target(config, "spectrum.csv"), SPECTRUM_HEADER, rows, _meta(config))


def _localize(config: RunConfig) -> None:
    runs, csv_rows = [], []
    for seed in config.seeds:
        g, d = _load_graph(config, seed)
        alphas = normalized_degrees(g, d)
        alpha_star = theory.alpha_star_exact(config.mu, g.n, d, config.kappa)
        V, W = localization.vertex_sets(alphas, alpha_star, config.kappa)
        H = build_operator(g, d)
        approx = localization.compute_all_u_x(H, V, W, config.tol, seed, config.jobs)
        pairs = _top_pairs(H, config.k_top + 1, "auto", config.tol, seed)
        reports = [
            localization.classify_eigenvector(pair, g, alphas, V, config.kappa, d, r=config.r)
            for pair in pairs[1:]
        ]
        matches = localization.match_eigenvalues([p.value for p in pairs[1:]], alphas, W)
        runs.append(
            {
                "seed": seed,
                "d": d,
                "alpha_star": alpha_star,
                "V": V,
                "W": W,
                "perron": pairs[0].value,
                "u_x": approx,
                "matches": matches,
                "reports": reports,
            }
        )
        csv_rows.extend((seed,) + report.csv_row() for report in reports)
    write_json(_target(config, "reports.json"), {"config": _meta(config), "runs": runs})
    header = ("seed",) + localization.REPORT_HEADER
    write_csv(_target(config, "reports.csv"), header, csv_rows, _meta(config))


def _scan_one(config: RunConfig, seed: int) -> phase.PhaseScan:
    return phase.phase_scan(
        config.n,
        config.b,
        config.mu,
        config.kappa,
        config.k_top,
        seed,
        bulk=config.bulk,
        method=config.method,
        tol=config.tol,
    )


def _phase(config: RunConfig) -> None:
    scans = map_ordered(partial(_scan_one, config), config.seeds, config.jobs, kind="process")
    meta = _meta(config)
    points = phase.points_of(scans)
    write_csv(
        _target(config, "phase_points.csv"),
        phase.PHASE_POINT_HEADER,
        [point.row() for point in points],
        meta,
    )
    reports = {
        "config": meta,
        "runs": [
            {"config": scan.config, "perron": scan.perron_report, "reports": scan.reports}
            for scan in scans
        ],
    }
    write_json(_target(config, "reports.json"), reports)
    write_json(_target(config, "summary.json"), dict(phase.mobility_report(scans), config=meta))
    atomic_write_text(_target(config, "ll_curve.csv"), phase.ll_curve(points, meta))
    gap_rows = [
        (scan.config["seed"], lam, gap)
        for scan in scans
        if scan.spacing is not None
        for lam, gap in scan.spacing.rows()
    ]
    write_csv(_target(config, "gaps.csv"), GAPS_HEADER, gap_rows, meta)


def _spacing(config: RunConfig) -> None:
    rows, runs = [], []
    for seed in config.seeds:
        g, d = _load_graph(config, seed)
        alphas = normalized_degrees(g, d)
        alpha_star = theory.alpha_star_exact(config.mu, g.n, d, config.kappa)
        V, _ = localization.vertex_sets(alphas, alpha_star, config.kappa)
        H = build_operator(g, d)
        root = int(np.argmax(alphas))
        r = config.r or spacing.default_depth(g.n, d, config.eta)
        T = config.threshold or spacing.default_threshold(g.n, d, config.kappa)
        robust = set(spacing.robust_set(g, root, r, d).tolist())
        children = sphere(g, root, 1)
        outside_root = spacing.reduced_vertex_set(g, [root], d, alpha_star, candidates=V)
        cavity_op = H.with_removed(np.union1d([root], outside_root))
        for z in spacing.z_grid(alpha_star, config.kappa, d, config.z_offsets):
            state = spacing.cavity_recursion(
                g,
                H,
                V,
                root,
                r,
                z,
                T,
                tol=config.tol,
                jobs=config.jobs,
                seed=seed,
                alpha_star=alpha_star,
            )
            exact = green_diagonal(cavity_op, z, children, tol=config.tol, jobs=config.jobs)
            errors = [abs(state.g[int(x)] - value) for x, value in zip(children, exact)]
            rows.extend((seed, z) + row for row in state.rows())
            runs.append(
                {
                    "seed": seed,
                    "root": root,
                    "alpha_root": float(alphas[root]),
                    "alpha_star": alpha_star,
                    "r": r,
                    "T": T,
                    "z": z,
                    "ball_size": int(ball(g, root, r).size),
                    "boundary": len(state.boundary),
                    "root_robust": root in robust,
                    "fidelity_median": float(np.median(errors)) if errors else None,
                }
            )
    meta = _meta(config)
    write_csv(_target(config, "cavity.csv"), CAVITY_HEADER, rows, meta)
    write_json(_target(config, "summary.json"), {"config": meta, "runs": runs})


def sample_uniform(rng: np.random.Generator, size) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size)


def sample_bernoulli(rng: np.random.Generator, size) -> np.ndarray:
    return 10.0 * rng.integers(0, 2, size)


def sample_discrete(rng: np.random.Generator, size) -> np.ndarray:
    return rng.integers(0, 10, size).astype(np.float64)


SAMPLERS: Dict[str, Callable[[np.random.Generator, Any], np.ndarray]] = {
    "uniform": sample_uniform,
    "bernoulli": sample_bernoulli,
    "discrete": sample_discrete,
}


def _anticoncentration(config: RunConfig) -> None:
    sampler = SAMPLERS[config.distribution]
    concentration, kesten = [], []
    for seed in config.seeds:
        for i, L in enumerate(config.half_widths):
            est = spacing.levy_q_estimate(sampler, L, config.samples, derive_seed(seed, "levy", i))
            concentration.append((seed, L, est.q_hat, est.ci_half_width, est.samples))
            for n_terms in config.terms:
                result = spacing.kesten_check(
                    sampler, n_terms, L, config.samples, derive_seed(seed, "kesten", i)
                )
                kesten.append((seed, L, n_terms, result.lhs, result.rhs_factor, result.ratio))
    meta = _meta(config)
    write_csv(_target(config, "concentration.csv"), CONCENTRATION_HEADER, concentration, meta)
    write_csv(_target(config, "kesten.csv"), KESTEN_HEADER, kesten, meta)


def _gw_robust(config: RunConfig) -> None:
    if config.r is None:
        raise ParameterError("'gw-robust' requires --r")
    exact = theory.gw_robust_exact(config.d, config.r)
    rows = []
    for seed in config.seeds:
        freq, ci = spacing.gw_robust_prob(config.d, config.r, config.trials, seed)
        rows.append((seed, config.d, config.r, config.trials, freq, ci, exact))
        logger.info("seed %d: robust root %.4f +- %.4f, exact %.4f", seed, freq, ci, exact)
    if config.format == "json":
        records = [dict(zip(GW_HEADER, row)) for row in rows]
        write_json(_target(config, "gw_robust.json"), {"config": _meta(config), "runs": records})
    else:
        write_csv(_target(config, "gw_robust.csv"), GW_HEADER, rows, _meta(config))


def _toy_wigner(config: RunConfig) -> None:
    lambdas = config.lambdas or tuple(2.5 + config.gap * np.arange(config.size))
    rows = []
    for seed in config.seeds:
        result = phase.deformed_wigner(lambdas, config.t, seed)
        rows.extend((seed,) + row for row in result.rows())
        hybridized = int(result.hybridized.sum())
        logger.info("seed %d: %d of %d hybridized", seed, hybridized, len(lambdas))
    header = ("seed",) + phase.OVERLAP_HEADER
    write_csv(_target(config, "overlaps.csv"), header, rows, _meta(config))


def _require(config: RunConfig, *names: str) -> None:
    missing = [name for name in names if getattr(config, name) is None]
    if missing:
        raise ParameterError(f"this query needs {', '.join('--' + m for m in missing)}")


def _theory_values(config: RunConfig) -> List[float]:
    values = []
    if config.lambda_of_alpha is not None:
        values.append(theory.lambda_of_alpha(config.lambda_of_alpha))
    if config.alpha_of_lambda is not None:
        values.append(theory.alpha_of_lambda(config.alpha_of_lambda))
    if config.alpha_star:
        _require(config, "n")
        if (config.b is None) == (config.d is None):
            raise ParameterError("alpha* needs exactly one of --b and --d")
        values.append(
            theory.alpha_star_exact(config.mu, config.n, _degree(config, config.n), config.kappa)
        )
    if config.theta_b is not None:
        _require(config, "b")
        values.append(theory.theta_b(config.theta_b, config.b))
    if config.rho_b is not None:
        _require(config, "b")
        values.append(theory.rho_b(config.rho_b, config.b))
    if config.lambda_max:
        _require(config, "b")
        values.append(theory.phase_constants(config.b).lambda_max)
    if config.halfline is not None:
        values.append(theory.halfline_resolvent(config.halfline, config.j))
    if not values:
        raise ParameterError("'theory' needs at least one quantity flag")
    return values


def _theory(config: RunConfig) -> None:
    for value in _theory_values(config):
        print(format_float(float(value)))


HANDLERS: Dict[str, Callable[[RunConfig], None]] = {
    "gen": _gen,
    "spectrum": _spectrum,
    "localize": _localize,
    "phase": _phase,
    "spacing": _spacing,
    "anticoncentration": _anticoncentration,
    "gw-robust": _gw_robust,
    "toy-wigner": _toy_wigner,
    "theory": _theory,
}


def _report(exc: MobilityLabError) -> int:
    message = " ".join(str(exc).split())
    print(f"mobilitylab: error={exc.tag} {message}", file=sys.stderr)
    return exc.exit_code


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _parser().parse_args(argv)
        if args.command is None:
            raise ParameterError(f"a command is required, one of {', '.join(COMMANDS)}")
        flags = {
            key: value
            for key, value in vars(args).items()
            if key not in ("command", "config_path", "verbose")
        }
        _setup_logging(args.verbose)
        config = build_config(args.command, flags, args.config_path)
        HANDLERS[config.command](config)
    except MobilityLabError as exc:
        return _report(exc)
    except SOLVER_ERRORS as exc:
        return _report(ConvergenceError(f"{type(exc).__name__}: {exc}"))
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 0
    return 0


def main() -> None:
    sys.exit(run())
