"""Run configuration.

Options are declared once in :data:`REGISTRY`; the same declarations drive the command-line
flags, the keys accepted in a YAML run file and the ``--help`` text. Values are layered as
defaults, then the YAML file given with ``--config``, then explicit flags.
"""

import argparse
import logging
import re
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Tuple

from ruamel.yaml import YAML
from ruamel.yaml.error import YAMLError

from .errors import ParameterError

__all__ = ("COMMANDS", "REGISTRY", "Option", "OptionRegistry", "RunConfig", "load_yaml")

logger = logging.getLogger(__name__)

COMMANDS = (
    "gen",
    "spectrum",
    "localize",
    "phase",
    "spacing",
    "anticoncentration",
    "gw-robust",
    "toy-wigner",
    "theory",
)
GRAPH_COMMANDS = ("gen", "spectrum", "localize", "spacing")
FORMATS = ("csv", "json")
METHODS = ("auto", "dense", "lanczos")
DISTRIBUTIONS = ("uniform", "bernoulli", "discrete")
_RANGE = re.compile(r"^\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*$")
#: Options that do not change results are left out of the recorded config.
_UNRECORDED = ("jobs", "out")


def _split(value: Any) -> List[Any]:
    if isinstance(value, (list, tuple)):
        return list(value)
    if isinstance(value, str):
        return [part for part in value.split(",") if part.strip()]
    return [value]


def parse_seeds(value: Any) -> Tuple[int, ...]:
    """``"1..5"``, ``"1,3,7"``, ``"1..3,9"``, an int or a list of those."""
    seeds: List[int] = []
    for part in _split(value):
        match = _RANGE.match(str(part))
        if match:
            lo, hi = int(match.group(1)), int(match.group(2))
            if hi < lo:
                raise ParameterError(f"empty seed range '{part}'")
            seeds.extend(range(lo, hi + 1))
        else:
            try:
                seeds.append(int(str(part).strip()))
            except ValueError:
                raise ParameterError(f"invalid seed '{part}'")
    return tuple(seeds)


def parse_floats(value: Any) -> Tuple[float, ...]:
    try:
        return tuple(float(str(part).strip()) for part in _split(value))
    except ValueError:
        raise ParameterError(f"expected a comma separated list of numbers, got '{value}'")


def parse_ints(value: Any) -> Tuple[int, ...]:
    try:
        return tuple(int(str(part).strip()) for part in _split(value))
    except ValueError:
        raise ParameterError(f"expected a comma separated list of integers, got '{value}'")


def parse_flag(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ParameterError(f"expected a boolean, got '{value}'")


@dataclass(frozen=True)
class RunConfig:
    command: str = ""
    n: Optional[int] = None
    b: Optional[float] = None
    d: Optional[float] = None
    mu: float = 0.05
    kappa: float = 0.1
    eta: float = 0.5
    r: Optional[int] = None
    k_top: int = 5
    seeds: Tuple[int, ...] = (1,)
    tol: float = 1e-10
    out: Path = Path(".")
    format: str = "csv"
    jobs: Optional[int] = None
    graph: Optional[Path] = None
    bulk: int = 20
    method: str = "auto"
    trials: int = 2000
    samples: int = 10000
    half_widths: Tuple[float, ...] = (0.05,)
    terms: Tuple[int, ...] = (1, 4, 16, 64, 256)
    distribution: str = "uniform"
    z_offsets: Tuple[float, ...] = (0.0,)
    threshold: Optional[float] = None
    t: float = 0.0
    lambdas: Tuple[float, ...] = ()
    size: int = 50
    gap: float = 0.5
    lambda_of_alpha: Optional[float] = None
    alpha_of_lambda: Optional[float] = None
    alpha_star: bool = False
    theta_b: Optional[float] = None
    rho_b: Optional[float] = None
    lambda_max: bool = False
    halfline: Optional[float] = None
    j: int = 1

    def needs_graph(self) -> bool:
        return self.command in GRAPH_COMMANDS and self.graph is None

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ParameterError(f"unknown command '{self.command}'")
        if self.needs_graph() or self.command == "phase":
            if self.n is None:
                raise ParameterError(f"'{self.command}' requires --n")
        if self.n is not None and self.n < 2:
            raise ParameterError(f"n must be >= 2, got {self.n}")
        if self.command == "phase":
            if self.b is None or self.d is not None:
                raise ParameterError("'phase' takes --b and not --d")
        elif self.needs_graph() and (self.b is None) == (self.d is None):
            raise ParameterError("exactly one of --b and --d is required")
        elif self.command == "gw-robust" and self.d is None:
            raise ParameterError("'gw-robust' requires --d")
        for name in ("b", "d", "tol", "eta", "gap"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ParameterError(f"{name} must be > 0, got {value}")
        if not 0 <= self.mu <= 1:
            raise ParameterError(f"mu must lie in [0, 1], got {self.mu}")
        if not 0 < self.kappa < 1:
            raise ParameterError(f"kappa must lie in (0, 1), got {self.kappa}")
        if self.r is not None and self.r < 1:
            raise ParameterError(f"r must be >= 1, got {self.r}")
        for name in ("k_top", "trials", "size", "j"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.bulk < 0:
            raise ParameterError(f"bulk must be >= 0, got {self.bulk}")
        if self.samples < 100:
            raise ParameterError(f"samples must be >= 100, got {self.samples}")
        if not self.seeds or any(seed < 0 for seed in self.seeds):
            raise ParameterError(f"seeds must be non-empty and non-negative, got {self.seeds}")
        if self.command == "gen" and len(self.seeds) != 1:
            raise ParameterError("'gen' takes exactly one seed")
        if self.jobs is not None and self.jobs < 1:
            raise ParameterError(f"jobs must be >= 1, got {self.jobs}")
        if self.threshold is not None and not self.threshold > 1:
            raise ParameterError(f"threshold must be > 1, got {self.threshold}")
        if any(not L > 0 for L in self.half_widths) or not self.half_widths:
            raise ParameterError(f"half widths must be > 0: {self.half_widths}")
        if any(term < 1 for term in self.terms) or not self.terms:
            raise ParameterError(f"terms must be >= 1: {self.terms}")
        if self.t < 0:
            raise ParameterError(f"t must be >= 0, got {self.t}")
        for name, allowed in (
            ("format", FORMATS),
            ("method", METHODS),
            ("distribution", DISTRIBUTIONS),
        ):
            value = getattr(self, name)
            if value not in allowed:
                raise ParameterError(f"{name} must be one of {allowed}, got '{value}'")
        return self

    def to_dict(self) -> Dict[str, Any]:
        """The command and its result-relevant options that carry a value, as JSON types."""
        relevant = {option.name for option in REGISTRY.for_command(self.command)}
        relevant.difference_update(_UNRECORDED)
        data: Dict[str, Any] = {"command": self.command}
        for name, value in asdict(self).items():
            if name not in relevant:
                continue
            if value is None or value is False:
                continue
            data[name] = str(value) if isinstance(value, Path) else value
        return data


@dataclass(frozen=True)
class Option:
    name: str
    of_type: Callable[[Any], Any]
    desc: str
    default: Any
    commands: Tuple[str, ...]

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")


class OptionRegistry:
    def __init__(self) -> None:
        self._options: Dict[str, Option] = {}
        self._defaults = {f.name: f.default for f in fields(RunConfig)}

    def add_config(
        self,
        name: str,
        of_type: Callable[[Any], Any],
        desc: str,
        commands: Iterable[str] = COMMANDS,
    ) -> None:
        if name not in self._defaults:
            raise ParameterError(f"option '{name}' has no RunConfig field")
        self._options[name] = Option(name, of_type, desc, self._defaults[name], tuple(commands))

    def __iter__(self) -> Iterator[Option]:
        return iter(self._options.values())

    def __getitem__(self, name: str) -> Option:
        return self._options[name]

    def for_command(self, command: str) -> List[Option]:
        return [option for option in self if command in option.commands]

    def convert(self, command: str, raw: Mapping[str, Any], source: str) -> Dict[str, Any]:
        known = {option.name: option for option in self.for_command(command)}
        values = {}
        for key, value in raw.items():
            name = str(key).replace("-", "_")
            if name not in known:
                raise ParameterError(f"unknown option '{key}' for '{command}' in {source}")
            try:
                values[name] = None if value is None else known[name].of_type(value)
            except (TypeError, ValueError) as exc:
                raise ParameterError(f"invalid value for '{key}' in {source}: {exc}")
        return values

    def add_arguments(self, parser: argparse.ArgumentParser, command: str) -> None:
        for option in self.for_command(command):
            default = option.default
            shown = "" if default in (None, (), False) else f" (default: {_show(default)})"
            if option.of_type is parse_flag:
                parser.add_argument(
                    option.flag,
                    dest=option.name,
                    action="store_true",
                    default=argparse.SUPPRESS,
                    help=option.desc,
                )
                continue
            parser.add_argument(
                option.flag,
                dest=option.name,
                type=option.of_type,
                default=argparse.SUPPRESS,
                metavar=option.name.upper(),
                help=option.desc + shown,
            )


def _show(value: Any) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def load_yaml(path: Path) -> Dict[str, Any]:
    yaml = YAML(typ="safe")
    try:
        data = yaml.load(Path(path))
    except (OSError, YAMLError) as exc:
        raise ParameterError(f"cannot read config file {path}: {exc}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ParameterError(f"config file {path} must hold a mapping, got {type(data).__name__}")
    return data


def build_config(
    command: str, flags: Mapping[str, Any], config_path: Optional[Path] = None
) -> RunConfig:
    values: Dict[str, Any] = {}
    if config_path is not None:
        values.update(REGISTRY.convert(command, load_yaml(config_path), str(config_path)))
        logger.info("loaded %d option(s) from %s", len(values), config_path)
    values.update(flags)
    return RunConfig(command=command, **values).validate()


REGISTRY = OptionRegistry()
_GRAPH = ("gen", "spectrum", "localize", "phase", "spacing")
_EXPERIMENTS = ("localize", "phase", "spacing")


def _register(registry: OptionRegistry) -> None:
    registry.add_config(
        "n",
        of_type=int,
        desc="number of vertices",
        commands=_GRAPH + ("theory",),
    )
    registry.add_config(
        "b",
        of_type=float,
        desc="sparseness, the expected degree is d = b log n",
        commands=_GRAPH + ("theory",),
    )
    registry.add_config(
        "d",
        of_type=float,
        desc="expected degree (Poisson offspring mean for gw-robust)",
        commands=("gen", "spectrum", "localize", "spacing", "gw-robust", "theory"),
    )
    registry.add_config(
        "mu",
        of_type=float,
        desc="exponent of the degree threshold alpha*",
        commands=_EXPERIMENTS + ("theory",),
    )
    registry.add_config(
        "kappa",
        of_type=float,
        desc="distance to the mobility edge",
        commands=_EXPERIMENTS + ("theory",),
    )
    registry.add_config(
        "eta",
        of_type=float,
        desc="spacing exponent that sets the default cavity depth",
        commands=("spacing",),
    )
    registry.add_config(
        "r",
        of_type=int,
        desc="ball radius (default depends on n and d)",
        commands=("localize", "spacing", "gw-robust"),
    )
    registry.add_config(
        "k_top",
        of_type=int,
        desc="number of top eigenpairs",
        commands=("spectrum", "localize", "phase"),
    )
    registry.add_config(
        "seeds",
        of_type=parse_seeds,
        desc="seeds as ranges a..b and comma lists",
        commands=_GRAPH + ("anticoncentration", "gw-robust", "toy-wigner"),
    )
    registry.add_config(
        "tol",
        of_type=float,
        desc="eigensolver residual tolerance",
        commands=("spectrum", "localize", "phase", "spacing"),
    )
    registry.add_config(
        "out",
        of_type=Path,
        desc="output file for gen, output directory otherwise",
        commands=COMMANDS[:-1],
    )
    registry.add_config(
        "format",
        of_type=str,
        desc="table format, csv or json",
        commands=("spectrum", "gw-robust"),
    )
    registry.add_config(
        "jobs",
        of_type=int,
        desc="worker count, falls back to MOBILITYLAB_JOBS and then the CPU count",
        commands=COMMANDS[1:-1],
    )
    registry.add_config(
        "graph",
        of_type=Path,
        desc="read the graph from an edge list instead of generating it",
        commands=("spectrum", "localize", "spacing"),
    )
    registry.add_config(
        "bulk",
        of_type=int,
        desc="number of bulk eigenvectors sampled in dense mode",
        commands=("phase",),
    )
    registry.add_config(
        "method",
        of_type=str,
        desc="eigensolver, auto, dense or lanczos",
        commands=("spectrum", "phase"),
    )
    registry.add_config(
        "trials",
        of_type=int,
        desc="Monte-Carlo trials",
        commands=("gw-robust",),
    )
    registry.add_config(
        "samples",
        of_type=int,
        desc="Monte-Carlo samples per estimate",
        commands=("anticoncentration",),
    )
    registry.add_config(
        "half_widths",
        of_type=parse_floats,
        desc="window half-widths L",
        commands=("anticoncentration",),
    )
    registry.add_config(
        "terms",
        of_type=parse_ints,
        desc="numbers of i.i.d. summands for the Kesten check",
        commands=("anticoncentration",),
    )
    registry.add_config(
        "distribution",
        of_type=str,
        desc="summand law, uniform, bernoulli or discrete",
        commands=("anticoncentration",),
    )
    registry.add_config(
        "z_offsets",
        of_type=parse_floats,
        desc="offsets added to Lambda(alpha*) + kappa/2",
        commands=("spacing",),
    )
    registry.add_config(
        "threshold",
        of_type=float,
        desc="iota threshold T, by default 10 max(sqrt(log n / d), 1/kappa)",
        commands=("spacing",),
    )
    registry.add_config(
        "t",
        of_type=float,
        desc="strength of the Wigner perturbation",
        commands=("toy-wigner",),
    )
    registry.add_config(
        "lambdas",
        of_type=parse_floats,
        desc="diagonal of D, by default a uniform grid from 2.5",
        commands=("toy-wigner",),
    )
    registry.add_config(
        "size",
        of_type=int,
        desc="size of the uniform diagonal grid",
        commands=("toy-wigner",),
    )
    registry.add_config(
        "gap",
        of_type=float,
        desc="spacing of the uniform diagonal grid",
        commands=("toy-wigner",),
    )
    registry.add_config(
        "lambda_of_alpha",
        of_type=float,
        desc="print Lambda(alpha)",
        commands=("theory",),
    )
    registry.add_config(
        "alpha_of_lambda",
        of_type=float,
        desc="print the inverse of Lambda",
        commands=("theory",),
    )
    registry.add_config(
        "alpha_star",
        of_type=parse_flag,
        desc="print alpha* for --mu, --n and --d",
        commands=("theory",),
    )
    registry.add_config(
        "theta_b",
        of_type=float,
        desc="print theta_b(alpha) for --b",
        commands=("theory",),
    )
    registry.add_config(
        "rho_b",
        of_type=float,
        desc="print rho_b(lambda) for --b",
        commands=("theory",),
    )
    registry.add_config(
        "lambda_max",
        of_type=parse_flag,
        desc="print lambda_max(b) for --b",
        commands=("theory",),
    )
    registry.add_config(
        "halfline",
        of_type=float,
        desc="print entry (1, j) of the half-line resolvent at t",
        commands=("theory",),
    )
    registry.add_config(
        "j",
        of_type=int,
        desc="index of the half-line resolvent entry",
        commands=("theory",),
    )


_register(REGISTRY)
