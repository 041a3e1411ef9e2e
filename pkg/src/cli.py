import argparse
import logging
import sys
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd
from dotenv import dotenv_values
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from config import COMMANDS, COUNTEREXAMPLE_LAMBDAS, DEFAULT_SEED, DEFAULT_THREADS, LOG_LEVEL, PROBES, WITNESS_DIR
from data_io import dump_report, frame_to_csv, read_densities, read_kusuoka, read_partition, read_scenarios
from descriptors import (
    parse_family,
    parse_floats,
    parse_measure,
    parse_mu,
    parse_phi,
    parse_truncation_family,
)
from distributions import AtomicRV, RandomVariable
from errors import DomainError, InputError
from handlers import DualityHandler, NormHandler, PartitionHandler, ProbeHandler, RiskHandler
from risk import es_measure, kusuoka_measure, var_measure

logger = logging.getLogger("cli")

norm_handler = NormHandler()
risk_handler = RiskHandler()
partition_handler = PartitionHandler()
duality_handler = DualityHandler()
probe_handler = ProbeHandler()

Command = Enum("Command", {c.replace("-", "_").upper(): c for c in COMMANDS}, type=str)
Probe = Enum("Probe", {p.replace("-", "_").upper(): p for p in PROBES}, type=str)


class OutputFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


TRUNCATION_FAMILY = "exp-truncation"


# ─────────────────────────────────────────────────────────────────────────────
# Run configuration
# ─────────────────────────────────────────────────────────────────────────────

class RunConfig(BaseModel):
    command: Command
    probe: Optional[Probe] = None

    # inputs
    input: Optional[Path] = None
    weights: Optional[Path] = None
    dual_element: Optional[Path] = None
    partitions: List[Path] = Field(default_factory=list)
    densities: Optional[Path] = None
    kusuoka: Optional[Path] = None

    # descriptors
    phi: Optional[str] = None
    measure: Optional[str] = None
    family: Optional[str] = None

    # parameters
    alpha: Optional[float] = None
    depth: int = Field(8, ge=1)
    points: Optional[str] = None
    lambdas: Optional[str] = None
    mu: Optional[str] = None
    schemes: str = "monotone_down,oscillating,noise_decay"
    properties: Optional[str] = None
    tail_levels: str = "2,4,8"
    levels: int = Field(3, ge=0)
    trials: int = Field(200, ge=1)
    count: int = Field(64, ge=1)
    repeats: int = Field(1, ge=1)
    atoms: int = Field(16, ge=1)
    cap: Optional[float] = Field(None, gt=0)
    orlicz_norm: bool = False

    # run
    seed: int = DEFAULT_SEED
    threads: int = Field(DEFAULT_THREADS, ge=1)
    output: Optional[Path] = None
    format: OutputFormat = OutputFormat.JSON
    witness_dir: Path = WITNESS_DIR

    @field_validator("partitions", mode="before")
    @classmethod
    def _split_paths(cls, v):
        if isinstance(v, str):
            return [p.strip() for p in v.split(",") if p.strip()]
        return v

    @field_validator("input", "weights", "dual_element", "densities", "kusuoka")
    @classmethod
    def _path_exists(cls, v: Optional[Path]):
        if v is not None and not v.exists():
            raise ValueError(f"{v} does not exist")
        return v

    @field_validator("partitions")
    @classmethod
    def _paths_exist(cls, v: List[Path]):
        for p in v:
            if not p.exists():
                raise ValueError(f"{p} does not exist")
        return v

    @field_validator("alpha")
    @classmethod
    def _alpha_range(cls, v: Optional[float]):
        if v is not None and not 0 < v <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        return v

    @model_validator(mode="after")
    def _probe_named(self):
        if (self.command is Command.PROBE) != (self.probe is not None):
            raise ValueError("a probe name is given exactly with the probe command")
        return self


def load_config(args: Dict, config_path: Optional[Path] = None) -> RunConfig:
    """Values from a flat key=value file, overridden by explicit flags."""
    values: Dict = {}
    if config_path is not None:
        if not config_path.exists():
            raise FileNotFoundError(f"{config_path} does not exist")
        values.update({k.lower().replace("-", "_"): v for k, v in dotenv_values(config_path).items() if v is not None})
    values.update({k: v for k, v in args.items() if v is not None})
    return RunConfig(**values)


# ─────────────────────────────────────────────────────────────────────────────
# Input loading
# ─────────────────────────────────────────────────────────────────────────────

def _require(config: RunConfig, *names: str):
    missing = [n for n in names if getattr(config, n) in (None, [])]
    if missing:
        raise InputError(f"{config.command.value}: missing --{', --'.join(m.replace('_', '-') for m in missing)}")


def _scenarios(config: RunConfig) -> AtomicRV:
    _require(config, "input")
    return read_scenarios(config.input)


def _variable(config: RunConfig) -> RandomVariable:
    """--family (the limit X for exp-truncation) or else the --input scenarios."""
    if config.family is None:
        return _scenarios(config)
    if config.family.startswith(TRUNCATION_FAMILY):
        return parse_truncation_family(config.family, config.depth)[1]
    return parse_family(config.family)


def _phi(config: RunConfig):
    _require(config, "phi")
    return parse_phi(config.phi)


def _measure(config: RunConfig):
    _require(config, "measure")
    return parse_measure(config.measure)


def _chain(config: RunConfig, n: int):
    return [read_partition(p, n) for p in config.partitions]


# ─────────────────────────────────────────────────────────────────────────────
# Commands
# ─────────────────────────────────────────────────────────────────────────────

def _norm(config: RunConfig):
    return norm_handler.norm(_variable(config), _phi(config), config.orlicz_norm), None


def _conjugate(config: RunConfig):
    _require(config, "points")
    payload = norm_handler.conjugate(_phi(config), parse_floats(config.points, "points"))
    return payload, norm_handler.conjugate_frame(payload)


def _var(config: RunConfig):
    _require(config, "alpha")
    return risk_handler.evaluate("var", var_measure(config.alpha), _scenarios(config)), None


def _es(config: RunConfig):
    _require(config, "alpha")
    return risk_handler.evaluate("es", es_measure(config.alpha), _scenarios(config)), None


def _kusuoka(config: RunConfig):
    X = _scenarios(config)
    if config.kusuoka is not None:
        rho = kusuoka_measure(read_kusuoka(config.kusuoka), name=f"kusuoka:{config.kusuoka}")
    else:
        rho = _measure(config)
    return risk_handler.evaluate("kusuoka", rho, X), None


def _condexp(config: RunConfig):
    if config.family is not None:
        return partition_handler.levels(_variable(config), _phi(config), config.depth), None
    X = _scenarios(config)
    _require(config, "partitions")
    phi = parse_phi(config.phi) if config.phi else None
    payload = partition_handler.condexp(X, read_partition(config.partitions[0], X.n), phi)
    return payload, pd.DataFrame({"value": payload["values"]})


def _dual(config: RunConfig):
    if config.densities is not None:
        X = _scenarios(config)
        densities = read_densities(config.densities, config.cap)
        return duality_handler.biconjugate(_measure(config), X, densities, config.threads), None
    if config.dual_element is not None:
        Z = read_scenarios(config.dual_element)
        candidates = [read_scenarios(config.input)] if config.input else []
        return duality_handler.conjugate(_measure(config), Z, candidates, config.threads), None
    if config.mu is not None:
        n = read_scenarios(config.input).n if config.input else config.atoms
        payload = duality_handler.gamma(
            _measure(config), parse_mu(config.mu), n, config.count, config.seed, config.threads
        )
        return payload, None
    X = _scenarios(config)
    alpha = config.alpha
    if alpha is None and config.measure is not None:
        alpha = parse_measure(config.measure).alpha
    if alpha is None:
        raise InputError("dual: give --alpha, --densities, --dual-element or --mu")
    payload = duality_handler.es_dual(X, alpha)
    return payload, pd.DataFrame({"z": payload["density"]})


def _extend(config: RunConfig):
    payload = duality_handler.extend(
        _measure(config), _variable(config), _phi(config), config.depth, config.threads
    )
    return payload, duality_handler.trace_frame(payload)


def _counterexample(config: RunConfig):
    phi = _phi(config)
    if config.family is not None and config.family.startswith(TRUNCATION_FAMILY):
        sequence, limit = parse_truncation_family(config.family, config.depth)
        payload = risk_handler.counterexample_trace(sequence, limit, phi)
        return payload, risk_handler.trace_frame(payload)
    return risk_handler.counterexample(_variable(config), phi), None


def _probe(config: RunConfig):
    probe = config.probe
    seed = config.seed
    if probe is Probe.AXIOMS:
        X = read_scenarios(config.input) if config.input else None
        props = config.properties.split(",") if config.properties else None
        payload = probe_handler.axioms(
            _measure(config), X, config.count, config.trials, seed, props, config.threads, config.witness_dir
        )
    elif probe is Probe.FATOU:
        rho = _measure(config)
        if config.family is not None and config.family.startswith(TRUNCATION_FAMILY):
            sequence, limit = parse_truncation_family(config.family, config.depth)
            payload = probe_handler.fatou_sequence(rho, sequence, limit, seed, config.threads)
        else:
            payload = probe_handler.fatou(
                rho, _scenarios(config), config.schemes.split(","), config.count, config.repeats, seed, config.threads
            )
    elif probe is Probe.DILATATION:
        X = _scenarios(config)
        payload = probe_handler.dilatation(_measure(config), X, _chain(config, X.n), config.count, seed)
    elif probe is Probe.COEX:
        X = _scenarios(config)
        Y = read_scenarios(config.weights) if config.weights else AtomicRV.constant(1.0, X.n)
        _require(config, "partitions")
        payload = probe_handler.coex(X, Y, _chain(config, X.n), seed)
    elif probe is Probe.BLOWUP:
        payload = probe_handler.blowup(
            _variable(config), config.levels, config.trials, parse_floats(config.tail_levels, "tail levels"), seed
        )
    elif probe is Probe.LSC:
        payload = probe_handler.lsc(_measure(config), _variable(config), _phi(config), config.count, seed)
    elif probe is Probe.HEART:
        lambdas = parse_floats(config.lambdas, "lambdas", positive=True) if config.lambdas else COUNTEREXAMPLE_LAMBDAS
        payload = norm_handler.heart(_variable(config), _phi(config), lambdas)
    elif probe is Probe.DELTA2:
        payload = norm_handler.delta2(_phi(config), seed)
    else:
        payload = probe_handler.extension_gap(
            _measure(config), _variable(config), _phi(config), config.depth, seed
        )
    return payload, probe_handler.frame(payload)


DISPATCH = {
    Command.NORM: _norm,
    Command.CONJUGATE: _conjugate,
    Command.VAR: _var,
    Command.ES: _es,
    Command.KUSUOKA: _kusuoka,
    Command.CONDEXP: _condexp,
    Command.DUAL: _dual,
    Command.EXTEND: _extend,
    Command.COUNTEREXAMPLE: _counterexample,
    Command.PROBE: _probe,
}


# ─────────────────────────────────────────────────────────────────────────────
# Emission
# ─────────────────────────────────────────────────────────────────────────────

def render(payload: Dict, frame: Optional[pd.DataFrame], fmt: OutputFormat) -> str:
    if fmt is OutputFormat.JSON:
        return dump_report(payload)
    if frame is None:
        scalars = {k: v for k, v in payload.items() if isinstance(v, (str, int, float, bool))}
        frame = pd.DataFrame([scalars])
    return frame_to_csv(frame)


def run(config: RunConfig) -> int:
    """Dispatch one command, write its artifact and return the exit status."""
    try:
        payload, frame = DISPATCH[config.command](config)
        text = render(payload, frame, config.format)
        if config.output is not None:
            config.output.parent.mkdir(parents=True, exist_ok=True)
            config.output.write_text(text)
            logger.info("[RUN] %s -> %s", config.command.value, config.output)
        else:
            sys.stdout.write(text)
        return 0
    except DomainError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (InputError, ValueError, OSError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


# ─────────────────────────────────────────────────────────────────────────────
# Argument parsing
# ─────────────────────────────────────────────────────────────────────────────

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _options() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--config", type=Path, help="flat key=value file; flags override it")
    p.add_argument("--input", type=Path, help="scenario CSV (column value)")
    p.add_argument("--weights", type=Path, help="nonnegative weight scenarios for coex")
    p.add_argument("--dual-element", type=Path, help="scenario CSV of the dual element Z")
    p.add_argument("--partition", dest="partitions", type=Path, action="append", help="partition CSV (repeatable, coarse to fine)")
    p.add_argument("--densities", type=Path)
    p.add_argument("--kusuoka", type=Path)
    p.add_argument("--phi", help="power:p=2, exp_minus_one, table:<path>, ...")
    p.add_argument("--measure", help="var:alpha=.., es:alpha=.., kusuoka:<path>, counterexample:phi=.., table:<name>")
    p.add_argument("--family", help="exponential:rate=1, exp-truncation, ...")
    p.add_argument("--alpha", type=float)
    p.add_argument("--depth", type=int)
    p.add_argument("--points")
    p.add_argument("--lambdas")
    p.add_argument("--mu", help="alpha:weight,...")
    p.add_argument("--schemes")
    p.add_argument("--properties")
    p.add_argument("--tail-levels")
    p.add_argument("--levels", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--count", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--atoms", type=int)
    p.add_argument("--cap", type=float)
    p.add_argument("--orlicz-norm", action="store_const", const=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--output", type=Path)
    p.add_argument("--format", choices=[f.value for f in OutputFormat])
    p.add_argument("--witness-dir", type=Path)
    p.add_argument("--log-level", default=LOG_LEVEL)
    return p


def build_parser() -> argparse.ArgumentParser:
    options = _options()
    parser = _Parser(prog="orlicz_risk", description="Law-invariant risk measures on Orlicz spaces")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name, parents=[options])
        if name == "probe":
            cmd.add_argument("probe", choices=PROBES)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = vars(build_parser().parse_args(argv))
        logging.basicConfig(
            level=args.pop("log_level").upper(),
            format="%(asctime)s [%(name)s] %(message)s",
            datefmt="%H:%M:%S",
            stream=sys.stderr,
        )
        config_path = args.pop("config")
        config = load_config(args, config_path)
    except (InputError, ValueError, OSError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
