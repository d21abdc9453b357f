"""
Command-line front end: experiment files, overrides, subcommands and result files.

Experiment files are INI text with an [experiment] section, an optional
[drift] section and optional [diffusion.<i>] sections (i = 1..M). Values are
decimal strings; lists are comma separated and matrix rows are separated by
';' (tensor slices by '|').
"""

import argparse
import configparser
import json
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import cpu_count
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

try:
    from config.settings import CONFIG_SCHEMA_VERSION, DEFAULT_CONFIG_PATH, RESULTS_DIR
except ImportError:
    CONFIG_SCHEMA_VERSION = 1
    DEFAULT_CONFIG_PATH = Path("config/default.cfg")
    RESULTS_DIR = Path("results")

from .density_lab import DiagnosticsReport, ExperimentConfig, run_monte_carlo, solve_sample, _prepare
from .errors import ArgumentError, ConfigError, ReportIOError, SimulationError
from .fbm_gaussian import derive_seed, sample_qfbm
from .malliavin_core import malliavin_matrices
from .spde_engine import AssumptionProfile, convergence_study
from .vector_fields import assumption_audit, build_hierarchy, rank_at

logger = logging.getLogger(__name__)
console = Console()

SUBCOMMANDS = ("sample-fbm", "solve", "flows", "malliavin", "hormander", "montecarlo", "audit")

KEY_ALIASES = {"H": "hurst", "N": "galerkin_modes", "M": "noise_modes", "T": "horizon", "K": "steps"}
LIST_KEYS = {"x0", "projection", "t_values", "a"}
MATRIX_KEYS = {"B", "b", "c"}
TENSOR_KEYS = {"Q"}


@dataclass
class CliInvocation:
    subcommand: str
    config_path: Optional[Path] = None
    overrides: List[str] = field(default_factory=list)
    seed: Optional[int] = None
    output_dir: Optional[Path] = None
    workers: int = 1
    log_level: Optional[str] = None
    refine: bool = False


# Experiment file parsing

def _parse_value(key: str, text: str, line: Optional[int]):
    text = text.strip()
    try:
        if key in TENSOR_KEYS:
            return [[[float(v) for v in row.split(",")] for row in block.split(";")] for block in text.split("|")]
        if key in MATRIX_KEYS:
            return [[float(v) for v in row.split(",")] for row in text.split(";")]
        if key in LIST_KEYS:
            return [v.strip() for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"{key}: cannot read numbers from {text!r}", line) from e
    return text


def _option_lines(text: str) -> Dict[Tuple[str, str], int]:
    """(section, key) -> line number, for error messages."""
    lines = {}
    section = None
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
        elif section and ("=" in stripped or ":" in stripped) and not stripped.startswith(("#", ";")):
            key = stripped.split("=", 1)[0].split(":", 1)[0].strip()
            lines[(section, key)] = number
    return lines


@dataclass
class RawConfig:
    """Sections of an experiment file before validation."""

    sections: Dict[str, Dict[str, object]] = field(default_factory=lambda: {"experiment": {}})
    lines: Dict[Tuple[str, str], int] = field(default_factory=dict)

    def set(self, section: str, key: str, value: str, line: Optional[int] = None):
        if section != "experiment":
            if section != "drift" and not section.startswith("diffusion."):
                raise ConfigError(f"unknown section [{section}]", line)
        key = KEY_ALIASES.get(key, key) if section == "experiment" else key
        self.sections.setdefault(section, {})[key] = _parse_value(key, value, line)


def read_config_text(text: str) -> RawConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError("values must follow a [section] header", e.lineno) from e
    except configparser.ParsingError as e:
        line = e.errors[0][0] if e.errors else None
        raise ConfigError(f"malformed line {e.errors[0][1]!r}" if e.errors else str(e), line) from e
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as e:
        raise ConfigError(e.message, getattr(e, "lineno", None)) from e
    except configparser.Error as e:
        raise ConfigError(str(e)) from e
    raw = RawConfig(lines=_option_lines(text))
    for section in parser.sections():
        for key, value in parser.items(section):
            raw.set(section, key, value, raw.lines.get((section, key)))
    return raw


def read_config_file(path) -> RawConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    return read_config_text(text)


def apply_overrides(raw: RawConfig, overrides: Sequence[str]) -> RawConfig:
    """Apply key=value (experiment) or section.key=value overrides."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        name, value = item.split("=", 1)
        name = name.strip()
        if "." in name:
            section, key = name.rsplit(".", 1)
        else:
            section, key = "experiment", name
        raw.set(section, key, value)
    return raw


def _line_for(raw: RawConfig, loc: tuple) -> Optional[int]:
    if not loc:
        return None
    head = loc[0]
    if head == "drift" and len(loc) > 1:
        return raw.lines.get(("drift", str(loc[1])))
    if head == "diffusions" and len(loc) > 2:
        return raw.lines.get((f"diffusion.{int(loc[1]) + 1}", str(loc[2])))
    for (section, key), line in raw.lines.items():
        if section == "experiment" and KEY_ALIASES.get(key, key) == head:
            return line
    return None


def build_config(raw: RawConfig) -> ExperimentConfig:
    """Validate the raw sections into an ExperimentConfig."""
    data = dict(raw.sections.get("experiment", {}))
    if "drift" in raw.sections:
        data["drift"] = raw.sections["drift"]
    diffusion_sections = sorted(
        (s for s in raw.sections if s.startswith("diffusion.")),
        key=lambda s: int(s.split(".", 1)[1]) if s.split(".", 1)[1].isdigit() else -1,
    )
    if diffusion_sections:
        indices = [s.split(".", 1)[1] for s in diffusion_sections]
        expected = [str(i) for i in range(1, len(indices) + 1)]
        if indices != expected:
            raise ConfigError(f"diffusion sections must be numbered 1..{len(indices)}, got {indices}")
        data["diffusions"] = [raw.sections[s] for s in diffusion_sections]
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"{where}: {first['msg']}", _line_for(raw, tuple(first["loc"]))) from e


def render_config(config: ExperimentConfig) -> str:
    """INI text that reads back into the same configuration."""
    def fmt(value) -> str:
        if isinstance(value, list):
            if value and isinstance(value[0], list):
                if value[0] and isinstance(value[0][0], list):
                    return " | ".join(fmt(block) for block in value)
                return "; ".join(", ".join(repr(float(v)) for v in row) for row in value)
            return ", ".join(repr(v) for v in value)
        return repr(value) if isinstance(value, float) else str(value)

    data = config.model_dump(mode="json")
    drift = data.pop("drift")
    diffusions = data.pop("diffusions")
    lines = ["[experiment]"]
    lines += [f"{k} = {fmt(v)}" for k, v in data.items() if v is not None]
    sections = [("drift", drift)] + [(f"diffusion.{i + 1}", d) for i, d in enumerate(diffusions)]
    for name, values in sections:
        lines.append("")
        lines.append(f"[{name}]")
        lines += [f"{k} = {fmt(v)}" for k, v in values.items() if v is not None]
    return "\n".join(lines) + "\n"


# Argument handling

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spde-lab", description="Density diagnostics for SPDEs driven by fractional noise")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="experiment file (INI)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--output", type=Path, default=None)
        p.add_argument("--workers", type=int, default=None, help="parallel workers (default: all cores)")
        p.add_argument("--log-level", default=None)
        if name == "solve":
            p.add_argument("--refine", action="store_true", help="also run the self-convergence study")
    return parser


class _ArgumentParserError(Exception):
    pass


def parse_and_validate(argv: Optional[Sequence[str]] = None) -> Tuple[CliInvocation, ExperimentConfig, AssumptionProfile]:
    """
    Merge config file and overrides, validate, and resolve the exponent profile.

    Raises:
        ConfigError: malformed file or invalid values (with line number when known)
        FeasibilityError: no admissible exponents for (H, kappa)
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        if e.code in (0, None):
            raise
        raise ConfigError("invalid command line arguments") from e

    config_path = args.config
    if config_path is None and Path(DEFAULT_CONFIG_PATH).exists():
        config_path = Path(DEFAULT_CONFIG_PATH)
    raw = read_config_file(config_path) if config_path is not None else RawConfig()
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    apply_overrides(raw, overrides)
    config = build_config(raw)

    output = args.output or (Path(config.output_dir) if config.output_dir else Path(RESULTS_DIR))
    workers = args.workers if args.workers is not None else cpu_count()
    if workers < 1:
        raise ConfigError(f"--workers must be at least 1, got {workers}")
    invocation = CliInvocation(
        subcommand=args.subcommand,
        config_path=config_path,
        overrides=overrides,
        seed=config.seed,
        output_dir=output,
        workers=workers,
        log_level=args.log_level,
        refine=getattr(args, "refine", False),
    )
    profile = config.profile()
    print_profile(profile)
    return invocation, config, profile


def print_profile(profile: AssumptionProfile):
    table = Table(title="Resolved exponent profile")
    table.add_column("parameter")
    table.add_column("value", justify="right")
    for key in ("H", "kappa", "epsilon", "eta", "gamma_tilde", "kappa0", "delta", "alpha", "gamma1", "beta_tilde"):
        table.add_row(key, f"{getattr(profile, key):.6g}")
    console.print(table)


# Result files

def _backup(path: Path):
    if path.exists():
        shutil.move(str(path), str(path.with_name(path.name + ".bak")))


def _write_text(path: Path, text: str):
    _backup(path)
    path.write_text(text, encoding="utf-8")


def _write_frame(path: Path, frame: pd.DataFrame):
    _backup(path)
    frame.to_csv(path, index=False, float_format="%.17g")


def gamma_frame(report: DiagnosticsReport) -> pd.DataFrame:
    rows = []
    for r in report.results:
        for t, eigs in r.eig_gamma.items():
            for k, value in enumerate(eigs, start=1):
                rows.append({"sample": r.index, "t": float(t), "k": k, "eigenvalue": value})
    return pd.DataFrame(rows, columns=["sample", "t", "k", "eigenvalue"])


def emit_report(report: DiagnosticsReport, directory, config: Optional[ExperimentConfig] = None) -> Dict[str, Path]:
    """
    Write report.json, gamma_eigs.csv, kde_<coord>.csv and manifest.json.

    Existing files are moved to <name>.bak first.

    Raises:
        ReportIOError: with the offending path
    """
    directory = Path(directory)
    written = {}
    current = directory
    try:
        directory.mkdir(parents=True, exist_ok=True)
        current = directory / "report.json"
        _write_text(current, json.dumps(report.to_dict(), sort_keys=True, indent=2))
        written["report"] = current

        current = directory / "gamma_eigs.csv"
        _write_frame(current, gamma_frame(report))
        written["gamma_eigs"] = current

        for curve in report.kde:
            current = directory / f"kde_{curve.coordinate}.csv"
            _write_frame(current, pd.DataFrame({"x": curve.grid, "density": curve.density}))
            written[f"kde_{curve.coordinate}"] = current

        config = config or ExperimentConfig.model_validate(report.config)
        manifest = {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "config_hash": config.config_hash(),
            "report_hash": report.content_hash(),
            "seeds": {"root": report.seed, "spawn_keys": [r.spawn_key for r in report.results]},
            "config": config.model_dump(mode="json"),
            "config_text": render_config(config),
            "files": sorted(p.name for p in written.values()),
        }
        current = directory / "manifest.json"
        _write_text(current, json.dumps(manifest, sort_keys=True, indent=2))
        written["manifest"] = current
    except OSError as e:
        raise ReportIOError(f"could not write {current}: {e}", path=str(current)) from e
    logger.info(f"Report written to {directory}")
    return written


def config_from_manifest(path) -> ExperimentConfig:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ReportIOError(f"could not read manifest {path}: {e}", path=str(path)) from e
    try:
        return ExperimentConfig.model_validate(manifest["config"])
    except (KeyError, ValidationError) as e:
        raise ConfigError(f"manifest {path} does not hold a valid configuration: {e}") from e


# Subcommands

def _cmd_sample_fbm(inv: CliInvocation, config: ExperimentConfig, profile: AssumptionProfile) -> int:
    ctx = _prepare(config)
    noise = sample_qfbm(ctx.spec, ctx.hurst, ctx.sampler.grid, derive_seed(config.seed, 0), sampler=ctx.sampler)
    frame = pd.DataFrame(noise.values.T, columns=[f"beta_{i + 1}" for i in range(noise.spec.M)])
    frame.insert(0, "t", noise.grid.points)
    inv.output_dir.mkdir(parents=True, exist_ok=True)
    _write_frame(inv.output_dir / "qfbm.csv", frame)
    norm = noise.weighted_holder_norm(profile.gamma_tilde, profile.delta)
    console.print(f"Sampled {noise.spec.M} modes with {ctx.sampler.method}; weighted Holder norm {norm:.6g}")
    return 0


def _cmd_solve(inv: CliInvocation, config: ExperimentConfig, profile: AssumptionProfile) -> int:
    ctx = _prepare(config)
    solution, _ = solve_sample(ctx, 0)
    inv.output_dir.mkdir(parents=True, exist_ok=True)
    path = inv.output_dir / "solution.csv"
    _backup(path)
    solution.to_csv(path)
    console.print(f"|X_T| = {np.linalg.norm(solution.states[-1]):.6g}, "
                  f"|dX|_kappa = {solution.increment_norm(config.kappa):.6g}")
    if inv.refine:
        study = convergence_study(ctx.x0, ctx.fields, solution.noise, profile)
        table = Table(title="Self-convergence")
        table.add_column("steps")
        table.add_column("difference", justify="right")
        for steps, diff in zip(study.steps[1:], study.differences):
            table.add_row(str(steps), f"{diff:.3e}")
        console.print(table)
    return 0


def _cmd_flows(inv: CliInvocation, config: ExperimentConfig, profile: AssumptionProfile) -> int:
    ctx = _prepare(config)
    _, flows = solve_sample(ctx, 0)
    inv.output_dir.mkdir(parents=True, exist_ok=True)
    for which, name in (("J", "jacobian.csv"), ("P", "flow_p.csv"), ("R", "right_inverse.csv")):
        _backup(inv.output_dir / name)
        flows.to_csv(inv.output_dir / name, which)
    console.print(f"max |P R - Id| = {flows.product_residual():.3e}, "
                  f"max |J - S P| = {flows.flow_consistency():.3e}")
    return 0


def _cmd_malliavin(inv: CliInvocation, config: ExperimentConfig, profile: AssumptionProfile) -> int:
    ctx = _prepare(config)
    solution, flows = solve_sample(ctx, 0)
    table = Table(title="Malliavin matrices (sample 0)")
    for column in ("t", "lambda_min(C)", "lambda_max(C)", "lambda_min(gamma)", "lambda_max(gamma)"):
        table.add_column(column, justify="right")
    out = {}
    for t in config.times():
        m = malliavin_matrices(solution, flows, ctx.fields, t, ctx.projection)
        table.add_row(f"{t:g}", f"{m.eig_C[0]:.3e}", f"{m.eig_C[-1]:.3e}", f"{m.lambda_min:.3e}", f"{m.lambda_max:.3e}")
        out[f"{t:.12g}"] = {"C": m.C.tolist(), "gamma": m.gamma.tolist()}
    console.print(table)
    inv.output_dir.mkdir(parents=True, exist_ok=True)
    _write_text(inv.output_dir / "malliavin.json", json.dumps(out, sort_keys=True, indent=2))
    return 0


def _cmd_hormander(inv: CliInvocation, config: ExperimentConfig, profile: AssumptionProfile) -> int:
    fields = config.build_fields()
    hierarchy = build_hierarchy(fields.diffusions, fields.generator_field, config.initial_state(), config.hierarchy_depth)
    T = config.projection_matrix()
    table = Table(title="Bracket hierarchy at x0")
    for column in ("level", "fields", "rank", "rank of T"):
        table.add_column(column, justify="right")
    for k in range(hierarchy.k_max + 1):
        table.add_row(str(k), str(len(hierarchy.fields(k))),
                      str(rank_at(hierarchy, tau=config.rank_threshold, level=k)),
                      str(rank_at(hierarchy, T, config.rank_threshold, level=k)))
    console.print(table)
    return 0


def _cmd_montecarlo(inv: CliInvocation, config: ExperimentConfig, profile: AssumptionProfile) -> int:
    report = run_monte_carlo(config, workers=inv.workers, progress=True)
    emit_report(report, inv.output_dir, config)
    console.print(f"Nondegenerate fraction {report.nondegenerate_fraction}; "
                  f"{report.failures} failed of {report.samples_requested}")
    return 0


def _cmd_audit(inv: CliInvocation, config: ExperimentConfig, profile: AssumptionProfile) -> int:
    fields = config.build_fields()
    rng = np.random.default_rng(derive_seed(config.seed, 0))
    x0 = config.initial_state()
    points = [x0] + [x0 + rng.standard_normal(x0.size) for _ in range(4)]
    audit = assumption_audit(fields, profile, points, seed=config.seed)
    table = Table(title="Assumption audit (advisory)")
    for column in ("check", "status", "value", "detail"):
        table.add_column(column)
    for item in audit.items:
        table.add_row(item.name, item.status, "" if item.value is None else f"{item.value:.3e}", item.detail)
    console.print(table)
    inv.output_dir.mkdir(parents=True, exist_ok=True)
    _write_text(inv.output_dir / "audit.json", json.dumps(audit.to_dict(), sort_keys=True, indent=2))
    return 0


COMMANDS = {
    "sample-fbm": _cmd_sample_fbm,
    "solve": _cmd_solve,
    "flows": _cmd_flows,
    "malliavin": _cmd_malliavin,
    "hormander": _cmd_hormander,
    "montecarlo": _cmd_montecarlo,
    "audit": _cmd_audit,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return the process exit code."""
    try:
        invocation, config, profile = parse_and_validate(argv)
        if invocation.log_level:
            logging.getLogger().setLevel(invocation.log_level.upper())
        logger.info(f"🚀 Running {invocation.subcommand} (seed {config.seed}, {invocation.workers} worker(s))")
        return COMMANDS[invocation.subcommand](invocation, config, profile)
    except SimulationError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        console.print(f"[red]{type(e).__name__}[/red]: {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"❌ I/O error: {e}")
        return ReportIOError.exit_code
    except Exception as e:
        logger.exception(f"❌ Unexpected error: {e}")
        return 1
