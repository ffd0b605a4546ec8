"""Shared plumbing of the subcommand scripts: flags, config loading, reports, exit codes."""

from __future__ import annotations

import argparse
import sys
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import structlog

from .config import (
    RunConfig,
    build_basis,
    build_grid,
    build_initial_state,
    build_params,
    build_step,
    config_hash,
    describe,
    parse_config,
)
from .errors import EXIT_VERDICT_FAILED, CnsError, ReportError
from .field import GridSpec, ModelParams, State
from .file_utils import require_single_hash, resolve_output_dir
from .noise import NoiseBasis
from .output import (
    Timer,
    configure_logging,
    emit,
    error_response,
    format_verdict_table,
    success_response,
    write_json,
    write_log,
)
from .solver import StepSpec
from .stats import EnsembleConfig

logger = structlog.get_logger(__name__)


def build_parser(description: str) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description=description)
    parser.add_argument("--config", type=Path, help="TOML run configuration")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a config key (repeatable, TOML value syntax)",
    )
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument("--out", help="Output directory (overrides CNS_OUTPUT_DIR and the config)")
    parser.add_argument("--resume", type=Path, help="Resume from a checkpoint file")
    parser.add_argument("--workers", type=int, help="Worker processes (default: all cores)")
    parser.add_argument("--verbose", action="store_true", help="Log progress to stderr")
    return parser


@dataclass
class RunContext:
    config: RunConfig
    digest: str
    out_dir: Path
    grid: GridSpec
    params: ModelParams
    basis: NoiseBasis
    step: StepSpec
    init: State
    workers: int | None = None
    resume: Path | None = None

    def provenance(self) -> dict[str, Any]:
        return describe(self.config, self.digest, self.basis)

    def ensemble_config(self, M: int | None = None) -> EnsembleConfig:
        c = self.config
        return EnsembleConfig(
            M=c.M if M is None else M,
            T=c.T,
            T0=c.T0,
            sample_every=c.sample_every,
            params=self.params,
            step=self.step,
            basis=self.basis,
            init=self.init,
            seed=c.seed,
        )

    def write_report(self, name: str, payload: dict[str, Any], rows: list[dict[str, Any]]) -> list[Path]:
        """Write <name>.json and the <name>.txt verdict table."""
        json_path = write_json({**self.provenance(), **payload, "verdicts": rows}, self.out_dir / f"{name}.json")
        txt_path = self.out_dir / f"{name}.txt"
        txt_path.write_text(f"# config_hash={self.digest}\n" + format_verdict_table(rows))
        return [json_path, txt_path]


def load_context(args: argparse.Namespace) -> RunContext:
    config = parse_config(args.config, args.overrides, seed=args.seed)
    out_dir = resolve_output_dir(args.out, config.directory)
    config.directory = str(out_dir)
    digest = config_hash(config)
    if out_dir.exists() and require_single_hash(out_dir) not in (None, digest):
        raise ReportError(
            f"Output directory {out_dir} holds artifacts of another configuration",
            details={"config_hash": digest},
        )
    grid = build_grid(config)
    return RunContext(
        config=config,
        digest=digest,
        out_dir=out_dir,
        grid=grid,
        params=build_params(config),
        basis=build_basis(config, grid),
        step=build_step(config),
        init=build_initial_state(config, grid),
        workers=args.workers,
        resume=args.resume,
    )


Runner = Callable[[RunContext], dict[str, Any]]


def execute(name: str, args: argparse.Namespace, runner: Runner) -> int:
    """Run a subcommand and emit its JSON response; returns the exit code.

    Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 configuration error,
    3 runtime error.
    """
    configure_logging(args.verbose)
    ctx: RunContext | None = None
    with Timer() as timer:
        try:
            ctx = load_context(args)
            result = runner(ctx)
        except CnsError as e:
            logger.warning("command_failed", command=name, error_type=e.error_type, message=e.message)
            emit(error_response(e.message, e.error_type, e.details, exit_code=e.exit_code))
            if ctx is not None:
                write_log({"status": "error", "error_type": e.error_type, "message": e.message}, ctx.out_dir, name)
            return e.exit_code

    assert ctx is not None
    response = success_response(result, duration_ms=timer.elapsed_ms, config_hash=ctx.digest)
    write_log(
        {"status": response["status"], "config_hash": ctx.digest, "duration_ms": timer.elapsed_ms},
        ctx.out_dir,
        name,
    )
    emit(response)
    return 0 if response["status"] == "success" else EXIT_VERDICT_FAILED


def script_main(name: str, description: str, runner: Runner, argv: list[str] | None = None) -> None:
    args = build_parser(description).parse_args(argv)
    sys.exit(execute(name, args, runner))
