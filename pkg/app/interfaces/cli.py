import argparse
import json
import math
import signal
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

from app import __version__
from app.application.pipeline import ALL, COMPARE, SUBCOMMANDS, NliPipeline
from app.crosscutting.config import RuntimeSettings, load_environment, setup_settings
from app.crosscutting.logging import CorrelationContext, get_logger, log_error, setup_logging
from app.crosscutting.metrics import RunMetrics
from app.crosscutting.reporting import OutputFormat, RunManifest, write_json_document, write_tables
from app.domain.errors import ComparisonGateError, RamanNliError
from app.domain.options import OracleMode
from app.infrastructure.config_loader import load_link_config, load_rho, override_options

logger = get_logger(__name__)

ERROR_FILE = "error.json"
_SUBCOMMAND_HELP = {
    "solve": "Solve the Raman power profiles of every span",
    "fit": "Fit the two-segment loss model to every channel profile",
    "nli": "Evaluate the closed-form NLI per channel",
    "oracle": "Evaluate the numerical reference NLI per channel",
    "compare": "Compare closed-form and numerical NLI per channel",
    "all": "Run every stage and write every output",
}


def _jsonable(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


class CLI:
    """Command line interface of the NLI estimator."""

    def __init__(self, settings: Optional[RuntimeSettings] = None):
        self.settings = settings or RuntimeSettings()
        self.parser = self._create_parser()
        self._setup_signal_handlers()
        self._start_time: Optional[float] = None

    def _create_parser(self) -> argparse.ArgumentParser:
        """Create argument parser."""
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument('config', help='Link configuration file (JSON)')
        common.add_argument('--step-m', type=float, default=None,
                            help='Solver integration step in metres (overrides options.solver.step_m)')
        common.add_argument('--island-grid', type=int, default=None,
                            help='Oracle island grid panels (overrides options.oracle.island_grid)')
        common.add_argument('--rho-file', default=None,
                            help='JSON file with per-(span, channel) correction factors')
        common.add_argument('--oracle-mode', choices=[m.value for m in OracleMode], default=None,
                            help='Oracle envelope and segment combination')
        common.add_argument('--out-dir', default=None,
                            help=f'Output directory (default: $RAMANNLI_OUT_DIR or {self.settings.out_dir})')
        common.add_argument('--seed', type=int, default=None,
                            help='Reserved; recorded in the manifest only')
        common.add_argument('--format', choices=[f.value for f in OutputFormat], default=OutputFormat.CSV.value,
                            help='Table format (default: csv)')
        common.add_argument('--gate-db', type=float, default=None,
                            help='Fail with exit code 5 when max |delta| exceeds this (compare, all)')
        common.add_argument('--metrics-file', default=None,
                            help='Write stage timings and counters to this JSON file')
        common.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], default=None,
                            help='Set logging level')

        parser = argparse.ArgumentParser(
            prog='ramannli',
            description='Closed-form NLI estimation for Raman-amplified links',
        )
        parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
        subparsers = parser.add_subparsers(dest='command', help='Available commands')
        for name in SUBCOMMANDS:
            subparsers.add_parser(name, parents=[common], help=_SUBCOMMAND_HELP[name])
        return parser

    def _setup_signal_handlers(self) -> None:
        """Setup signal handlers for graceful shutdown."""
        def signal_handler(signum, frame):
            logger.warning("signal_received", signal=signum)
            sys.exit(130)

        signal.signal(signal.SIGINT, signal_handler)
        signal.signal(signal.SIGTERM, signal_handler)

    def _setup_logging(self, args: argparse.Namespace) -> None:
        setup_logging(args.log_level or self.settings.log_level,
                      log_file=self.settings.log_file,
                      json_output=self.settings.log_json)

    def _out_dir(self, args: argparse.Namespace) -> Path:
        return Path(args.out_dir) if args.out_dir else Path(self.settings.out_dir)

    @staticmethod
    def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
        """Flags that change numeric outputs, recorded in the manifest."""
        candidates = {
            "stepM": args.step_m,
            "islandGrid": args.island_grid,
            "rhoFile": args.rho_file,
            "oracleMode": args.oracle_mode,
            "seed": args.seed,
            "gateDb": args.gate_db,
        }
        overrides = {key: value for key, value in candidates.items() if value is not None}
        if args.format != OutputFormat.CSV.value:
            overrides["format"] = args.format
        return overrides

    def _execute(self, args: argparse.Namespace, out_dir: Path) -> Dict[str, Any]:
        loaded = load_link_config(args.config)
        link = override_options(loaded.link, step_m=args.step_m, island_grid=args.island_grid,
                                oracle_mode=args.oracle_mode)
        ml = load_rho(args.rho_file, link.n_spans, link.n_channels) if args.rho_file else None

        manifest = RunManifest(
            config_path=str(args.config),
            config_sha256=loaded.raw_sha256,
            subcommand=args.command,
            version=__version__,
            overrides=self._overrides(args),
        )
        run_id = manifest.manifest_hash[:16]
        metrics = RunMetrics(run_id=run_id, subcommand=args.command)

        with CorrelationContext(run_id=run_id, config_hash=loaded.raw_sha256[:12]):
            pipeline = NliPipeline(link, ml=ml, metrics=metrics)
            tables = pipeline.run(args.command)

            out_dir.mkdir(parents=True, exist_ok=True)
            stale = out_dir / ERROR_FILE
            if stale.exists():
                stale.unlink()
            write_tables(tables, out_dir, OutputFormat(args.format), manifest)
            manifest.save(out_dir)

            summary = {
                "status": "ok",
                "subcommand": args.command,
                "outDir": str(out_dir),
                "outputs": sorted(o.name for o in manifest.outputs) + [RunManifest.FILENAME],
                "manifestHash": manifest.manifest_hash,
                **pipeline.summary(),
            }
            logger.info("run_metrics", **metrics.to_dict())
            if args.metrics_file:
                metrics.save_to_file(args.metrics_file)

            comparison = pipeline.results.comparison
            if args.gate_db is not None and args.command in (COMPARE, ALL) and comparison is not None:
                if comparison.max_abs_delta_db > args.gate_db:
                    raise ComparisonGateError(comparison.max_abs_delta_db, args.gate_db)
        return summary

    def _fail(self, record: Dict[str, Any], out_dir: Optional[Path]) -> int:
        """Write error.json (when an output directory is known) and print the record."""
        if out_dir is not None:
            try:
                out_dir.mkdir(parents=True, exist_ok=True)
                write_json_document(_jsonable(record), out_dir / ERROR_FILE)
            except OSError as e:
                logger.warning("error_record_not_written", path=str(out_dir / ERROR_FILE), reason=str(e))
        print(json.dumps(_jsonable(record), sort_keys=True))
        return int(record["exitCode"])

    def run(self, argv: Optional[List[str]] = None) -> int:
        """Run the CLI and return the process exit code."""
        self._start_time = time.time()
        args = self.parser.parse_args(argv)
        if not args.command:
            self.parser.print_help(sys.stderr)
            return 1

        out_dir: Optional[Path] = None
        try:
            self._setup_logging(args)
            out_dir = self._out_dir(args)
            summary = self._execute(args, out_dir)
            print(json.dumps(_jsonable(summary), sort_keys=True))
            return 0
        except RamanNliError as e:
            log_error(logger, f"{args.command}_failed", e, exit_code=e.exit_code)
            return self._fail(e.to_record(), out_dir)
        except KeyboardInterrupt:
            logger.warning("operation_cancelled")
            return 130
        except Exception as e:
            log_error(logger, f"{args.command}_failed", e, exit_code=1)
            return self._fail({"error": type(e).__name__, "message": str(e), "exitCode": 1}, out_dir)
        finally:
            logger.debug("cli_finished", duration_s=round(time.time() - self._start_time, 3))


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point: load .env, read runtime settings and run."""
    load_environment()
    try:
        settings = setup_settings()
    except RamanNliError as e:
        print(json.dumps(e.to_record(), sort_keys=True))
        return e.exit_code
    return CLI(settings).run(argv)


if __name__ == '__main__':
    sys.exit(main())
