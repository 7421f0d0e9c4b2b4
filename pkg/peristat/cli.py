import argparse
import logging
import shutil
import sys

from peristat.base.exceptions import ConfigError, MissingArtifact, NumericalException
from peristat.pipeline import TEMPLATE_DIR, Pipeline, PipelineConfig, direct_simulation, volume_fraction_sweep

logger = logging.getLogger("peristat")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def load_config(args: argparse.Namespace) -> PipelineConfig:
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig.default()
    return config.with_overrides(samples=args.samples, seed=args.seed, jobs=args.jobs, output_dir=args.out)


def cmd_run(args: argparse.Namespace) -> None:
    config = load_config(args)
    pipeline = Pipeline(config, progress=not args.quiet)
    if args.stage == "pipeline":
        manifest = pipeline.run()
        logger.info("manifest written, config hash %s", manifest.config_hash)
        return
    for path in pipeline.run_stage(args.stage, input_path=args.input):
        logger.info("wrote %s", path)


def cmd_sweep(args: argparse.Namespace) -> None:
    config = load_config(args)
    table = volume_fraction_sweep(config, args.fractions, progress=not args.quiet)
    print(table.to_string(index=False))


def cmd_direct(args: argparse.Namespace) -> None:
    config = load_config(args)
    history = direct_simulation(config, args.tiles, sample=args.sample, output_dir=config.output_dir)
    logger.info("direct run: peak stress %.6g", float(history.stresses().max()))


def cmd_template(args: argparse.Namespace) -> None:
    shutil.copyfile(TEMPLATE_DIR / "composite_2d.json", args.path)
    logger.info("wrote %s", args.path)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="peristat", description="peridynamics-based statistical multiscale fracture")
    p.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp: argparse.ArgumentParser):
        sp.add_argument("--config", default=None, help="JSON configuration (default: built-in defaults)")
        sp.add_argument("--samples", type=int, default=None, help="number of RVE samples M")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--jobs", type=int, default=None, help="worker processes over samples")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--quiet", action="store_true", help="no progress bars")

    sp_run = sub.add_parser("run", help="full pipeline or one stage")
    add_common(sp_run)
    sp_run.add_argument("--stage", default="pipeline",
                        choices=["pipeline", "generate-rve", "correct", "rve-fracture", "homogenize", "fit",
                                 "macro-sim"])
    sp_run.add_argument("--input", default=None, help="tensor file for --stage fit")
    sp_run.set_defaults(func=cmd_run)

    sp_sweep = sub.add_parser("sweep", help="pipeline over several volume fractions")
    add_common(sp_sweep)
    sp_sweep.add_argument("--fractions", type=float, nargs="+", required=True)
    sp_sweep.set_defaults(func=cmd_sweep)

    sp_direct = sub.add_parser("direct", help="microstructure-resolving reference run on tiled RVEs")
    add_common(sp_direct)
    sp_direct.add_argument("--tiles", type=int, default=3)
    sp_direct.add_argument("--sample", type=int, default=0)
    sp_direct.set_defaults(func=cmd_direct)

    sp_template = sub.add_parser("template", help="write the default configuration file")
    sp_template.add_argument("path")
    sp_template.set_defaults(func=cmd_template)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s :: %(levelname)s :: %(name)s :: %(message)s",
    )
    try:
        args.func(args)
    except (ConfigError, MissingArtifact) as e:
        logger.error(str(e))
        return EXIT_CONFIG
    except NumericalException as e:
        logger.error(str(e))
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
