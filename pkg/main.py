"""Main entry point for the negative-bubble rebound diagnosis pipeline."""

import argparse
import json
import logging
import sys
from typing import List, Optional

from dotenv import load_dotenv

from config.pipeline import load_pipeline_config
from core.errors import PipelineError
from pipeline.runner import PipelineRunner

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

VERBS = ["windows", "fit-all", "learn", "predict", "evaluate", "backtest", "report"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Negative-bubble rebound diagnosis pipeline")
    parser.add_argument("verb", choices=VERBS, help="Pipeline stage to run")
    parser.add_argument("--config", help="KEY=value configuration file")
    parser.add_argument("--seed", type=int, help="Master seed (overrides the config)")
    parser.add_argument("--jobs", type=int, help="Worker processes for fit-all")
    parser.add_argument("--out", help="Output directory (overrides the config)")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    parser.add_argument("--no-progress", action="store_true", help="Hide progress bars")
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """Run one verb; returns the process exit code."""
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        config = load_pipeline_config(args.config, overrides={
            "seed": args.seed, "jobs": args.jobs, "out_dir": args.out})
        runner = PipelineRunner(config, progress=not args.no_progress)

        if args.verb == "windows":
            result = runner.windows()
            print(f"Windows: {result['windows']}")
            print(f"Rebounds (+/-{config.half_width} days): {result['rebounds']}")
        elif args.verb == "fit-all":
            result = runner.fit_all(args.jobs)
            print(f"New fits: {result['new_fits']}, failures: {result['failures']}")
            print(f"Negative-bubble fits: {result['negative_bubbles']}")
        elif args.verb == "learn":
            result = runner.learn()
            print(f"Learning fits: {result['learning_fits']}, informative parameters: "
                  f"{result['informative_params']}")
            for key, counts in result["features"].items():
                print(f"  features {key}: {counts['class_I']} class I, {counts['class_II']} class II")
        elif args.verb == "predict":
            result = runner.predict()
            for key, info in result.items():
                print(f"  alarms {key}: {info['days']} days, max RI {info['max_ri']:.3f}")
        elif args.verb == "evaluate":
            result = runner.evaluate()
            for key, info in result.items():
                print(f"  {key}: {info['prediction_points']} error-diagram points")
        elif args.verb == "backtest":
            result = runner.backtest(args.seed)
            for key, info in result.items():
                print(f"  {key}: {info['trades']} trades, p(excess return) = {info['p_excess_return']}")
        else:
            result = runner.report()
            print(json.dumps(result["stages"], indent=2, sort_keys=True))
        return 0

    except PipelineError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.info("Stopped by user")
        return 130
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        return 1


def main():
    """Main function to run the application."""
    load_dotenv()
    sys.exit(run())


if __name__ == "__main__":
    main()
