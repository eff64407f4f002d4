"""Command line entry point: ``curate <subcommand> --config FILE``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import CurateError, __version__
from .config import ConfigError, load_config
from .manifest import read_stats
from .mos import compute_mos, load_scores
from .pipeline import STAGES, FatalIo, StageOrder, run, run_stage

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_STAGE = 3

log = logging.getLogger("curate")


class _Parser(argparse.ArgumentParser):
    # usage mistakes share the config exit code; 2 is reserved for I/O failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="curate", description="Curate crowdsourced speech clips into a TTS training corpus."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def staged(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path, help="pipeline config file")
        p.add_argument("--workers", type=int, help="override the configured worker count")
        p.add_argument("--seed", type=int, help="override the split seed")
        return p

    staged("ingest", "parse and filter the catalog")
    staged("trim", "resample and trim silence")
    staged("denoise", "spectral gating (or external enhancer)")
    staged("score", "quality scoring and threshold filter")
    staged("select-speakers", "pick the similar-intonation speaker cohort")
    staged("normalize-text", "normalize transcripts")
    staged("export", "write metadata, wavs, stats and report")
    staged("stats", "print dataset statistics of the last export")
    staged("run", "run every stage in order")
    mos = sub.add_parser("mos", help="aggregate listener ratings from a TSV file")
    mos.add_argument("scores", type=Path, help="TSV with rater_id, sample_id, score columns")
    mos.add_argument("--json", action="store_true", help="print the full summary as JSON")
    return parser


def _cmd_mos(args) -> int:
    try:
        scores = load_scores(args.scores)
    except OSError as exc:
        raise FatalIo(f"cannot read {args.scores}: {exc}") from None
    summary = compute_mos(scores)
    if args.json:
        print(json.dumps(summary.to_dict(), indent=2))
    else:
        print(f"MOS {summary.overall_mos:.2f} ± {summary.ci95_halfwidth:.2f} (n={summary.n_scores})")
    return EXIT_OK


def _dispatch(args) -> int:
    if args.command == "mos":
        return _cmd_mos(args)
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(split=type(cfg.split)(args.seed, cfg.split.val_permille))
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = cfg.replace(workers=args.workers)

    if args.command == "stats":
        path = Path(cfg.output_dir) / "stats.json"
        if not path.is_file():
            raise StageOrder(f"no statistics at {path}; run export first")
        print(json.dumps(read_stats(path).to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    if args.command == "run":
        report = run(cfg)
        print(json.dumps({"counts": report["counts"], "stats": report["stats"]}, indent=2, sort_keys=True))
        return EXIT_OK
    assert args.command in STAGES
    result = run_stage(cfg, args.command)
    if args.command == "select-speakers":
        print(json.dumps(result["cohort"], indent=2, sort_keys=True))
    else:
        statuses = [c.get("status") for c in result["clips"].values()]
        kept = sum(s in ("ok", "accepted") for s in statuses)
        print(f"{args.command}: {kept} of {len(statuses)} clips kept")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return _dispatch(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except FatalIo as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except CurateError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
