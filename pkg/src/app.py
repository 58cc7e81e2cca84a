import argparse
import sys
from enum import Enum

from exceptions import AuditError
from kg.synthetic import planted_corpus, write_corpus
from reports.audit import Stage, run_audit
from settings import load_config
from utils import get_logger

logger = get_logger(__name__)


class Command(Enum):
    INGEST = "ingest"
    SLICE = "slice"
    TRAIN = "train"
    EVAL = "eval"
    DATA_BIAS = "data-bias"
    EMBED_BIAS = "embed-bias"
    COMPARE = "compare"
    REPORT = "report"
    AUDIT = "audit"
    SYNTH = "synth"


STAGES = {
    Command.INGEST: Stage.INGEST,
    Command.SLICE: Stage.MERGE,
    Command.TRAIN: Stage.TRAIN,
    Command.EVAL: Stage.EVAL,
    Command.DATA_BIAS: Stage.DATA_BIAS,
    Command.EMBED_BIAS: Stage.EMBED_BIAS,
    Command.COMPARE: Stage.COMPARE,
    Command.REPORT: Stage.REPORT,
    Command.AUDIT: Stage.REPORT,
}

HELP = {
    Command.INGEST: "Read the triple and label files and write the ingest report",
    Command.SLICE: "Slice demographies, merge them and write slice statistics",
    Command.TRAIN: "Train one embedding table per model kind",
    Command.EVAL: "Link-prediction evaluation of the trained tables",
    Command.DATA_BIAS: "Data gender bias and threshold classes per demography",
    Command.EMBED_BIAS: "Embedding gender bias per demography, model and direction",
    Command.COMPARE: "Rank deviation, Jaccard, demography similarity and entropy tables",
    Command.REPORT: "Every table plus the manifest",
    Command.AUDIT: "Full pipeline",
}


def run_stage(args) -> int:
    overrides = {
        "output_dir": args.out,
        "seed": args.seed,
        "threads": args.threads,
        "models": args.model,
        "k_values": sorted(set(args.k)) if args.k else None,
    }
    config = load_config(args.config, overrides)
    manifest = run_audit(config, until=STAGES[Command(args.command)])
    logger.info("%d artifacts written under %s", len(manifest["artifacts"]), config.output_dir)
    return 0


def run_synth(args) -> int:
    corpus = planted_corpus(seed=args.seed or 0, humans_per_country=args.humans)
    paths = write_corpus(corpus, args.out or "synthetic")
    logger.info("audit config: %s", paths["config"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kg-bias-audit")
    subparsers = parser.add_subparsers(
        title="Subcommands",
        dest="command",
        help="Display available subcommands",
    )

    for command, stage_help in HELP.items():
        sub = subparsers.add_parser(command.value, help=stage_help)
        sub.add_argument("--config", type=str, required=True, help="Audit config (JSON)")
        sub.add_argument("--out", type=str, default=None, help="Output directory")
        sub.add_argument("--seed", type=int, default=None, help="Master seed (u64)")
        sub.add_argument("--threads", type=int, default=None, help="Worker cap for parallel stages")
        sub.add_argument(
            "--model",
            action="append",
            default=None,
            help="Model kind: transe-l1, transe-l2, complex, distmult (repeatable)",
        )
        sub.add_argument("--k", type=int, action="append", default=None, help="Top-K cutoff (repeatable)")
        sub.set_defaults(func=run_stage)

    synth = subparsers.add_parser(Command.SYNTH.value, help="Write the planted two-demography corpus")
    synth.add_argument("--out", type=str, default="synthetic", help="Directory for triples, labels and config")
    synth.add_argument("--seed", type=int, default=0, help="Generator seed")
    synth.add_argument("--humans", type=int, default=100, help="Humans per country")
    synth.set_defaults(func=run_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except AuditError as e:
        logger.error("%s", e)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
