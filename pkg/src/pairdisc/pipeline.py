"""Command line parsing and command dispatch.

``Pipeline.parse_command_line`` turns argv into a :class:`PipelineCommand`;
``Pipeline.run`` builds the command's context, executes its registered steps
and maps failures to exit codes:

    0  success
    1  usage or configuration error
    2  data, IO or checkpoint error
    3  numeric divergence (non-finite loss or gradient, failed gradient check)
"""
import argparse
import logging
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from . import __version__
from .contexts import create_context
from .errors import CheckpointError, ConfigError, DataError, DivergenceError, NonFiniteError
from .models import VARIANT_DEFAULTS
from .registry import command_registry

# Import to register the decorated steps
from . import commands  # noqa: F401

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class UsageParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class PipelineCommand:
    """A parsed invocation: the command name and its arguments."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.args = args


def build_top_level_parser() -> argparse.ArgumentParser:
    parser = UsageParser(prog="pairdisc", description="Paraphrase generation with a pairwise discriminator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log debug messages")
    subparsers = parser.add_subparsers(dest="subcmd", required=True)

    train = subparsers.add_parser("train", help="Train a model and write a run directory")
    train.add_argument("--config", required=True, help="key = value config file")
    train.add_argument("--data", required=True, help="Training pairs TSV (question1, question2, is_duplicate)")
    train.add_argument("--out", required=True, help="Run directory for checkpoints, metrics and the manifest")
    train.add_argument("--val", help="Validation pairs TSV")
    train.add_argument("--split", help="File of row indices selecting the training rows")
    train.add_argument("--resume", help="Checkpoint to continue from")

    gen = subparsers.add_parser("generate", help="Greedy paraphrases, one input sentence per line")
    gen.add_argument("--ckpt", required=True, help="Model checkpoint")
    gen.add_argument("--in", dest="input", required=True, help="Input sentences")
    gen.add_argument("--out", required=True, help="Output file")

    ev = subparsers.add_parser("eval", help="Corpus metrics for a checkpoint or for hypothesis/reference files")
    ev.add_argument("--ckpt", help="Model checkpoint")
    ev.add_argument("--test", help="Test pairs TSV")
    ev.add_argument("--hyp", help="Hypotheses, one per line")
    ev.add_argument("--ref", help="References, one per line")
    ev.add_argument("--out", help="Where to write the generated hypotheses")
    ev.add_argument("--smoothing", action="store_true", help="Add-one smoothing for BLEU n > 1")

    senti = subparsers.add_parser("sentiment", help="Sentiment probe over frozen encoder embeddings")
    senti_sub = senti.add_subparsers(dest="sentiment_cmd", required=True)
    s_train = senti_sub.add_parser("train", help="Fit the probe")
    s_train.add_argument("--ckpt", required=True, help="Model checkpoint providing the encoder")
    s_train.add_argument("--data", required=True, help="Phrases TSV (phrase_id, phrase, label)")
    s_train.add_argument("--out", required=True, help="Probe file to write")
    s_train.add_argument("--epochs", type=int, help="Training epochs (default 50)")
    s_train.add_argument("--seed", type=int, help="Shuffling seed")
    s_train.add_argument("--val", help="Held-out phrases TSV; its loss is logged and reported")
    s_eval = senti_sub.add_parser("eval", help="Error rate of a trained probe")
    s_eval.add_argument("--probe", required=True, help="Probe file")
    s_eval.add_argument("--data", required=True, help="Labeled phrases TSV")
    s_eval.add_argument("--ckpt", help="Model checkpoint (defaults to the one recorded in the probe)")

    grad = subparsers.add_parser("gradcheck", help="Finite-difference check of the joint loss on a tiny model")
    grad.add_argument("--vocab", type=int, default=20)
    grad.add_argument("--embed", type=int, default=8)
    grad.add_argument("--hidden", type=int, default=8)
    grad.add_argument("--max-len", dest="max_len", type=int, default=5)
    grad.add_argument("--batch", type=int, default=3)
    grad.add_argument("--samples", type=int, default=200)
    grad.add_argument("--seed", type=int, default=0)
    grad.add_argument("--h", type=float, default=1e-5, help="Central-difference step")
    grad.add_argument("--tolerance", type=float, default=1e-4)
    grad.add_argument("--variant", choices=sorted(VARIANT_DEFAULTS), default="EDD-LG-shared")

    cmp_ = subparsers.add_parser("compare", help="Average ranks and Nemenyi critical difference")
    cmp_.add_argument("--scores", required=True, help="TSV: header of method names, one row per dataset")
    cmp_.add_argument("--alpha", type=float, default=0.05, choices=[0.10, 0.05, 0.01])
    cmp_.add_argument("--lower-is-better", action="store_true", help="Rank low scores first (e.g. TER)")

    split = subparsers.add_parser("split", help="Write seeded disjoint row-index files for a pairs TSV")
    split.add_argument("--data", required=True, help="Pairs TSV; indices count its duplicate pairs in file order")
    split.add_argument("--sizes", required=True, help="Comma-separated split sizes, e.g. 100000,4000")
    split.add_argument("--names", help="Comma-separated file stems (default split0, split1, ...)")
    split.add_argument("--seed", type=int, default=0)
    split.add_argument("--out", required=True, help="Directory for the index files")
    return parser


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT,
                        stream=sys.stderr)


class Pipeline:
    """Parses a command line and runs the matching command steps."""

    def __init__(self):
        self.registry = command_registry

    def parse_command_line(self, argv: Optional[Sequence[str]] = None) -> PipelineCommand:
        argv = list(argv) if argv is not None else sys.argv[1:]
        args = build_top_level_parser().parse_args(argv)
        command = args.subcmd
        if command == "sentiment":
            command = f"sentiment-{args.sentiment_cmd}"
        return PipelineCommand(command, args)

    def run(self, command: PipelineCommand) -> int:
        configure_logging(getattr(command.args, "verbose", False))
        try:
            context = create_context(command.command, command.args)
            self.registry.execute(command.command, context)
            return context.exit_code
        except SystemExit as e:
            return int(e.code) if e.code is not None else 0
        except (DivergenceError, NonFiniteError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_DIVERGED
        except (DataError, CheckpointError, OSError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_DATA
        except (ConfigError, ValidationError, ValueError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_USAGE
        except Exception as e:
            print(f"error: unexpected error: {e}", file=sys.stderr)
            return EXIT_USAGE
