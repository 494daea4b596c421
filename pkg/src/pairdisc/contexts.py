"""Per-command context models passed through the registered steps.

Each context holds the parsed arguments plus the values its steps hand to one
another; a step reads what earlier steps filled in and writes its own outputs.
"""
import argparse
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from .models import GradCheckReport, MetricReport, ProbeConfig, RunManifest, TrainConfig
from .params import ParameterStore
from .sentiment import LogRegParams
from .text import LabeledPhrase, ParaphrasePair, Vocabulary

Tokens = List[str]


class BaseContext(BaseModel):
    """Base class for all command contexts."""

    model_config = ConfigDict(arbitrary_types_allowed=True, validate_assignment=True, extra="forbid")

    args: argparse.Namespace = Field(description="Parsed command line arguments")
    exit_code: int = Field(default=0, description="Exit status the command reports")


class TrainContext(BaseContext):
    # INPUTS
    config: Optional[TrainConfig] = Field(default=None, description="Validated training config")
    out_dir: Optional[Path] = Field(default=None, description="Run directory")
    data_files: List[Path] = Field(default_factory=list, description="Files whose digests go into the manifest")

    # OUTPUTS
    vocab: Optional[Vocabulary] = Field(default=None)
    train_pairs: List[ParaphrasePair] = Field(default_factory=list)
    val_pairs: List[ParaphrasePair] = Field(default_factory=list)
    manifest: Optional[RunManifest] = Field(default=None)
    checkpoints: List[Path] = Field(default_factory=list)


class ModelContext(BaseContext):
    """Shared by generate and eval: a loaded model plus token sequences."""

    store: Optional[ParameterStore] = Field(default=None)
    vocab: Optional[Vocabulary] = Field(default=None)
    config: Optional[TrainConfig] = Field(default=None)
    rows: List[Tuple[Tokens, Tokens]] = Field(default_factory=list, description="(source, reference) pairs")
    sources: List[Tokens] = Field(default_factory=list)
    hypotheses: List[Tokens] = Field(default_factory=list)
    report: Optional[MetricReport] = Field(default=None)


class SentimentContext(BaseContext):
    store: Optional[ParameterStore] = Field(default=None, description="Frozen encoder parameters")
    vocab: Optional[Vocabulary] = Field(default=None)
    encoder_checksum: str = Field(default="")
    probe_config: ProbeConfig = Field(default_factory=ProbeConfig)
    phrases: List[LabeledPhrase] = Field(default_factory=list)
    val_phrases: List[LabeledPhrase] = Field(default_factory=list, description="Held-out phrases for the validation loss")
    params: Optional[LogRegParams] = Field(default=None)
    summary: Dict[str, Any] = Field(default_factory=dict)


class GradcheckContext(BaseContext):
    report: Optional[GradCheckReport] = Field(default=None)


class CompareContext(BaseContext):
    methods: List[str] = Field(default_factory=list)
    scores: List[List[float]] = Field(default_factory=list, description="[datasets x methods]")


class SplitContext(BaseContext):
    sizes: List[int] = Field(default_factory=list, description="Rows per split, in order")
    names: List[str] = Field(default_factory=list, description="File stem of each split")
    row_count: int = Field(default=0, description="Duplicate pairs in the data file")
    paths: List[Path] = Field(default_factory=list)


def create_context(command: str, args: argparse.Namespace) -> BaseContext:
    contexts = {
        "train": TrainContext,
        "generate": ModelContext,
        "eval": ModelContext,
        "sentiment-train": SentimentContext,
        "sentiment-eval": SentimentContext,
        "gradcheck": GradcheckContext,
        "compare": CompareContext,
        "split": SplitContext,
    }
    return contexts[command](args=args)
