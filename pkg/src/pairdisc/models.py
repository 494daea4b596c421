"""Pydantic models for configuration, reports and run manifests."""
import math
from typing import Dict, List, Literal, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

DEFAULT_DECAY_A = 1500
DEFAULT_DECAY_B = 1250

Variant = Literal["ED-L", "EDD-G", "EDD-LG", "EDD-LG-shared", "EDD-alt"]

# (local_weight, global_weight, shared discriminator)
VARIANT_DEFAULTS: Dict[str, tuple] = {
    "ED-L": (1.0, 0.0, True),
    "EDD-G": (0.0, 1.0, True),
    "EDD-LG": (1.0, 1.0, False),
    "EDD-LG-shared": (1.0, 1.0, True),
    "EDD-alt": (1.0, 1.0, True),
}


def decay_factor(a: float, b: float) -> float:
    """Per-epoch multiplier ``exp(log(0.1) / (a * b))``."""
    if a <= 0 or b <= 0:
        raise ValueError("decay constants must be positive")
    return math.exp(math.log(0.1) / (a * b))


class RmsPropConfig(BaseModel):
    """Plain RMSProp hyperparameters plus the per-epoch learning-rate decay."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    learning_rate: float = Field(default=0.0008, description="Step size")
    alpha: float = Field(default=0.99, description="Squared-gradient decay")
    epsilon: float = Field(default=1e-8, description="Denominator fuzz term")
    decay_factor: float = Field(
        default_factory=lambda: decay_factor(DEFAULT_DECAY_A, DEFAULT_DECAY_B),
        description="Multiplier applied to learning_rate at the end of every epoch",
    )

    @field_validator("learning_rate")
    @classmethod
    def validate_learning_rate(cls, v: float) -> float:
        if not v >= 0:
            raise ValueError("learning_rate must be >= 0")
        return v

    @field_validator("alpha")
    @classmethod
    def validate_alpha(cls, v: float) -> float:
        if not 0 < v < 1:
            raise ValueError("alpha must lie in (0, 1)")
        return v

    @field_validator("epsilon")
    @classmethod
    def validate_epsilon(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("epsilon must be > 0")
        return v

    @field_validator("decay_factor")
    @classmethod
    def validate_decay_factor(cls, v: float) -> float:
        if not 0 < v <= 1:
            raise ValueError("decay_factor must lie in (0, 1]")
        return v


class ModelDims(BaseModel):
    """Sizes of the encoder, decoder and vocabulary."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    vocab_size: int = Field(default=20003, description="V, including the three reserved ids")
    embed_dim: int = Field(default=64, description="Word embedding size e")
    hidden_dim: int = Field(default=128, description="LSTM hidden size d")
    t_max: int = Field(default=30, description="Maximum tokens per sentence")
    conv_width: int = Field(default=0, description="Temporal convolution width; 0 disables it")
    init_scale: float = Field(default=0.08, description="Uniform init range [-s, s]")

    @field_validator("vocab_size")
    @classmethod
    def validate_vocab_size(cls, v: int) -> int:
        if v < 4:
            raise ValueError("vocab_size must leave room for at least one word after START/STOP/UNK")
        return v

    @field_validator("embed_dim", "hidden_dim", "t_max")
    @classmethod
    def validate_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("dimensions must be >= 1")
        return v

    @field_validator("conv_width")
    @classmethod
    def validate_conv_width(cls, v: int) -> int:
        if v < 0 or (v > 0 and v % 2 == 0):
            raise ValueError("conv_width must be 0 or an odd positive integer")
        return v


class TrainConfig(BaseModel):
    """Everything a training run needs besides the data."""

    model_config = ConfigDict(extra="forbid")

    variant: Variant = Field(default="EDD-LG-shared", description="Ablation variant")
    local_weight: Optional[float] = Field(default=None, description="Weight on the cross-entropy loss")
    global_weight: Optional[float] = Field(default=None, description="Weight on the pairwise hinge loss")
    margin: float = Field(default=1.0, description="Hinge margin constant")
    similarity: Literal["dot", "cosine"] = Field(default="dot", description="Embedding similarity")
    gradient_mode: Literal["gated", "ungated"] = Field(
        default="gated", description="Exact hinge subgradient or the always-active form"
    )
    clip_norm: Optional[float] = Field(default=5.0, description="Global gradient-norm clip; None disables")
    rmsprop: RmsPropConfig = Field(default_factory=RmsPropConfig)
    batch_size: int = Field(default=150, description="Pairs per batch")
    epochs: int = Field(default=10, description="Passes over the training pairs")
    seed: int = Field(default=0, description="Seed for initialization and shuffling")
    max_vocab: int = Field(default=20000, description="Vocabulary cap, reserved ids excluded")
    min_count: int = Field(default=1, description="Minimum training count for a word to be kept")
    dims: ModelDims = Field(default_factory=ModelDims)

    @model_validator(mode="after")
    def apply_variant_defaults(self) -> "TrainConfig":
        local, global_, _ = VARIANT_DEFAULTS[self.variant]
        if self.local_weight is None:
            self.local_weight = local
        if self.global_weight is None:
            self.global_weight = global_
        if self.local_weight < 0 or self.global_weight < 0:
            raise ValueError("loss weights must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.global_weight > 0 and self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 when the global loss is enabled")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.clip_norm is not None and self.clip_norm <= 0:
            self.clip_norm = None
        return self

    @property
    def shared(self) -> bool:
        return VARIANT_DEFAULTS[self.variant][2]

    @property
    def uses_global(self) -> bool:
        return bool(self.global_weight and self.global_weight > 0)

    @classmethod
    def from_flat(cls, values: Mapping[str, str]) -> "TrainConfig":
        """Build a config from flat ``key = value`` pairs."""
        values = dict(values)
        rms = {k: float(values.pop(k)) for k in ("learning_rate", "alpha", "epsilon", "decay_factor") if k in values}
        if "decay_a" in values or "decay_b" in values:
            if "decay_factor" in rms:
                raise ValueError("give either decay_factor or decay_a/decay_b, not both")
            a = float(values.pop("decay_a", DEFAULT_DECAY_A))
            b = float(values.pop("decay_b", DEFAULT_DECAY_B))
            rms["decay_factor"] = decay_factor(a, b)
        dims = {}
        for key, conv in (("embed_dim", int), ("hidden_dim", int), ("t_max", int),
                          ("conv_width", int), ("init_scale", float)):
            if key in values:
                dims[key] = conv(values.pop(key))
        if "clip_norm" in values and values["clip_norm"].strip().lower() in ("none", "off", "0"):
            values.pop("clip_norm")
            values["clip_norm"] = None
        return cls.model_validate({**values, "rmsprop": rms, "dims": dims})


class ProbeConfig(BaseModel):
    """Logistic-regression probe settings."""

    model_config = ConfigDict(extra="forbid")

    rmsprop: RmsPropConfig = Field(
        default_factory=lambda: RmsPropConfig(learning_rate=0.00009, alpha=0.9, epsilon=1e-8, decay_factor=1.0)
    )
    batch_size: int = Field(default=200, description="Phrases per batch")
    epochs: int = Field(default=50, description="Fixed number of passes")
    seed: int = Field(default=0, description="Seed for initialization and shuffling")
    num_classes: int = Field(default=5, description="Fine-grained sentiment classes")

    @field_validator("batch_size", "num_classes")
    @classmethod
    def validate_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be >= 1")
        return v


class BatchLossReport(BaseModel):
    """Losses and diagnostics of one training batch."""

    local: float = Field(description="Cross-entropy averaged over the batch")
    global_: float = Field(alias="global", description="Pairwise hinge sum of the batch divided by the batch size")
    total: float = Field(description="local_weight*local + global_weight*global")
    grad_norm: float = Field(default=0.0, description="Gradient norm before clipping")
    clipped: bool = Field(default=False, description="Whether the gradient was rescaled")
    active_margins: int = Field(default=0, description="Number of positive hinge margins")
    log_floor_hits: int = Field(default=0, description="Targets whose probability hit the log floor")

    model_config = ConfigDict(populate_by_name=True)


class GradCheckReport(BaseModel):
    """Outcome of a finite-difference gradient check."""

    max_rel_error: float = Field(description="Worst relative error over checked coordinates")
    checked: int = Field(description="Coordinates compared")
    excluded: int = Field(default=0, description="Coordinates skipped near a hinge kink")
    worst: Optional[str] = Field(default=None, description="Coordinate with the worst error")

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


class MetricReport(BaseModel):
    """Corpus-level generation metrics."""

    bleu1: float
    bleu2: float
    bleu3: float
    bleu4: float
    rouge_n: float
    rouge_order: int = Field(default=2)
    meteor: float
    ter: float
    sentences: int = Field(default=0)
    smoothing: bool = Field(default=False, description="Whether BLEU used add-one smoothing for n > 1")
    meteor_variant: str = Field(default="exact+stem, no synonyms")
    source_oov_rate: Optional[float] = Field(default=None, description="Share of source tokens missing from the model vocabulary")

    @field_validator("bleu1", "bleu2", "bleu3", "bleu4", "rouge_n", "meteor")
    @classmethod
    def validate_unit_range(cls, v: float) -> float:
        if not 0.0 <= v <= 1.0 + 1e-12:
            raise ValueError("score must lie in [0, 1]")
        return v

    @field_validator("ter")
    @classmethod
    def validate_ter(cls, v: float) -> float:
        if v < 0:
            raise ValueError("TER must be >= 0")
        return v

    def as_row(self) -> List[str]:
        return [f"{getattr(self, k):.6f}" for k in self.columns()]

    @staticmethod
    def columns() -> List[str]:
        return ["bleu1", "bleu2", "bleu3", "bleu4", "rouge_n", "meteor", "ter"]


class RunManifest(BaseModel):
    """What is needed to reproduce a training run."""

    config: TrainConfig
    seed: int
    data_digests: Dict[str, str] = Field(default_factory=dict, description="sha256 per input file")
    code_version: str
    started_at: str
    finished_at: Optional[str] = None
