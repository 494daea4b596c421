"""Parse flat ``key = value`` training config files."""
import logging
import os
from pathlib import Path
from typing import Dict, Optional, Union

import parsy
from pydantic import ValidationError

from .errors import ConfigError
from .models import TrainConfig

logger = logging.getLogger(__name__)

SEED_ENV = "PAIRDISC_SEED"

KNOWN_KEYS = frozenset({
    # RMSProp
    "learning_rate", "alpha", "epsilon", "decay_factor", "decay_a", "decay_b",
    # model
    "max_vocab", "min_count", "embed_dim", "hidden_dim", "t_max", "conv_width", "init_scale",
    # losses
    "variant", "local_weight", "global_weight", "margin", "similarity", "gradient_mode", "clip_norm",
    # loop
    "batch_size", "epochs", "seed",
})


class ConfigParser:
    """Line grammar for config text using parsy."""

    def __init__(self):
        self._setup_grammar()

    def _setup_grammar(self):
        blank = parsy.regex(r"[ \t]*")
        comment = parsy.regex(r"#.*")
        key = parsy.regex(r"[A-Za-z_][A-Za-z0-9_]*")
        equals = blank >> parsy.string("=") << blank
        value = parsy.regex(r"[^#\r\n]*").map(str.strip)

        self.assignment = parsy.seq(blank >> key, equals >> value << comment.optional())
        self.empty = blank >> comment.optional() >> parsy.eof
        self.line = (self.assignment << parsy.eof) | self.empty.result(None)

    def parse(self, text: str, source: str = "<config>") -> Dict[str, str]:
        """Return the assignments in file order; duplicates are errors."""
        values: Dict[str, str] = {}
        seen_at: Dict[str, int] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            try:
                parsed = self.line.parse(raw)
            except parsy.ParseError:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}") from None
            if parsed is None:
                continue
            name, val = parsed
            if name in seen_at:
                raise ConfigError(f"{source}:{lineno}: duplicate key '{name}' (first set on line {seen_at[name]})")
            if name not in KNOWN_KEYS:
                raise ConfigError(f"{source}:{lineno}: unknown key '{name}'")
            if not val:
                raise ConfigError(f"{source}:{lineno}: key '{name}' has no value")
            seen_at[name] = lineno
            values[name] = val
        return values


_config_parser = ConfigParser()


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    return _config_parser.parse(text, source)


def build_train_config(values: Dict[str, str], source: str = "<config>",
                       env: Optional[Dict[str, str]] = None) -> TrainConfig:
    """Turn flat values into a validated TrainConfig, applying the seed override."""
    env = os.environ if env is None else env
    values = dict(values)
    override = env.get(SEED_ENV)
    if override is not None and override.strip():
        logger.info("%s=%s overrides the configured seed", SEED_ENV, override.strip())
        values["seed"] = override.strip()
    try:
        return TrainConfig.from_flat(values)
    except (ValidationError, ValueError) as e:
        raise ConfigError(f"{source}: {e}") from e


def load_train_config(path: Union[str, Path], env: Optional[Dict[str, str]] = None) -> TrainConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = parse_config_text(path.read_text(encoding="utf-8"), str(path))
    return build_train_config(values, str(path), env)
