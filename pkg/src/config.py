"""Configuration management for the rule-extraction pipeline."""

import os
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

from dotenv import load_dotenv

from src.errors import ValidationError

# Configure logging
logger = logging.getLogger(__name__)

# Load environment variables from .env file if present
load_dotenv()

# Built-in defaults; MNM_BUDGET, MNM_THREADS and MNM_PETRICK_LIMIT override them at call time
DEFAULT_BUDGET = 10**8
DEFAULT_THREADS = 1

# Flow ingestion
DEFAULT_LABEL_COLUMN = os.getenv("MNM_LABEL_COLUMN", "Label")
DEFAULT_SCHEMA_PATH = os.getenv("MNM_SCHEMA_PATH", "")

# Largest prime chart solved exactly by Petrick's method
DEFAULT_PETRICK_LIMIT = 64

LOG_LEVEL = os.getenv("MNM_LOG_LEVEL", "INFO")

OUTPUT_FORMATS = ("text", "json")


def env_int(name: str, default: int) -> int:
    """Integer setting from the environment, or ``default`` when unset.

    Raises:
        ValidationError: If the variable is set but not an integer.
    """
    raw = os.getenv(name)
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError as e:
        raise ValidationError(f"{name} must be an integer, got {raw!r}") from e


def resolve_budget(flag: Optional[int] = None) -> int:
    """Resolve the enumeration budget: CLI flag, then MNM_BUDGET, then the default.

    The environment is re-read on every call so that a budget exported after import
    still takes effect.

    Args:
        flag: Value given on the command line, if any.

    Returns:
        A positive budget.

    Raises:
        ValidationError: If the resolved budget is not a positive integer.
    """
    budget = flag if flag is not None else env_int("MNM_BUDGET", DEFAULT_BUDGET)
    if budget <= 0:
        raise ValidationError(f"Budget must be positive, got {budget}")
    return budget


def resolve_threads(flag: Optional[int] = None) -> int:
    """Worker cap: CLI flag, then MNM_THREADS, then 1."""
    threads = flag if flag is not None else env_int("MNM_THREADS", DEFAULT_THREADS)
    if threads < 1:
        raise ValidationError(f"Thread count must be at least 1, got {threads}")
    return threads


def resolve_petrick_limit(limit: Optional[int] = None) -> int:
    limit = limit if limit is not None else env_int("MNM_PETRICK_LIMIT", DEFAULT_PETRICK_LIMIT)
    if limit < 0:
        raise ValidationError(f"MNM_PETRICK_LIMIT must not be negative, got {limit}")
    return limit


@dataclass
class SchemaConfig:
    """How flow CSV headers map onto tree feature names."""

    label_column: str = DEFAULT_LABEL_COLUMN
    aliases: Dict[str, str] = field(default_factory=dict)


def load_schema_config(path: Optional[str] = None) -> SchemaConfig:
    """Load a flow schema configuration file.

    Args:
        path: JSON file of the form {"label_column": ..., "aliases": {...}}.
            Defaults to MNM_SCHEMA_PATH; with neither set the built-in schema is used.

    Returns:
        The parsed schema configuration.

    Raises:
        ValidationError: If the file cannot be read or has the wrong shape.
    """
    path = path or DEFAULT_SCHEMA_PATH
    if not path:
        return SchemaConfig()

    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"Cannot read schema config {path}: {e}") from e

    if not isinstance(document, dict):
        raise ValidationError(f"Schema config {path} must be a JSON object")
    aliases = document.get("aliases", {})
    if not isinstance(aliases, dict) or not all(isinstance(v, str) for v in aliases.values()):
        raise ValidationError(f"Schema config {path}: 'aliases' must map header names to feature names")

    schema = SchemaConfig(
        label_column=str(document.get("label_column", DEFAULT_LABEL_COLUMN)),
        aliases={str(k): v for k, v in aliases.items()},
    )
    logger.info(f"Loaded schema config from {path} with {len(schema.aliases)} aliases")
    return schema


@dataclass
class PipelineConfig:
    """Paths and knobs shared by the CLI subcommands."""

    tree_path: Optional[str] = None
    space_path: Optional[str] = None
    rules_path: Optional[str] = None
    primes_path: Optional[str] = None
    dataset_path: Optional[str] = None
    budget: int = DEFAULT_BUDGET
    threads: int = DEFAULT_THREADS
    output_format: str = "text"

    def validate(self) -> "PipelineConfig":
        if self.budget <= 0:
            raise ValidationError(f"Budget must be positive, got {self.budget}")
        if self.threads < 1:
            raise ValidationError(f"Thread count must be at least 1, got {self.threads}")
        if self.output_format not in OUTPUT_FORMATS:
            raise ValidationError(
                f"Output format must be one of {', '.join(OUTPUT_FORMATS)}, got {self.output_format!r}"
            )
        return self
