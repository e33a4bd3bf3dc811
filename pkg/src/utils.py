"""Utility functions for the application."""

import os
import sys
import json
import math
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from src.errors import ValidationError

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)


def setup_logging(level: str = "INFO") -> None:
    """Configure root logging to standard error.

    Args:
        level: Logging level name, e.g. "INFO" or "DEBUG".
    """
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


def ensure_directory_exists(directory_path: str) -> None:
    """Ensure the specified directory exists.

    Args:
        directory_path: Path to the directory to create if it doesn't exist.
    """
    if not directory_path:
        return
    path = Path(directory_path)
    if not path.exists():
        path.mkdir(parents=True, exist_ok=True)
        logger.info(f"Created directory: {directory_path}")


def read_text(path: Optional[str]) -> str:
    """Read a UTF-8 text artifact; "-" or None reads standard input.

    Raises:
        ValidationError: If the file cannot be read.
    """
    if path in (None, "-"):
        return sys.stdin.read()
    try:
        with open(path, "r", encoding="utf-8") as f:
            return f.read()
    except OSError as e:
        raise ValidationError(f"Cannot read {path}: {e}") from e


def read_json_artifact(path: Optional[str], kind: Optional[str] = None) -> Dict[str, Any]:
    """Read a JSON artifact written by an earlier pipeline stage.

    Args:
        path: File path, or "-"/None for standard input.
        kind: Expected value of the document's "kind" field, if any.

    Returns:
        The decoded document.

    Raises:
        ValidationError: If the document is not valid JSON or has the wrong kind.
    """
    source = path if path not in (None, "-") else "<stdin>"
    text = read_text(path)
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"Invalid JSON in {source}: {e}") from e
    if kind is not None:
        if not isinstance(document, dict) or document.get("kind") != kind:
            found = document.get("kind") if isinstance(document, dict) else type(document).__name__
            raise ValidationError(f"{source}: expected a {kind} artifact, found {found!r}")
    return document


def dump_json(document: Any) -> str:
    """Serialise an artifact deterministically."""
    return json.dumps(document, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_text(text: str, path: Optional[str] = None) -> None:
    """Write text to a file, or to standard output when path is None or "-".

    Raises:
        ValidationError: If the file cannot be written.
    """
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        ensure_directory_exists(os.path.dirname(path))
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    except OSError as e:
        raise ValidationError(f"Cannot write {path}: {e}") from e
    logger.info(f"Wrote {path}")


def format_number(value: float) -> str:
    """Shortest round-trip decimal, without a trailing ".0" on integral values."""
    if math.isinf(value):
        return "+inf" if value > 0 else "-inf"
    if float(value).is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(float(value))


def bound_to_json(value: float) -> Optional[float]:
    """Encode an interval bound; infinities become null."""
    return None if math.isinf(value) else float(value)


def bound_from_json(value: Any, lower: bool) -> float:
    """Decode an interval bound written by bound_to_json.

    Raises:
        ValidationError: If the value is neither null nor a finite number.
    """
    if value is None:
        return -math.inf if lower else math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValidationError(f"Bound must be a finite number or null, got {value!r}")
    return float(value)
