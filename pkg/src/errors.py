"""Exception hierarchy shared by every pipeline stage."""


class MnmError(Exception):
    """Base class for all errors raised by the rule-extraction pipeline."""

    exit_code = 1


class ValidationError(MnmError, ValueError):
    """Malformed input: tree documents, rule sets, spaces, flow CSVs or flags."""

    exit_code = 1


class CapacityError(MnmError, RuntimeError):
    """An exact computation would exceed the configured enumeration budget."""

    exit_code = 2


class EquivalenceError(MnmError, RuntimeError):
    """The prime-implicant classifier is unverified or disagrees with the tree."""

    exit_code = 1


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the CLI exit status.

    Args:
        error: The exception that stopped the command.

    Returns:
        2 for capacity refusals, 1 for everything else.
    """
    if isinstance(error, MnmError):
        return error.exit_code
    return 1
