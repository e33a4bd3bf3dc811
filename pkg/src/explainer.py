"""Sufficient-reason explanations of single flows."""

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from src.cubes import expand_trits, full_mask, members
from src.discretizer import DiscreteSpace, discretize_instance
from src.errors import EquivalenceError, ValidationError
from src.primes import PrimeImplicant, PrimeSet
from src.tree import TreeModel, predict
from src.utils import format_number

logger = logging.getLogger(__name__)

TRIT_CHARS = frozenset("01-")


def match_trits(encoding: str, pattern: str) -> bool:
    """True iff every non-'-' position of ``pattern`` equals ``encoding`` there.

    Raises:
        ValidationError: On a length mismatch or an illegal character.
    """
    if len(encoding) != len(pattern):
        raise ValidationError(f"Encoding has {len(encoding)} positions, pattern has {len(pattern)}")
    if not set(encoding) <= {"0", "1"}:
        raise ValidationError(f"Encoding may only contain '0' and '1': {encoding!r}")
    if not set(pattern) <= TRIT_CHARS:
        raise ValidationError(f"Pattern may only contain '0', '1' and '-': {pattern!r}")
    return all(p == "-" or p == e for e, p in zip(encoding, pattern))


def _runs(indices: Sequence[int]) -> List[Tuple[int, int]]:
    runs: List[Tuple[int, int]] = []
    for j in indices:
        if runs and runs[-1][1] == j - 1:
            runs[-1] = (runs[-1][0], j)
        else:
            runs.append((j, j))
    return runs


def _bound_clause(name: str, lower: float, upper: float) -> str:
    if math.isinf(lower):
        return f"{name} is at most {format_number(upper)}"
    if math.isinf(upper):
        return f"{name} is larger than {format_number(lower)}"
    return f"{name} is larger than {format_number(lower)} and at most {format_number(upper)}"


def render_human(prime: PrimeImplicant, space: DiscreteSpace, label: str) -> str:
    """Deterministic sentence for a prime, e.g. "if X is at most 2 and Y is at most 3 then 1".

    Free features are omitted; a non-contiguous interval set becomes a parenthesised
    disjunction.
    """
    if prime.cube.is_full(space):
        return f"any flow is {label}"
    clauses = []
    for mask, feature in zip(prime.cube.masks, space.features):
        if mask == full_mask(feature.size):
            continue
        parts = [
            _bound_clause(feature.name, feature.interval(first)[0], feature.interval(last)[1])
            for first, last in _runs(members(mask))
        ]
        clauses.append(parts[0] if len(parts) == 1 else f"({' or '.join(parts)})")
    return f"if {' and '.join(clauses)} then {label}"


@dataclass(frozen=True)
class Match:
    tau: int
    trits: str
    text: str

    def to_document(self) -> Dict[str, Any]:
        return {"tau": self.tau, "trits": self.trits, "text": self.text}


@dataclass(frozen=True)
class Explanation:
    """Why the tree decided as it did for one flow: every prime of its side that holds."""

    instance: Dict[str, float]
    decision: str
    side: str
    encoding: str
    matches: Tuple[Match, ...]

    def to_document(self) -> Dict[str, Any]:
        return {
            "decision": self.decision,
            "side": self.side,
            "encoding": self.encoding,
            "instance": dict(self.instance),
            "matches": [m.to_document() for m in self.matches],
        }

    def render_text(self) -> str:
        reasons = "reason" if len(self.matches) == 1 else "reasons"
        lines = [
            f"decision: {self.decision} ({self.side} side, {len(self.matches)} sufficient {reasons})",
            f"encoding: {self.encoding}",
        ]
        for m in self.matches:
            lines.append(f"  τ{m.tau}  {m.trits}  {m.text}")
        return "\n".join(lines) + "\n"


def check_prime_pair(primes_pos: PrimeSet, primes_neg: PrimeSet) -> None:
    """Reject prime sets that cannot back an explanation.

    Raises:
        EquivalenceError: If either side is unverified.
        ValidationError: If the sides do not belong together.
    """
    for primes in (primes_pos, primes_neg):
        if not primes.verified:
            raise EquivalenceError(f"Prime set for {primes.label!r} ({primes.side}) is not verified")
    if primes_pos.side != "positive" or primes_neg.side != "negative":
        raise ValidationError("Expected a positive and a negative prime set")
    if primes_pos.label != primes_neg.label or primes_pos.space != primes_neg.space:
        raise ValidationError("Positive and negative prime sets describe different formulas")


def explain_instance(
    instance: Mapping[str, Any],
    tree: TreeModel,
    primes_pos: PrimeSet,
    primes_neg: PrimeSet,
    space: Optional[DiscreteSpace] = None,
) -> Explanation:
    """Explain the tree's decision on one flow.

    Args:
        instance: Feature name to value.
        tree: The model whose decision is explained.
        primes_pos: Verified primes of Δ for the target label.
        primes_neg: Verified primes of ¬Δ.
        space: The space both prime sets live in; defaults to theirs.

    Returns:
        The decision, its side, the one-hot encoding and every matching prime in τ-order.

    Raises:
        ValidationError: If a feature is missing or not numeric.
        EquivalenceError: If the prime sets are unverified or no prime of the decided
            side holds for the flow.
    """
    check_prime_pair(primes_pos, primes_neg)
    space = space or primes_pos.space
    if space != primes_pos.space:
        raise ValidationError("Prime sets are defined over a different space")

    decision = predict(tree, instance)
    point = discretize_instance(instance, space)
    encoding = point.encoding()
    primes = primes_pos if decision == primes_pos.label else primes_neg

    matches = []
    for prime in primes.matching(point.indices):
        trits = next(t for t in expand_trits(prime.cube, space) if match_trits(encoding, t))
        matches.append(Match(prime.tau, trits, render_human(prime, space, primes.decision)))
    if not matches:
        raise EquivalenceError(
            f"No {primes.side} prime of {primes.label!r} holds for a flow the tree labels {decision!r}"
        )

    echo = {name: float(instance[name]) for name in space.names}
    return Explanation(echo, decision, primes.side, encoding, tuple(matches))


def explain_batch(
    instances: Sequence[Mapping[str, Any]],
    tree: TreeModel,
    primes_pos: PrimeSet,
    primes_neg: PrimeSet,
    threads: int = 1,
) -> List[Explanation]:
    """explain_instance over many flows; output order follows input order."""
    check_prime_pair(primes_pos, primes_neg)
    workers = max(1, min(threads, len(instances)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        explanations = list(pool.map(lambda row: explain_instance(row, tree, primes_pos, primes_neg), instances))
    logger.info(f"Explained {len(explanations)} flows with {workers} workers")
    return explanations
