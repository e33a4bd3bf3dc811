"""Pipeline stages and their JSON artifacts.

Each stage is a function of its declared inputs; the CLI wires them to files or pipes.
tree -> rules -> space (map, combine, merge) -> dnf -> primes (Δ and ¬Δ) -> explain/evaluate
"""

import math
import logging
from dataclasses import replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from src.cubes import Dnf, compile_rules, complement, load_dnf, render_trits
from src.discretizer import (
    DiscreteSpace,
    combine_spaces,
    load_space,
    map_features,
    merge_intervals,
    rules_from_space_artifact,
    space_artifact,
)
from src.errors import ValidationError
from src.explainer import render_human
from src.primes import PrimeSet, load_primeset, mark_verified, minimal_cover, prime_implicants
from src.tree import RuleSet, TreeModel, extract_rules, load_ruleset, load_tree
from src.utils import format_number, read_json_artifact, read_text

logger = logging.getLogger(__name__)


def read_tree(path: str) -> TreeModel:
    """Load a tree document from a file; path context is added to load errors."""
    try:
        return load_tree(read_text(path))
    except ValidationError as e:
        raise ValidationError(f"{path}: {e}") from e


def read_rules(path: Optional[str]) -> RuleSet:
    return load_ruleset(read_json_artifact(path, "ruleset"))


def read_space(path: Optional[str]) -> Tuple[DiscreteSpace, Optional[RuleSet]]:
    document = read_json_artifact(path, "space")
    return load_space(document), rules_from_space_artifact(document)


def read_dnf(path: Optional[str]) -> Tuple[Dnf, Tuple[str, ...]]:
    """Load a dnf artifact and the class list of the model it was compiled from."""
    document = read_json_artifact(path, "dnf")
    return load_dnf(document), tuple(str(c) for c in document.get("classes", ()))


def dnf_artifact(dnf: Dnf, classes: Sequence[str] = ()) -> Dict[str, Any]:
    document = dnf.to_document()
    document["classes"] = list(classes)
    return document


def check_label(label: str, classes: Sequence[str]) -> str:
    if label not in classes:
        raise ValidationError(f"Unknown label {label!r}; classes are {', '.join(classes)}")
    return label


def negative_decision(label: str, classes: Sequence[str]) -> str:
    """Class text concluded by ¬Δ: the other class of a binary model, "not L" otherwise."""
    others = [c for c in classes if c != label]
    return others[0] if len(others) == 1 else f"not {label}"


def discretize(
    rules: RuleSet,
    combine: Sequence[DiscreteSpace] = (),
    label: Optional[str] = None,
) -> Tuple[DiscreteSpace, RuleSet]:
    """Map, optionally Combine with other models' spaces, then Merge.

    With ``label`` the merge only has to keep that label's rules exact, and the returned
    rules are that label's rules.
    """
    space = map_features(rules)
    for other in combine:
        space = combine_spaces(space, other)
    if label is not None:
        rules = rules.for_label(check_label(label, rules.classes))
    return merge_intervals(space, rules)


def compute_primes(
    dnf: Dnf,
    classes: Sequence[str] = (),
    budget: Optional[int] = None,
    threads: int = 1,
    heuristic: bool = False,
    verify: bool = False,
    minimal: bool = False,
) -> Tuple[PrimeSet, PrimeSet]:
    """Primes of Δ and of ¬Δ for one compiled label.

    Raises:
        CapacityError: Above budget without heuristic mode.
        EquivalenceError: If verification finds a prime set that is not an exact cover.
    """
    if dnf.negated:
        raise ValidationError("Expected the positive formula of a label, got a complement")
    negated = complement(dnf, budget, threads, structural=heuristic)
    positive = prime_implicants(dnf, budget, threads, heuristic)
    negative = prime_implicants(negated, budget, threads, heuristic)
    if classes:
        negative = replace(negative, decision=negative_decision(dnf.label, classes))

    if minimal:
        positive = minimal_cover(positive, dnf, budget)
        negative = minimal_cover(negative, negated, budget)
    elif verify:
        positive = mark_verified(positive, dnf, budget, threads)
        negative = mark_verified(negative, negated, budget, threads)
    return positive, negative


def _primeset_document(primes: PrimeSet) -> Dict[str, Any]:
    document = primes.to_document()
    for entry, prime in zip(document["primes"], primes.primes):
        entry["text"] = render_human(prime, primes.space, primes.decision)
    return document


def primes_artifact(positive: PrimeSet, negative: PrimeSet) -> Dict[str, Any]:
    return {
        "kind": "primes",
        "label": positive.label,
        "space": positive.space.to_document(),
        "positive": _primeset_document(positive),
        "negative": _primeset_document(negative),
    }


def load_primes_artifact(document: Mapping[str, Any]) -> Tuple[PrimeSet, PrimeSet]:
    """Decode both sides of a primes artifact.

    Raises:
        ValidationError: If the artifact is malformed.
    """
    try:
        label = str(document["label"])
        space = load_space(document["space"])
        positive = load_primeset(document["positive"], label, space)
        negative = load_primeset(document["negative"], label, space)
    except (KeyError, TypeError) as e:
        raise ValidationError(f"Malformed primes artifact: {e}") from e
    if positive.side != "positive" or negative.side != "negative":
        raise ValidationError("Malformed primes artifact: sides are swapped")
    return positive, negative


def read_primes(path: Optional[str]) -> Tuple[PrimeSet, PrimeSet]:
    return load_primes_artifact(read_json_artifact(path, "primes"))


def primes_for_tree(
    tree: TreeModel,
    label: str,
    budget: Optional[int] = None,
    threads: int = 1,
    heuristic: bool = False,
    minimal: bool = False,
) -> Tuple[PrimeSet, PrimeSet]:
    """Whole chain from a tree to verified prime sets of one label.

    Goes through the same artifacts as the staged commands so that both routes produce
    identical prime sets.
    """
    check_label(label, tree.classes)
    rules = extract_rules(tree)
    space, label_rules = discretize(rules, label=label)
    space, label_rules = load_space(space_artifact(space, label_rules)), load_ruleset(label_rules.to_document())
    dnf = compile_rules(label_rules, space, label)
    positive, negative = compute_primes(
        dnf, tree.classes, budget, threads, heuristic=heuristic, verify=True, minimal=minimal
    )
    return load_primes_artifact(primes_artifact(positive, negative))


def parse_flow(text: str) -> Dict[str, float]:
    """Parse "name=value,name=value" into a feature vector.

    Raises:
        ValidationError: On a malformed pair or a non-numeric value.
    """
    instance: Dict[str, float] = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        name, sep, value = item.partition("=")
        if not sep or not name.strip():
            raise ValidationError(f"Malformed flow field {item!r}; expected name=value")
        try:
            number = float(value)
        except ValueError as e:
            raise ValidationError(f"Flow field {name.strip()!r} is not a number: {value!r}") from e
        if not math.isfinite(number):
            raise ValidationError(f"Flow field {name.strip()!r} is not finite: {value!r}")
        instance[name.strip()] = number
    if not instance:
        raise ValidationError("Empty flow: expected name=value pairs")
    return instance


def _bounds_text(lower: float, upper: float) -> str:
    lo = "-inf" if math.isinf(lower) else format_number(lower)
    hi = "+inf)" if math.isinf(upper) else f"{format_number(upper)}]"
    return f"({lo}, {hi}"


def render_rules(rules: RuleSet) -> str:
    lines = []
    for position, rule in enumerate(rules, start=1):
        parts = [f"{name} in {_bounds_text(lo, hi)}" for name, (lo, hi) in rule.constraints.items()]
        lines.append(f"rule {position}: {' and '.join(parts) or 'always'} -> {rule.label}")
    return "\n".join(lines) + "\n"


def render_space(space: DiscreteSpace) -> str:
    lines = [f"{space.variable_count} variables, {space.point_count} feasible points"]
    for feature in space.features:
        intervals = ", ".join(feature.describe(j) for j in range(feature.size))
        lines.append(f"{feature.symbol} {feature.name}: {intervals}")
    return "\n".join(lines) + "\n"


def render_dnf(dnf: Dnf) -> str:
    lines = [f"{dnf.side} formula for {dnf.label!r}: {len(dnf.cubes)} cubes"]
    lines.extend(render_trits(cube, dnf.space) for cube in dnf.cubes)
    return "\n".join(lines) + "\n"


def select_sides(positive: PrimeSet, negative: PrimeSet, side: str) -> List[PrimeSet]:
    if side == "positive":
        return [positive]
    if side == "negative":
        return [negative]
    return [positive, negative]
