"""Map, Combine and Merge: interval partitions of continuous features.

A feature with thresholds t1 < ... < tk owns k+1 intervals
(-inf, t1], (t1, t2], ..., (tk, +inf); interval j is one boolean variable and the
intervals of one feature form a one-hot group.
"""

import math
import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from src.errors import ValidationError
from src.tree import Rule, RuleSet, load_ruleset
from src.utils import format_number

logger = logging.getLogger(__name__)


def feature_symbol(position: int) -> str:
    """Spreadsheet-style letter for a feature position: a..z, aa, ab, ..."""
    letters = ""
    position += 1
    while position:
        position, rest = divmod(position - 1, 26)
        letters = chr(ord("a") + rest) + letters
    return letters


@dataclass(frozen=True)
class FeatureIntervals:
    """Ordered interval partition of one feature.

    ``provenance[j]`` lists the 1-based indices of the map-stage intervals that were
    merged into interval j.
    """

    name: str
    thresholds: Tuple[float, ...]
    symbol: str
    provenance: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        for value in self.thresholds:
            if not math.isfinite(value):
                raise ValidationError(f"{self.name}: thresholds must be finite, got {value}")
        if any(a >= b for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValidationError(f"{self.name}: thresholds must be strictly increasing")
        if len(self.provenance) != len(self.thresholds) + 1:
            raise ValidationError(f"{self.name}: provenance must list one entry per interval")

    @classmethod
    def fresh(cls, name: str, thresholds: Iterable[float], symbol: str) -> "FeatureIntervals":
        ordered = tuple(sorted(set(float(t) for t in thresholds)))
        return cls(name, ordered, symbol, tuple((j + 1,) for j in range(len(ordered) + 1)))

    @property
    def size(self) -> int:
        return len(self.thresholds) + 1

    def interval(self, j: int) -> Tuple[float, float]:
        lower = self.thresholds[j - 1] if j > 0 else -math.inf
        upper = self.thresholds[j] if j < len(self.thresholds) else math.inf
        return lower, upper

    def variable(self, j: int) -> str:
        members = self.provenance[j]
        if len(members) == 1:
            return f"{self.symbol}{members[0]}"
        return f"{self.symbol}{members[0]}-{members[-1]}"

    def describe(self, j: int) -> str:
        lower, upper = self.interval(j)
        lo = "-inf" if math.isinf(lower) else format_number(lower)
        hi = "+inf)" if math.isinf(upper) else f"{format_number(upper)}]"
        return f"{self.variable(j)}: ({lo}, {hi}"

    def locate(self, value: float) -> int:
        """Interval holding ``value``; a value equal to a threshold goes low."""
        return int(np.searchsorted(self.thresholds, value, side="left"))

    def covered(self, lower: float, upper: float) -> List[int]:
        """Indices of the intervals inside (lower, upper].

        Raises:
            ValidationError: If a finite bound is not a threshold of this feature.
        """
        for bound in (lower, upper):
            if math.isfinite(bound) and bound not in self.thresholds:
                raise ValidationError(f"{self.name}: bound {format_number(bound)} is not a threshold of the space")
        first = 0 if math.isinf(lower) else self.thresholds.index(lower) + 1
        last = len(self.thresholds) if math.isinf(upper) else self.thresholds.index(upper)
        return list(range(first, last + 1))

    def to_document(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "symbol": self.symbol,
            "thresholds": list(self.thresholds),
            "variables": [self.variable(j) for j in range(self.size)],
            "intervals": [self.describe(j) for j in range(self.size)],
            "provenance": [list(p) for p in self.provenance],
        }


@dataclass(frozen=True)
class DiscreteSpace:
    """Per-feature interval partitions in declared order. Immutable."""

    features: Tuple[FeatureIntervals, ...]

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(f.size for f in self.features)

    @property
    def variable_count(self) -> int:
        return sum(self.sizes)

    @property
    def point_count(self) -> int:
        """Number of feasible points: the product of group sizes, never 2**n."""
        return math.prod(self.sizes)

    def index(self, name: str) -> int:
        for position, feature in enumerate(self.features):
            if feature.name == name:
                return position
        raise ValidationError(f"Feature {name!r} is not part of the space")

    def feature(self, name: str) -> FeatureIntervals:
        return self.features[self.index(name)]

    def variables(self) -> List[str]:
        return [f.variable(j) for f in self.features for j in range(f.size)]

    def to_document(self) -> Dict[str, Any]:
        return {"kind": "space", "features": [f.to_document() for f in self.features]}


@dataclass(frozen=True)
class DiscretePoint:
    """One interval index per feature of ``space`` (exactly one per one-hot group)."""

    space: DiscreteSpace
    indices: Tuple[int, ...]

    def encoding(self) -> str:
        """One-hot rendering in declared feature order, intervals ascending."""
        groups = []
        for feature, index in zip(self.space.features, self.indices):
            bits = ["0"] * feature.size
            bits[index] = "1"
            groups.append("".join(bits))
        return "".join(groups)


def map_features(rules: RuleSet) -> DiscreteSpace:
    """Map: partition each constrained feature at every finite bound used by any rule.

    Features no rule constrains are left out of the space.

    Raises:
        ValidationError: If the rule set is empty.
    """
    if not len(rules):
        raise ValidationError("Cannot map an empty rule set")

    values: Dict[str, set] = {}
    for rule in rules:
        for name, (lower, upper) in rule.constraints.items():
            bucket = values.setdefault(name, set())
            bucket.update(b for b in (lower, upper) if math.isfinite(b))

    order = [name for name in rules.features if name in values]
    space = DiscreteSpace(tuple(
        FeatureIntervals.fresh(name, values[name], feature_symbol(position))
        for position, name in enumerate(order)
    ))
    logger.info(
        f"Mapped {len(rules)} rules onto {len(space.features)} features, "
        f"{space.variable_count} variables, {space.point_count} feasible points"
    )
    return space


def combine_spaces(a: DiscreteSpace, b: DiscreteSpace) -> DiscreteSpace:
    """Combine: union the threshold sets of two models' spaces.

    Declared order is a's features followed by b's novel ones; merge provenance is reset.
    """
    thresholds: Dict[str, set] = {}
    order: List[str] = []
    for space in (a, b):
        for feature in space.features:
            if feature.name not in thresholds:
                order.append(feature.name)
                thresholds[feature.name] = set()
            thresholds[feature.name].update(feature.thresholds)

    combined = DiscreteSpace(tuple(
        FeatureIntervals.fresh(name, thresholds[name], feature_symbol(position))
        for position, name in enumerate(order)
    ))
    logger.debug(f"Combined spaces into {len(order)} features, {combined.variable_count} variables")
    return combined


def _check_rules_against(space: DiscreteSpace, rules: RuleSet) -> None:
    for position, rule in enumerate(rules):
        for name, (lower, upper) in rule.constraints.items():
            if name not in space.names:
                raise ValidationError(f"Rule {position} constrains {name!r}, which the space does not partition")
            space.feature(name).covered(lower, upper)


def _distinguishes(rule: Rule, name: str, first: Tuple[float, float], second: Tuple[float, float]) -> bool:
    if name not in rule.constraints:
        return False
    lower, upper = rule.constraints[name]

    def inside(interval: Tuple[float, float]) -> bool:
        return lower <= interval[0] and interval[1] <= upper

    return inside(first) != inside(second)


def merge_intervals(space: DiscreteSpace, rules: RuleSet) -> Tuple[DiscreteSpace, RuleSet]:
    """Merge: coalesce adjacent intervals that no rule tells apart, to a fixed point.

    Intervals (v1, v2] and (v2, v3] merge into (v1, v3] when every rule's interval on
    that feature contains both or neither of them.

    Args:
        space: The mapped (or combined) space.
        rules: The rules the reduced space must still express exactly.

    Returns:
        The reduced space and the rules rewritten onto it.

    Raises:
        ValidationError: If a rule bound is not a threshold of the space.
    """
    _check_rules_against(space, rules)

    reduced = []
    for feature in space.features:
        cells = [(feature.interval(j), feature.provenance[j]) for j in range(feature.size)]
        changed = True
        while changed:
            changed = False
            for i in range(len(cells) - 1):
                (first, p1), (second, p2) = cells[i], cells[i + 1]
                if any(_distinguishes(rule, feature.name, first, second) for rule in rules):
                    continue
                merged = ((first[0], second[1]), p1 + p2)
                logger.debug(f"Merging {feature.name} {first} and {second}")
                cells[i:i + 2] = [merged]
                changed = True
                break
        thresholds = tuple(interval[1] for interval, _ in cells[:-1])
        reduced.append(FeatureIntervals(feature.name, thresholds, feature.symbol, tuple(p for _, p in cells)))

    merged_space = DiscreteSpace(tuple(reduced))
    rewritten = RuleSet(rules.features, rules.classes, tuple(
        Rule(constraints=dict(rule.constraints), label=rule.label) for rule in rules
    ))
    _check_rules_against(merged_space, rewritten)

    removed = space.variable_count - merged_space.variable_count
    logger.info(
        f"Merge removed {removed} variables: {space.variable_count} -> {merged_space.variable_count}, "
        f"{merged_space.point_count} feasible points"
    )
    return merged_space, rewritten


def _feature_value(instance: Mapping[str, Any], name: str) -> float:
    try:
        value = float(instance[name])
    except KeyError as e:
        raise ValidationError(f"Missing value for feature {name!r}") from e
    except (TypeError, ValueError) as e:
        raise ValidationError(f"Feature {name!r} is not numeric: {instance[name]!r}") from e
    if not math.isfinite(value):
        raise ValidationError(f"Feature {name!r} has a non-finite value {value}")
    return value


def discretize_instance(instance: Mapping[str, Any], space: DiscreteSpace) -> DiscretePoint:
    """Map a feature vector to the interval it occupies in every group.

    Raises:
        ValidationError: If a feature of the space is missing or non-finite.
    """
    indices = tuple(f.locate(_feature_value(instance, f.name)) for f in space.features)
    return DiscretePoint(space, indices)


def discretize_frame(frame: pd.DataFrame, space: DiscreteSpace) -> np.ndarray:
    """Vectorised discretize_instance over every row of a frame.

    Returns:
        An (rows, features) integer array of interval indices.
    """
    columns = []
    for feature in space.features:
        if feature.name not in frame.columns:
            raise ValidationError(f"Missing value for feature {feature.name!r}")
        values = frame[feature.name].to_numpy(dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValidationError(f"Feature {feature.name!r} has non-finite values")
        columns.append(np.searchsorted(np.asarray(feature.thresholds, dtype=float), values, side="left"))
    if not columns:
        return np.zeros((len(frame), 0), dtype=np.int64)
    return np.stack(columns, axis=1).astype(np.int64)


def load_space(document: Mapping[str, Any]) -> DiscreteSpace:
    """Decode a space artifact (the "ruleset" payload, if any, is ignored here).

    Raises:
        ValidationError: If the artifact is malformed.
    """
    try:
        features = []
        for raw in document["features"]:
            thresholds = tuple(float(t) for t in raw["thresholds"])
            provenance = raw.get("provenance")
            if provenance is None:
                provenance = [[j + 1] for j in range(len(thresholds) + 1)]
            features.append(FeatureIntervals(
                name=str(raw["name"]),
                thresholds=thresholds,
                symbol=str(raw.get("symbol") or feature_symbol(len(features))),
                provenance=tuple(tuple(int(i) for i in p) for p in provenance),
            ))
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ValidationError):
            raise
        raise ValidationError(f"Malformed space artifact: {e}") from e
    names = [f.name for f in features]
    if len(set(names)) != len(names):
        raise ValidationError("Malformed space artifact: duplicate feature names")
    return DiscreteSpace(tuple(features))


def space_artifact(space: DiscreteSpace, rules: Optional[RuleSet] = None) -> Dict[str, Any]:
    """Space document, optionally carrying the rules rewritten onto it."""
    document = space.to_document()
    if rules is not None:
        document["ruleset"] = rules.to_document()
    return document


def rules_from_space_artifact(document: Mapping[str, Any]) -> Optional[RuleSet]:
    payload = document.get("ruleset")
    return load_ruleset(payload) if payload else None
