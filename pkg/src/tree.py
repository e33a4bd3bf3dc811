"""Decision-tree ingestion: the interchange format, decision paths and interval rules.

Internal nodes test ``feature <= threshold``; the true branch is ``left``.
"""

import json
import math
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import ValidationError
from src.utils import bound_from_json, bound_to_json

logger = logging.getLogger(__name__)

INTERNAL = "internal"
LEAF = "leaf"

Interval = Tuple[float, float]


@dataclass(frozen=True)
class TreeNode:
    kind: str
    feature: Optional[str] = None
    threshold: Optional[float] = None
    left: Optional[int] = None
    right: Optional[int] = None
    label: Optional[str] = None

    @property
    def is_leaf(self) -> bool:
        return self.kind == LEAF

    def to_document(self) -> Dict[str, Any]:
        if self.is_leaf:
            return {"kind": LEAF, "label": self.label}
        return {
            "kind": INTERNAL,
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
        }


@dataclass(frozen=True)
class TreeModel:
    """A validated binary threshold tree. Immutable after load."""

    features: Tuple[str, ...]
    classes: Tuple[str, ...]
    nodes: Tuple[TreeNode, ...]
    root: int

    @property
    def leaf_count(self) -> int:
        return sum(1 for node in self.nodes if node.is_leaf)

    def tested_features(self) -> List[str]:
        """Features referenced by internal nodes, in declared order."""
        used = {node.feature for node in self.nodes if not node.is_leaf}
        return [name for name in self.features if name in used]

    def to_document(self) -> Dict[str, Any]:
        return {
            "features": list(self.features),
            "classes": list(self.classes),
            "nodes": [node.to_document() for node in self.nodes],
            "root": self.root,
        }


@dataclass(frozen=True)
class DecisionPath:
    """Root-to-leaf walk: (node index, took the true branch) per internal node."""

    steps: Tuple[Tuple[int, bool], ...]
    leaf: int
    label: str


@dataclass(frozen=True)
class Rule:
    """Per-feature (lower, upper] constraints plus a class label.

    Features absent from ``constraints`` are unconstrained.
    """

    constraints: Dict[str, Interval] = field(hash=False)
    label: str

    def accepts(self, instance: Mapping[str, float]) -> bool:
        for name, (lower, upper) in self.constraints.items():
            value = instance[name]
            if not (lower < value <= upper):
                return False
        return True

    def to_document(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "constraints": {
                name: [bound_to_json(lower), bound_to_json(upper)]
                for name, (lower, upper) in self.constraints.items()
            },
        }


@dataclass(frozen=True)
class RuleSet:
    """The rules of one tree, one per decision path."""

    features: Tuple[str, ...]
    classes: Tuple[str, ...]
    rules: Tuple[Rule, ...]

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def for_label(self, label: str) -> "RuleSet":
        """Rules whose label is ``label`` (one-vs-rest positive side)."""
        return RuleSet(self.features, self.classes, tuple(r for r in self.rules if r.label == label))

    def to_document(self) -> Dict[str, Any]:
        return {
            "kind": "ruleset",
            "features": list(self.features),
            "classes": list(self.classes),
            "rules": [rule.to_document() for rule in self.rules],
        }


def _parse_document(document: Union[str, Mapping[str, Any]]) -> Mapping[str, Any]:
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise ValidationError(f"Malformed tree document: {e}") from e
    if not isinstance(document, Mapping):
        raise ValidationError("Malformed tree document: top level must be an object")
    return document


def _name_list(document: Mapping[str, Any], key: str) -> Tuple[str, ...]:
    values = document.get(key)
    if not isinstance(values, list):
        raise ValidationError(f"Malformed tree document: '{key}' must be a list")
    names = tuple(str(v) for v in values)
    if len(set(names)) != len(names):
        raise ValidationError(f"Malformed tree document: duplicate entries in '{key}'")
    return names


def _parse_node(index: int, raw: Any, features: Sequence[str], classes: Sequence[str], count: int) -> TreeNode:
    if not isinstance(raw, Mapping):
        raise ValidationError(f"Node {index}: must be an object")
    kind = raw.get("kind")
    if kind == LEAF:
        if "label" not in raw:
            raise ValidationError(f"Node {index}: leaf without a label")
        label = str(raw["label"])
        if label not in classes:
            raise ValidationError(f"Node {index}: label {label!r} is not one of the declared classes")
        return TreeNode(kind=LEAF, label=label)
    if kind != INTERNAL:
        raise ValidationError(f"Node {index}: unknown node kind {kind!r}")

    feature = raw.get("feature")
    if feature not in features:
        raise ValidationError(f"Node {index}: unknown feature {feature!r}")
    threshold = raw.get("threshold")
    if isinstance(threshold, bool) or not isinstance(threshold, (int, float)) or not math.isfinite(threshold):
        raise ValidationError(f"Node {index}: threshold must be a finite number, got {threshold!r}")
    children = []
    for side in ("left", "right"):
        child = raw.get(side)
        if isinstance(child, bool) or not isinstance(child, int) or not 0 <= child < count:
            raise ValidationError(f"Node {index}: dangling {side} child reference {child!r}")
        children.append(child)
    return TreeNode(kind=INTERNAL, feature=feature, threshold=float(threshold), left=children[0], right=children[1])


def _check_shape(nodes: Sequence[TreeNode], root: int) -> None:
    """Single rooted binary tree: no cycles, one parent per non-root node, all reachable."""
    parents = [0] * len(nodes)
    for node in nodes:
        if not node.is_leaf:
            parents[node.left] += 1
            parents[node.right] += 1
    if parents[root] != 0:
        raise ValidationError(f"Root node {root} has a parent")
    for index, count in enumerate(parents):
        if index != root and count != 1:
            raise ValidationError(f"Node {index} has {count} parents; expected exactly one")

    seen = set()
    stack = [root]
    while stack:
        index = stack.pop()
        if index in seen:
            raise ValidationError(f"Cycle through node {index}")
        seen.add(index)
        node = nodes[index]
        if not node.is_leaf:
            stack.extend((node.left, node.right))
    if len(seen) != len(nodes):
        raise ValidationError(f"{len(nodes) - len(seen)} node(s) unreachable from the root")


def load_tree(document: Union[str, Mapping[str, Any]]) -> TreeModel:
    """Load and validate a tree from the interchange format.

    Args:
        document: JSON text or an already decoded mapping with keys
            "features", "classes", "nodes" and "root".

    Returns:
        The validated TreeModel, feature order preserved.

    Raises:
        ValidationError: On malformed documents, dangling child references,
            unknown features or labels, and empty trees.
    """
    document = _parse_document(document)
    features = _name_list(document, "features")
    classes = _name_list(document, "classes")
    raw_nodes = document.get("nodes")
    if not isinstance(raw_nodes, list):
        raise ValidationError("Malformed tree document: 'nodes' must be a list")
    if not raw_nodes:
        raise ValidationError("Empty tree: no nodes")

    nodes = tuple(_parse_node(i, raw, features, classes, len(raw_nodes)) for i, raw in enumerate(raw_nodes))
    root = document.get("root", 0)
    if isinstance(root, bool) or not isinstance(root, int) or not 0 <= root < len(nodes):
        raise ValidationError(f"Root reference {root!r} is out of range")
    _check_shape(nodes, root)

    model = TreeModel(features=features, classes=classes, nodes=nodes, root=root)
    logger.debug(f"Loaded tree: {len(nodes)} nodes, {model.leaf_count} leaves, {len(features)} features")
    return model


def extract_paths(model: TreeModel) -> List[DecisionPath]:
    """One decision path per leaf, true branches first."""
    paths = []
    stack: List[Tuple[int, Tuple[Tuple[int, bool], ...]]] = [(model.root, ())]
    while stack:
        index, steps = stack.pop()
        node = model.nodes[index]
        if node.is_leaf:
            paths.append(DecisionPath(steps=steps, leaf=index, label=node.label))
            continue
        # right pushed first so the true branch is walked first
        stack.append((node.right, steps + ((index, False),)))
        stack.append((node.left, steps + ((index, True),)))
    return paths


def path_to_rule(path: DecisionPath, model: TreeModel) -> Rule:
    """Normalise a decision path into per-feature (lower, upper] bounds.

    Raises:
        ValidationError: If the path does not belong to the model, or a feature's
            bounds become empty (lower >= upper), which signals a malformed tree.
    """
    bounds: Dict[str, List[float]] = {}
    expected = model.root
    for index, took_true in path.steps:
        if index != expected:
            raise ValidationError(f"Path step {index} does not follow a parent-child edge")
        node = model.nodes[index]
        if node.is_leaf:
            raise ValidationError(f"Path passes through leaf {index} before its end")
        lower, upper = bounds.setdefault(node.feature, [-math.inf, math.inf])
        if took_true:
            upper = min(upper, node.threshold)
            expected = node.left
        else:
            lower = max(lower, node.threshold)
            expected = node.right
        if lower >= upper:
            raise ValidationError(
                f"Contradictory path to leaf {path.leaf}: {node.feature} must be > {lower} and <= {upper}"
            )
        bounds[node.feature] = [lower, upper]
    if expected != path.leaf or not model.nodes[path.leaf].is_leaf:
        raise ValidationError(f"Path does not end at leaf {path.leaf}")

    ordered = {name: (bounds[name][0], bounds[name][1]) for name in model.features if name in bounds}
    return Rule(constraints=ordered, label=path.label)


def extract_rules(model: TreeModel) -> RuleSet:
    """All rules of a tree, in decision-path order."""
    rules = tuple(path_to_rule(path, model) for path in extract_paths(model))
    logger.info(f"Extracted {len(rules)} rules from a tree with {model.leaf_count} leaves")
    return RuleSet(features=model.features, classes=model.classes, rules=rules)


def load_ruleset(document: Mapping[str, Any]) -> RuleSet:
    """Decode a ruleset artifact.

    Raises:
        ValidationError: If the artifact is malformed or a rule has lower >= upper.
    """
    try:
        features = tuple(str(f) for f in document["features"])
        classes = tuple(str(c) for c in document["classes"])
        rules = []
        for position, raw in enumerate(document["rules"]):
            label = str(raw["label"])
            constraints = {}
            for name, (lower, upper) in raw["constraints"].items():
                if name not in features:
                    raise ValidationError(f"Rule {position}: unknown feature {name!r}")
                lo = bound_from_json(lower, lower=True)
                hi = bound_from_json(upper, lower=False)
                if lo >= hi:
                    raise ValidationError(f"Rule {position}: empty interval for {name}")
                constraints[name] = (lo, hi)
            rules.append(Rule(constraints=constraints, label=label))
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ValidationError):
            raise
        raise ValidationError(f"Malformed ruleset artifact: {e}") from e
    return RuleSet(features=features, classes=classes, rules=tuple(rules))


def _value(instance: Mapping[str, float], name: str) -> float:
    try:
        value = float(instance[name])
    except KeyError as e:
        raise ValidationError(f"Missing value for feature {name!r}") from e
    except (TypeError, ValueError) as e:
        raise ValidationError(f"Feature {name!r} is not numeric: {instance[name]!r}") from e
    if math.isnan(value):
        raise ValidationError(f"Missing value for feature {name!r} (NaN)")
    return value


def predict(model: TreeModel, instance: Mapping[str, float]) -> str:
    """Classify one instance: take the true branch iff value <= threshold.

    Raises:
        ValidationError: If a tested feature has no value.
    """
    node = model.nodes[model.root]
    while not node.is_leaf:
        if _value(instance, node.feature) <= node.threshold:
            node = model.nodes[node.left]
        else:
            node = model.nodes[node.right]
    return node.label


def tree_from_sklearn(clf: Any, feature_names: Sequence[str], class_names: Optional[Sequence[Any]] = None) -> TreeModel:
    """Export a fitted scikit-learn DecisionTreeClassifier to a TreeModel.

    Class-probability leaves are resolved to their argmax class.

    Args:
        clf: A fitted ``sklearn.tree.DecisionTreeClassifier``.
        feature_names: Names of the columns the classifier was fitted on.
        class_names: Labels in ``clf.classes_`` order; defaults to ``clf.classes_``.

    Returns:
        The equivalent TreeModel.
    """
    tree_ = clf.tree_
    classes = [str(c) for c in (class_names if class_names is not None else clf.classes_)]
    nodes = []
    for index in range(tree_.node_count):
        left = int(tree_.children_left[index])
        right = int(tree_.children_right[index])
        if left == right:  # leaf
            nodes.append({"kind": LEAF, "label": classes[int(np.argmax(tree_.value[index][0]))]})
        else:
            nodes.append({
                "kind": INTERNAL,
                "feature": str(feature_names[int(tree_.feature[index])]),
                "threshold": float(tree_.threshold[index]),
                "left": left,
                "right": right,
            })
    return load_tree({"features": list(feature_names), "classes": classes, "nodes": nodes, "root": 0})
