import json
import itertools
from pathlib import Path
from typing import Dict, Iterator, List, Tuple

import numpy as np
import pytest

from src.discretizer import DiscreteSpace, FeatureIntervals
from src.pipeline import primes_for_tree
from src.tree import TreeModel, load_tree

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

IDS_TARGET = "DDoS-LOIC-HTTP"


def fixture_path(name: str) -> str:
    return str(FIXTURES / name)


def load_fixture_json(name: str):
    with open(FIXTURES / name, "r", encoding="utf-8") as f:
        return json.load(f)


@pytest.fixture
def demo_tree() -> TreeModel:
    return load_tree(load_fixture_json("demo_tree.json"))


@pytest.fixture(scope="session")
def ids_tree() -> TreeModel:
    return load_tree(load_fixture_json("ids2018_tree.json"))


@pytest.fixture(scope="session")
def ids_primes(ids_tree):
    return primes_for_tree(ids_tree, IDS_TARGET)


def representative_values(feature: FeatureIntervals) -> List[float]:
    """One value strictly inside each interval: its upper bound, or lower + 1 for the last."""
    values = []
    for j in range(feature.size):
        lower, upper = feature.interval(j)
        if np.isfinite(upper):
            values.append(upper)
        elif np.isfinite(lower):
            values.append(lower + 1)
        else:
            values.append(0.0)
    return values


def feasible_instances(space: DiscreteSpace) -> Iterator[Tuple[Tuple[int, ...], Dict[str, float]]]:
    """Every feasible point of a space with a feature vector that lands on it."""
    per_feature = [list(enumerate(representative_values(f))) for f in space.features]
    for combo in itertools.product(*per_feature):
        indices = tuple(j for j, _ in combo)
        instance = {f.name: value for f, (_, value) in zip(space.features, combo)}
        yield indices, instance


def random_tree(
    rng: np.random.Generator,
    max_features: int = 6,
    max_intervals: int = 4,
    max_depth: int = 5,
    classes: Tuple[str, ...] = ("0", "1"),
) -> TreeModel:
    """Random threshold tree whose features each use at most ``max_intervals`` intervals."""
    count = int(rng.integers(1, max_features + 1))
    features = [f"f{i}" for i in range(count)]
    grids = {
        name: sorted(rng.choice(np.arange(1, 40), size=int(rng.integers(1, max_intervals)), replace=False).tolist())
        for name in features
    }
    nodes: List[dict] = []

    def build(bounds: Dict[str, Tuple[float, float]], depth: int) -> int:
        index = len(nodes)
        nodes.append({})
        options = [
            (name, t) for name in features for t in grids[name]
            if bounds[name][0] < t < bounds[name][1]
        ]
        if depth >= max_depth or not options or rng.random() < 0.25:
            nodes[index] = {"kind": "leaf", "label": str(rng.choice(classes))}
            return index
        name, threshold = options[int(rng.integers(len(options)))]
        lower, upper = bounds[name]
        left = build({**bounds, name: (lower, threshold)}, depth + 1)
        right = build({**bounds, name: (threshold, upper)}, depth + 1)
        nodes[index] = {"kind": "internal", "feature": name, "threshold": float(threshold), "left": left, "right": right}
        return index

    build({name: (-np.inf, np.inf) for name in features}, 0)
    return load_tree({"features": features, "classes": list(classes), "nodes": nodes, "root": 0})


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240501)
