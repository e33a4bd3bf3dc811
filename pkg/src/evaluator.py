"""Flow CSV ingestion and tree-versus-prime-classifier evaluation."""

import re
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix

from src.config import SchemaConfig
from src.discretizer import DiscreteSpace, discretize_frame
from src.errors import EquivalenceError, ValidationError
from src.explainer import check_prime_pair
from src.primes import PrimeSet
from src.tree import TreeModel, predict

logger = logging.getLogger(__name__)


def normalise_header(name: str, aliases: Dict[str, str]) -> str:
    """Resolve an alias, then replace whitespace runs with '_'."""
    name = str(name).strip()
    name = aliases.get(name, name)
    return re.sub(r"\s+", "_", name)


@dataclass
class Dataset:
    """Typed flow records; ``labels`` holds the ground-truth column when present."""

    header: List[str]
    frame: pd.DataFrame
    labels: Optional[np.ndarray] = None
    source: str = ""

    def __len__(self) -> int:
        return len(self.frame)

    def rows(self) -> List[Dict[str, float]]:
        return self.frame.to_dict(orient="records")


def load_flows(
    path: str,
    schema: Optional[SchemaConfig] = None,
    required: Optional[Sequence[str]] = None,
) -> Dataset:
    """Load a flow CSV with a mandatory header row.

    Args:
        path: CSV file path.
        schema: Header aliases and the ground-truth column name.
        required: Feature columns that must be present; defaults to every non-label column.

    Returns:
        The typed Dataset.

    Raises:
        ValidationError: On an empty file, a missing required column, or a feature cell
            that is not numeric (reported with its row and column).
    """
    schema = schema or SchemaConfig()
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise ValidationError(f"{path}: empty file") from e
    except (OSError, pd.errors.ParserError) as e:
        raise ValidationError(f"Cannot read flows from {path}: {e}") from e

    raw.columns = [normalise_header(c, schema.aliases) for c in raw.columns]
    if raw.columns.duplicated().any():
        raise ValidationError(f"{path}: duplicate columns after header normalisation")
    if raw.empty:
        raise ValidationError(f"{path}: no flow records")

    label_column = normalise_header(schema.label_column, schema.aliases)
    labels = None
    if label_column in raw.columns:
        labels = raw[label_column].str.strip().to_numpy(dtype=object)

    features = list(required) if required is not None else [c for c in raw.columns if c != label_column]
    missing = [name for name in features if name not in raw.columns]
    if missing:
        raise ValidationError(f"{path}: missing required column(s): {', '.join(missing)}")

    columns = {}
    for name in features:
        values = pd.to_numeric(raw[name].str.strip(), errors="coerce")
        bad = values.isna() | ~np.isfinite(values.to_numpy(dtype=float))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise ValidationError(f"{path}: row {row + 1}, column {name!r}: not a number: {raw[name].iloc[row]!r}")
        columns[name] = values.astype(float)

    frame = pd.DataFrame(columns, columns=features)
    logger.info(f"Loaded {len(frame)} flows with {len(features)} features from {path}")
    return Dataset(header=features, frame=frame, labels=labels, source=str(path))


def _ratio(numerator: int, denominator: int) -> Optional[float]:
    return None if denominator == 0 else numerator / denominator


@dataclass(frozen=True)
class ClassMetrics:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def tpr(self) -> Optional[float]:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def recall(self) -> Optional[float]:
        return self.tpr

    @property
    def fpr(self) -> Optional[float]:
        return _ratio(self.fp, self.fp + self.tn)

    @property
    def precision(self) -> Optional[float]:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def f1(self) -> Optional[float]:
        """Harmonic mean of precision and recall; n/a when either is."""
        if self.precision is None or self.recall is None:
            return None
        return _ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn)

    def swapped(self) -> "ClassMetrics":
        """The same counts seen from the other class."""
        return ClassMetrics(tp=self.tn, fp=self.fn, tn=self.tp, fn=self.fp)

    def to_document(self) -> Dict[str, Any]:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "tpr": self.tpr, "fpr": self.fpr, "recall": self.recall,
            "precision": self.precision, "f1": self.f1,
        }


@dataclass(frozen=True)
class MetricsReport:
    """One-vs-rest metrics of the prime classifier for one target label.

    ``reference`` says what the predictions were scored against: the CSV's ground-truth
    column, or the tree's own decisions when the CSV has none.
    """

    label: str
    negative_label: str
    rows: int
    agreement: float
    reference: str
    classes: Dict[str, ClassMetrics] = field(default_factory=dict)

    def to_document(self) -> Dict[str, Any]:
        return {
            "kind": "metrics",
            "label": self.label,
            "negative_label": self.negative_label,
            "rows": self.rows,
            "agreement": self.agreement,
            "reference": self.reference,
            "classes": {name: m.to_document() for name, m in self.classes.items()},
        }

    def render_text(self) -> str:
        def percent(value: Optional[float]) -> str:
            return "n/a" if value is None else f"{value * 100:.2f}%"

        def decimal(value: Optional[float]) -> str:
            return "n/a" if value is None else f"{value:.4f}"

        frame = pd.DataFrame(
            [
                {
                    "Class": name,
                    "TPR": percent(m.tpr),
                    "FPR": percent(m.fpr),
                    "Recall": decimal(m.recall),
                    "F1": decimal(m.f1),
                    "TP": m.tp, "FP": m.fp, "TN": m.tn, "FN": m.fn,
                }
                for name, m in self.classes.items()
            ]
        )
        header = (
            f"Prime classifier for {self.label!r}: {self.rows} flows, "
            f"agreement with tree {self.agreement * 100:.2f}%, scored against {self.reference}"
        )
        return f"{header}\n{frame.to_string(index=False)}\n"


def _membership(primes: PrimeSet, indices: np.ndarray) -> np.ndarray:
    # per-group boolean lookups; a mask may be wider than 64 bits
    inside = np.zeros(len(indices), dtype=bool)
    for prime in primes.primes:
        hit = np.ones(len(indices), dtype=bool)
        for f, (mask, size) in enumerate(zip(prime.cube.masks, primes.space.sizes)):
            allowed = np.array([bool(mask >> j & 1) for j in range(size)], dtype=bool)
            hit &= allowed[indices[:, f]]
        inside |= hit
    return inside


def evaluate(
    tree: TreeModel,
    primes_pos: PrimeSet,
    primes_neg: PrimeSet,
    data: Dataset,
    space: Optional[DiscreteSpace] = None,
) -> MetricsReport:
    """Run the tree and the prime classifier side by side over a dataset.

    The prime classifier decides the target label iff the flow lies in some positive
    prime. Agreement with the tree is always computed and must be exact.

    Raises:
        EquivalenceError: If the prime sets are unverified, or the classifiers disagree
            on any flow.
        ValidationError: If the dataset lacks a feature of the space.
    """
    check_prime_pair(primes_pos, primes_neg)
    space = space or primes_pos.space
    missing = [name for name in space.names if name not in data.frame.columns]
    if missing:
        raise ValidationError(f"Dataset lacks feature(s) required by the space: {', '.join(missing)}")

    indices = discretize_frame(data.frame, space)
    predicted_pos = _membership(primes_pos, indices)
    predicted_neg = _membership(primes_neg, indices)
    overlap = predicted_pos == predicted_neg
    if overlap.any():
        row = int(np.flatnonzero(overlap)[0])
        raise EquivalenceError(f"Row {row + 1} is covered by both or neither side's primes")

    tree_labels = np.array([predict(tree, row) for row in data.rows()], dtype=object)
    tree_pos = tree_labels == primes_pos.label
    agreement = float(np.mean(tree_pos == predicted_pos))
    if agreement < 1.0:
        row = int(np.flatnonzero(tree_pos != predicted_pos)[0])
        raise EquivalenceError(
            f"Prime classifier disagrees with the tree on {int(np.sum(tree_pos != predicted_pos))} flows "
            f"(first at row {row + 1}); agreement {agreement:.6f}"
        )

    if data.labels is not None:
        truth_pos = data.labels == primes_pos.label
        reference = "ground truth"
    else:
        truth_pos = tree_pos
        reference = "tree decisions"

    tn, fp, fn, tp = confusion_matrix(truth_pos, predicted_pos, labels=[False, True]).ravel()
    target = ClassMetrics(tp=int(tp), fp=int(fp), tn=int(tn), fn=int(fn))
    report = MetricsReport(
        label=primes_pos.label,
        negative_label=primes_neg.decision,
        rows=len(data),
        agreement=agreement,
        reference=reference,
        classes={primes_pos.label: target, primes_neg.decision: target.swapped()},
    )
    logger.info(f"Evaluated {len(data)} flows for {primes_pos.label!r}: TP={tp} FP={fp} TN={tn} FN={fn}")
    return report
