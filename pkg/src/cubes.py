"""Multi-valued cube algebra over a DiscreteSpace.

A cube keeps, per feature, a bitmask of allowed interval indices (bit j set means
interval j is allowed; all bits set means "don't care"). Infeasible one-hot
assignments are never represented, so the 2**n binary space is never built.
"""

import math
import logging
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import reduce
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.config import resolve_budget
from src.discretizer import DiscretePoint, DiscreteSpace, load_space
from src.errors import CapacityError, EquivalenceError, ValidationError
from src.tree import RuleSet

logger = logging.getLogger(__name__)


def full_mask(size: int) -> int:
    return (1 << size) - 1


def members(mask: int) -> List[int]:
    return [j for j in range(mask.bit_length()) if mask >> j & 1]


@dataclass(frozen=True, order=True)
class Cube:
    """Product term: one non-empty interval subset per feature."""

    masks: Tuple[int, ...]

    @classmethod
    def full(cls, space: DiscreteSpace) -> "Cube":
        return cls(tuple(full_mask(size) for size in space.sizes))

    @classmethod
    def minterm(cls, indices: Sequence[int]) -> "Cube":
        return cls(tuple(1 << int(i) for i in indices))

    def contains(self, other: "Cube") -> bool:
        return all(o & ~s == 0 for s, o in zip(self.masks, other.masks))

    def contains_point(self, indices: Sequence[int]) -> bool:
        return all(m >> i & 1 for m, i in zip(self.masks, indices))

    def intersect(self, other: "Cube") -> Optional["Cube"]:
        masks = tuple(a & b for a, b in zip(self.masks, other.masks))
        return Cube(masks) if all(masks) else None

    @property
    def point_count(self) -> int:
        return math.prod(bin(m).count("1") for m in self.masks)

    def is_full(self, space: DiscreteSpace) -> bool:
        return all(m == full_mask(size) for m, size in zip(self.masks, space.sizes))


def check_cube(cube: Cube, space: DiscreteSpace) -> Cube:
    """Validate a cube against a space.

    Raises:
        ValidationError: On a width mismatch, an empty group or an out-of-range interval.
    """
    if len(cube.masks) != len(space.features):
        raise ValidationError(f"Cube has {len(cube.masks)} groups, space has {len(space.features)}")
    for mask, feature in zip(cube.masks, space.features):
        if mask == 0:
            raise ValidationError(f"Empty interval set for {feature.name}")
        if mask > full_mask(feature.size):
            raise ValidationError(f"Interval index out of range for {feature.name}")
    return cube


def absorb(cubes: Iterable[Cube]) -> List[Cube]:
    """Drop duplicates and every cube contained in another; canonical order."""
    ordered = sorted(set(cubes), key=lambda c: (-c.point_count, c.masks))
    kept: List[Cube] = []
    for cube in ordered:
        if not any(k.contains(cube) for k in kept):
            kept.append(cube)
    return sorted(kept)


@dataclass(frozen=True)
class Dnf:
    """Union of cubes for one target label; ``negated`` marks a complement (not Δ)."""

    label: str
    cubes: Tuple[Cube, ...]
    space: DiscreteSpace
    negated: bool = False

    def __post_init__(self):
        for cube in self.cubes:
            check_cube(cube, self.space)

    @property
    def side(self) -> str:
        return "negative" if self.negated else "positive"

    def to_document(self) -> Dict[str, Any]:
        return {
            "kind": "dnf",
            "label": self.label,
            "negated": self.negated,
            "space": self.space.to_document(),
            "cubes": [[members(m) for m in cube.masks] for cube in self.cubes],
        }


def cubes_from_document(raw_cubes: Sequence[Sequence[Sequence[int]]], space: DiscreteSpace) -> Tuple[Cube, ...]:
    cubes = []
    for raw in raw_cubes:
        if len(raw) != len(space.features):
            raise ValidationError(f"Cube has {len(raw)} groups, space has {len(space.features)}")
        masks = []
        for indices, feature in zip(raw, space.features):
            mask = 0
            for j in indices:
                if isinstance(j, bool) or not isinstance(j, int) or not 0 <= j < feature.size:
                    raise ValidationError(f"Interval index {j!r} out of range for {feature.name}")
                mask |= 1 << j
            masks.append(mask)
        cubes.append(check_cube(Cube(tuple(masks)), space))
    return tuple(cubes)


def load_dnf(document: Mapping[str, Any]) -> Dnf:
    """Decode a dnf artifact.

    Raises:
        ValidationError: If the artifact is malformed.
    """
    try:
        space = load_space(document["space"])
        cubes = cubes_from_document(document["cubes"], space)
        return Dnf(str(document["label"]), cubes, space, bool(document.get("negated", False)))
    except (KeyError, TypeError) as e:
        raise ValidationError(f"Malformed dnf artifact: {e}") from e


def compile_rules(rules: RuleSet, space: DiscreteSpace, target: str) -> Dnf:
    """One cube per rule labelled ``target``; other labels are excluded.

    Raises:
        ValidationError: If a rule bound is not representable in the space.
    """
    cubes = []
    for position, rule in enumerate(rules):
        if rule.label != target:
            continue
        masks = [full_mask(size) for size in space.sizes]
        for name, (lower, upper) in rule.constraints.items():
            if name not in space.names:
                raise ValidationError(f"Rule {position} constrains {name!r}, which the space does not partition")
            index = space.index(name)
            masks[index] = sum(1 << j for j in space.features[index].covered(lower, upper))
        cubes.append(Cube(tuple(masks)))
    logger.info(f"Compiled {len(cubes)} of {len(rules)} rules for label {target!r}")
    return Dnf(str(target), tuple(cubes), space)


def eval_point(dnf: Dnf, point: DiscretePoint) -> bool:
    """Membership of a feasible point in Δ.

    Raises:
        ValidationError: If the point belongs to another space.
    """
    if point.space != dnf.space:
        raise ValidationError("Point and formula are defined over different spaces")
    return any(cube.contains_point(point.indices) for cube in dnf.cubes)


def box_mask(masks: Sequence[int], sizes: Sequence[int]) -> np.ndarray:
    """Flattened boolean mask of a product of interval subsets over a grid of ``sizes``."""
    groups = [
        np.array([bool(mask >> j & 1) for j in range(size)], dtype=bool)
        for mask, size in zip(masks, sizes)
    ]
    return reduce(lambda acc, group: np.logical_and.outer(acc, group).ravel(), groups, np.ones(1, dtype=bool))


def cube_mask(cube: Cube, space: DiscreteSpace) -> np.ndarray:
    """Boolean mask of the cube over the flattened feasible space.

    Points are ordered lexicographically by interval index, first feature most significant.
    """
    return box_mask(cube.masks, space.sizes)


def _union_mask(cubes: Sequence[Cube], space: DiscreteSpace) -> np.ndarray:
    result = np.zeros(space.point_count, dtype=bool)
    for cube in cubes:
        result |= cube_mask(cube, space)
    return result


def check_budget(space: DiscreteSpace, budget: Optional[int]) -> int:
    """Raise CapacityError when the feasible space exceeds the budget."""
    budget = resolve_budget() if budget is None else budget
    if space.point_count > budget:
        raise CapacityError(
            f"Feasible space has {space.point_count} points, above the enumeration budget of {budget}"
        )
    return budget


@dataclass(frozen=True)
class OnSet:
    """Explicit on-set: a boolean mask over the lexicographically ordered feasible space."""

    space: DiscreteSpace
    mask: np.ndarray

    def __len__(self) -> int:
        return int(np.count_nonzero(self.mask))

    def __contains__(self, point: DiscretePoint) -> bool:
        if not self.space.sizes:
            return bool(self.mask[0])
        return bool(self.mask[np.ravel_multi_index(point.indices, self.space.sizes)])

    def points(self) -> Iterator[DiscretePoint]:
        """On-set points in lexicographic order."""
        flat = np.flatnonzero(self.mask)
        if not self.space.sizes:
            for _ in flat:
                yield DiscretePoint(self.space, ())
            return
        for row in zip(*np.unravel_index(flat, self.space.sizes)):
            yield DiscretePoint(self.space, tuple(int(i) for i in row))


def enumerate_onset(dnf: Dnf, budget: Optional[int] = None, threads: int = 1) -> OnSet:
    """Materialise the on-set of Δ.

    Cubes are split across ``threads`` workers; partial masks are OR-ed together, so the
    result does not depend on the worker count.

    Raises:
        CapacityError: If the feasible space exceeds the budget.
    """
    check_budget(dnf.space, budget)
    cubes = list(dnf.cubes)
    workers = max(1, min(threads, len(cubes)))
    if workers == 1:
        mask = _union_mask(cubes, dnf.space)
    else:
        chunks = [cubes[i::workers] for i in range(workers)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(lambda chunk: _union_mask(chunk, dnf.space), chunks))
        mask = reduce(np.logical_or, partials)
    logger.debug(f"On-set of {dnf.label!r} ({dnf.side}): {int(mask.sum())} of {dnf.space.point_count} points")
    return OnSet(dnf.space, mask)


def sharp(a: Cube, b: Cube) -> List[Cube]:
    """Cubes whose union is a minus b: one per feature, a with that group reduced by b."""
    if a.intersect(b) is None:
        return [a]
    pieces = []
    for i, (ai, bi) in enumerate(zip(a.masks, b.masks)):
        rest = ai & ~bi
        if rest:
            pieces.append(Cube(a.masks[:i] + (rest,) + a.masks[i + 1:]))
    return pieces


def structural_complement(dnf: Dnf) -> Dnf:
    """¬Δ by repeated sharp from the universe, without enumerating points."""
    result = [Cube.full(dnf.space)]
    for cube in dnf.cubes:
        result = absorb(piece for r in result for piece in sharp(r, cube))
    return Dnf(dnf.label, tuple(result), dnf.space, not dnf.negated)


def complement(dnf: Dnf, budget: Optional[int] = None, threads: int = 1, structural: bool = False) -> Dnf:
    """¬Δ as a cube cover, checked point-for-point against the enumerated off-set.

    Args:
        dnf: Formula to negate.
        budget: Enumeration budget; defaults to the configured one.
        threads: Worker cap for the on-set enumeration.
        structural: Above budget, fall back to the unchecked structural complement
            instead of refusing.

    Raises:
        CapacityError: If the feasible space exceeds the budget and ``structural`` is off.
    """
    try:
        onset = enumerate_onset(dnf, budget, threads)
    except CapacityError:
        if not structural:
            raise
        logger.warning(f"Feasible space above budget; complement of {dnf.label!r} is not checked point-wise")
        return structural_complement(dnf)

    negated = structural_complement(dnf)
    result = negated.cubes
    if not np.array_equal(_union_mask(result, dnf.space), ~onset.mask):
        raise EquivalenceError(f"Complement of {dnf.label!r} does not match the enumerated off-set")
    logger.info(f"Complement of {dnf.label!r}: {len(result)} cubes, {len(onset.mask) - len(onset)} points")
    return negated


def _is_tautology(cubes: List[Tuple[int, ...]], domain: Tuple[int, ...]) -> bool:
    if not cubes:
        return False
    for cube in cubes:
        if all(c & d == d for c, d in zip(cube, domain)):
            return True
    # split on the first group some cube does not fully allow
    split = next(i for i, d in enumerate(domain) if any(c[i] & d != d for c in cubes))
    for j in members(domain[split]):
        bit = 1 << j
        sub = [c for c in cubes if c[split] & bit]
        narrowed = domain[:split] + (bit,) + domain[split + 1:]
        if not _is_tautology(sub, narrowed):
            return False
    return True


def cover_contains(cubes: Sequence[Cube], cube: Cube) -> bool:
    """True iff ``cube`` lies inside the union of ``cubes``, without enumerating points."""
    if any(c.contains(cube) for c in cubes):
        return True
    relevant = [
        tuple(a & b for a, b in zip(c.masks, cube.masks))
        for c in cubes
        if c.intersect(cube) is not None
    ]
    return _is_tautology(relevant, cube.masks)


def expand_trits(cube: Cube, space: DiscreteSpace) -> List[str]:
    """Trit strings of a cube: '-' for free groups, one-hot for singletons.

    Groups with a proper subset of two or more intervals expand into one string per member.
    """
    options = []
    for mask, size in zip(cube.masks, space.sizes):
        if mask == full_mask(size):
            options.append(["-" * size])
        else:
            options.append(["".join("1" if i == j else "0" for i in range(size)) for j in members(mask)])
    return ["".join(parts) for parts in itertools.product(*options)]


def render_trits(cube: Cube, space: DiscreteSpace) -> str:
    """Trit rendering; expansions of partial groups are joined with '|'."""
    return "|".join(expand_trits(cube, space))


def parse_trits(text: str, space: DiscreteSpace) -> Cube:
    """Inverse of render_trits.

    Raises:
        ValidationError: On bad length or characters, groups that are neither free nor
            one-hot, or alternatives that do not form a single cube.
    """
    alternatives = text.split("|")
    unions = [0] * len(space.features)
    seen = set()
    for alternative in alternatives:
        if len(alternative) != space.variable_count:
            raise ValidationError(f"Trit string has {len(alternative)} positions, space has {space.variable_count}")
        offset = 0
        masks = []
        for feature in space.features:
            group = alternative[offset:offset + feature.size]
            offset += feature.size
            if set(group) == {"-"}:
                masks.append(full_mask(feature.size))
            elif set(group) <= {"0", "1"} and group.count("1") == 1:
                masks.append(1 << group.index("1"))
            else:
                raise ValidationError(f"Group {group!r} for {feature.name} is neither free nor one-hot")
        seen.add(tuple(masks))
        unions = [u | m for u, m in zip(unions, masks)]
    cube = Cube(tuple(unions))
    if cube.point_count != sum(Cube(m).point_count for m in seen) or len(seen) != len(alternatives):
        raise ValidationError(f"Trit alternatives {text!r} do not form a single cube")
    return cube


def positional_key(cube: Cube, space: DiscreteSpace) -> str:
    """Canonical sort key: '-' for free groups, membership bits otherwise."""
    parts = []
    for mask, size in zip(cube.masks, space.sizes):
        if mask == full_mask(size):
            parts.append("-" * size)
        else:
            parts.append("".join("1" if mask >> j & 1 else "0" for j in range(size)))
    return "".join(parts)


def render_literals(cube: Cube, space: DiscreteSpace) -> str:
    """Minterm-column rendering, e.g. "a1 ~a2 d1-3"; free groups are omitted."""
    literals = []
    for mask, feature in zip(cube.masks, space.features):
        if mask == full_mask(feature.size):
            continue
        for j in range(feature.size):
            literals.append(feature.variable(j) if mask >> j & 1 else f"~{feature.variable(j)}")
    return " ".join(literals) if literals else "1"
