"""Prime implicants of a multi-valued DNF.

Exact mode reads the maximal cubes off the enumerated on-set. Like Quine-McCluskey it
merges points that differ in one group, but whole interval subsets at a time, so the
work is bounded by the feasible space rather than by the number of partial merges.
Heuristic mode expands each cube of the formula to a prime with containment checks
that never enumerate the feasible space.
"""

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd

from src.config import resolve_petrick_limit
from src.cubes import (
    Cube,
    Dnf,
    absorb,
    box_mask,
    check_budget,
    cover_contains,
    cube_mask,
    cubes_from_document,
    enumerate_onset,
    full_mask,
    members,
    positional_key,
    render_literals,
    render_trits,
)
from src.discretizer import DiscreteSpace
from src.errors import CapacityError, EquivalenceError, ValidationError

logger = logging.getLogger(__name__)

# Largest candidate-cube count the brute-force oracle will enumerate
BRUTE_FORCE_LIMIT = 200_000


@dataclass(frozen=True)
class PrimeImplicant:
    cube: Cube
    tau: int


@dataclass(frozen=True)
class PrimeSet:
    """Primes of one side (Δ or ¬Δ) of a target label, in canonical τ-order.

    ``decision`` is the class text a matching prime concludes, e.g. the target label on
    the positive side.
    """

    label: str
    side: str
    decision: str
    space: DiscreteSpace
    primes: Tuple[PrimeImplicant, ...]
    complete: bool = True
    verified: bool = False
    minimal: bool = False
    exact: bool = True

    def __len__(self) -> int:
        return len(self.primes)

    def __iter__(self):
        return iter(self.primes)

    @property
    def cubes(self) -> Tuple[Cube, ...]:
        return tuple(p.cube for p in self.primes)

    def matching(self, indices: Sequence[int]) -> List[PrimeImplicant]:
        return [p for p in self.primes if p.cube.contains_point(indices)]

    def as_dnf(self) -> Dnf:
        return Dnf(self.label, self.cubes, self.space, self.side == "negative")

    def to_document(self) -> Dict[str, Any]:
        return {
            "side": self.side,
            "decision": self.decision,
            "complete": self.complete,
            "verified": self.verified,
            "minimal": self.minimal,
            "exact": self.exact,
            "primes": [
                {
                    "tau": p.tau,
                    "intervals": [members(m) for m in p.cube.masks],
                    "trits": render_trits(p.cube, self.space),
                    "literals": render_literals(p.cube, self.space),
                }
                for p in self.primes
            ],
        }


def default_decision(dnf: Dnf) -> str:
    return f"not {dnf.label}" if dnf.negated else dnf.label


def canonical_primeset(cubes: Iterable[Cube], dnf: Dnf, **flags: Any) -> PrimeSet:
    """Sort cubes by positional rendering and number them τ1, τ2, ..."""
    ordered = sorted(set(cubes), key=lambda c: positional_key(c, dnf.space))
    primes = tuple(PrimeImplicant(cube, tau) for tau, cube in enumerate(ordered, start=1))
    flags.setdefault("decision", default_decision(dnf))
    return PrimeSet(label=dnf.label, side=dnf.side, space=dnf.space, primes=primes, **flags)


def _split_axis(table: np.ndarray) -> int:
    """Axis whose slices take the fewest distinct non-empty values."""
    best, best_count = 0, None
    for axis in range(table.ndim):
        rows = np.moveaxis(table, axis, 0).reshape(table.shape[axis], -1)
        count = len(np.unique(rows[rows.any(axis=1)], axis=0))
        if best_count is None or count < best_count:
            best, best_count = axis, count
        if count <= 1:
            break
    return best


def _meet_closure(rows: np.ndarray) -> List[np.ndarray]:
    """Every non-empty intersection of a subset of the rows, each once."""
    generators: Dict[bytes, np.ndarray] = {}
    for row in rows:
        if row.any():
            generators.setdefault(row.tobytes(), row)
    family = dict(generators)
    frontier = list(generators.values())
    while frontier:
        fresh = []
        for row in frontier:
            for other in generators.values():
                meet = row & other
                key = meet.tobytes()
                if key not in family and meet.any():
                    family[key] = meet
                    fresh.append(meet)
        frontier = fresh
    return list(family.values())


def _boxes_of_meet(
    meet: np.ndarray,
    rows: np.ndarray,
    axis: int,
    rest_shape: Tuple[int, ...],
    memo: Dict[Any, List[Tuple[int, ...]]],
) -> Set[Tuple[int, ...]]:
    found = set()
    for box in maximal_boxes(meet.reshape(rest_shape), memo):
        support = rows[:, box_mask(box, rest_shape)].all(axis=1)
        mask = sum(1 << int(j) for j in np.flatnonzero(support))
        found.add(box[:axis] + (mask,) + box[axis:])
    return found


def maximal_boxes(
    table: np.ndarray,
    memo: Optional[Dict[Any, List[Tuple[int, ...]]]] = None,
    threads: int = 1,
) -> List[Tuple[int, ...]]:
    """Maximal all-true boxes of a boolean table, one index bitmask per axis.

    Splits on one axis X: a maximal box is X^S times a maximal box q of the meet of the
    slices in S, where S is exactly the set of slices that contain q. Every meet of
    slices is visited once, so the work follows the table and its distinct sub-tables.
    Equal sub-tables are solved once through ``memo``.
    """
    memo = {} if memo is None else memo
    key = (table.shape, table.tobytes())
    if key in memo:
        return memo[key]
    if not table.any():
        result: List[Tuple[int, ...]] = []
    elif table.all():
        result = [tuple(full_mask(size) for size in table.shape)]
    else:
        axis = _split_axis(table)
        rest_shape = table.shape[:axis] + table.shape[axis + 1:]
        rows = np.moveaxis(table, axis, 0).reshape(table.shape[axis], -1)
        meets = _meet_closure(rows)
        workers = max(1, min(threads, len(meets)))
        if workers == 1:
            parts = [_boxes_of_meet(m, rows, axis, rest_shape, memo) for m in meets]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(lambda m: _boxes_of_meet(m, rows, axis, rest_shape, memo), meets))
        result = sorted(set().union(*parts))
    memo[key] = result
    return result


def expand_to_prime(cube: Cube, cover: Sequence[Cube], space: DiscreteSpace) -> Cube:
    """Grow one cube interval by interval while it stays inside the cover.

    A single pass in declared order suffices: an expansion refused for a smaller cube
    is refused for every larger one.
    """
    masks = list(cube.masks)
    for i, size in enumerate(space.sizes):
        for j in range(size):
            if masks[i] >> j & 1:
                continue
            trial = masks[:i] + [masks[i] | 1 << j] + masks[i + 1:]
            if cover_contains(cover, Cube(tuple(trial))):
                masks = trial
    return Cube(tuple(masks))


def prime_implicants(
    dnf: Dnf,
    budget: Optional[int] = None,
    threads: int = 1,
    heuristic: bool = False,
) -> PrimeSet:
    """Compute the prime implicants of Δ.

    Args:
        dnf: The formula (a positive Dnf or a complement).
        budget: Enumeration budget that bounds exact mode.
        threads: Worker cap for the on-set, the top-level split and expansion.
        heuristic: Above budget, return expansion primes flagged incomplete instead of
            raising.

    Returns:
        The PrimeSet in canonical order.

    Raises:
        CapacityError: If the space exceeds the budget and heuristic mode is off.
    """
    try:
        check_budget(dnf.space, budget)
    except CapacityError:
        if not heuristic:
            raise
        logger.warning(
            f"Feasible space of {dnf.space.point_count} points is above budget; "
            f"expanding {len(dnf.cubes)} cubes to primes, completeness not guaranteed"
        )
        cover = list(dnf.cubes)
        workers = max(1, min(threads, len(cover)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            expanded = list(pool.map(lambda c: expand_to_prime(c, cover, dnf.space), cover))
        return canonical_primeset(absorb(expanded), dnf, complete=False)

    onset = enumerate_onset(dnf, budget, threads).mask.reshape(dnf.space.sizes)
    primes = [Cube(masks) for masks in maximal_boxes(onset, threads=threads)]
    logger.info(f"Found {len(primes)} prime implicants for {dnf.label!r} ({dnf.side})")
    return canonical_primeset(primes, dnf)


def brute_force_primes(dnf: Dnf, limit: int = BRUTE_FORCE_LIMIT) -> PrimeSet:
    """Exhaustive oracle: every cube inside the on-set, keeping the maximal ones.

    Raises:
        CapacityError: If there are more than ``limit`` candidate cubes.
    """
    space = dnf.space
    candidates = math.prod(full_mask(size) for size in space.sizes)
    if candidates > limit:
        raise CapacityError(f"Brute-force oracle would test {candidates} cubes, limit is {limit}")

    onset = enumerate_onset(dnf, budget=max(space.point_count, 1)).mask
    implicants = []
    for masks in np.ndindex(*(full_mask(size) for size in space.sizes)):
        cube = Cube(tuple(int(m) + 1 for m in masks))
        if not np.any(cube_mask(cube, space) & ~onset):
            implicants.append(cube)
    return canonical_primeset(absorb(implicants), dnf)


def _check_same_space(primes: PrimeSet, dnf: Dnf) -> None:
    if primes.space != dnf.space:
        raise ValidationError("Prime set and formula are defined over different spaces")


def verify_cover(primes: PrimeSet, dnf: Dnf, budget: Optional[int] = None, threads: int = 1) -> bool:
    """True iff the union of the primes equals the on-set, by exhaustive enumeration.

    Raises:
        CapacityError: If the feasible space exceeds the budget.
    """
    _check_same_space(primes, dnf)
    onset = enumerate_onset(dnf, budget, threads)
    covered = enumerate_onset(primes.as_dnf(), budget, threads)
    return bool(np.array_equal(onset.mask, covered.mask))


def verify_containment(primes: PrimeSet, dnf: Dnf) -> bool:
    """Symbolic counterpart of verify_cover: mutual cube containment, no enumeration."""
    _check_same_space(primes, dnf)
    return (
        all(cover_contains(dnf.cubes, p.cube) for p in primes)
        and all(cover_contains(primes.cubes, c) for c in dnf.cubes)
    )


def mark_verified(primes: PrimeSet, dnf: Dnf, budget: Optional[int] = None, threads: int = 1) -> PrimeSet:
    """Check the cover and return the set flagged verified.

    Exhaustive enumeration is used when the space fits the budget, containment otherwise.

    Raises:
        EquivalenceError: If the primes do not cover the formula exactly.
    """
    try:
        ok = verify_cover(primes, dnf, budget, threads)
    except CapacityError:
        ok = verify_containment(primes, dnf)
    if not ok:
        raise EquivalenceError(f"Prime set for {dnf.label!r} ({dnf.side}) does not equal the formula")
    logger.info(f"Verified {len(primes)} primes for {dnf.label!r} ({dnf.side})")
    return replace(primes, verified=True)


def _petrick(signatures: Sequence[int]) -> int:
    """Minimum-cardinality selection (bitmask over primes) hitting every signature."""
    products = {0}
    for sig in sorted({int(s) for s in signatures}):
        options = members(sig)
        expanded = set()
        for product in products:
            if product & sig:
                expanded.add(product)
            else:
                expanded.update(product | 1 << i for i in options)
        # absorption: drop products that contain another product
        ordered = sorted(expanded, key=lambda p: (bin(p).count("1"), p))
        kept: List[int] = []
        for p in ordered:
            if not any(k & p == k for k in kept):
                kept.append(p)
        products = set(kept)
    return min(products, key=lambda p: (bin(p).count("1"), sorted(members(p))))


def minimal_cover(
    primes: PrimeSet,
    dnf: Dnf,
    budget: Optional[int] = None,
    limit: Optional[int] = None,
) -> PrimeSet:
    """Minimum-cardinality sub-cover: Petrick's method up to ``limit`` primes, greedy above.

    τ-ids of the kept primes are unchanged. ``limit`` defaults to MNM_PETRICK_LIMIT.

    Raises:
        EquivalenceError: If ``primes`` is not a cover of ``dnf``.
        CapacityError: If the feasible space exceeds the budget.
    """
    limit = resolve_petrick_limit(limit)
    if not verify_cover(primes, dnf, budget):
        raise EquivalenceError(f"Cannot minimise: prime set for {dnf.label!r} is not a cover")
    if not primes.primes:
        return replace(primes, minimal=True, verified=True)

    onset = enumerate_onset(dnf, budget).mask
    chart = np.stack([cube_mask(p.cube, dnf.space)[onset] for p in primes.primes])

    if len(primes) <= min(limit, 64):
        weights = np.left_shift(np.uint64(1), np.arange(len(primes), dtype=np.uint64))
        signatures = np.bitwise_or.reduce(np.where(chart, weights[:, None], np.uint64(0)), axis=0)
        signatures = np.unique(signatures)
        essential = 0
        for sig in signatures:
            if bin(int(sig)).count("1") == 1:
                essential |= int(sig)
        rest = [s for s in signatures if not int(s) & essential]
        chosen = essential | (_petrick([int(s) for s in rest]) if rest else 0)
        selected = [p for i, p in enumerate(primes.primes) if chosen >> i & 1]
        exact = True
        logger.info(f"Petrick cover: {len(selected)} of {len(primes)} primes ({bin(essential).count('1')} essential)")
    else:
        uncovered = np.ones(chart.shape[1], dtype=bool)
        picked: List[int] = []
        while uncovered.any():
            gains = (chart & uncovered).sum(axis=1)
            best = int(np.argmax(gains))
            picked.append(best)
            uncovered &= ~chart[best]
        selected = [primes.primes[i] for i in sorted(picked)]
        exact = False
        logger.warning(f"Greedy cover over {len(primes)} primes kept {len(selected)}; minimality not guaranteed")

    return replace(primes, primes=tuple(selected), minimal=True, exact=exact, verified=True)


def load_primeset(
    document: Mapping[str, Any],
    label: str,
    space: DiscreteSpace,
) -> PrimeSet:
    """Decode one side of a primes artifact.

    Raises:
        ValidationError: If the document is malformed.
    """
    try:
        side = str(document["side"])
        if side not in ("positive", "negative"):
            raise ValidationError(f"Prime set side must be positive or negative, got {side!r}")
        raw = list(document["primes"])
        cubes = cubes_from_document([p["intervals"] for p in raw], space)
        primes = tuple(PrimeImplicant(cube, int(p["tau"])) for cube, p in zip(cubes, raw))
        return PrimeSet(
            label=label,
            side=side,
            decision=str(document.get("decision") or (label if side == "positive" else f"not {label}")),
            space=space,
            primes=primes,
            complete=bool(document.get("complete", True)),
            verified=bool(document.get("verified", False)),
            minimal=bool(document.get("minimal", False)),
            exact=bool(document.get("exact", True)),
        )
    except (KeyError, TypeError) as e:
        raise ValidationError(f"Malformed prime set: {e}") from e


def report_table(primes: PrimeSet) -> str:
    """Plain-text table: τ-id, minterm literals and trit string, one row per rendering."""
    title = f"Prime implicants of {primes.label!r} ({primes.side}, {len(primes)} primes)"
    flags = [name for name in ("complete", "verified", "minimal") if getattr(primes, name)]
    if flags:
        title += f" [{', '.join(flags)}]"
    if not primes.primes:
        return f"{title}\n(none)\n"

    rows = []
    for p in primes.primes:
        literals = render_literals(p.cube, primes.space)
        for trits in render_trits(p.cube, primes.space).split("|"):
            rows.append({"tau": f"τ{p.tau}", "minterm": literals, "trits": trits})
    frame = pd.DataFrame(rows, columns=["tau", "minterm", "trits"])
    return f"{title}\n{frame.to_string(index=False, justify='left')}\n"
