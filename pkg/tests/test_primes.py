import itertools
import time

import numpy as np
import pytest

from src.cubes import Cube, Dnf, compile_rules, complement, cube_mask, enumerate_onset
from src.discretizer import DiscreteSpace, FeatureIntervals, discretize_instance, map_features
from src.errors import CapacityError, EquivalenceError
from src.pipeline import primes_for_tree
from src.primes import (
    PrimeSet,
    brute_force_primes,
    canonical_primeset,
    load_primeset,
    maximal_boxes,
    mark_verified,
    minimal_cover,
    prime_implicants,
    report_table,
    verify_containment,
    verify_cover,
)
from src.tree import extract_rules, predict, tree_from_sklearn
from tests.conftest import feasible_instances, random_tree

X1_Y1 = Cube((0b01, 0b01, 0b11))
X2 = Cube((0b10, 0b11, 0b11))
Y1 = Cube((0b11, 0b01, 0b11))


@pytest.fixture
def demo_dnf(demo_tree):
    rules = extract_rules(demo_tree)
    return compile_rules(rules, map_features(rules), "1")


def _space(*sizes):
    return DiscreteSpace(tuple(
        FeatureIntervals.fresh(f"f{i}", [float(t) for t in range(1, size)], chr(ord("a") + i))
        for i, size in enumerate(sizes)
    ))


def _random_dnf(rng, max_features=4, max_intervals=3, max_cubes=6):
    sizes = [int(rng.integers(1, max_intervals + 1)) for _ in range(int(rng.integers(1, max_features + 1)))]
    space = _space(*sizes)
    cubes = {
        Cube(tuple(int(rng.integers(1, 1 << size)) for size in sizes))
        for _ in range(int(rng.integers(0, max_cubes + 1)))
    }
    return Dnf("1", tuple(sorted(cubes)), space)


def _is_implicant(cube, onset, space):
    return not np.any(cube_mask(cube, space) & ~onset)


def _assert_prime(cube, onset, space):
    assert _is_implicant(cube, onset, space)
    for i, size in enumerate(space.sizes):
        for j in range(size):
            if cube.masks[i] >> j & 1:
                continue
            grown = Cube(cube.masks[:i] + (cube.masks[i] | 1 << j,) + cube.masks[i + 1:])
            assert not _is_implicant(grown, onset, space)


def test_demo_primes(demo_dnf):
    started = time.perf_counter()
    primes = prime_implicants(demo_dnf)
    assert time.perf_counter() - started < 1.0
    # one-hot makes y1 alone sufficient: (x1 and y1) or (x2 and y1) is y1
    assert primes.cubes == (Y1, X2)
    assert [p.tau for p in primes] == [1, 2]
    assert primes.complete and not primes.verified


def test_redundant_demo_cover_is_equivalent_but_not_prime(demo_dnf):
    alternative = canonical_primeset([X1_Y1, X2], demo_dnf)
    assert verify_cover(alternative, demo_dnf)
    assert Y1.contains(X1_Y1) and Y1 != X1_Y1
    x2_only = canonical_primeset([X2], demo_dnf)
    assert not verify_cover(x2_only, demo_dnf)
    assert not verify_containment(x2_only, demo_dnf)


def test_demo_complement_primes(demo_dnf):
    negative = prime_implicants(complement(demo_dnf))
    assert negative.side == "negative"
    assert negative.decision == "not 1"
    assert negative.cubes == (Cube((0b01, 0b10, 0b11)),)


def test_matches_brute_force_oracle(rng):
    for _ in range(100):
        dnf = _random_dnf(rng)
        assert set(prime_implicants(dnf).cubes) == set(brute_force_primes(dnf).cubes)


def test_primes_are_prime_and_cover(rng):
    for _ in range(30):
        dnf = _random_dnf(rng, max_features=5, max_intervals=4, max_cubes=8)
        primes = prime_implicants(dnf, threads=3)
        onset = enumerate_onset(dnf).mask
        for cube in primes.cubes:
            _assert_prime(cube, onset, dnf.space)
        for a, b in itertools.permutations(primes.cubes, 2):
            assert not a.contains(b)
        assert verify_cover(primes, dnf)


def test_primes_are_idempotent(rng):
    for _ in range(20):
        dnf = _random_dnf(rng)
        primes = prime_implicants(dnf)
        again = prime_implicants(primes.as_dnf())
        assert again.cubes == primes.cubes


def test_maximal_boxes_independent_of_thread_count(rng):
    for _ in range(10):
        dnf = _random_dnf(rng, max_features=5, max_intervals=4, max_cubes=10)
        table = enumerate_onset(dnf).mask.reshape(dnf.space.sizes)
        assert maximal_boxes(table, threads=1) == maximal_boxes(table, threads=4)
        assert prime_implicants(dnf, threads=1) == prime_implicants(dnf, threads=4)


def test_constant_formulas():
    space = _space(2, 3)
    assert len(prime_implicants(Dnf("1", (), space))) == 0
    full = prime_implicants(Dnf("1", (Cube((0b01, 0b111)), Cube((0b10, 0b111))), space))
    assert full.cubes == (Cube.full(space),)
    assert full.cubes[0].is_full(space)
    half = prime_implicants(Dnf("1", (Cube((0b01, 0b111)),), space))
    assert not half.cubes[0].is_full(space)


def test_brute_force_limit():
    dnf = Dnf("1", (), _space(4, 4, 4, 4, 4))
    with pytest.raises(CapacityError, match="Brute-force"):
        brute_force_primes(dnf)


def test_over_budget_without_heuristic(demo_dnf):
    with pytest.raises(CapacityError):
        prime_implicants(demo_dnf, budget=4)


def test_heuristic_mode_expands_to_primes(rng):
    for _ in range(30):
        dnf = _random_dnf(rng, max_features=5, max_intervals=4, max_cubes=8)
        heuristic = prime_implicants(dnf, budget=0, heuristic=True, threads=2)
        assert not heuristic.complete
        onset = enumerate_onset(dnf).mask
        for cube in heuristic.cubes:
            _assert_prime(cube, onset, dnf.space)
        assert verify_cover(heuristic, dnf)
        assert set(heuristic.cubes) <= set(prime_implicants(dnf).cubes)


def test_mark_verified(demo_dnf):
    primes = mark_verified(prime_implicants(demo_dnf), demo_dnf)
    assert primes.verified
    with pytest.raises(EquivalenceError):
        mark_verified(canonical_primeset([X2], demo_dnf), demo_dnf)


def test_mark_verified_falls_back_to_containment(demo_dnf):
    primes = mark_verified(prime_implicants(demo_dnf), demo_dnf, budget=2)
    assert primes.verified


def _minimum_size(primes, onset, space):
    masks = [cube_mask(c, space)[onset] for c in primes.cubes]
    for size in range(1, len(masks) + 1):
        for combo in itertools.combinations(masks, size):
            if np.all(np.logical_or.reduce(combo, axis=0)):
                return size
    return len(masks)


def test_minimal_cover_exact_and_greedy(rng):
    for _ in range(50):
        dnf = _random_dnf(rng, max_features=4, max_intervals=3, max_cubes=8)
        primes = prime_implicants(dnf)
        onset = enumerate_onset(dnf).mask
        if not onset.any():
            continue
        exact = minimal_cover(primes, dnf)
        greedy = minimal_cover(primes, dnf, limit=0)
        assert exact.exact and exact.minimal and exact.verified
        assert not greedy.exact and greedy.minimal
        assert verify_cover(exact, dnf)
        assert verify_cover(greedy, dnf)
        assert len(exact) == _minimum_size(primes, onset, dnf.space)
        assert len(greedy) >= len(exact)
        assert {p.tau for p in exact} <= {p.tau for p in primes}


def test_minimal_cover_keeps_both_demo_primes(demo_dnf):
    primes = prime_implicants(demo_dnf)
    minimal = minimal_cover(primes, demo_dnf)
    assert minimal.cubes == primes.cubes
    assert [p.tau for p in minimal] == [1, 2]


def test_minimal_cover_drops_redundant_prime():
    # (a1 and b1) or (a2 and c1): the prime b1 and c1 is redundant
    space = _space(2, 2, 2)
    dnf = Dnf("1", (Cube((0b01, 0b01, 0b11)), Cube((0b10, 0b11, 0b01))), space)
    primes = prime_implicants(dnf)
    assert Cube((0b11, 0b01, 0b01)) in primes.cubes
    assert len(primes) == 3
    minimal = minimal_cover(primes, dnf)
    assert set(minimal.cubes) == set(dnf.cubes)


def test_minimal_cover_requires_a_cover(demo_dnf):
    with pytest.raises(EquivalenceError):
        minimal_cover(canonical_primeset([X2], demo_dnf), demo_dnf)


def test_prime_classifier_agrees_with_tree(rng):
    started = time.perf_counter()
    for _ in range(100):
        model = random_tree(rng)
        positive, negative = primes_for_tree(model, "1")
        for _, instance in feasible_instances(map_features(extract_rules(model))):
            indices = discretize_instance(instance, positive.space).indices
            assert bool(positive.matching(indices)) == (predict(model, instance) == "1")
            assert bool(negative.matching(indices)) != bool(positive.matching(indices))
    assert time.perf_counter() - started < 60.0


def test_primeset_document_round_trip(demo_dnf):
    primes = mark_verified(prime_implicants(demo_dnf), demo_dnf)
    document = primes.to_document()
    assert document["primes"][1]["trits"] == "01----"
    assert document["primes"][0]["literals"] == "b1 ~b2"
    loaded = load_primeset(document, "1", demo_dnf.space)
    assert isinstance(loaded, PrimeSet)
    assert loaded == primes


def test_report_table(demo_dnf):
    primes = mark_verified(prime_implicants(demo_dnf), demo_dnf)
    text = report_table(primes)
    lines = text.splitlines()
    assert lines[0] == "Prime implicants of '1' (positive, 2 primes) [complete, verified]"
    assert "τ1" in lines[2] and "b1 ~b2" in lines[2] and "--10--" in lines[2]
    assert "τ2" in lines[3] and "01----" in lines[3]


def test_report_table_empty():
    space = _space(2)
    text = report_table(prime_implicants(Dnf("1", (), space)))
    assert text.endswith("(none)\n")


def test_many_cubes_on_one_group_merge_into_one_prime():
    space = _space(28)
    dnf = Dnf("1", tuple(Cube((1 << j,)) for j in range(0, 28, 2)), space)
    started = time.perf_counter()
    primes = prime_implicants(dnf)
    assert time.perf_counter() - started < 1.0
    assert primes.cubes == (Cube((sum(1 << j for j in range(0, 28, 2)),)),)


def test_maximal_boxes_of_a_staircase():
    # row i is true on columns 0..i
    table = np.array([[j <= i for j in range(4)] for i in range(4)])
    expected = sorted(
        (sum(1 << r for r in range(i, 4)), sum(1 << c for c in range(i + 1))) for i in range(4)
    )
    assert maximal_boxes(table) == expected
    assert maximal_boxes(np.zeros((2, 3), dtype=bool)) == []
    assert maximal_boxes(np.ones((2, 3), dtype=bool)) == [(0b11, 0b111)]


def test_deep_sklearn_tree_primes_agree_with_tree():
    sklearn_tree = pytest.importorskip("sklearn.tree")
    rng = np.random.default_rng(7)
    x = rng.uniform(0, 100, size=(1000, 3))
    y = ((x[:, 0] > 50) ^ (x[:, 1] > 30)) | (x[:, 2] < 10)
    y = np.where(rng.random(1000) < 0.1, ~y, y).astype(int)
    clf = sklearn_tree.DecisionTreeClassifier(max_depth=6, random_state=0).fit(x, y)
    assert clf.get_depth() == 6
    model = tree_from_sklearn(clf, ["a", "b", "c"], ["benign", "attack"])

    started = time.perf_counter()
    positive, negative = primes_for_tree(model, "attack")
    assert time.perf_counter() - started < 30.0
    assert positive.verified and negative.verified and positive.complete

    for _, instance in feasible_instances(map_features(extract_rules(model))):
        indices = discretize_instance(instance, positive.space).indices
        assert bool(positive.matching(indices)) == (predict(model, instance) == "attack")
        assert bool(negative.matching(indices)) != bool(positive.matching(indices))


def test_ids_primes_are_complete_and_verified(ids_primes):
    positive, negative = ids_primes
    assert positive.complete and positive.verified and len(positive) > 0
    assert negative.complete and negative.verified and len(negative) > 0
