from dataclasses import replace

import pytest

from src.cubes import Cube
from src.discretizer import DiscreteSpace, FeatureIntervals
from src.errors import EquivalenceError, ValidationError
from src.explainer import explain_batch, explain_instance, match_trits, render_human
from src.pipeline import primes_for_tree
from src.primes import PrimeImplicant
from src.tree import predict
from tests.conftest import feasible_instances, load_fixture_json, random_tree

BENIGN_ROWS = load_fixture_json("benign_encodings.json")["rows"]


@pytest.fixture
def demo_primes(demo_tree):
    return primes_for_tree(demo_tree, "1")


@pytest.mark.parametrize("row", BENIGN_ROWS, ids=lambda r: f"instance-{r['instance']}-tau{r['tau']}")
def test_benign_encodings_match_their_primes(row):
    assert len(row["encoding"]) == len(row["pattern"]) == 37
    assert match_trits(row["encoding"], row["pattern"])


def test_benign_encodings_reject_other_patterns():
    tau41 = next(r["pattern"] for r in BENIGN_ROWS if r["tau"] == 41)
    tau1 = next(r["pattern"] for r in BENIGN_ROWS if r["tau"] == 1)
    second = BENIGN_ROWS[1]["encoding"]
    assert not match_trits(second, tau41)
    assert not match_trits(BENIGN_ROWS[0]["encoding"], tau1)


def test_match_trits_flipped_position():
    assert match_trits("0110", "01-0")
    assert not match_trits("0010", "01-0")


@pytest.mark.parametrize(
    "encoding, pattern, message",
    [
        ("010", "01", "positions"),
        ("012", "01-", "Encoding"),
        ("01-", "01-", "Encoding"),
        ("010", "0x-", "Pattern"),
    ],
)
def test_match_trits_rejects_malformed(encoding, pattern, message):
    with pytest.raises(ValidationError, match=message):
        match_trits(encoding, pattern)


def test_render_human_demo(demo_tree, demo_primes):
    positive, negative = demo_primes
    space = positive.space
    texts = [render_human(p, space, positive.decision) for p in positive]
    assert texts == ["if Y is at most 3 then 1", "if X is larger than 2 then 1"]
    assert render_human(PrimeImplicant(Cube((0b01, 0b01, 0b11)), 1), space, "1") == (
        "if X is at most 2 and Y is at most 3 then 1"
    )
    assert [render_human(p, space, negative.decision) for p in negative] == [
        "if X is at most 2 and Y is larger than 3 then 0"
    ]


def test_render_human_bounds_and_disjunctions():
    space = DiscreteSpace((
        FeatureIntervals.fresh("Fwd_Pkt_Len_Min", [49.5, 110.5], "a"),
        FeatureIntervals.fresh("Fwd_Seg_Size_Avg", [486.0], "b"),
    ))
    assert render_human(PrimeImplicant(Cube((0b100, 0b01)), 41), space, "benign") == (
        "if Fwd_Pkt_Len_Min is larger than 110.5 and Fwd_Seg_Size_Avg is at most 486 then benign"
    )
    assert render_human(PrimeImplicant(Cube((0b010, 0b11)), 2), space, "benign") == (
        "if Fwd_Pkt_Len_Min is larger than 49.5 and at most 110.5 then benign"
    )
    assert render_human(PrimeImplicant(Cube((0b101, 0b11)), 3), space, "attack") == (
        "if (Fwd_Pkt_Len_Min is at most 49.5 or Fwd_Pkt_Len_Min is larger than 110.5) then attack"
    )
    assert render_human(PrimeImplicant(Cube((0b111, 0b11)), 4), space, "attack") == "any flow is attack"


def test_explain_positive_decision(demo_tree, demo_primes):
    explanation = explain_instance({"X": 7, "Y": 100, "Z": 9}, demo_tree, *demo_primes)
    assert explanation.decision == "1"
    assert explanation.side == "positive"
    assert explanation.encoding == "010101"
    assert [m.tau for m in explanation.matches] == [2]
    assert explanation.matches[0].trits == "01----"
    assert explanation.matches[0].text == "if X is larger than 2 then 1"


def test_explain_lists_every_matching_prime(demo_tree, demo_primes):
    explanation = explain_instance({"X": 7, "Y": 1, "Z": 9}, demo_tree, *demo_primes)
    assert [m.tau for m in explanation.matches] == [1, 2]
    assert explanation.render_text().splitlines()[0] == "decision: 1 (positive side, 2 sufficient reasons)"


def test_explain_negative_decision(demo_tree, demo_primes):
    explanation = explain_instance({"X": 1, "Y": 7, "Z": 0, "extra": 3}, demo_tree, *demo_primes)
    assert explanation.decision == "0"
    assert explanation.side == "negative"
    assert [m.trits for m in explanation.matches] == ["1001--"]
    assert explanation.instance == {"X": 1.0, "Y": 7.0, "Z": 0.0}
    document = explanation.to_document()
    assert document["matches"] == [
        {"tau": 1, "trits": "1001--", "text": "if X is at most 2 and Y is larger than 3 then 0"}
    ]
    text = explanation.render_text()
    assert text.startswith("decision: 0 (negative side, 1 sufficient reason)\nencoding: 100110\n")


def test_explain_rejects_unverified_primes(demo_tree, demo_primes):
    positive, negative = demo_primes
    with pytest.raises(EquivalenceError, match="not verified"):
        explain_instance({"X": 1, "Y": 1, "Z": 1}, demo_tree, replace(positive, verified=False), negative)
    with pytest.raises(ValidationError):
        explain_instance({"X": 1, "Y": 1, "Z": 1}, demo_tree, negative, positive)


def test_explain_reports_missing_feature(demo_tree, demo_primes):
    with pytest.raises(ValidationError, match="Missing value"):
        explain_instance({"X": 1, "Z": 1}, demo_tree, *demo_primes)


def test_explain_detects_primes_that_miss_the_flow(demo_tree, demo_primes):
    positive, negative = demo_primes
    # drop the y1 prime: a flow with X <= 2 and Y <= 3 is then unexplained
    crippled = replace(positive, primes=positive.primes[1:])
    with pytest.raises(EquivalenceError, match="No positive prime"):
        explain_instance({"X": 1, "Y": 1, "Z": 1}, demo_tree, crippled, negative)


def test_explain_batch_preserves_order(demo_tree, demo_primes):
    flows = [{"X": x, "Y": y, "Z": 0} for x in (1, 7) for y in (1, 7)] * 5
    explanations = explain_batch(flows, demo_tree, *demo_primes, threads=4)
    assert [e.decision for e in explanations] == [predict(demo_tree, f) for f in flows]
    assert [e.instance for e in explanations] == [{k: float(v) for k, v in f.items()} for f in flows]


def test_sufficient_reasons_cover_every_point(rng):
    for _ in range(25):
        model = random_tree(rng)
        positive, negative = primes_for_tree(model, "1")
        for indices, instance in feasible_instances(positive.space):
            on_positive = bool(positive.matching(indices))
            on_negative = bool(negative.matching(indices))
            assert on_positive != on_negative
            explanation = explain_instance(instance, model, positive, negative)
            assert explanation.decision == predict(model, instance)
            assert (explanation.side == "positive") == (explanation.decision == "1")
            assert explanation.matches


def test_ids_sample_flow(ids_tree, ids_primes):
    sample = load_fixture_json("ids2018_sample_flow.json")
    positive, negative = ids_primes
    explanation = explain_instance(sample["flow"], ids_tree, positive, negative)
    assert explanation.decision == "Benign"
    assert explanation.side == "negative"
    assert explanation.encoding == sample["merged_encoding"]
    assert explanation.matches
    for match in explanation.matches:
        assert match_trits(explanation.encoding, match.trits)
        assert match.text.endswith("then Benign")
