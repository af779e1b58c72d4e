import itertools
import json
import math

import pytest
from hypothesis import given, strategies as st

from geoforge.codec import SpatialToken, encode_token
from geoforge.evaluation import (
    ClosedKind,
    classification_correct,
    greedy_match,
    load_predictions,
    load_truth,
    missing_fraction,
    normalize_answer,
    score_closed_answers,
    score_grounded_description,
    score_grounding,
    score_region_captions,
)
from geoforge.geometry import OrientedBox, rotated_iou

import oracles


def tok(x0, y0, x1, y1, t=0):
    return encode_token(SpatialToken(x0, y0, x1, y1, t))


def q(qid, answer, task="refer", w=100, h=100):
    return {"id": qid, "question": f"[{task}] <p>x</p>", "answer": answer, "width": w, "height": h}


def test_perfect_and_empty():
    truth = [q("a", tok(10, 10, 20, 20)), q("b", tok(30, 30, 70, 50) + " " + tok(0, 0, 5, 5), "grounding"),
             q("c", tok(50, 50, 90, 95, 30))]
    perfect = score_grounding({t["id"]: t["answer"] for t in truth}, truth)
    assert perfect.overall == perfect.acc_at_25 == 100.0
    assert all(v == 100.0 for d in (perfect.by_arity, perfect.by_task) for v in d.values())
    empty = score_grounding({}, truth)
    assert empty.overall == 0.0 and len(empty.warnings) == 3
    assert score_grounding({t["id"]: "" for t in truth}, truth).overall == 0.0


def test_fifty_three_of_hundred():
    truth, preds = [], {}
    for k in range(100):
        truth.append(q(f"q{k}", tok(10, 10, 30, 30)))
        # shifted right by 2 keeps IoU 18/22 ≥ 0.5; by 15 gives 5/35 < 0.5
        preds[f"q{k}"] = tok(12, 10, 32, 30) if k < 53 else tok(25, 10, 45, 30)
    assert rotated_iou(OrientedBox(20, 20, 20, 20), OrientedBox(22, 20, 20, 20)) == pytest.approx(18 / 22)
    assert score_grounding(preds, truth).overall == 53.0


def test_buckets_sum_to_total():
    truth = [q(f"q{k}", " ".join(tok(k, k, k + 1 + j, k + 2 + j) for j in range(k % 3 + 1)),
               "refer" if k % 2 else "grounding") for k in range(30)]
    card = score_grounding({}, truth)
    for dim in ("size", "arity", "task"):
        assert sum(card.populations[dim].values()) == card.total_boxes


def test_size_buckets_use_gt_percentiles():
    truth = [q(f"q{k}", tok(0, 0, k + 1, 1)) for k in range(10)]
    card = score_grounding({}, truth)
    assert card.size_thresholds == (2.0, 8.0)
    assert card.populations["size"] == {"small": 1, "medium": 7, "large": 2}


def test_undecodable_prediction_counts_as_miss():
    truth = [q("a", tok(10, 10, 20, 20))]
    card = score_grounding({"a": "<p>plane</p> {<10><10><20>"}, truth)
    assert card.overall == 0.0 and card.warnings


def test_greedy_is_one_to_one():
    gts = [OrientedBox(10, 10, 10, 10), OrientedBox(12, 10, 10, 10)]
    preds = [OrientedBox(11, 10, 10, 10)] * 3
    m = greedy_match(preds, gts, 0.5)
    assert len({p for p, _, _ in m}) == len(m) == len({g for _, g, _ in m}) == 2


def brute_force_best(preds, gts, tau):
    """Max cardinality of a one-to-one matching with IoU ≥ tau (small inputs)."""
    ok = [[rotated_iou(p, g) >= tau for g in gts] for p in preds]
    slots = list(range(len(gts))) + [None] * len(preds)
    best = 0
    for perm in set(itertools.permutations(slots, len(preds))):
        best = max(best, sum(1 for p, g in enumerate(perm) if g is not None and ok[p][g]))
    return best


boxes = st.builds(OrientedBox, st.floats(0, 40), st.floats(0, 40), st.floats(3, 20), st.floats(3, 20),
                  st.floats(0, 89))


@given(st.lists(boxes, max_size=4), st.lists(boxes, max_size=4))
def test_greedy_never_exceeds_optimum(preds, gts):
    m = greedy_match(preds, gts, 0.5)
    assert all(v >= 0.5 for _, _, v in m)
    assert len(m) <= brute_force_best(preds, gts, 0.5)


@given(st.lists(st.tuples(st.integers(0, 60), st.integers(0, 60), st.integers(5, 39), st.integers(0, 89),
                          st.integers(-8, 8), st.integers(-8, 8)), min_size=1, max_size=15))
def test_monotone_in_tau(rows):
    truth, preds = [], {}
    for k, (x, y, s, t, dx, dy) in enumerate(rows):
        truth.append(q(f"q{k}", tok(x, y, x + s, y + s, t)))
        px, py = max(0, x + dx), max(0, y + dy)
        preds[f"q{k}"] = tok(px, py, min(100, px + s), min(100, py + s), t)
    c = score_grounding(preds, truth)
    assert c.acc_at_25 >= c.acc_at_50
    assert score_grounding(preds, truth, 0.3).overall >= score_grounding(preds, truth, 0.7).overall


def test_tau_validated():
    with pytest.raises(ValueError):
        score_grounding({}, [], 1.0)


def test_grounded_description_scores():
    ans = f"<p>The white plane</p> {tok(10, 10, 30, 30)}. There are <p>2 ships</p> {tok(50, 50, 60, 60)} " \
          f"{tok(70, 70, 80, 80)}."
    truth = [{"id": "d", "answer": ans, "width": 100, "height": 100}]
    perfect = score_grounded_description({"d": ans}, truth)
    n = len(oracles.words("The white plane. There are 2 ships."))
    assert (perfect.acc_at_50, perfect.acc_at_25) == (100.0, 100.0)
    assert perfect.meteor == pytest.approx(1 - 0.5 / n ** 3)
    text_only = score_grounded_description({"d": "The white plane. There are 2 ships."}, truth)
    assert text_only.acc_at_50 == 0.0 and text_only.meteor > 0
    # one of three boxes right, text half right
    mixed_pred = f"<p>The white plane</p> {tok(10, 10, 30, 30)}."
    mixed = score_grounded_description({"d": mixed_pred}, truth)
    assert mixed.acc_at_50 == pytest.approx(100 / 3)
    assert mixed.meteor == pytest.approx(oracles.meteor_oracle("The white plane.", "The white plane. There are 2 ships."))


def test_region_caption_scores():
    truth = [{"id": "r1", "answer": "The large white plane."}, {"id": "r2", "answer": "A ship."}]
    card = score_region_captions({"r1": "The large white plane.", "r2": "A harbor."}, truth)
    assert card.rouge1 == pytest.approx((1 + oracles.rouge1_oracle("A harbor.", "A ship.")) / 2)
    assert card.meteor == pytest.approx((1 - 0.5 / 64 + oracles.meteor_oracle("A harbor.", "A ship.")) / 2)


# ---- closed answers --------------------------------------------------------

def test_yes_no_normalization():
    truth = [{"id": "1", "answer": "yes", "category": "presence"}, {"id": "2", "answer": "no", "category": "comparison"},
             {"id": "3", "answer": "rural", "category": "rural_urban"}]
    card = score_closed_answers({"1": "Yes.", "2": " NO! ", "3": "urban"}, truth)
    assert card.per_category == {"comparison": 100.0, "presence": 100.0, "rural_urban": 0.0}
    assert card.accuracy == pytest.approx(200 / 3)
    assert normalize_answer("  Rural ...") == "rural"


def test_classification_containment_examples():
    classes = ["dense residential", "sparse residential", "airport", "meadow"]
    assert classification_correct("dense residential area", "dense residential", classes)
    assert not classification_correct("dense or sparse residential", "dense residential", classes)
    assert not classification_correct("residential", "dense residential", classes)
    assert not classification_correct("meadow near an airport", "meadow", classes)
    assert classification_correct("Meadow.", "meadow", classes)


CLASS_POOL = ["airport", "meadow", "dense residential", "sparse residential", "residential", "river", "bridge",
              "parking lot", "lake"]
FILLER = ["the", "image", "shows", "a", "an", "area", "of", "with", "this", "is"]


@given(st.lists(st.sampled_from(CLASS_POOL + FILLER), max_size=8), st.sampled_from(CLASS_POOL),
       st.sets(st.sampled_from(CLASS_POOL), min_size=1))
def test_classification_matches_brute_force(pred_words, label, classes):
    classes = sorted(classes | {label})
    pred = " ".join(pred_words)
    assert classification_correct(pred, label, classes) == oracles.classification_oracle(pred, label, classes)


@given(st.sampled_from(["yes", "no", "rural", "urban"]), st.sampled_from(["", ".", "!", " .", "?"]),
       st.sampled_from(["yes", "no", "rural", "urban"]), st.booleans())
def test_closed_normalization_brute_force(label, punct, pred_base, upper):
    pred = (pred_base.upper() if upper else pred_base) + punct
    card = score_closed_answers({"1": pred}, [{"id": "1", "answer": label}], ClosedKind.RURAL_URBAN)
    assert (card.correct == 1) == (oracles.normalize_closed(pred) == label)


def test_missing_fraction_and_loaders(tmp_path):
    p = tmp_path / "p.jsonl"
    p.write_text(json.dumps({"id": "a", "output": "x"}) + "\n\n" + json.dumps({"id": 2, "output": None}) + "\n")
    assert load_predictions(p) == {"a": "x", "2": ""}
    t = tmp_path / "t.jsonl"
    t.write_text(json.dumps({"id": "a", "answer": "x"}) + "\n" + json.dumps({"id": "b", "answer": "y"}) + "\n")
    truth = load_truth(t)
    assert missing_fraction(load_predictions(p), truth) == 0.5
    t.write_text('{"id": "a"}\n')
    with pytest.raises(ValueError, match=":1:"):
        load_truth(t)
    assert math.isclose(missing_fraction({}, []), 0.0)


def test_prediction_without_output_key_is_rejected(tmp_path):
    p = tmp_path / "pred.jsonl"
    p.write_text('{"id": "q1", "answer": "{<1><2><3><4>}"}\n')
    with pytest.raises(ValueError, match="pred.jsonl:1"):
        load_predictions(p)
    p.write_text('{"id": "q1", "output": null}\n')
    assert load_predictions(p) == {"q1": ""}
