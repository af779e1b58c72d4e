"""Benchmark scoring: grounding accuracy, caption text metrics, closed-answer accuracy."""

from __future__ import annotations

import enum
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from geoforge.codec import decode_response
from geoforge.geometry import denormalize, rotated_iou
from geoforge.textmetrics import meteor, rouge1, rougeL, tokenize

log = logging.getLogger(__name__)

SIZE_BUCKETS = ("small", "medium", "large")
ARITY_BUCKETS = ("single", "multi")
TASK_BUCKETS = ("refer", "grounding")


@dataclass(frozen=True)
class _Frame:
    width: int
    height: int


def load_predictions(path: str | Path) -> dict[str, str]:
    preds = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out = obj["output"]
                preds[str(obj["id"])] = "" if out is None else str(out)
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad prediction record ({exc})") from None
    return preds


def load_truth(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or "id" not in obj or "answer" not in obj:
                raise ValueError(f"{path}:{lineno}: truth records need 'id' and 'answer'")
            rows.append(obj)
    return rows


def greedy_match(preds: Sequence, gts: Sequence, tau: float, iou=rotated_iou) -> list[tuple[int, int, float]]:
    """One-to-one matching: accept pairs by descending IoU while both ends are free."""
    cands = []
    for g, gb in enumerate(gts):
        for p, pb in enumerate(preds):
            v = iou(pb, gb)
            if v >= tau:
                cands.append((-v, g, p))
    cands.sort()
    used_p: set[int] = set()
    used_g: set[int] = set()
    out = []
    for negv, g, p in cands:
        if g in used_g or p in used_p:
            continue
        used_g.add(g)
        used_p.add(p)
        out.append((p, g, -negv))
    return out


def _percent(num: int, den: int) -> float | None:
    return 100.0 * num / den if den else None


def _nearest_rank(sorted_vals: Sequence[float], pct: float) -> float:
    n = len(sorted_vals)
    return sorted_vals[min(max(1, math.ceil(pct * n / 100.0)), n) - 1]


def _task_of(record: Mapping) -> str:
    q = str(record.get("question", "")).lstrip()
    for name in TASK_BUCKETS:
        if q.startswith(f"[{name}]"):
            return name
    return str(record.get("task", "refer"))


@dataclass
class GroundingScorecard:
    tau: float
    overall: float
    acc_at_50: float
    acc_at_25: float
    overall_macro: float | None
    by_size: dict[str, float | None]
    by_arity: dict[str, float | None]
    by_task: dict[str, float | None]
    populations: dict[str, dict[str, int]]
    total_boxes: int
    matched: int
    size_thresholds: tuple[float, float] | None = None
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class _QuestionResult:
    task: str
    areas: list[float]
    matched: dict[float, set[int]]  # tau -> matched GT indices


def _score_questions(preds: Mapping[str, str], truth: Sequence[Mapping], taus: Iterable[float],
                     warnings: list[str]) -> list[_QuestionResult]:
    taus = sorted(set(taus))
    out = []
    for rec in truth:
        qid = str(rec["id"])
        frame = _Frame(int(rec.get("width", 100)), int(rec.get("height", 100)))
        gt_resp = decode_response(str(rec["answer"]))
        gts = [denormalize(t, frame) for t in gt_resp.boxes]
        if qid not in preds:
            warnings.append(f"missing prediction for {qid}")
            pboxes = []
        else:
            resp = decode_response(preds[qid])
            if resp.warnings:
                warnings.append(f"{qid}: {len(resp.warnings)} malformed fragment(s) in prediction")
            pboxes = [denormalize(t, frame) for t in resp.boxes]
        matched = {}
        for tau in taus:
            matched[tau] = {g for _, g, _ in greedy_match(pboxes, gts, tau)}
        out.append(_QuestionResult(_task_of(rec), [b.area for b in gts], matched))
    return out


def score_grounding(preds: Mapping[str, str], truth: Sequence[Mapping], tau: float = 0.5) -> GroundingScorecard:
    """acc@tau over ground-truth boxes (micro average) with size/arity/task buckets.

    Size buckets split GT boxes at the nearest-rank 20th and 80th percentile
    of all GT box areas in ``truth``.
    """
    if not 0 < tau < 1:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    warnings: list[str] = []
    results = _score_questions(preds, truth, (tau, 0.5, 0.25), warnings)
    areas = sorted(a for r in results for a in r.areas)
    thresholds = (_nearest_rank(areas, 20), _nearest_rank(areas, 80)) if areas else None

    pops = {"size": dict.fromkeys(SIZE_BUCKETS, 0), "arity": dict.fromkeys(ARITY_BUCKETS, 0), "task": {}}
    hits = {"size": dict.fromkeys(SIZE_BUCKETS, 0), "arity": dict.fromkeys(ARITY_BUCKETS, 0), "task": {}}
    total = matched = m50 = m25 = 0
    for r in results:
        arity = "single" if len(r.areas) == 1 else "multi"
        pops["task"].setdefault(r.task, 0)
        hits["task"].setdefault(r.task, 0)
        for g, area in enumerate(r.areas):
            if area < thresholds[0]:
                size = "small"
            elif area > thresholds[1]:
                size = "large"
            else:
                size = "medium"
            ok = g in r.matched[tau]
            total += 1
            matched += ok
            m50 += g in r.matched[0.5]
            m25 += g in r.matched[0.25]
            for dim, key in (("size", size), ("arity", arity), ("task", r.task)):
                pops[dim][key] += 1
                hits[dim][key] += ok
    by = {dim: {k: _percent(hits[dim][k], pops[dim][k]) for k in pops[dim]} for dim in pops}
    task_vals = [v for v in by["task"].values() if v is not None]
    return GroundingScorecard(
        tau=tau,
        overall=_percent(matched, total) or 0.0,
        acc_at_50=_percent(m50, total) or 0.0,
        acc_at_25=_percent(m25, total) or 0.0,
        overall_macro=sum(task_vals) / len(task_vals) if task_vals else None,
        by_size=by["size"],
        by_arity=by["arity"],
        by_task=by["task"],
        populations=pops,
        total_boxes=total,
        matched=matched,
        size_thresholds=thresholds,
        warnings=warnings,
    )


@dataclass
class TextScorecard:
    rouge1: float
    rougeL: float
    meteor: float
    count: int
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class DescriptionScorecard:
    acc_at_50: float
    acc_at_25: float
    meteor: float
    count: int
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def score_grounded_description(preds: Mapping[str, str], truth: Sequence[Mapping]) -> DescriptionScorecard:
    """Box accuracy over every box in each description, METEOR on span-stripped text."""
    warnings: list[str] = []
    results = _score_questions(preds, truth, (0.5, 0.25), warnings)
    total = sum(len(r.areas) for r in results)
    m50 = sum(len(r.matched[0.5]) for r in results)
    m25 = sum(len(r.matched[0.25]) for r in results)
    scores = []
    for rec in truth:
        ref = decode_response(str(rec["answer"])).plain_text
        hyp = decode_response(preds.get(str(rec["id"]), "")).plain_text
        scores.append(meteor(hyp, ref))
    return DescriptionScorecard(
        acc_at_50=_percent(m50, total) or 0.0,
        acc_at_25=_percent(m25, total) or 0.0,
        meteor=sum(scores) / len(scores) if scores else 0.0,
        count=len(truth),
        warnings=warnings,
    )


def score_region_captions(preds: Mapping[str, str], truth: Sequence[Mapping]) -> TextScorecard:
    warnings = []
    r1 = rl = mt = 0.0
    for rec in truth:
        qid = str(rec["id"])
        if qid not in preds:
            warnings.append(f"missing prediction for {qid}")
        hyp = decode_response(preds.get(qid, "")).plain_text
        ref = str(rec["answer"])
        r1 += rouge1(hyp, ref)
        rl += rougeL(hyp, ref)
        mt += meteor(hyp, ref)
    n = len(truth)
    return TextScorecard(r1 / n if n else 0.0, rl / n if n else 0.0, mt / n if n else 0.0, n, warnings)


# ---- closed answers --------------------------------------------------------

class ClosedKind(enum.Enum):
    VQA_YESNO = "vqa_yesno"
    RURAL_URBAN = "rural_urban"
    CLASSIFICATION = "classification"


_TERMINAL_PUNCT = re.compile(r"[\s.!?,;:]+$")


def normalize_answer(text: str) -> str:
    return _TERMINAL_PUNCT.sub("", str(text).strip().lower()).strip()


def _contains_words(haystack: list[str], needle: list[str]) -> bool:
    n = len(needle)
    if n == 0:
        return False
    return any(haystack[i:i + n] == needle for i in range(len(haystack) - n + 1))


def classification_correct(pred: str, label: str, classes: Sequence[str]) -> bool:
    """Exact match after normalization, or the prediction names the label and no other class."""
    if normalize_answer(pred) == normalize_answer(label):
        return True
    words = tokenize(pred)
    if not _contains_words(words, tokenize(label)):
        return False
    own = normalize_answer(label)
    return not any(_contains_words(words, tokenize(c)) for c in classes if normalize_answer(c) != own)


@dataclass
class ClosedScorecard:
    kind: str
    accuracy: float
    per_category: dict[str, float]
    macro: float
    correct: int
    total: int
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def score_closed_answers(
    preds: Mapping[str, str],
    truth: Sequence[Mapping],
    kind: ClosedKind = ClosedKind.VQA_YESNO,
    classes: Sequence[str] | None = None,
) -> ClosedScorecard:
    """Accuracy (micro over questions) with a per-category breakdown.

    Classification categories are the class labels themselves.
    """
    if kind is ClosedKind.CLASSIFICATION and classes is None:
        classes = sorted({normalize_answer(r["answer"]) for r in truth})
    warnings = []
    per: dict[str, list[int]] = {}
    correct = 0
    for rec in truth:
        qid = str(rec["id"])
        if qid not in preds:
            warnings.append(f"missing prediction for {qid}")
        pred = preds.get(qid, "")
        label = str(rec["answer"])
        if kind is ClosedKind.CLASSIFICATION:
            ok = classification_correct(pred, label, classes)
            cat = normalize_answer(label)
        else:
            ok = normalize_answer(pred) == normalize_answer(label)
            cat = str(rec.get("category", kind.value))
        correct += ok
        slot = per.setdefault(cat, [0, 0])
        slot[0] += ok
        slot[1] += 1
    per_cat = {k: 100.0 * c / n for k, (c, n) in sorted(per.items())}
    total = len(truth)
    return ClosedScorecard(
        kind=kind.value,
        accuracy=100.0 * correct / total if total else 0.0,
        per_category=per_cat,
        macro=sum(per_cat.values()) / len(per_cat) if per_cat else 0.0,
        correct=correct,
        total=total,
        warnings=warnings,
    )


def missing_fraction(preds: Mapping[str, str], truth: Sequence[Mapping]) -> float:
    if not truth:
        return 0.0
    return sum(1 for r in truth if str(r["id"]) not in preds) / len(truth)


def format_table(title: str, rows: Iterable[tuple[str, object]]) -> str:
    rows = list(rows)
    width = max((len(k) for k, _ in rows), default=0)
    lines = [title, "-" * max(len(title), width + 10)]
    for k, v in rows:
        if isinstance(v, float):
            v = f"{v:.2f}" if not math.isnan(v) else "nan"
        elif v is None:
            v = "-"
        lines.append(f"{k:<{width}}  {v}")
    return "\n".join(lines)
