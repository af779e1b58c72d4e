"""Instruction-record assembly, sampling to per-task budgets, and shard emission."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from geoforge.annotations import Corpus, ImageMeta, ObbInstance, QAPair
from geoforge.attributes import AttributeConfig, AttributeSet, ExtractionResult, SizeLabel
from geoforge.chat import ChatClient, load_prompt
from geoforge.codec import (
    SpatialToken,
    TaskToken,
    encode_token,
    grounded_phrase,
    render_prompt,
)
from geoforge.expressions import Expression, ExpressionKind, display_name, noun_phrase, phrase, pluralize, sentence
from geoforge.geometry import normalize

log = logging.getLogger(__name__)

IMAGE_TOKEN = "<image>"
DESCRIBE_PROMPT = "Describe the image in detail."
VQA_SUFFIX = "Answer the question using a single word or phrase."
CLASSIFY_PROMPT = "Classify the image within one of the given classes: {classes}. Answer with one word or short phrase."
EMPTY_DESCRIPTION = "An aerial image."


class Task(enum.Enum):
    DETAILED_DESCRIPTION = "detailed_description"
    MULTI_ROUND = "multi_round"
    COMPLEX_QA = "complex_qa"
    VQA = "vqa"
    CLASSIFICATION = "classification"
    GROUNDED_DESCRIPTION = "grounded_description"
    REGION_CAPTION = "region_caption"
    REFERRING_EXPRESSION = "referring_expression"

    @classmethod
    def parse(cls, name: str) -> "Task":
        key = name.strip().lower()
        if key in TASK_ALIASES:
            return TASK_ALIASES[key]
        return cls(key)


TASK_ALIASES = {
    "detailed": Task.DETAILED_DESCRIPTION,
    "multi": Task.MULTI_ROUND,
    "complex": Task.COMPLEX_QA,
    "classify": Task.CLASSIFICATION,
    "grounding": Task.GROUNDED_DESCRIPTION,
    "region": Task.REGION_CAPTION,
    "identify": Task.REGION_CAPTION,
    "refer": Task.REFERRING_EXPRESSION,
}

# Table 1 sizes; VQA merges the LRBEN and Floodnet rows.
DEFAULT_BUDGET = {
    Task.DETAILED_DESCRIPTION: 30_000,
    Task.MULTI_ROUND: 65_000,
    Task.COMPLEX_QA: 10_000,
    Task.VQA: 60_000,
    Task.CLASSIFICATION: 31_500,
    Task.GROUNDED_DESCRIPTION: 45_000,
    Task.REGION_CAPTION: 40_000,
    Task.REFERRING_EXPRESSION: 25_000,
}

CHAT_TASKS = {
    Task.MULTI_ROUND: "multi_round",
    Task.COMPLEX_QA: "complex_qa",
    Task.DETAILED_DESCRIPTION: "detailed",
}

_TASK_PREFIX = {
    Task.GROUNDED_DESCRIPTION: TaskToken.GROUNDING,
    Task.REGION_CAPTION: TaskToken.IDENTIFY,
    Task.REFERRING_EXPRESSION: TaskToken.REFER,
}


class Speaker(enum.Enum):
    HUMAN = "human"
    ASSISTANT = "gpt"


@dataclass(frozen=True)
class Turn:
    speaker: Speaker
    value: str


@dataclass(frozen=True)
class InstructionRecord:
    id: str
    image: str
    task: Task
    conversations: tuple[Turn, ...]

    def __post_init__(self) -> None:
        if len(self.conversations) < 2:
            raise ValueError(f"record {self.id}: needs at least one human/assistant exchange")
        for i, turn in enumerate(self.conversations):
            expected = Speaker.HUMAN if i % 2 == 0 else Speaker.ASSISTANT
            if turn.speaker is not expected:
                raise ValueError(f"record {self.id}: turn {i} should be {expected.value}")
            if i > 0 and IMAGE_TOKEN in turn.value:
                raise ValueError(f"record {self.id}: image placeholder outside first turn")
        first = self.conversations[0].value
        if first.count(IMAGE_TOKEN) != 1:
            raise ValueError(f"record {self.id}: first turn must hold the image placeholder once")
        token = _TASK_PREFIX.get(self.task)
        if token is not None and not first.startswith(token.value + " "):
            raise ValueError(f"record {self.id}: {self.task.value} prompt must start with {token.value!r}")
        if token is None and any(first.startswith(t.value) for t in _TASK_PREFIX.values()):
            raise ValueError(f"record {self.id}: {self.task.value} prompt must not carry a task token")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "image": self.image,
            "task": self.task.value,
            "conversations": [{"from": t.speaker.value, "value": t.value} for t in self.conversations],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "InstructionRecord":
        return cls(
            id=str(obj["id"]),
            image=str(obj["image"]),
            task=Task(obj["task"]),
            conversations=tuple(Turn(Speaker(c["from"]), str(c["value"])) for c in obj["conversations"]),
        )


def _exchange(prompt: str, answer: str) -> list[Turn]:
    return [Turn(Speaker.HUMAN, f"{prompt}\n{IMAGE_TOKEN}"), Turn(Speaker.ASSISTANT, answer)]


@dataclass(frozen=True)
class ChatConfig:
    endpoint: str | None = None
    model: str = "vicuna-13b-v1.5"
    temperature: float = 0.2
    timeout: float = 60.0
    offline: bool = False
    max_in_flight: int = 4
    prompts_dir: str | None = None


@dataclass(frozen=True)
class ForgeConfig:
    task_counts: Mapping[Task, int] = field(default_factory=lambda: dict(DEFAULT_BUDGET))
    seed: int = 0
    split: float = 0.95
    attributes: AttributeConfig = AttributeConfig()
    chat: ChatConfig = ChatConfig()
    pseudo_iou: float = 0.5

    def __post_init__(self) -> None:
        if any(int(v) < 0 for v in self.task_counts.values()):
            raise ValueError("task counts must be nonnegative")
        if not 0 < self.split < 1:
            raise ValueError(f"split fraction must be in (0, 1), got {self.split}")


# ---- per-image context -----------------------------------------------------

@dataclass
class ImageContext:
    image: ImageMeta
    instances: tuple[ObbInstance, ...]
    attrs: dict[str, AttributeSet]
    tokens: dict[str, SpatialToken]

    @classmethod
    def build(cls, image: ImageMeta, instances: Sequence[ObbInstance], attributes: Mapping[str, AttributeSet]):
        return cls(
            image,
            tuple(instances),
            {i.instance_id: attributes[i.instance_id] for i in instances},
            {i.instance_id: normalize(i.box, image) for i in instances},
        )

    def class_count(self, class_name: str) -> int:
        return sum(1 for i in self.instances if i.class_name == class_name)


def _rng(seed: int, *parts: str) -> random.Random:
    return random.Random(":".join([str(seed), *parts]))


def describe(ctx: ImageContext, rng: random.Random) -> list[Expression]:
    """Expressions making up an image's short description, in a fixed order."""
    groups: dict[str, list[ObbInstance]] = {}
    for inst in ctx.instances:
        groups.setdefault(inst.class_name, []).append(inst)
    out = []
    for cls, members in groups.items():
        if len(members) == 1:
            out.append(phrase(ctx.attrs[members[0].instance_id], True, rng))
        else:
            ids = tuple(m.instance_id for m in members)
            counted = f"{len(members)} {pluralize(display_name(cls))}"
            segs = (("There are ", ()), (counted, ids), (".", ()))
            out.append(Expression("".join(s for s, _ in segs), ids, ExpressionKind.PHRASE, segs))
    for inst in ctx.instances:
        a = ctx.attrs[inst.instance_id]
        for rel, target in a.relations:
            if target in ctx.attrs:
                out.append(sentence(a, ctx.attrs[target], rel, rng, ctx.class_count(inst.class_name) == 1))
    return out


def make_short_description(expressions: Sequence[Expression]) -> str:
    if not expressions:
        return EMPTY_DESCRIPTION
    return " ".join(e.text for e in expressions)


def render_grounded(expressions: Sequence[Expression], tokens: Mapping[str, SpatialToken]) -> str:
    parts = []
    for e in expressions:
        pieces = []
        for text, ids in e.segments:
            pieces.append(grounded_phrase(text, [tokens[i] for i in ids]) if ids else text)
        parts.append("".join(pieces))
    return " ".join(parts)


def make_grounded_description(ctx: ImageContext, expressions: Sequence[Expression], rec_id: str) -> InstructionRecord | None:
    if not ctx.instances:
        return None
    prompt = render_prompt(TaskToken.GROUNDING, DESCRIBE_PROMPT)
    answer = render_grounded(expressions, ctx.tokens)
    return InstructionRecord(rec_id, ctx.image.path, Task.GROUNDED_DESCRIPTION, tuple(_exchange(prompt, answer)))


def make_region_caption(ctx: ImageContext, instance: ObbInstance, rng: random.Random, rec_id: str) -> InstructionRecord:
    prompt = render_prompt(TaskToken.IDENTIFY, encode_token(ctx.tokens[instance.instance_id]))
    unique = ctx.class_count(instance.class_name) == 1
    caption = phrase(ctx.attrs[instance.instance_id], unique, rng).text
    return InstructionRecord(rec_id, ctx.image.path, Task.REGION_CAPTION, tuple(_exchange(prompt, caption)))


# ---- referring expressions -------------------------------------------------

OPTIONAL_SLOTS = ("color", "relative_size", "relative_location")


def available_slots(a: AttributeSet) -> list[str]:
    slots = []
    if a.color:
        slots.append("color")
    if a.relative_size in (SizeLabel.SMALL, SizeLabel.LARGE):
        slots.append("relative_size")
    if a.relative_location is not None:
        slots.append("relative_location")
    return slots


def mask(a: AttributeSet, keep: Iterable[str]) -> AttributeSet:
    keep = set(keep)
    return replace(a, **{s: None for s in OPTIONAL_SLOTS if s not in keep})


def attribute_match(query: AttributeSet, candidate: AttributeSet) -> bool:
    """Does ``candidate`` satisfy every attribute present in ``query``?"""
    if query.category != candidate.category:
        return False
    if query.color is not None and query.color != candidate.color:
        return False
    if query.relative_size is not None and query.relative_size is not SizeLabel.NORMAL \
            and query.relative_size != candidate.relative_size:
        return False
    if query.relative_location is not None and query.relative_location != candidate.relative_location:
        return False
    return True


def relation_match(subject: AttributeSet, relation: str, obj: AttributeSet,
                   candidate: AttributeSet, attrs: Mapping[str, AttributeSet]) -> bool:
    if not attribute_match(subject, candidate):
        return False
    return any(rel == relation and tgt in attrs and attribute_match(obj, attrs[tgt])
               for rel, tgt in candidate.relations)


@dataclass(frozen=True)
class ReferringQuery:
    text: str  # without closing period
    matches: tuple[str, ...]


def referring_query(ctx: ImageContext, instance: ObbInstance, slots: Sequence[str], rng: random.Random) -> ReferringQuery:
    query = mask(ctx.attrs[instance.instance_id], slots)
    unique = ctx.class_count(instance.class_name) == 1
    text = noun_phrase(query, unique, rng)
    matches = tuple(i.instance_id for i in ctx.instances if attribute_match(query, ctx.attrs[i.instance_id]))
    return ReferringQuery(text, matches)


def relation_query(ctx: ImageContext, instance: ObbInstance, slots: Sequence[str], rng: random.Random) -> ReferringQuery | None:
    a = ctx.attrs[instance.instance_id]
    rels = [(r, t) for r, t in a.relations if t in ctx.attrs]
    if not rels:
        return None
    rel, target = rels[rng.randrange(len(rels))]
    subject = mask(a, [s for s in slots if s != "relative_location"])
    obj = mask(ctx.attrs[target], ["relative_location"])
    unique = ctx.class_count(instance.class_name) == 1
    text = sentence(subject, obj, rel, rng, unique).text.rstrip(".")
    matches = tuple(i.instance_id for i in ctx.instances
                    if relation_match(subject, rel, obj, ctx.attrs[i.instance_id], ctx.attrs))
    return ReferringQuery(text, matches)


def make_referring_expression(ctx: ImageContext, instance: ObbInstance, rng: random.Random, rec_id: str) -> InstructionRecord | None:
    """``[refer] <p>phrase</p>`` answered with the tokens of every matching instance."""
    slots = available_slots(ctx.attrs[instance.instance_id])
    if not slots:
        return None
    chosen = rng.sample(slots, rng.randint(1, len(slots)))
    q = referring_query(ctx, instance, chosen, rng)
    prompt = render_prompt(TaskToken.REFER, f"<p>{q.text}</p>")
    answer = " ".join(encode_token(ctx.tokens[i]) for i in q.matches)
    return InstructionRecord(rec_id, ctx.image.path, Task.REFERRING_EXPRESSION, tuple(_exchange(prompt, answer)))


# ---- VQA and scene classification -----------------------------------------

def make_vqa(image: ImageMeta, qa: QAPair, rec_id: str) -> InstructionRecord | None:
    if qa.answer is None or not qa.answer.strip():
        log.warning("skipping VQA %s: missing answer", rec_id)
        return None
    prompt = f"{qa.question.strip()} {VQA_SUFFIX}"
    return InstructionRecord(rec_id, image.path, Task.VQA, tuple(_exchange(prompt, qa.answer.strip())))


def classification_prompt(classes: Sequence[str]) -> str:
    return CLASSIFY_PROMPT.format(classes=", ".join(classes))


def make_classification(image: ImageMeta, classes: Sequence[str], rec_id: str) -> InstructionRecord | None:
    if not image.scene_label:
        log.warning("skipping classification %s: missing label", rec_id)
        return None
    return InstructionRecord(rec_id, image.path, Task.CLASSIFICATION,
                             tuple(_exchange(classification_prompt(classes), image.scene_label)))


def make_vqa_and_classification(corpus: Corpus) -> list[InstructionRecord]:
    classes = sorted({im.scene_label for im in corpus.images if im.scene_label})
    out = []
    for im in corpus.images:
        for j, qa in enumerate(im.qa):
            rec = make_vqa(im, qa, f"vqa:{im.id}:{j}")
            if rec is not None:
                out.append(rec)
        if im.scene_label is not None:
            rec = make_classification(im, classes, f"classification:{im.id}")
            if rec is not None:
                out.append(rec)
    return out


# ---- LLM conversations -----------------------------------------------------

_QA_RE = re.compile(r"^\s*(question|answer)\s*:\s*", re.IGNORECASE | re.MULTILINE)


def parse_dialogue(reply: str) -> list[tuple[str, str]]:
    """Parse ``Question: ... / Answer: ...`` turns. Raises ValueError when malformed."""
    marks = list(_QA_RE.finditer(reply))
    if not marks:
        raise ValueError("no Question/Answer markers in reply")
    turns = []
    for k, m in enumerate(marks):
        end = marks[k + 1].start() if k + 1 < len(marks) else len(reply)
        turns.append((m.group(1).lower(), reply[m.end():end].strip()))
    if len(turns) % 2 or any(t[0] != ("question" if i % 2 == 0 else "answer") for i, t in enumerate(turns)):
        raise ValueError("turns do not alternate Question/Answer")
    if any(not t[1] for t in turns):
        raise ValueError("empty turn in reply")
    return [(turns[i][1], turns[i + 1][1]) for i in range(0, len(turns), 2)]


def conversation_record(task: Task, image: ImageMeta, reply: str, rec_id: str) -> InstructionRecord:
    if task is Task.DETAILED_DESCRIPTION:
        text = reply.strip()
        if not text or IMAGE_TOKEN in text:
            raise ValueError("empty or invalid detailed description")
        return InstructionRecord(rec_id, image.path, task, tuple(_exchange(DESCRIBE_PROMPT, text)))
    pairs = parse_dialogue(reply)
    turns = _exchange(pairs[0][0], pairs[0][1])
    for q, a in pairs[1:]:
        turns += [Turn(Speaker.HUMAN, q), Turn(Speaker.ASSISTANT, a)]
    return InstructionRecord(rec_id, image.path, task, tuple(turns))


def synthesize_conversations(
    items: Sequence[tuple[ImageMeta, str]],
    task: Task,
    client: ChatClient,
    max_in_flight: int = 4,
    prompts_dir: str | None = None,
) -> tuple[list[InstructionRecord], list[tuple[str, str]]]:
    """Ask the chat service for conversations about each (image, short description).

    Returns (records, failures) with failures as (image id, reason). Records
    keep the input order regardless of ``max_in_flight``.
    """
    system = load_prompt(CHAT_TASKS[task], prompts_dir)

    def one(item):
        image, desc = item
        messages = [{"role": "system", "content": system},
                    {"role": "user", "content": f"Description: {desc}"}]
        rec_id = f"{task.value}:{image.id}"
        try:
            return conversation_record(task, image, client.complete(messages), rec_id), None
        except Exception as exc:
            log.warning("conversation for %s skipped: %s", image.id, exc)
            return None, (image.id, f"{type(exc).__name__}: {exc}")

    if max_in_flight > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            results = list(pool.map(one, items))
    else:
        results = [one(it) for it in items]
    records = [r for r, _ in results if r is not None]
    failures = [f for _, f in results if f is not None]
    return records, failures


# ---- orchestration ---------------------------------------------------------

@dataclass
class TaskReport:
    requested: int
    available: int
    emitted: int = 0
    failures: int = 0


@dataclass
class ForgeResult:
    records: list[InstructionRecord]
    report: dict[Task, TaskReport]
    descriptions: dict[str, str]


def build_contexts(corpus: Corpus, extraction: ExtractionResult) -> list[ImageContext]:
    return [ImageContext.build(im, corpus.instances_of(im.id), extraction.attributes) for im in corpus.images]


def generate(
    corpus: Corpus,
    extraction: ExtractionResult,
    config: ForgeConfig,
    client: ChatClient | None = None,
    tasks: Iterable[Task] | None = None,
) -> ForgeResult:
    """Assemble records for each selected task, sampled to the configured counts.

    Candidates are visited in a seeded order; a task emits
    ``min(count, achievable)`` records, where chat failures are replaced by
    further candidates while any remain.
    """
    selected = set(tasks) if tasks is not None else set(Task)
    seed = config.seed
    contexts = build_contexts(corpus, extraction)
    expressions = {c.image.id: describe(c, _rng(seed, "describe", c.image.id)) for c in contexts}
    descriptions = {k: make_short_description(v) for k, v in expressions.items()}

    builders: dict[Task, list[tuple[str, Callable[[], InstructionRecord | None]]]] = {t: [] for t in Task}
    for c in contexts:
        iid = c.image.id
        if c.instances:
            builders[Task.GROUNDED_DESCRIPTION].append(
                (iid, lambda c=c: make_grounded_description(c, expressions[c.image.id], f"grounded_description:{c.image.id}")))
        for inst in c.instances:
            key = inst.instance_id
            builders[Task.REGION_CAPTION].append(
                (key, lambda c=c, i=inst: make_region_caption(c, i, _rng(seed, "region", i.instance_id),
                                                              f"region_caption:{i.instance_id}")))
            builders[Task.REFERRING_EXPRESSION].append(
                (key, lambda c=c, i=inst: make_referring_expression(c, i, _rng(seed, "refer", i.instance_id),
                                                                    f"referring_expression:{i.instance_id}")))
    for rec in make_vqa_and_classification(corpus):
        builders[rec.task].append((rec.id, lambda rec=rec: rec))

    records: list[InstructionRecord] = []
    report: dict[Task, TaskReport] = {}
    for task in Task:
        if task not in selected:
            continue
        count = int(config.task_counts.get(task, 0))
        if task in CHAT_TASKS:
            pool = [c for c in contexts if c.instances]
            order = sorted(pool, key=lambda c: c.image.id)
            _rng(seed, "sample", task.value).shuffle(order)
            rep = TaskReport(count, len(order))
            got: list[InstructionRecord] = []
            pos = 0
            while len(got) < count and pos < len(order):
                batch = order[pos:pos + count - len(got)]
                pos += len(batch)
                if client is None:
                    raise ValueError("a chat client is required for conversation tasks")
                recs, fails = synthesize_conversations(
                    [(c.image, descriptions[c.image.id]) for c in batch], task, client,
                    config.chat.max_in_flight, config.chat.prompts_dir)
                got.extend(recs)
                rep.failures += len(fails)
        else:
            cands = sorted(builders[task], key=lambda kv: kv[0])
            _rng(seed, "sample", task.value).shuffle(cands)
            rep = TaskReport(count, len(cands))
            got = []
            for _, build in cands:
                if len(got) >= count:
                    break
                rec = build()
                if rec is None:
                    rep.failures += 1
                    continue
                got.append(rec)
        rep.emitted = len(got)
        if rep.emitted < count:
            log.info("%s: emitted %d of %d requested (achievable maximum)", task.value, rep.emitted, count)
        report[task] = rep
        records.extend(got)
    return ForgeResult(records, report, descriptions)


def split_images(image_ids: Iterable[str], train_fraction: float, seed: int) -> tuple[set[str], set[str]]:
    ids = sorted(set(image_ids))
    random.Random(f"{seed}:split").shuffle(ids)
    n = len(ids)
    n_train = int(train_fraction * n + 0.5)
    if n >= 2:
        n_train = min(max(n_train, 1), n - 1)
    return set(ids[:n_train]), set(ids[n_train:])


def _write_jsonl(path: Path, rows: Iterable[Mapping]) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    except OSError as exc:
        raise OSError(f"writing {path}: {exc}") from exc


def emit_shards(
    records: Sequence[InstructionRecord],
    out_dir: str | Path,
    seed: int,
    train_fraction: float,
    extra: Mapping | None = None,
) -> dict:
    """Write train.jsonl / test.jsonl split by image and a stats.json report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_ids, test_ids = split_images((r.image for r in records), train_fraction, seed)
    shards = {"train": [], "test": []}
    for r in sorted(records, key=lambda r: r.id):
        shards["train" if r.image in train_ids else "test"].append(r)
    stats: dict = {"seed": seed, "split": train_fraction, "total": len(records), "shards": {}}
    for name, rows in shards.items():
        random.Random(f"{seed}:shuffle:{name}").shuffle(rows)
        _write_jsonl(out / f"{name}.jsonl", (r.to_json() for r in rows))
        per_task: dict[str, int] = {}
        for r in rows:
            per_task[r.task.value] = per_task.get(r.task.value, 0) + 1
        stats["shards"][name] = {
            "records": len(rows),
            "images": len({r.image for r in rows}),
            "per_task": dict(sorted(per_task.items())),
        }
    per_task_total: dict[str, int] = {}
    for r in records:
        per_task_total[r.task.value] = per_task_total.get(r.task.value, 0) + 1
    stats["per_task"] = dict(sorted(per_task_total.items()))
    if extra:
        stats.update(extra)
    (out / "stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    stats["train_images"] = sorted(train_ids)
    stats["test_images"] = sorted(test_ids)
    return stats


# ---- benchmark -------------------------------------------------------------

def build_benchmark(contexts: Sequence[ImageContext], expressions: Mapping[str, Sequence[Expression]], seed: int) -> dict[str, list[dict]]:
    """Evaluation questions with ground-truth answers for the given images.

    ``grounding`` holds referring questions: ``refer`` uses one of color,
    size or location; ``grounding`` combines attributes or a relation.
    """
    grounding: list[dict] = []
    described: list[dict] = []
    captions: list[dict] = []
    vqa: list[dict] = []
    scenes: list[dict] = []
    for c in contexts:
        im = c.image
        for j, qa in enumerate(im.qa):
            if qa.answer:
                vqa.append({"id": f"vqa:{im.id}:{j}", "image": im.path, "question": qa.question,
                            "answer": qa.answer, "category": qa.category})
        if im.scene_label:
            scenes.append({"id": f"classification:{im.id}", "image": im.path, "answer": im.scene_label})
        if not c.instances:
            continue
        base = {"image": im.path, "width": im.width, "height": im.height}
        described.append({
            "id": f"grounded_description:{im.id}", **base, "task": "grounded_description",
            "question": render_prompt(TaskToken.GROUNDING, DESCRIBE_PROMPT),
            "answer": render_grounded(expressions[im.id], c.tokens),
        })
        seen: set[tuple[str, str]] = set()
        for inst in c.instances:
            iid = inst.instance_id
            rng = _rng(seed, "bench", iid)
            unique = c.class_count(inst.class_name) == 1
            captions.append({
                "id": f"region_caption:{iid}", "image": im.path, "task": "region_caption",
                "question": render_prompt(TaskToken.IDENTIFY, encode_token(c.tokens[iid])),
                "answer": phrase(c.attrs[iid], unique, rng).text,
            })
            slots = available_slots(c.attrs[iid])
            queries: list[tuple[str, ReferringQuery]] = []
            if slots:
                queries.append(("refer", referring_query(c, inst, [rng.choice(slots)], rng)))
            rq = relation_query(c, inst, slots, rng) if rng.random() < 0.5 else None
            if rq is not None:
                queries.append(("grounding", rq))
            elif len(slots) >= 2:
                queries.append(("grounding", referring_query(c, inst, rng.sample(slots, rng.randint(2, len(slots))), rng)))
            for kind, q in queries:
                if (kind, q.text) in seen:
                    continue
                seen.add((kind, q.text))
                token = TaskToken.REFER if kind == "refer" else TaskToken.GROUNDING
                grounding.append({
                    "id": f"{kind}:{iid}", **base, "task": kind,
                    "question": render_prompt(token, f"<p>{q.text}</p>"),
                    "answer": " ".join(encode_token(c.tokens[m]) for m in q.matches),
                })
    return {"grounding": grounding, "grounded_description": described, "region_caption": captions,
            "vqa": vqa, "classification": scenes}


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()
