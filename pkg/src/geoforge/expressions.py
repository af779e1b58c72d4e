"""Referring-expression phrases and relation sentences.

Phrases follow ``The/A <size> <color> category <in the location>.`` with
size and color in either order; relation sentences append a verb phrase and
the object's category and location. ``normal`` size is never rendered.
"""

from __future__ import annotations

import enum
import random
import re
from dataclasses import dataclass

from geoforge.attributes import AttributeSet, SizeLabel, load_palette
from geoforge.geometry import GridPosition


class ExpressionKind(enum.Enum):
    PHRASE = "phrase"
    SENTENCE = "sentence"


Segment = tuple[str, tuple[str, ...]]


@dataclass(frozen=True)
class Expression:
    """Rendered expression.

    ``segments`` split ``text`` into pieces; a piece with instance ids is a
    noun phrase that refers to those instances and can be grounded.
    """

    text: str
    subject_ids: tuple[str, ...]
    kind: ExpressionKind
    segments: tuple[Segment, ...] = ()


def display_name(class_name: str) -> str:
    return " ".join(re.split(r"[-_\s]+", class_name.strip().lower()))


def pluralize(noun: str) -> str:
    head, _, last = noun.rpartition(" ")
    if re.search(r"(s|x|z|ch|sh)$", last):
        last += "es"
    elif re.search(r"[^aeiou]y$", last):
        last = last[:-1] + "ies"
    else:
        last += "s"
    return f"{head} {last}" if head else last


def article(unique: bool, next_word: str) -> str:
    if unique:
        return "The"
    return "An" if next_word[:1].lower() in "aeiou" else "A"


def _modifiers(attrs: AttributeSet, rng: random.Random) -> list[str]:
    mods = []
    if attrs.relative_size is not None and attrs.relative_size is not SizeLabel.NORMAL:
        mods.append(attrs.relative_size.value)
    if attrs.color:
        mods.append(attrs.color)
    if len(mods) == 2 and rng.random() < 0.5:
        mods.reverse()
    return mods


def noun_phrase(attrs: AttributeSet, unique_in_class: bool, rng: random.Random) -> str:
    """Phrase without the closing period, e.g. ``The large white plane in the top left``."""
    words = _modifiers(attrs, rng) + [display_name(attrs.category)]
    text = " ".join([article(unique_in_class, words[0])] + words)
    if attrs.relative_location is not None:
        text += f" in the {attrs.relative_location.text}"
    return text


def phrase(attrs: AttributeSet, unique_in_class: bool, rng: random.Random) -> Expression:
    core = noun_phrase(attrs, unique_in_class, rng)
    ids = (attrs.instance_id,)
    return Expression(core + ".", ids, ExpressionKind.PHRASE, ((core, ids), (".", ())))


def sentence(
    attrs_i: AttributeSet,
    attrs_j: AttributeSet,
    relation: str,
    rng: random.Random,
    unique_in_class: bool = False,
) -> Expression:
    if (relation, attrs_j.instance_id) not in attrs_i.relations:
        raise ValueError(
            f"{attrs_i.instance_id} has no relation {relation!r} to {attrs_j.instance_id}"
        )
    words = _modifiers(attrs_i, rng) + [display_name(attrs_i.category)]
    subject = " ".join([article(unique_in_class, words[0])] + words)
    obj = f"the {display_name(attrs_j.category)}"
    if attrs_j.relative_location is not None:
        obj += f" in the {attrs_j.relative_location.text}"
    segments = (
        (subject, (attrs_i.instance_id,)),
        (f" {relation} ", ()),
        (obj, (attrs_j.instance_id,)),
        (".", ()),
    )
    return Expression("".join(s for s, _ in segments), (attrs_i.instance_id,),
                      ExpressionKind.SENTENCE, segments)


def _alt(words) -> str:
    return "|".join(re.escape(w) for w in sorted(words, key=len, reverse=True))


def template_regexes(palette=None) -> tuple[re.Pattern, re.Pattern]:
    """(phrase regex, sentence regex) for the template grammar."""
    colors = _alt(palette or load_palette())
    sizes = _alt([SizeLabel.SMALL.value, SizeLabel.LARGE.value])
    grids = _alt([g.text for g in GridPosition])
    mods = rf"(?: (?:{sizes})(?: (?:{colors}))?| (?:{colors})(?: (?:{sizes}))?)?"
    cat = r"[a-z0-9]+(?: [a-z0-9]+)*"
    loc = rf"(?: in the (?:{grids}))?"
    phrase_re = re.compile(rf"^(?:The|An?){mods} {cat}{loc}\.$")
    sentence_re = re.compile(rf"^(?:The|An?){mods} {cat} [a-z]+(?: [a-z]+)* the {cat}{loc}\.$")
    return phrase_re, sentence_re
