"""Text grammar for spatial tokens, phrase spans and task tokens.

Wire format (see docs/formats.md)::

    token  = "{" "<" int ">" "<" int ">" "<" int ">" "<" int ">" [ "|" "<" int ">" ] "}"
    span   = "<p>" phrase "</p>"

Coordinates are integers in [0, 100], the angle an integer in [0, 90). The
decoder is lenient: anything it cannot interpret stays in the plain text and
is reported as a warning.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field


@dataclass(frozen=True)
class SpatialToken:
    x_left: int
    y_top: int
    x_right: int
    y_bottom: int
    theta: int = 0

    def __post_init__(self) -> None:
        vals = (self.x_left, self.y_top, self.x_right, self.y_bottom, self.theta)
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in vals):
            raise TypeError(f"token fields must be integers, got {vals}")
        if not all(0 <= v <= 100 for v in vals[:4]):
            raise ValueError(f"token coordinates outside [0, 100]: {vals[:4]}")
        if not 0 <= self.theta < 90:
            raise ValueError(f"token angle outside [0, 90): {self.theta}")
        if self.x_left > self.x_right or self.y_top > self.y_bottom:
            raise ValueError(f"token corners out of order: {vals[:4]}")


class TaskToken(enum.Enum):
    GROUNDING = "[grounding]"
    IDENTIFY = "[identify]"
    REFER = "[refer]"
    NONE = ""

    @classmethod
    def from_name(cls, name: str) -> "TaskToken":
        key = name.strip().strip("[]").upper()
        return cls[key]


def encode_token(t: SpatialToken) -> str:
    return f"{{<{t.x_left}><{t.y_top}><{t.x_right}><{t.y_bottom}>|<{t.theta}>}}"


# digit runs are bounded so int() never sees pathological input
_TOKEN_RE = re.compile(r"\{<(\d{1,3})><(\d{1,3})><(\d{1,3})><(\d{1,3})>(?:\|<(\d{1,3})>)?\}")
_SPAN_RE = re.compile(r"<p>((?:(?!<p>|</p>).)*?)</p>", re.DOTALL)
_ANY_RE = re.compile(_SPAN_RE.pattern + "|" + _TOKEN_RE.pattern, re.DOTALL)
_FOLLOW_RE = re.compile(r"\s*" + _TOKEN_RE.pattern)
_FRAGMENT_RE = re.compile(r"</?p>|\{<")


def _token_from_match(m: re.Match) -> SpatialToken | None:
    xl, yt, xr, yb, th = m.groups()[:5]
    try:
        return SpatialToken(int(xl), int(yt), int(xr), int(yb), int(th) if th is not None else 0)
    except (TypeError, ValueError):
        return None


def decode_token(text: str) -> SpatialToken:
    m = _TOKEN_RE.fullmatch(text.strip())
    if m is None:
        raise ValueError(f"not a spatial token: {text!r}")
    tok = _token_from_match(m)
    if tok is None:
        raise ValueError(f"spatial token out of range: {text!r}")
    return tok


@dataclass(frozen=True)
class GroundedSpan:
    """A phrase and the boxes that follow it.

    ``start``/``end`` index the phrase in the response's plain text. ``tail``
    holds the raw whitespace-and-token text that was removed after the
    phrase; ``marked`` is False for orphan token runs with no ``<p>`` phrase.
    """

    phrase: str
    boxes: tuple[SpatialToken, ...]
    start: int
    end: int
    tail: str = ""
    marked: bool = True


@dataclass(frozen=True)
class GroundedResponse:
    plain_text: str
    spans: tuple[GroundedSpan, ...]
    warnings: tuple[str, ...] = field(default=())

    @property
    def boxes(self) -> list[SpatialToken]:
        return [b for s in self.spans for b in s.boxes]


def _consume_tokens(text: str, pos: int) -> tuple[list[SpatialToken], int]:
    """Greedily read whitespace-separated valid tokens starting at ``pos``."""
    boxes: list[SpatialToken] = []
    while True:
        m = _FOLLOW_RE.match(text, pos)
        if m is None:
            break
        tok = _token_from_match(m)
        if tok is None:
            break
        boxes.append(tok)
        pos = m.end()
    return boxes, pos


def decode_response(text: str) -> GroundedResponse:
    """Split model output into plain text and grounded spans. Never raises."""
    if not isinstance(text, str):
        text = str(text)
    plain: list[str] = []
    plain_len = 0
    spans: list[GroundedSpan] = []
    warnings: list[str] = []
    pos = 0
    while pos < len(text):
        m = _ANY_RE.search(text, pos)
        if m is None:
            break
        if m.start() > pos:
            chunk = text[pos:m.start()]
            plain.append(chunk)
            plain_len += len(chunk)
        if m.group(1) is not None:
            phrase = m.group(1)
            boxes, end = _consume_tokens(text, m.end())
            start = plain_len
            plain.append(phrase)
            plain_len += len(phrase)
            spans.append(GroundedSpan(phrase, tuple(boxes), start, plain_len, text[m.end():end]))
            pos = end
        else:
            boxes, end = _consume_tokens(text, m.start())
            if not boxes:
                warnings.append(f"invalid spatial token at offset {m.start()}: {m.group(0)!r}")
                plain.append(m.group(0))
                plain_len += len(m.group(0))
                pos = m.end()
                continue
            spans.append(GroundedSpan("", tuple(boxes), plain_len, plain_len,
                                      text[m.start():end], marked=False))
            pos = end
    if pos < len(text):
        plain.append(text[pos:])
    plain_text = "".join(plain)
    for frag in _FRAGMENT_RE.finditer(plain_text):
        warnings.append(f"unparsed markup {frag.group(0)!r} at plain offset {frag.start()}")
    return GroundedResponse(plain_text, tuple(spans), tuple(warnings))


def render_response(resp: GroundedResponse) -> str:
    """Re-insert span markup and token text at the recorded offsets."""
    out: list[str] = []
    cursor = 0
    text = resp.plain_text
    for span in resp.spans:
        out.append(text[cursor:span.start])
        if span.marked:
            out.append("<p>" + text[span.start:span.end] + "</p>")
        out.append(span.tail)
        cursor = span.end
    out.append(text[cursor:])
    return "".join(out)


def grounded_phrase(phrase: str, tokens) -> str:
    """``<p>phrase</p> {..}{..}`` with tokens separated by single spaces."""
    toks = " ".join(encode_token(t) for t in tokens)
    return f"<p>{phrase}</p> {toks}" if toks else f"<p>{phrase}</p>"


def render_prompt(task: TaskToken, body: str) -> str:
    if not body:
        raise ValueError("prompt body must be nonempty")
    if task is TaskToken.NONE:
        return body
    return f"{task.value} {body}"
