import pytest
from hypothesis import given, strategies as st

from geoforge.codec import (
    SpatialToken,
    TaskToken,
    decode_response,
    decode_token,
    encode_token,
    grounded_phrase,
    render_prompt,
    render_response,
)

tokens = st.builds(
    lambda x0, x1, y0, y1, t: SpatialToken(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1), t),
    st.integers(0, 100), st.integers(0, 100), st.integers(0, 100), st.integers(0, 100), st.integers(0, 89),
)

# text built from the characters that matter to the grammar
markup = st.text(alphabet=list("<>{}|p/ 0123456789ab\n"), max_size=60) | st.lists(
    st.sampled_from(["<p>", "</p>", "{<1><2><3><4>|<5>}", "{<9><9><9><9>}", "{<200><0><1><1>|<0>}",
                     "{<5><5><1><1>|<0>}", " ", "plane", "{<", ">}", "|<", "\n"]),
    max_size=12).map("".join)


def test_encode_examples():
    assert encode_token(SpatialToken(0, 0, 100, 100, 0)) == "{<0><0><100><100>|<0>}"
    assert encode_token(SpatialToken(25, 25, 75, 75, 0)) == "{<25><25><75><75>|<0>}"


@given(tokens)
def test_token_round_trip(t):
    assert decode_token(encode_token(t)) == t


@pytest.mark.parametrize("bad", [dict(x_left=101), dict(theta=90), dict(theta=-1), dict(x_left=60, x_right=50),
                                 dict(y_top=70, y_bottom=10), dict(x_left=1.5)])
def test_invalid_tokens_rejected(bad):
    fields = dict(x_left=10, y_top=10, x_right=60, y_bottom=60, theta=0) | bad
    with pytest.raises((ValueError, TypeError)):
        SpatialToken(**fields)


def test_four_field_variant_means_zero_theta():
    assert decode_token("{<1><2><3><4>}") == SpatialToken(1, 2, 3, 4, 0)


@pytest.mark.parametrize("text", ["{<1><2><3>|<4>}", "{<1><2><3><4>|<4>", "{<1000><2><3><4>|<0>}", "plane"])
def test_decode_token_errors(text):
    with pytest.raises(ValueError):
        decode_token(text)


def test_single_span():
    r = decode_response("<p>plane</p> {<10><10><20><20>|<0>}")
    assert r.plain_text == "plane"
    assert [(s.phrase, s.boxes) for s in r.spans] == [("plane", (SpatialToken(10, 10, 20, 20, 0),))]
    assert r.warnings == ()


def test_plain_text_only():
    r = decode_response("Just some words.")
    assert r.plain_text == "Just some words." and r.spans == () and r.warnings == ()


def test_multi_box_attachment():
    text = "There are <p>2 ships</p> {<10><10><20><20>|<0>} {<30><30><40><40>|<5>} here."
    r = decode_response(text)
    assert len(r.spans) == 1
    assert r.spans[0].boxes == (SpatialToken(10, 10, 20, 20, 0), SpatialToken(30, 30, 40, 40, 5))
    assert r.plain_text == "There are 2 ships here."
    assert r.plain_text[r.spans[0].start:r.spans[0].end] == "2 ships"


def test_orphan_tokens_become_empty_spans():
    r = decode_response("{<1><1><2><2>|<0>}{<3><3><4><4>|<0>}")
    assert [s.phrase for s in r.spans] == [""]
    assert len(r.boxes) == 2
    assert r.plain_text == ""


def test_malformed_fragments_warn_and_stay():
    r = decode_response("<p>ship {<200><1><2><3>|<0>} and {<5><5><1><1>|<0>}")
    assert r.spans == ()
    assert "{<200><1><2><3>|<0>}" in r.plain_text
    assert "<p>" in r.plain_text
    assert len(r.warnings) >= 2


def test_grounded_phrase_format():
    toks = [SpatialToken(1, 2, 3, 4, 5), SpatialToken(0, 0, 1, 1, 0)]
    assert grounded_phrase("2 cars", toks) == "<p>2 cars</p> {<1><2><3><4>|<5>} {<0><0><1><1>|<0>}"


@given(markup)
def test_decode_never_raises_and_offsets_valid(text):
    r = decode_response(text)
    last = 0
    for s in r.spans:
        assert last <= s.start <= s.end <= len(r.plain_text)
        assert r.plain_text[s.start:s.end] == s.phrase
        last = s.end


@given(markup)
def test_render_reconstructs_input(text):
    assert render_response(decode_response(text)) == text


@given(st.lists(st.tuples(st.text(alphabet="abc xyz", min_size=1, max_size=8), st.lists(tokens, max_size=3)),
                max_size=4))
def test_well_formed_round_trip(parts):
    text = " then ".join(grounded_phrase(p, toks) for p, toks in parts)
    r = decode_response(text)
    assert r.warnings == ()
    assert [(s.phrase, list(s.boxes)) for s in r.spans] == [(p, toks) for p, toks in parts]


def test_render_prompt():
    assert render_prompt(TaskToken.GROUNDING, "Describe the image in detail.") == \
        "[grounding] Describe the image in detail."
    assert render_prompt(TaskToken.NONE, "Classify the image.") == "Classify the image."
    assert render_prompt(TaskToken.REFER, "<p>the large white plane</p>") == "[refer] <p>the large white plane</p>"
    with pytest.raises(ValueError):
        render_prompt(TaskToken.IDENTIFY, "")


def test_task_token_surface_forms():
    assert {t.value for t in TaskToken} == {"[grounding]", "[identify]", "[refer]", ""}
