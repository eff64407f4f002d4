import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curate.textnorm import InvalidEncoding, TextnormConfig, normalize, word_count


def test_mapped_sentence():
    out = normalize("yantuma ŋende ndeete ekidomola ky'amazzi.")
    assert out.normalized == "yantuma ngende ndeete ekidomola ky'amazzi."
    assert out.accepted
    assert out.applied_rules == ("char_map",)


def test_short_transcript_rejected():
    out = normalize("webale..")
    assert out.normalized == "webale."
    assert not out.accepted


def test_plain_text_untouched():
    out = normalize("abc def ghi")
    assert out.normalized == "abc def ghi" and out.accepted and out.applied_rules == ()


@pytest.mark.parametrize("text,words,ok", [("one two", 2, False), ("one two three", 3, True)])
def test_word_boundary(text, words, ok):
    assert word_count(text) == words
    assert normalize(text).accepted is ok


@pytest.mark.parametrize("text,n", [("a b c", 3), ("  a   b  ", 2), ("", 0), ("\t\n", 0)])
def test_word_count(text, n):
    assert word_count(text) == n


def test_dots_and_marks_collapse():
    assert normalize("one... two.. three").normalized == "one. two. three"
    assert normalize("what?? no!!! yes").normalized == "what? no! yes"


def test_capital_eng_and_quotes():
    out = normalize("Ŋŋ ‘quoted’ “words”")
    assert out.normalized == "Ngng 'quoted' \"words\""


def test_bytes_input():
    assert normalize("ŋa b c".encode()).normalized == "nga b c"
    with pytest.raises(InvalidEncoding):
        normalize(b"\xff\xfe bad")


def test_custom_map_and_validation():
    cfg = TextnormConfig(char_map={"ɛ": "e"})
    assert normalize("ɛmu ŋ two", cfg).normalized == "emu ŋ two"
    with pytest.raises(ValueError):
        TextnormConfig(char_map={"ŋ": "ŋg"})
    assert normalize("a b", TextnormConfig(min_words=2)).accepted


@settings(max_examples=500, deadline=None)
@given(st.text(alphabet=st.sampled_from("aŋŊ .!?\t\n‘’“”́ge"), max_size=40) | st.text(max_size=40))
def test_idempotent_and_clean(text):
    once = normalize(text).normalized
    assert normalize(once).normalized == once
    assert "ŋ" not in once and "Ŋ" not in once
    assert ".." not in once and "  " not in once
    assert normalize(text).accepted == (word_count(once) >= 3)
