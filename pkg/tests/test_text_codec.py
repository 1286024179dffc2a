import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cogmem import codec
from cogmem.text import STOP_WORDS, content_tokens, contains_phrase, jaccard, normalize, token_set, words

from oracles import jaccard_exact


def test_stop_list_has_fifty_words():
    assert len(STOP_WORDS) == 50


def test_normalize_lowercases_and_strips_punctuation():
    assert normalize("I Prefer green tea, over Coffee!") == "i prefer green tea over coffee"
    assert normalize("  tomorrow's   3pm meeting. ") == "tomorrow 3pm meeting"


def test_content_tokens_drop_stop_words():
    assert content_tokens("I like the green tea") == ["like", "green", "tea"]
    assert token_set("the a an") == frozenset()


def test_contains_phrase_matches_contiguous_words():
    seq = words("Well I like green tea")
    assert contains_phrase(seq, "i like")
    assert not contains_phrase(seq, "like i")


def test_jaccard_hand_values():
    assert jaccard({"likes", "tea"}, {"likes", "coffee"}) == pytest.approx(1 / 3)
    assert jaccard({"likes", "green", "tea"}, {"likes", "green", "tea"}) == 1.0
    assert jaccard(set(), set()) == 0.0


vocab = st.sampled_from(["tea", "green", "coffee", "chess", "monday", "likes", "walk", "park", "blue", "cat"])
token_sets = st.frozensets(vocab, max_size=8)


@given(token_sets, token_sets)
def test_jaccard_matches_set_arithmetic_and_is_symmetric(a, b):
    assert jaccard(a, b) == jaccard(b, a)
    assert math.isclose(jaccard(a, b), float(jaccard_exact(a, b)), rel_tol=0, abs_tol=1e-15)


json_like = st.recursive(
    st.none() | st.booleans() | st.integers(-(2**63), 2**63 - 1) | st.floats(allow_nan=False) | st.text() | st.binary(),
    lambda inner: st.lists(inner, max_size=4) | st.dictionaries(st.text(max_size=6), inner, max_size=4),
    max_leaves=20,
)


@given(json_like)
def test_codec_roundtrip(value):
    assert codec.decode(codec.encode(value)) == value


def test_codec_is_canonical_over_key_order():
    assert codec.encode({"b": 1, "a": 2}) == codec.encode({"a": 2, "b": 1})


@pytest.mark.parametrize("blob", [b"", b"Z", b"I\x00\x01", b"S\x00\x00\x00\x09abc", b"S\x00\x00\x00\x01\xff", b"M\x00\x00\x00\x01"])
def test_codec_rejects_damaged_input(blob):
    with pytest.raises(codec.CodecError):
        codec.decode(blob)
