import pytest
from hypothesis import given
from hypothesis import strategies as st

from dexstub.encoding import (
    decode_mutf8,
    encode_mutf8,
    read_mutf8,
    read_sleb128,
    read_uleb128,
    utf16_length,
    write_sleb128,
    write_uleb128,
)
from dexstub.errors import MalformedError, MalformedStringError, TruncatedError

from helpers import mutf8_reference, uleb128_reference


@pytest.mark.parametrize(
    "data, value, width",
    [(b"\x00", 0, 1), (b"\x7f", 127, 1), (b"\xb7\x11", 2231, 2), (b"\x80\x01", 128, 2),
     (b"\xff\xff\xff\xff\x0f", 0xFFFFFFFF, 5)],
)
def test_read_uleb128(data, value, width):
    assert uleb128_reference(data) == (value, width)
    assert read_uleb128(data + b"\xaa", 0) == (value, width)


def test_read_uleb128_offset():
    assert read_uleb128(b"\x01\x02\xb7\x11", 2) == (2231, 4)


def test_uleb128_truncated():
    with pytest.raises(TruncatedError) as exc:
        read_uleb128(b"\x80\x80", 0)
    assert exc.value.offset == 2


def test_uleb128_too_long():
    with pytest.raises(MalformedError):
        read_uleb128(b"\x80\x80\x80\x80\x80\x00", 0)


@pytest.mark.parametrize("value, encoded", [(0, b"\x00"), (127, b"\x7f"), (128, b"\x80\x01"),
                                            (2231, b"\xb7\x11")])
def test_write_uleb128(value, encoded):
    assert write_uleb128(value) == encoded


@given(st.integers(0, 2**32 - 1))
def test_uleb128_roundtrip(v):
    enc = write_uleb128(v)
    assert read_uleb128(enc, 0) == (v, len(enc))
    assert uleb128_reference(enc) == (v, len(enc))
    # minimal length
    assert len(enc) == max(1, (v.bit_length() + 6) // 7)


@given(st.integers(-(2**31), 2**31 - 1))
def test_sleb128_roundtrip(v):
    enc = write_sleb128(v)
    assert read_sleb128(enc, 0) == (v, len(enc))


def test_sleb128_known():
    assert read_sleb128(b"\x7f", 0) == (-1, 1)
    assert read_sleb128(b"\x80\x7f", 0) == (-128, 2)


def test_mutf8_ascii():
    assert encode_mutf8("func") == b"\x66\x75\x6e\x63"


def test_mutf8_nul():
    enc = encode_mutf8("a\0b")
    assert enc == b"a\xc0\x80b"
    assert b"\x00" not in enc
    assert decode_mutf8(enc) == "a\0b"


def test_mutf8_supplementary_uses_surrogates():
    enc = encode_mutf8("\U0001f600")
    assert enc == b"\xed\xa0\xbd\xed\xb8\x80"
    assert decode_mutf8(enc) == "\U0001f600"
    assert utf16_length("\U0001f600") == 2


@given(st.text())
def test_mutf8_matches_reference(text):
    enc = encode_mutf8(text)
    assert enc == mutf8_reference(text)
    assert b"\x00" not in enc
    assert decode_mutf8(enc) == text
    assert encode_mutf8(decode_mutf8(enc)) == enc


@given(st.lists(st.integers(0, 0xFFFF), max_size=20))
def test_mutf8_lone_surrogates_roundtrip(units):
    text = "".join(chr(u) for u in units)
    enc = mutf8_reference(text)
    assert encode_mutf8(decode_mutf8(enc)) == enc


@pytest.mark.parametrize(
    "bad", [b"a\x00b", b"\xc3", b"\xc3\x41", b"\xe0\x80", b"\xf0\x9f\x98\x80", b"\xc1\x81",
            b"\xe0\x81\x81"],
)
def test_mutf8_malformed(bad):
    with pytest.raises(MalformedStringError):
        decode_mutf8(bad)


def test_read_mutf8_consumes_terminator():
    assert read_mutf8(b"xhi\0rest", 1) == ("hi", 4)


def test_read_mutf8_unterminated():
    with pytest.raises(TruncatedError):
        read_mutf8(b"abc", 0)
