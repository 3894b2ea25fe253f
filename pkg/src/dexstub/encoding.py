"""Variable-length primitives of the dex format: LEB128 and Modified UTF-8."""

from __future__ import annotations

from .errors import MalformedError, MalformedStringError, TruncatedError

MAX_ULEB128_BYTES = 5


def read_uleb128(data: bytes, offset: int) -> tuple[int, int]:
    """Decode an unsigned LEB128 value starting at ``offset``.

    Returns ``(value, new_offset)``.
    """
    value = 0
    shift = 0
    pos = offset
    end = len(data)
    for _ in range(MAX_ULEB128_BYTES):
        if pos >= end:
            raise TruncatedError("uleb128 runs past end of buffer", pos)
        byte = data[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            if value > 0xFFFFFFFF:
                raise MalformedError("uleb128 value exceeds 32 bits", offset)
            return value, pos
        shift += 7
    raise MalformedError("uleb128 longer than 5 bytes", offset)


def read_uleb128p1(data: bytes, offset: int) -> tuple[int, int]:
    value, pos = read_uleb128(data, offset)
    return value - 1, pos


def read_sleb128(data: bytes, offset: int) -> tuple[int, int]:
    value = 0
    shift = 0
    pos = offset
    end = len(data)
    for _ in range(MAX_ULEB128_BYTES):
        if pos >= end:
            raise TruncatedError("sleb128 runs past end of buffer", pos)
        byte = data[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        shift += 7
        if not byte & 0x80:
            if byte & 0x40:
                value -= 1 << shift
            return value, pos
    raise MalformedError("sleb128 longer than 5 bytes", offset)


def write_uleb128(value: int) -> bytes:
    if value < 0 or value > 0xFFFFFFFF:
        raise ValueError(f"uleb128 value out of range: {value}")
    if value < 0x80:
        return bytes((value,))
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def write_uleb128p1(value: int) -> bytes:
    return write_uleb128(value + 1)


def write_sleb128(value: int) -> bytes:
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if (value == 0 and not byte & 0x40) or (value == -1 and byte & 0x40):
            out.append(byte)
            return bytes(out)
        out.append(byte | 0x80)


def utf16_length(text: str) -> int:
    """Number of UTF-16 code units needed to represent ``text``."""
    if text.isascii():
        return len(text)
    return len(text) + sum(1 for ch in text if ord(ch) > 0xFFFF)


def utf16_sort_key(text: str) -> bytes:
    """Key that orders strings by UTF-16 code units, as dex string pools require."""
    return text.encode("utf-16-be", "surrogatepass")


def encode_mutf8(text: str) -> bytes:
    """Encode ``text`` as Modified UTF-8, without the trailing NUL."""
    if text.isascii() and "\0" not in text:
        return text.encode("ascii")
    out = bytearray()
    for ch in text:
        cp = ord(ch)
        if cp > 0xFFFF:
            cp -= 0x10000
            _encode_unit(out, 0xD800 | (cp >> 10))
            _encode_unit(out, 0xDC00 | (cp & 0x3FF))
        else:
            _encode_unit(out, cp)
    return bytes(out)


def _encode_unit(out: bytearray, unit: int) -> None:
    if 0 < unit < 0x80:
        out.append(unit)
    elif unit < 0x800:
        out.append(0xC0 | (unit >> 6))
        out.append(0x80 | (unit & 0x3F))
    else:
        out.append(0xE0 | (unit >> 12))
        out.append(0x80 | ((unit >> 6) & 0x3F))
        out.append(0x80 | (unit & 0x3F))


def read_mutf8(data: bytes, offset: int) -> tuple[str, int]:
    """Decode a NUL-terminated MUTF-8 string at ``offset``.

    Returns ``(text, offset just past the NUL)``.
    """
    end = data.find(b"\0", offset)
    if end < 0:
        raise TruncatedError("unterminated string data", offset)
    raw = data[offset:end]
    if raw.isascii():
        return raw.decode("ascii"), end + 1
    return _decode_units(raw, offset), end + 1


def decode_mutf8(data: bytes) -> str:
    """Decode Modified UTF-8 bytes, accepting an optional single trailing NUL."""
    if data.endswith(b"\0"):
        data = data[:-1]
    if b"\0" in data:
        raise MalformedStringError("bare NUL byte inside string data", data.index(b"\0"))
    if data.isascii():
        return data.decode("ascii")
    return _decode_units(data, 0)


def _decode_units(raw: bytes, base: int) -> str:
    units: list[int] = []
    i = 0
    n = len(raw)
    while i < n:
        b0 = raw[i]
        if b0 < 0x80:
            units.append(b0)
            i += 1
        elif 0xC0 <= b0 < 0xE0:
            if i + 1 >= n or raw[i + 1] & 0xC0 != 0x80:
                raise MalformedStringError("invalid continuation byte", base + i)
            unit = ((b0 & 0x1F) << 6) | (raw[i + 1] & 0x3F)
            if unit < 0x80 and unit != 0:
                raise MalformedStringError("overlong two-byte sequence", base + i)
            units.append(unit)
            i += 2
        elif 0xE0 <= b0 < 0xF0:
            if i + 2 >= n or raw[i + 1] & 0xC0 != 0x80 or raw[i + 2] & 0xC0 != 0x80:
                raise MalformedStringError("invalid continuation byte", base + i)
            unit = ((b0 & 0x0F) << 12) | ((raw[i + 1] & 0x3F) << 6) | (raw[i + 2] & 0x3F)
            if unit < 0x800:
                raise MalformedStringError("overlong three-byte sequence", base + i)
            units.append(unit)
            i += 3
        else:
            raise MalformedStringError(f"invalid lead byte 0x{b0:02x}", base + i)
    return _units_to_str(units)


def _units_to_str(units: list[int]) -> str:
    chars = []
    i = 0
    n = len(units)
    while i < n:
        u = units[i]
        if 0xD800 <= u < 0xDC00 and i + 1 < n and 0xDC00 <= units[i + 1] < 0xE000:
            chars.append(chr(0x10000 + ((u - 0xD800) << 10) + (units[i + 1] - 0xDC00)))
            i += 2
        else:
            chars.append(chr(u))
            i += 1
    return "".join(chars)
