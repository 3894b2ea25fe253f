"""Walkers for ``encoded_value`` data (static values and annotations).

The model stores these blobs as raw bytes; the reader only needs their
extent and the merger needs to rewrite the pool indices embedded in them.
"""

from __future__ import annotations

from .encoding import read_uleb128, write_uleb128
from .errors import MalformedError, TruncatedError

VALUE_BYTE = 0x00
VALUE_SHORT = 0x02
VALUE_CHAR = 0x03
VALUE_INT = 0x04
VALUE_LONG = 0x06
VALUE_FLOAT = 0x10
VALUE_DOUBLE = 0x11
VALUE_STRING = 0x17
VALUE_TYPE = 0x18
VALUE_FIELD = 0x19
VALUE_METHOD = 0x1A
VALUE_ENUM = 0x1B
VALUE_ARRAY = 0x1C
VALUE_ANNOTATION = 0x1D
VALUE_NULL = 0x1E
VALUE_BOOLEAN = 0x1F

_SCALARS = frozenset({VALUE_BYTE, VALUE_SHORT, VALUE_CHAR, VALUE_INT, VALUE_LONG,
                      VALUE_FLOAT, VALUE_DOUBLE})
_INDEXED = {VALUE_STRING: "strings", VALUE_TYPE: "types", VALUE_FIELD: "fields",
            VALUE_METHOD: "methods", VALUE_ENUM: "fields"}


def _header(buf: bytes, off: int) -> tuple[int, int]:
    if off >= len(buf):
        raise TruncatedError("encoded_value runs past end of buffer", off)
    b = buf[off]
    return b & 0x1F, b >> 5


def skip_encoded_value(buf: bytes, off: int) -> int:
    vtype, arg = _header(buf, off)
    off += 1
    if vtype in _SCALARS or vtype in _INDEXED:
        end = off + arg + 1
        if end > len(buf):
            raise TruncatedError("encoded_value payload runs past end of buffer", off)
        return end
    if vtype == VALUE_ARRAY:
        return skip_encoded_array(buf, off)
    if vtype == VALUE_ANNOTATION:
        return skip_encoded_annotation(buf, off)
    if vtype in (VALUE_NULL, VALUE_BOOLEAN):
        return off
    raise MalformedError(f"unsupported encoded_value type 0x{vtype:02x}", off - 1)


def skip_encoded_array(buf: bytes, off: int) -> int:
    size, off = read_uleb128(buf, off)
    for _ in range(size):
        off = skip_encoded_value(buf, off)
    return off


def skip_encoded_annotation(buf: bytes, off: int) -> int:
    _, off = read_uleb128(buf, off)
    size, off = read_uleb128(buf, off)
    for _ in range(size):
        _, off = read_uleb128(buf, off)
        off = skip_encoded_value(buf, off)
    return off


def skip_annotation_item(buf: bytes, off: int) -> int:
    if off >= len(buf):
        raise TruncatedError("annotation_item runs past end of buffer", off)
    return skip_encoded_annotation(buf, off + 1)


def _minimal_unsigned(value: int) -> bytes:
    return value.to_bytes(max(1, (value.bit_length() + 7) // 8), "little")


class _Remapper:
    def __init__(self, remap):
        self.maps = {name: getattr(remap, name) for name in ("strings", "types", "fields",
                                                             "methods")}

    def value(self, buf: bytes, off: int, out: bytearray) -> int:
        vtype, arg = _header(buf, off)
        pool = _INDEXED.get(vtype)
        if pool is None:
            if vtype == VALUE_ARRAY:
                out.append(buf[off])
                return self.array(buf, off + 1, out)
            if vtype == VALUE_ANNOTATION:
                out.append(buf[off])
                return self.annotation(buf, off + 1, out)
            end = skip_encoded_value(buf, off)
            out += buf[off:end]
            return end
        start = off + 1
        end = start + arg + 1
        if end > len(buf):
            raise TruncatedError("encoded_value payload runs past end of buffer", start)
        old = int.from_bytes(buf[start:end], "little")
        payload = _minimal_unsigned(self.maps[pool][old])
        out.append(((len(payload) - 1) << 5) | vtype)
        out += payload
        return end

    def array(self, buf: bytes, off: int, out: bytearray) -> int:
        size, off = read_uleb128(buf, off)
        out += write_uleb128(size)
        for _ in range(size):
            off = self.value(buf, off, out)
        return off

    def annotation(self, buf: bytes, off: int, out: bytearray) -> int:
        type_idx, off = read_uleb128(buf, off)
        out += write_uleb128(self.maps["types"][type_idx])
        size, off = read_uleb128(buf, off)
        out += write_uleb128(size)
        for _ in range(size):
            name_idx, off = read_uleb128(buf, off)
            out += write_uleb128(self.maps["strings"][name_idx])
            off = self.value(buf, off, out)
        return off


def remap_encoded_array(raw: bytes, remap) -> bytes:
    """Rewrite every string/type/field/method index inside an encoded_array.

    ``remap`` exposes ``strings``, ``types``, ``fields`` and ``methods``
    sequences mapping old index to new index.
    """
    out = bytearray()
    end = _Remapper(remap).array(raw, 0, out)
    if end != len(raw):
        raise MalformedError("trailing bytes after encoded_array", end)
    return bytes(out)


def remap_annotation_item(raw: bytes, remap) -> bytes:
    out = bytearray(raw[:1])
    end = _Remapper(remap).annotation(raw, 1, out)
    if end != len(raw):
        raise MalformedError("trailing bytes after annotation_item", end)
    return bytes(out)
