import struct
from dataclasses import replace

import pytest

from dexstub.dexio import adler32, checksums_valid, fix_checksums, parse_dex, write_dex
from dexstub.encoding import write_uleb128
from dexstub.errors import (
    BadMagicError,
    ChecksumError,
    EndianError,
    IndexRangeError,
    SignatureError,
    TruncatedError,
    UnsupportedVersionError,
    ValidationError,
)
from dexstub.model import AnnotationsDirectory, validate
from dexstub import values as ev

from helpers import adler32_reference, imei_dex, random_dex

# Hand-enumerated contents of imei_dex().
IMEI_STRINGS = [
    "L", "LL", "Landroid/telephony/TelephonyManager;", "Lcom/example/Main;",
    "Ljava/lang/Object;", "Ljava/lang/String;", "Main.java", "getDeviceId", "imei",
]
IMEI_MANIFEST = {"strings": 9, "types": 4, "protos": 2, "fields": 0, "methods": 2, "classes": 1}


def test_adler32_definition():
    assert adler32(b"") == 1
    assert adler32_reference(b"") == 1
    assert adler32_reference(b"abc") == 0x024D0127
    assert adler32(b"abc") == 0x024D0127


def test_adler32_matches_reference_on_file():
    raw = write_dex(imei_dex())
    assert adler32(raw[12:]) == adler32_reference(raw[12:])


def test_minimal_fixture_hex():
    """Walk the written bytes with plain struct reads, independent of the parser."""
    raw = write_dex(imei_dex())
    assert raw[:8] == b"dex\n035\x00"
    (file_size, header_size, endian) = struct.unpack_from("<III", raw, 32)
    assert (file_size, header_size, endian) == (len(raw), 0x70, 0x12345678)
    n_str, str_off, n_typ, typ_off = struct.unpack_from("<4I", raw, 56)
    assert n_str == 9 and str_off == 0x70
    assert n_typ == 4 and typ_off == 0x70 + 4 * 9

    def string_at(i):
        (data_off,) = struct.unpack_from("<I", raw, str_off + 4 * i)
        length = raw[data_off]
        return raw[data_off + 1 : data_off + 1 + length].decode()

    assert [string_at(i) for i in range(n_str)] == IMEI_STRINGS
    (desc0,) = struct.unpack_from("<I", raw, typ_off)
    assert string_at(desc0) == "Landroid/telephony/TelephonyManager;"
    # checksum covers bytes 12.., signature covers bytes 32..
    import hashlib

    assert struct.unpack_from("<I", raw, 8)[0] == adler32_reference(raw[12:])
    assert raw[12:32] == hashlib.sha1(raw[32:]).digest()


def test_parse_matches_manifest():
    dex = parse_dex(write_dex(imei_dex()))
    assert list(dex.strings) == IMEI_STRINGS
    sizes = {
        "strings": len(dex.strings), "types": len(dex.type_ids), "protos": len(dex.proto_ids),
        "fields": len(dex.field_ids), "methods": len(dex.method_ids),
        "classes": len(dex.class_defs),
    }
    assert sizes == IMEI_MANIFEST
    assert dex.header.file_size == len(write_dex(dex))


def test_checksum_flip():
    raw = bytearray(write_dex(imei_dex()))
    raw[8] ^= 0xFF
    with pytest.raises(ChecksumError) as exc:
        parse_dex(bytes(raw))
    assert exc.value.offset == 8


def test_signature_mismatch():
    raw = bytearray(write_dex(imei_dex()))
    raw[20] ^= 1
    raw[8:12] = struct.pack("<I", adler32(raw[12:]))
    with pytest.raises(SignatureError) as exc:
        parse_dex(bytes(raw))
    assert exc.value.offset == 12


@pytest.mark.parametrize("n", [0, 1, 0x6F])
def test_short_input(n):
    raw = write_dex(imei_dex())
    with pytest.raises(TruncatedError):
        parse_dex(raw[:n])


def test_truncated_file():
    raw = write_dex(imei_dex())
    with pytest.raises(ChecksumError, match="truncated"):
        parse_dex(raw[:-4])
    with pytest.raises(TruncatedError):
        parse_dex(raw[:-4], verify=False)


def test_damaged_header_field_is_checksum_error():
    raw = bytearray(write_dex(imei_dex()))
    raw[32] ^= 0x40  # file_size
    with pytest.raises(ChecksumError):
        parse_dex(bytes(raw))


def test_bad_magic():
    raw = bytearray(write_dex(imei_dex()))
    raw[0:4] = b"zip\n"
    with pytest.raises(BadMagicError):
        parse_dex(bytes(raw))


@pytest.mark.parametrize("version", [b"036", b"037", b"038", b"039"])
def test_other_versions_rejected(version):
    raw = bytearray(write_dex(imei_dex()))
    raw[4:7] = version
    fix_checksums(raw)
    with pytest.raises(UnsupportedVersionError, match=version.decode()):
        parse_dex(bytes(raw))


def test_bad_endian():
    raw = bytearray(write_dex(imei_dex()))
    raw[40:44] = struct.pack("<I", 0x78563412)
    fix_checksums(raw)
    with pytest.raises(EndianError) as exc:
        parse_dex(bytes(raw))
    assert exc.value.offset == 40


def test_dangling_type_index():
    raw = bytearray(write_dex(imei_dex()))
    (typ_off,) = struct.unpack_from("<I", raw, 68)
    raw[typ_off:typ_off + 4] = struct.pack("<I", 500)
    fix_checksums(raw)
    with pytest.raises(IndexRangeError) as exc:
        parse_dex(bytes(raw))
    assert exc.value.pool == "string_ids"
    assert exc.value.offset == typ_off


def test_truncated_section():
    raw = bytearray(write_dex(imei_dex()))
    raw[56:60] = struct.pack("<I", 100000)
    fix_checksums(raw)
    with pytest.raises(TruncatedError) as exc:
        parse_dex(bytes(raw))
    assert exc.value.offset == 0x70


def test_fix_checksums_idempotent():
    raw = bytearray(write_dex(imei_dex()))
    once = bytes(raw)
    fix_checksums(raw)
    assert bytes(raw) == once
    raw[-1] ^= 0
    raw[0x80] ^= 0x55
    fix_checksums(raw)
    first = bytes(raw)
    fix_checksums(raw)
    assert bytes(raw) == first
    assert checksums_valid(first) == (True, True)


def test_write_rejects_unsorted():
    dex = imei_dex()
    strings = list(dex.strings)
    strings.reverse()
    with pytest.raises(ValidationError):
        write_dex(replace(dex, strings=tuple(strings)))


def test_empty_method_body_fixpoint():
    from dexstub.builder import DexBuilder

    b = DexBuilder()
    b.add_class("La/Empty;").add_method("nothing", "()V", lambda r: [], locals=0)
    b.add_class("La/Abstract;").add_method("abs", "()V", None, access_flags=0x401)
    d = b.build()
    once = write_dex(d)
    assert write_dex(parse_dex(once)) == once
    assert parse_dex(once) == d


@pytest.mark.parametrize("seed", range(10))
def test_roundtrip_random(seed):
    d = random_dex(seed, 1 + seed * 3, 50 + seed * 20)
    once = write_dex(d)
    parsed = parse_dex(once)
    assert parsed == d
    validate(parsed)
    assert write_dex(parsed) == once
    assert parse_dex(write_dex(parsed)) == parsed


def _decorated_dex():
    """imei_dex plus static values, annotations, tries and debug info."""
    d = imei_dex()
    s = d.strings.index
    t = d.type_names.index
    static_values = (
        write_uleb128(4)
        + bytes([(0 << 5) | ev.VALUE_INT, 5])
        + bytes([(0 << 5) | ev.VALUE_STRING, s("Main.java")])
        + bytes([(0 << 5) | ev.VALUE_TYPE, t("Ljava/lang/String;")])
        + bytes([(1 << 5) | ev.VALUE_BOOLEAN])
    )
    ann = (
        bytes([1])
        + write_uleb128(t("Ljava/lang/Object;"))
        + write_uleb128(1)
        + write_uleb128(s("imei"))
        + bytes([(0 << 5) | ev.VALUE_METHOD, 0])
    )
    ann2 = bytes([2]) + write_uleb128(t("Ljava/lang/String;")) + write_uleb128(0)
    directory = AnnotationsDirectory(
        class_annotations=(ann,),
        methods=((1, (ann, ann2)),),
        parameters=((1, ((ann2,), None)),),
    )
    cdef = d.class_defs[0]
    em = cdef.class_data.direct_methods[0]
    debug = write_uleb128(7) + write_uleb128(1) + write_uleb128(0) + bytes([0x07, 0x0A, 0x02]) \
        + bytes([0x7F]) + bytes([0x03, 0x00, 0x01, 0x01, 0x00])
    from dexstub.model import CatchHandler, TryBlock

    code = replace(
        em.code,
        tries=(TryBlock(0, 3, 1), TryBlock(3, 1, 0)),
        handlers=(CatchHandler(((t("Ljava/lang/String;"), 4),), None),
                  CatchHandler(((t("Ljava/lang/Object;"), 4),), 5)),
        debug_info=debug,
    )
    data = replace(cdef.class_data, direct_methods=(em._replace(code=code),))
    cdef = replace(cdef, annotations=directory, static_values=static_values, class_data=data)
    return replace(d, class_defs=(cdef,))


def test_roundtrip_opaque_sections():
    d = _decorated_dex()
    once = write_dex(d)
    parsed = parse_dex(once)
    assert parsed == d
    assert write_dex(parsed) == once
    types = {m.type for m in parsed.map_list}
    assert {0x1002, 0x1003, 0x2003, 0x2004, 0x2005, 0x2006, 0x2001, 0x2000, 0x1000} <= types


def test_map_list_regenerated_in_offset_order():
    parsed = parse_dex(write_dex(_decorated_dex()))
    offsets = [m.offset for m in parsed.map_list]
    assert offsets == sorted(offsets)
    assert parsed.map_list[-1].type == 0x1000
    assert parsed.map_list[0] == (0, 1, 0)
