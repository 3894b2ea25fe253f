"""Byte-level reading and writing of dex 035 files."""

from __future__ import annotations

import hashlib
import struct
import zlib
from typing import Optional

from .encoding import (
    read_mutf8,
    read_sleb128,
    read_uleb128,
    encode_mutf8,
    utf16_length,
    write_sleb128,
    write_uleb128,
)
from .errors import (
    BadMagicError,
    ChecksumError,
    EndianError,
    IndexRangeError,
    MalformedError,
    MalformedStringError,
    SignatureError,
    TruncatedError,
    UnsupportedVersionError,
)
from .model import (
    DEX_MAGIC,
    ENDIAN_CONSTANT,
    HEADER_SIZE,
    NO_INDEX,
    AnnotationsDirectory,
    CatchHandler,
    ClassData,
    ClassDef,
    CodeItem,
    DexFile,
    DexHeader,
    EncodedField,
    EncodedMethod,
    FieldId,
    MapItem,
    MethodId,
    ProtoId,
    TryBlock,
    validate,
)
from .values import skip_annotation_item, skip_encoded_array

TYPE_HEADER_ITEM = 0x0000
TYPE_STRING_ID_ITEM = 0x0001
TYPE_TYPE_ID_ITEM = 0x0002
TYPE_PROTO_ID_ITEM = 0x0003
TYPE_FIELD_ID_ITEM = 0x0004
TYPE_METHOD_ID_ITEM = 0x0005
TYPE_CLASS_DEF_ITEM = 0x0006
TYPE_MAP_LIST = 0x1000
TYPE_TYPE_LIST = 0x1001
TYPE_ANNOTATION_SET_REF_LIST = 0x1002
TYPE_ANNOTATION_SET_ITEM = 0x1003
TYPE_CLASS_DATA_ITEM = 0x2000
TYPE_CODE_ITEM = 0x2001
TYPE_STRING_DATA_ITEM = 0x2002
TYPE_DEBUG_INFO_ITEM = 0x2003
TYPE_ANNOTATION_ITEM = 0x2004
TYPE_ENCODED_ARRAY_ITEM = 0x2005
TYPE_ANNOTATIONS_DIRECTORY_ITEM = 0x2006

_HEADER = struct.Struct("<8sI20s20I")
_U32 = struct.Struct("<I")
_CODE_HEADER = struct.Struct("<HHHHII")
_TRY = struct.Struct("<IHH")
_MAP_ITEM = struct.Struct("<HHII")

CHECKSUM_OFFSET = 8
SIGNATURE_OFFSET = 12
SIGNED_FROM = 32


def adler32(data) -> int:
    return zlib.adler32(data) & 0xFFFFFFFF


def compute_signature(data) -> bytes:
    return hashlib.sha1(memoryview(data)[SIGNED_FROM:]).digest()


def compute_checksum(data) -> int:
    return adler32(memoryview(data)[SIGNATURE_OFFSET:])


def fix_checksums(buf: bytearray) -> None:
    """Recompute the SHA-1 signature, then the Adler-32 checksum, in place."""
    if len(buf) < HEADER_SIZE:
        raise TruncatedError("buffer shorter than a dex header", len(buf))
    buf[SIGNATURE_OFFSET:SIGNED_FROM] = compute_signature(buf)
    buf[CHECKSUM_OFFSET:SIGNATURE_OFFSET] = _U32.pack(compute_checksum(buf))


def checksums_valid(data: bytes) -> tuple[bool, bool]:
    """Return ``(checksum_ok, signature_ok)`` for a buffer holding a header."""
    if len(data) < HEADER_SIZE:
        return False, False
    (stored,) = _U32.unpack_from(data, CHECKSUM_OFFSET)
    return (
        stored == compute_checksum(data),
        bytes(data[SIGNATURE_OFFSET:SIGNED_FROM]) == compute_signature(data),
    )


# ---------------------------------------------------------------------------
# Reading
# ---------------------------------------------------------------------------


def _check_magic(data: bytes) -> None:
    if len(data) < HEADER_SIZE:
        raise TruncatedError(f"file is {len(data)} bytes, shorter than a dex header", len(data))
    magic = bytes(data[:8])
    if magic != DEX_MAGIC:
        if magic[:4] == b"dex\n" and magic[7:] == b"\0":
            version = magic[4:7].decode("ascii", "replace")
            raise UnsupportedVersionError(
                f"dex version {version} is not supported (only 035)", 4
            )
        raise BadMagicError(f"bad dex magic {magic!r}", 0)


def read_header(data: bytes) -> DexHeader:
    _check_magic(data)
    fields = _HEADER.unpack_from(data, 0)
    header = DexHeader(*fields)
    if header.endian_tag != ENDIAN_CONSTANT:
        raise EndianError(f"unsupported endian tag 0x{header.endian_tag:08x}", 40)
    if header.header_size != HEADER_SIZE:
        raise MalformedError(f"header_size is 0x{header.header_size:x}, expected 0x70", 36)
    return header


class _Reader:
    def __init__(self, data: bytes, header: DexHeader):
        self.data = data
        self.size = header.file_size
        self.header = header
        self.n_strings = header.string_ids_size
        self.n_types = header.type_ids_size
        self.n_fields = header.field_ids_size
        self.n_methods = header.method_ids_size
        self._type_lists: dict[int, tuple[int, ...]] = {}
        self._ann_sets: dict[int, tuple[bytes, ...]] = {}
        self._code: dict[int, CodeItem] = {}

    def need(self, off: int, length: int, what: str) -> None:
        if off < 0 or off + length > self.size:
            raise TruncatedError(f"{what} extends past end of file", off)

    def section(self, off: int, count: int, item: int, what: str) -> None:
        if count and (off < HEADER_SIZE or off + count * item > self.size):
            raise TruncatedError(f"{what} section extends past end of file", off)

    def index(self, pool: str, idx: int, size: int, off: int) -> int:
        if idx >= size:
            raise IndexRangeError(pool, idx, size, off)
        return idx

    def optional_index(self, pool: str, idx: int, size: int, off: int) -> Optional[int]:
        if idx == NO_INDEX:
            return None
        return self.index(pool, idx, size, off)

    def u32(self, off: int) -> int:
        self.need(off, 4, "u32")
        return _U32.unpack_from(self.data, off)[0]

    def strings(self) -> tuple[str, ...]:
        h = self.header
        self.section(h.string_ids_off, h.string_ids_size, 4, "string_ids")
        offsets = struct.unpack_from(f"<{h.string_ids_size}I", self.data, h.string_ids_off)
        data = self.data
        out = []
        for off in offsets:
            self.need(off, 1, "string_data_item")
            units, pos = read_uleb128(data, off)
            text, end = read_mutf8(data, pos)
            if end > self.size:
                raise TruncatedError("string data extends past end of file", off)
            if utf16_length(text) != units:
                raise MalformedStringError(
                    f"string length {units} does not match decoded length", off
                )
            out.append(text)
        return tuple(out)

    def type_ids(self) -> tuple[int, ...]:
        h = self.header
        self.section(h.type_ids_off, h.type_ids_size, 4, "type_ids")
        ids = struct.unpack_from(f"<{h.type_ids_size}I", self.data, h.type_ids_off)
        for i, idx in enumerate(ids):
            self.index("string_ids", idx, self.n_strings, h.type_ids_off + 4 * i)
        return ids

    def type_list(self, off: int) -> tuple[int, ...]:
        if off == 0:
            return ()
        cached = self._type_lists.get(off)
        if cached is not None:
            return cached
        size = self.u32(off)
        self.need(off + 4, 2 * size, "type_list")
        items = struct.unpack_from(f"<{size}H", self.data, off + 4)
        for i, t in enumerate(items):
            self.index("type_ids", t, self.n_types, off + 4 + 2 * i)
        self._type_lists[off] = items
        return items

    def proto_ids(self) -> tuple[ProtoId, ...]:
        h = self.header
        self.section(h.proto_ids_off, h.proto_ids_size, 12, "proto_ids")
        out = []
        for i, (shorty, ret, params_off) in enumerate(
            struct.iter_unpack("<III", self.data[h.proto_ids_off:h.proto_ids_off + 12 * h.proto_ids_size])
        ):
            at = h.proto_ids_off + 12 * i
            self.index("string_ids", shorty, self.n_strings, at)
            self.index("type_ids", ret, self.n_types, at + 4)
            out.append(ProtoId(shorty, ret, self.type_list(params_off)))
        return tuple(out)

    def field_ids(self) -> tuple[FieldId, ...]:
        h = self.header
        self.section(h.field_ids_off, h.field_ids_size, 8, "field_ids")
        out = []
        raw = self.data[h.field_ids_off:h.field_ids_off + 8 * h.field_ids_size]
        for i, (cls, typ, name) in enumerate(struct.iter_unpack("<HHI", raw)):
            at = h.field_ids_off + 8 * i
            self.index("type_ids", cls, self.n_types, at)
            self.index("type_ids", typ, self.n_types, at + 2)
            self.index("string_ids", name, self.n_strings, at + 4)
            out.append(FieldId(cls, typ, name))
        return tuple(out)

    def method_ids(self) -> tuple[MethodId, ...]:
        h = self.header
        self.section(h.method_ids_off, h.method_ids_size, 8, "method_ids")
        n_types, n_protos, n_strings = self.n_types, h.proto_ids_size, self.n_strings
        out = []
        raw = self.data[h.method_ids_off:h.method_ids_off + 8 * h.method_ids_size]
        for i, (cls, proto, name) in enumerate(struct.iter_unpack("<HHI", raw)):
            if cls >= n_types or proto >= n_protos or name >= n_strings:
                at = h.method_ids_off + 8 * i
                self.index("type_ids", cls, n_types, at)
                self.index("proto_ids", proto, n_protos, at + 2)
                self.index("string_ids", name, n_strings, at + 4)
            out.append(MethodId(cls, proto, name))
        return tuple(out)

    def class_defs(self) -> tuple[ClassDef, ...]:
        h = self.header
        self.section(h.class_defs_off, h.class_defs_size, 32, "class_defs")
        out = []
        raw = self.data[h.class_defs_off:h.class_defs_off + 32 * h.class_defs_size]
        for i, row in enumerate(struct.iter_unpack("<8I", raw)):
            at = h.class_defs_off + 32 * i
            cls, flags, sup, ifaces_off, src, ann_off, data_off, sv_off = row
            out.append(
                ClassDef(
                    class_idx=self.index("type_ids", cls, self.n_types, at),
                    access_flags=flags,
                    superclass_idx=self.optional_index("type_ids", sup, self.n_types, at + 8),
                    interfaces=self.type_list(ifaces_off),
                    source_file_idx=self.optional_index("string_ids", src, self.n_strings, at + 16),
                    annotations=self.annotations_directory(ann_off) if ann_off else None,
                    class_data=self.class_data(data_off) if data_off else None,
                    static_values=self.encoded_array(sv_off) if sv_off else None,
                )
            )
        return tuple(out)

    def encoded_array(self, off: int) -> bytes:
        self.need(off, 1, "encoded_array_item")
        end = skip_encoded_array(self.data, off)
        if end > self.size:
            raise TruncatedError("encoded_array_item extends past end of file", off)
        return bytes(self.data[off:end])

    def annotation_set(self, off: int) -> tuple[bytes, ...]:
        cached = self._ann_sets.get(off)
        if cached is not None:
            return cached
        size = self.u32(off)
        self.need(off + 4, 4 * size, "annotation_set_item")
        items = []
        for item_off in struct.unpack_from(f"<{size}I", self.data, off + 4):
            self.need(item_off, 1, "annotation_item")
            end = skip_annotation_item(self.data, item_off)
            if end > self.size:
                raise TruncatedError("annotation_item extends past end of file", item_off)
            items.append(bytes(self.data[item_off:end]))
        result = tuple(items)
        self._ann_sets[off] = result
        return result

    def annotations_directory(self, off: int) -> AnnotationsDirectory:
        self.need(off, 16, "annotations_directory_item")
        class_off, n_fields, n_methods, n_params = struct.unpack_from("<4I", self.data, off)
        self.need(off + 16, 8 * (n_fields + n_methods + n_params), "annotations_directory_item")
        pos = off + 16
        fields = []
        for _ in range(n_fields):
            idx, set_off = struct.unpack_from("<II", self.data, pos)
            fields.append((self.index("field_ids", idx, self.n_fields, pos), self.annotation_set(set_off)))
            pos += 8
        methods = []
        for _ in range(n_methods):
            idx, set_off = struct.unpack_from("<II", self.data, pos)
            methods.append((self.index("method_ids", idx, self.n_methods, pos), self.annotation_set(set_off)))
            pos += 8
        params = []
        for _ in range(n_params):
            idx, ref_off = struct.unpack_from("<II", self.data, pos)
            self.index("method_ids", idx, self.n_methods, pos)
            size = self.u32(ref_off)
            self.need(ref_off + 4, 4 * size, "annotation_set_ref_list")
            sets = tuple(
                self.annotation_set(s) if s else None
                for s in struct.unpack_from(f"<{size}I", self.data, ref_off + 4)
            )
            params.append((idx, sets))
            pos += 8
        return AnnotationsDirectory(
            class_annotations=self.annotation_set(class_off) if class_off else None,
            fields=tuple(fields),
            methods=tuple(methods),
            parameters=tuple(params),
        )

    def class_data(self, off: int) -> ClassData:
        data = self.data
        self.need(off, 1, "class_data_item")
        n_sf, pos = read_uleb128(data, off)
        n_if, pos = read_uleb128(data, pos)
        n_dm, pos = read_uleb128(data, pos)
        n_vm, pos = read_uleb128(data, pos)
        groups = []
        for count in (n_sf, n_if):
            idx = 0
            items = []
            for _ in range(count):
                at = pos
                diff, pos = read_uleb128(data, pos)
                flags, pos = read_uleb128(data, pos)
                idx += diff
                items.append(EncodedField(self.index("field_ids", idx, self.n_fields, at), flags))
            groups.append(tuple(items))
        for count in (n_dm, n_vm):
            idx = 0
            items = []
            for _ in range(count):
                at = pos
                diff, pos = read_uleb128(data, pos)
                flags, pos = read_uleb128(data, pos)
                code_off, pos = read_uleb128(data, pos)
                idx += diff
                self.index("method_ids", idx, self.n_methods, at)
                items.append(EncodedMethod(idx, flags, self.code_item(code_off) if code_off else None))
            groups.append(tuple(items))
        if pos > self.size:
            raise TruncatedError("class_data_item extends past end of file", off)
        return ClassData(*groups)

    def code_item(self, off: int) -> CodeItem:
        cached = self._code.get(off)
        if cached is not None:
            return cached
        data = self.data
        self.need(off, 16, "code_item")
        regs, ins, outs, tries_size, debug_off, insns_size = _CODE_HEADER.unpack_from(data, off)
        start = off + 16
        end = start + 2 * insns_size
        self.need(start, 2 * insns_size, "code_item insns")
        insns = bytes(data[start:end])
        tries: tuple[TryBlock, ...] = ()
        handlers: tuple[CatchHandler, ...] = ()
        if tries_size:
            pos = end + (2 if insns_size & 1 else 0)
            self.need(pos, 8 * tries_size, "try_item")
            raw_tries = [_TRY.unpack_from(data, pos + 8 * i) for i in range(tries_size)]
            base = pos + 8 * tries_size
            handlers, by_offset = self.handlers(base)
            tries_list = []
            for start_addr, count, handler_off in raw_tries:
                if handler_off not in by_offset:
                    raise MalformedError("try_item handler_off does not address a handler", pos)
                tries_list.append(TryBlock(start_addr, count, by_offset[handler_off]))
            tries = tuple(tries_list)
        debug = self.debug_info(debug_off) if debug_off else None
        item = CodeItem(regs, ins, outs, insns, tries, handlers, debug)
        self._code[off] = item
        return item

    def handlers(self, base: int) -> tuple[tuple[CatchHandler, ...], dict[int, int]]:
        data = self.data
        self.need(base, 1, "encoded_catch_handler_list")
        count, pos = read_uleb128(data, base)
        out = []
        by_offset = {}
        for i in range(count):
            by_offset[pos - base] = i
            size, pos = read_sleb128(data, pos)
            pairs = []
            for _ in range(abs(size)):
                type_idx, pos = read_uleb128(data, pos)
                self.index("type_ids", type_idx, self.n_types, pos)
                addr, pos = read_uleb128(data, pos)
                pairs.append((type_idx, addr))
            catch_all = None
            if size <= 0:
                catch_all, pos = read_uleb128(data, pos)
            out.append(CatchHandler(tuple(pairs), catch_all))
        if pos > self.size:
            raise TruncatedError("encoded_catch_handler_list extends past end of file", base)
        return tuple(out), by_offset

    def debug_info(self, off: int) -> bytes:
        data = self.data
        self.need(off, 1, "debug_info_item")
        _, pos = read_uleb128(data, off)
        n_params, pos = read_uleb128(data, pos)
        for _ in range(n_params):
            _, pos = read_uleb128(data, pos)
        while True:
            if pos >= self.size:
                raise TruncatedError("debug_info_item runs past end of file", off)
            op = data[pos]
            pos += 1
            if op == 0x00:
                break
            if op == 0x02:
                _, pos = read_sleb128(data, pos)
            elif op in (0x01, 0x05, 0x06, 0x09):
                _, pos = read_uleb128(data, pos)
            elif op == 0x03:
                for _ in range(3):
                    _, pos = read_uleb128(data, pos)
            elif op == 0x04:
                for _ in range(4):
                    _, pos = read_uleb128(data, pos)
        return bytes(data[off:pos])

    def map_list(self) -> tuple[MapItem, ...]:
        off = self.header.map_off
        if not off:
            return ()
        size = self.u32(off)
        self.need(off + 4, 12 * size, "map_list")
        return tuple(MapItem(t, s, o) for t, _, s, o in
                     (_MAP_ITEM.unpack_from(self.data, off + 4 + 12 * i) for i in range(size)))


def parse_dex(data: bytes, verify: bool = True) -> DexFile:
    """Decode a complete dex file.

    With ``verify`` the Adler-32 checksum and SHA-1 signature are checked and
    the resulting model is run through :func:`validate`.
    """
    data = bytes(data)
    _check_magic(data)
    if verify:
        # Integrity first, so a damaged header field reads as damage.
        checksum_ok, signature_ok = checksums_valid(data)
        if not checksum_ok:
            (declared,) = _U32.unpack_from(data, 32)
            note = ""
            if declared != len(data):
                note = f" (header declares {declared} bytes, file has {len(data)}: truncated?)"
            raise ChecksumError("Adler-32 checksum mismatch" + note, CHECKSUM_OFFSET)
        if not signature_ok:
            raise SignatureError("SHA-1 signature mismatch", SIGNATURE_OFFSET)
    header = read_header(data)
    if header.file_size > len(data):
        raise TruncatedError(
            f"header declares {header.file_size} bytes but only {len(data)} present", len(data)
        )
    if header.file_size != len(data):
        raise MalformedError(
            f"header declares {header.file_size} bytes but file has {len(data)}", 32
        )
    reader = _Reader(data, header)
    dex = DexFile(
        strings=reader.strings(),
        type_ids=reader.type_ids(),
        proto_ids=reader.proto_ids(),
        field_ids=reader.field_ids(),
        method_ids=reader.method_ids(),
        class_defs=reader.class_defs(),
        header=header,
        map_list=reader.map_list(),
    )
    if verify:
        validate(dex)
    return dex


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------


class _Writer:
    def __init__(self, out: bytearray):
        self.out = out
        self.sections: list[MapItem] = []

    def align(self, n: int = 4) -> None:
        pad = -len(self.out) % n
        if pad:
            self.out += b"\0" * pad

    def section(self, map_type: int, items: list, emit, align: int = 1) -> list[int]:
        """Emit ``items`` contiguously and return their offsets."""
        offsets = []
        if not items:
            return offsets
        self.align(align)
        start = len(self.out)
        for item in items:
            self.align(align)
            offsets.append(len(self.out))
            emit(item)
        self.sections.append(MapItem(map_type, len(items), start))
        return offsets


def _unique(values) -> list:
    seen = {}
    for v in values:
        if v not in seen:
            seen[v] = None
    return list(seen)


def _encode_code_item(code: CodeItem, debug_off: int) -> bytes:
    out = bytearray(
        _CODE_HEADER.pack(code.registers_size, code.ins_size, code.outs_size,
                          len(code.tries), debug_off, code.insns_size)
    )
    out += code.insns
    if code.tries:
        if code.insns_size & 1:
            out += b"\0\0"
        handler_bytes = bytearray(write_uleb128(len(code.handlers)))
        handler_offsets = []
        for h in code.handlers:
            handler_offsets.append(len(handler_bytes))
            size = len(h.pairs)
            handler_bytes += write_sleb128(-size if h.catch_all is not None else size)
            for type_idx, addr in h.pairs:
                handler_bytes += write_uleb128(type_idx)
                handler_bytes += write_uleb128(addr)
            if h.catch_all is not None:
                handler_bytes += write_uleb128(h.catch_all)
        for t in code.tries:
            out += _TRY.pack(t.start_addr, t.insn_count, handler_offsets[t.handler])
        out += handler_bytes
    return bytes(out)


def write_dex(dex: DexFile) -> bytes:
    """Serialize ``dex`` in canonical layout with fresh checksums."""
    validate(dex)
    n_str, n_typ, n_pro = len(dex.strings), len(dex.type_ids), len(dex.proto_ids)
    n_fld, n_met, n_cls = len(dex.field_ids), len(dex.method_ids), len(dex.class_defs)

    string_ids_off = HEADER_SIZE
    type_ids_off = string_ids_off + 4 * n_str
    proto_ids_off = type_ids_off + 4 * n_typ
    field_ids_off = proto_ids_off + 12 * n_pro
    method_ids_off = field_ids_off + 8 * n_fld
    class_defs_off = method_ids_off + 8 * n_met
    data_off = class_defs_off + 32 * n_cls

    out = bytearray(data_off)
    w = _Writer(out)
    w.sections.append(MapItem(TYPE_HEADER_ITEM, 1, 0))
    for map_type, count, off in (
        (TYPE_STRING_ID_ITEM, n_str, string_ids_off),
        (TYPE_TYPE_ID_ITEM, n_typ, type_ids_off),
        (TYPE_PROTO_ID_ITEM, n_pro, proto_ids_off),
        (TYPE_FIELD_ID_ITEM, n_fld, field_ids_off),
        (TYPE_METHOD_ID_ITEM, n_met, method_ids_off),
        (TYPE_CLASS_DEF_ITEM, n_cls, class_defs_off),
    ):
        if count:
            w.sections.append(MapItem(map_type, count, off))

    # Gather data items in deterministic first-seen order.
    type_lists = _unique(
        [p.parameters for p in dex.proto_ids if p.parameters]
        + [c.interfaces for c in dex.class_defs if c.interfaces]
    )
    codes: list[CodeItem] = []
    for cdef in dex.class_defs:
        if cdef.class_data:
            codes.extend(m.code for m in cdef.class_data.methods() if m.code is not None)
    debug_infos = _unique(c.debug_info for c in codes if c.debug_info is not None)
    directories = _unique(c.annotations for c in dex.class_defs if c.annotations is not None)
    ann_sets: list[tuple[bytes, ...]] = []
    ref_lists: list[tuple] = []
    for d in directories:
        if d.class_annotations is not None:
            ann_sets.append(d.class_annotations)
        ann_sets.extend(s for _, s in d.fields)
        ann_sets.extend(s for _, s in d.methods)
        for _, sets in d.parameters:
            ref_lists.append(sets)
            ann_sets.extend(s for s in sets if s is not None)
    ann_sets = _unique(ann_sets)
    ref_lists = _unique(ref_lists)
    ann_items = _unique(item for s in ann_sets for item in s)
    arrays = _unique(c.static_values for c in dex.class_defs if c.static_values is not None)

    def emit_string(s: str) -> None:
        out.extend(write_uleb128(utf16_length(s)))
        out.extend(encode_mutf8(s))
        out.append(0)

    string_offs = w.section(TYPE_STRING_DATA_ITEM, list(dex.strings), emit_string)

    def emit_type_list(tl: tuple[int, ...]) -> None:
        out.extend(struct.pack(f"<I{len(tl)}H", len(tl), *tl))

    type_list_off = dict(zip(type_lists, w.section(TYPE_TYPE_LIST, type_lists, emit_type_list, 4)))
    debug_off = dict(zip(debug_infos, w.section(TYPE_DEBUG_INFO_ITEM, debug_infos, out.extend)))
    item_off = dict(zip(ann_items, w.section(TYPE_ANNOTATION_ITEM, ann_items, out.extend)))
    array_off = dict(zip(arrays, w.section(TYPE_ENCODED_ARRAY_ITEM, arrays, out.extend)))

    def emit_set(s: tuple[bytes, ...]) -> None:
        out.extend(struct.pack(f"<I{len(s)}I", len(s), *(item_off[i] for i in s)))

    set_off = dict(zip(ann_sets, w.section(TYPE_ANNOTATION_SET_ITEM, ann_sets, emit_set, 4)))

    def emit_ref_list(sets: tuple) -> None:
        offs = [set_off[s] if s is not None else 0 for s in sets]
        out.extend(struct.pack(f"<I{len(offs)}I", len(offs), *offs))

    ref_off = dict(zip(ref_lists, w.section(TYPE_ANNOTATION_SET_REF_LIST, ref_lists, emit_ref_list, 4)))

    def emit_directory(d: AnnotationsDirectory) -> None:
        out.extend(struct.pack(
            "<4I",
            set_off[d.class_annotations] if d.class_annotations is not None else 0,
            len(d.fields), len(d.methods), len(d.parameters),
        ))
        for idx, s in d.fields:
            out.extend(struct.pack("<II", idx, set_off[s]))
        for idx, s in d.methods:
            out.extend(struct.pack("<II", idx, set_off[s]))
        for idx, sets in d.parameters:
            out.extend(struct.pack("<II", idx, ref_off[sets]))

    dir_off = dict(zip(directories, w.section(TYPE_ANNOTATIONS_DIRECTORY_ITEM, directories,
                                              emit_directory, 4)))

    code_offs = w.section(
        TYPE_CODE_ITEM, codes,
        lambda c: out.extend(_encode_code_item(c, debug_off.get(c.debug_info, 0) if c.debug_info is not None else 0)),
        4,
    )
    code_iter = iter(code_offs)

    class_datas = [(i, c.class_data) for i, c in enumerate(dex.class_defs) if c.class_data is not None]

    def emit_class_data(entry) -> None:
        _, cd = entry
        out.extend(write_uleb128(len(cd.static_fields)))
        out.extend(write_uleb128(len(cd.instance_fields)))
        out.extend(write_uleb128(len(cd.direct_methods)))
        out.extend(write_uleb128(len(cd.virtual_methods)))
        for group in (cd.static_fields, cd.instance_fields):
            prev = 0
            for f in group:
                out.extend(write_uleb128(f.field_idx - prev))
                out.extend(write_uleb128(f.access_flags))
                prev = f.field_idx
        for group in (cd.direct_methods, cd.virtual_methods):
            prev = 0
            for m in group:
                out.extend(write_uleb128(m.method_idx - prev))
                out.extend(write_uleb128(m.access_flags))
                out.extend(write_uleb128(next(code_iter) if m.code is not None else 0))
                prev = m.method_idx

    class_data_off = dict(zip((i for i, _ in class_datas),
                              w.section(TYPE_CLASS_DATA_ITEM, class_datas, emit_class_data)))

    w.align(4)
    map_off = len(out)
    w.sections.append(MapItem(TYPE_MAP_LIST, 1, map_off))
    out.extend(_U32.pack(len(w.sections)))
    for item in w.sections:
        out.extend(_MAP_ITEM.pack(item.type, 0, item.size, item.offset))

    # Id sections.
    if n_str:
        struct.pack_into(f"<{n_str}I", out, string_ids_off, *string_offs)
    if n_typ:
        struct.pack_into(f"<{n_typ}I", out, type_ids_off, *dex.type_ids)
    for i, p in enumerate(dex.proto_ids):
        struct.pack_into("<III", out, proto_ids_off + 12 * i, p.shorty_idx, p.return_type_idx,
                         type_list_off[p.parameters] if p.parameters else 0)
    for i, f in enumerate(dex.field_ids):
        struct.pack_into("<HHI", out, field_ids_off + 8 * i, f.class_idx, f.type_idx, f.name_idx)
    for i, m in enumerate(dex.method_ids):
        struct.pack_into("<HHI", out, method_ids_off + 8 * i, m.class_idx, m.proto_idx, m.name_idx)
    for i, c in enumerate(dex.class_defs):
        struct.pack_into(
            "<8I", out, class_defs_off + 32 * i,
            c.class_idx,
            c.access_flags,
            NO_INDEX if c.superclass_idx is None else c.superclass_idx,
            type_list_off[c.interfaces] if c.interfaces else 0,
            NO_INDEX if c.source_file_idx is None else c.source_file_idx,
            dir_off[c.annotations] if c.annotations is not None else 0,
            class_data_off.get(i, 0),
            array_off[c.static_values] if c.static_values is not None else 0,
        )

    file_size = len(out)
    _HEADER.pack_into(
        out, 0, DEX_MAGIC, 0, b"\0" * 20, file_size, HEADER_SIZE, ENDIAN_CONSTANT, 0, 0, map_off,
        n_str, string_ids_off if n_str else 0,
        n_typ, type_ids_off if n_typ else 0,
        n_pro, proto_ids_off if n_pro else 0,
        n_fld, field_ids_off if n_fld else 0,
        n_met, method_ids_off if n_met else 0,
        n_cls, class_defs_off if n_cls else 0,
        file_size - data_off, data_off,
    )
    fix_checksums(out)
    return bytes(out)
