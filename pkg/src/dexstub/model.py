"""In-memory model of a dex file and the descriptor grammar.

A :class:`DexFile` holds content, not layout: pools are stored as decoded
values and every cross-reference is a pool index.  Byte offsets only exist on
the wire, so the writer is free to relocate items.  Absent optional indices
(superclass, source file) are ``None`` in the model; the on-disk ``NO_INDEX``
sentinel never leaves the reader/writer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

from .encoding import utf16_sort_key
from .errors import DescriptorError, IndexRangeError, ValidationError

NO_INDEX = 0xFFFFFFFF
DEX_MAGIC = b"dex\n035\0"
ENDIAN_CONSTANT = 0x12345678
HEADER_SIZE = 0x70
MAX_POOL_16 = 0x10000

ACC_PUBLIC = 0x1
ACC_PRIVATE = 0x2
ACC_STATIC = 0x8
ACC_FINAL = 0x10
ACC_NATIVE = 0x100
ACC_INTERFACE = 0x200
ACC_ABSTRACT = 0x400
ACC_CONSTRUCTOR = 0x10000

PRIMITIVES = frozenset("ZBSCIJFD")
WIDE = frozenset("JD")

# ---------------------------------------------------------------------------
# Descriptor grammar
# ---------------------------------------------------------------------------

# Characters that can never appear in a simple name.
_FORBIDDEN = frozenset(" ;/[()<>.:\t\r\n\0")


def _valid_simple_name(name: str) -> bool:
    return bool(name) and not any(ch in _FORBIDDEN or ord(ch) < 0x20 for ch in name)


def valid_member_name(name: str) -> bool:
    return name in ("<init>", "<clinit>") or _valid_simple_name(name)


def scan_type_descriptor(text: str, pos: int = 0, allow_void: bool = False) -> int:
    """Return the end position of the type descriptor starting at ``pos``.

    Raises :class:`DescriptorError` carrying the failing column.
    """
    start = pos
    n = len(text)
    while pos < n and text[pos] == "[":
        pos += 1
    dims = pos - start
    if dims > 255:
        raise DescriptorError("array has more than 255 dimensions", text, start)
    if pos >= n:
        raise DescriptorError("expected type descriptor", text, pos)
    ch = text[pos]
    if ch in PRIMITIVES:
        return pos + 1
    if ch == "V":
        if dims or not allow_void:
            raise DescriptorError("void is only valid as a return type", text, pos)
        return pos + 1
    if ch == "L":
        semi = text.find(";", pos)
        if semi < 0:
            raise DescriptorError("class descriptor missing ';'", text, n)
        body = text[pos + 1 : semi]
        col = pos + 1
        for part in body.split("/"):
            if not _valid_simple_name(part):
                raise DescriptorError(f"invalid class name segment {part!r}", text, col)
            col += len(part) + 1
        return semi + 1
    raise DescriptorError(f"unexpected character {ch!r} in type descriptor", text, pos)


def is_type_descriptor(text: str, allow_void: bool = True) -> bool:
    try:
        return scan_type_descriptor(text, 0, allow_void) == len(text)
    except DescriptorError:
        return False


def is_reference(descriptor: str) -> bool:
    return descriptor[0] in "L["


def register_width(descriptor: str) -> int:
    return 2 if descriptor in WIDE else 1


def shorty_char(descriptor: str) -> str:
    return "L" if is_reference(descriptor) else descriptor


def make_shorty(return_type: str, parameters: tuple[str, ...]) -> str:
    return shorty_char(return_type) + "".join(shorty_char(p) for p in parameters)


def parse_parameter_list(text: str, start: int, end: int) -> tuple[str, ...]:
    params = []
    pos = start
    while pos < end:
        nxt = scan_type_descriptor(text, pos)
        params.append(text[pos:nxt])
        pos = nxt
    return tuple(params)


@dataclass(frozen=True, order=True)
class MethodDescriptor:
    """Symbolic method identity, printed as ``Lpkg/Cls;->name(params)ret``."""

    class_descriptor: str
    name: str
    parameters: tuple[str, ...]
    return_type: str

    def __str__(self) -> str:
        return f"{self.class_descriptor}->{self.name}{self.proto}"

    @property
    def proto(self) -> str:
        return "(" + "".join(self.parameters) + ")" + self.return_type

    @property
    def shorty(self) -> str:
        return make_shorty(self.return_type, self.parameters)

    @classmethod
    def parse(cls, text: str) -> "MethodDescriptor":
        arrow = text.find("->")
        if arrow < 0:
            raise DescriptorError("missing '->' between class and method name", text, 0)
        class_desc = text[:arrow]
        if not class_desc:
            raise DescriptorError("missing class descriptor", text, 0)
        end = scan_type_descriptor(class_desc, 0)
        if end != len(class_desc):
            raise DescriptorError("trailing characters after class descriptor", text, end)
        if class_desc[0] not in "L[":
            raise DescriptorError("method owner must be a class or array type", text, 0)
        paren = text.find("(", arrow + 2)
        if paren < 0:
            raise DescriptorError("missing '(' after method name", text, len(text))
        name = text[arrow + 2 : paren]
        if not valid_member_name(name):
            raise DescriptorError(f"invalid method name {name!r}", text, arrow + 2)
        close = text.find(")", paren)
        if close < 0:
            raise DescriptorError("missing ')' after parameters", text, len(text))
        params = parse_parameter_list(text, paren + 1, close)
        ret_end = scan_type_descriptor(text, close + 1, allow_void=True)
        if ret_end != len(text):
            raise DescriptorError("trailing characters after return type", text, ret_end)
        return cls(class_desc, name, params, text[close + 1 :])


# ---------------------------------------------------------------------------
# Pool entries
# ---------------------------------------------------------------------------


class ProtoId(NamedTuple):
    shorty_idx: int
    return_type_idx: int
    parameters: tuple[int, ...]

    def sort_key(self) -> tuple:
        return (self.return_type_idx, self.parameters)


class FieldId(NamedTuple):
    class_idx: int
    type_idx: int
    name_idx: int

    def sort_key(self) -> tuple:
        return (self.class_idx, self.name_idx, self.type_idx)


class MethodId(NamedTuple):
    class_idx: int
    proto_idx: int
    name_idx: int

    def sort_key(self) -> tuple:
        return (self.class_idx, self.name_idx, self.proto_idx)


class EncodedField(NamedTuple):
    field_idx: int
    access_flags: int


class EncodedMethod(NamedTuple):
    method_idx: int
    access_flags: int
    code: Optional["CodeItem"]


class TryBlock(NamedTuple):
    start_addr: int
    insn_count: int
    handler: int  # position in CodeItem.handlers


class CatchHandler(NamedTuple):
    pairs: tuple[tuple[int, int], ...]  # (type_idx, address)
    catch_all: Optional[int]


@dataclass(frozen=True)
class CodeItem:
    """A method body.  ``insns`` holds the little-endian code units."""

    registers_size: int
    ins_size: int
    outs_size: int
    insns: bytes
    tries: tuple[TryBlock, ...] = ()
    handlers: tuple[CatchHandler, ...] = ()
    debug_info: Optional[bytes] = None

    @property
    def insns_size(self) -> int:
        return len(self.insns) // 2

    @property
    def tries_size(self) -> int:
        return len(self.tries)


@dataclass(frozen=True)
class ClassData:
    static_fields: tuple[EncodedField, ...] = ()
    instance_fields: tuple[EncodedField, ...] = ()
    direct_methods: tuple[EncodedMethod, ...] = ()
    virtual_methods: tuple[EncodedMethod, ...] = ()

    def methods(self) -> tuple[EncodedMethod, ...]:
        return self.direct_methods + self.virtual_methods


AnnotationSet = tuple[bytes, ...]  # raw annotation_item blobs


@dataclass(frozen=True)
class AnnotationsDirectory:
    class_annotations: Optional[AnnotationSet] = None
    fields: tuple[tuple[int, AnnotationSet], ...] = ()
    methods: tuple[tuple[int, AnnotationSet], ...] = ()
    parameters: tuple[tuple[int, tuple[Optional[AnnotationSet], ...]], ...] = ()


@dataclass(frozen=True)
class ClassDef:
    class_idx: int
    access_flags: int = ACC_PUBLIC
    superclass_idx: Optional[int] = None
    interfaces: tuple[int, ...] = ()
    source_file_idx: Optional[int] = None
    annotations: Optional[AnnotationsDirectory] = None
    class_data: Optional[ClassData] = None
    static_values: Optional[bytes] = None  # raw encoded_array_item


class MapItem(NamedTuple):
    type: int
    size: int
    offset: int


@dataclass(frozen=True)
class DexHeader:
    magic: bytes
    checksum: int
    signature: bytes
    file_size: int
    header_size: int
    endian_tag: int
    link_size: int
    link_off: int
    map_off: int
    string_ids_size: int
    string_ids_off: int
    type_ids_size: int
    type_ids_off: int
    proto_ids_size: int
    proto_ids_off: int
    field_ids_size: int
    field_ids_off: int
    method_ids_size: int
    method_ids_off: int
    class_defs_size: int
    class_defs_off: int
    data_size: int
    data_off: int


@dataclass(frozen=True)
class DexFile:
    """Decoded dex file.  Equality is structural; header and map are layout."""

    strings: tuple[str, ...] = ()
    type_ids: tuple[int, ...] = ()  # string index of each type descriptor
    proto_ids: tuple[ProtoId, ...] = ()
    field_ids: tuple[FieldId, ...] = ()
    method_ids: tuple[MethodId, ...] = ()
    class_defs: tuple[ClassDef, ...] = ()
    header: Optional[DexHeader] = field(default=None, compare=False, repr=False)
    map_list: tuple[MapItem, ...] = field(default=(), compare=False, repr=False)

    @cached_property
    def type_names(self) -> tuple[str, ...]:
        strings = self.strings
        return tuple(strings[i] for i in self.type_ids)

    def method_descriptor(self, method_idx: int) -> MethodDescriptor:
        return method_id_to_descriptor(self, method_idx)

    def class_def_for(self, class_descriptor: str) -> Optional[ClassDef]:
        names = self.type_names
        for cdef in self.class_defs:
            if names[cdef.class_idx] == class_descriptor:
                return cdef
        return None


# ---------------------------------------------------------------------------
# Index resolution
# ---------------------------------------------------------------------------


def _check(pool: str, index: int, size: int) -> None:
    if not 0 <= index < size:
        raise IndexRangeError(pool, index, size)


def resolve_string(dex: DexFile, string_idx: int) -> str:
    _check("string_ids", string_idx, len(dex.strings))
    return dex.strings[string_idx]


def resolve_type(dex: DexFile, type_idx: int) -> str:
    """Descriptor string of ``type_idx`` via the type -> string indirection."""
    _check("type_ids", type_idx, len(dex.type_ids))
    return resolve_string(dex, dex.type_ids[type_idx])


def resolve_proto(dex: DexFile, proto_idx: int) -> tuple[tuple[str, ...], str]:
    _check("proto_ids", proto_idx, len(dex.proto_ids))
    proto = dex.proto_ids[proto_idx]
    params = tuple(resolve_type(dex, t) for t in proto.parameters)
    return params, resolve_type(dex, proto.return_type_idx)


def method_id_to_descriptor(dex: DexFile, method_idx: int) -> MethodDescriptor:
    _check("method_ids", method_idx, len(dex.method_ids))
    mid = dex.method_ids[method_idx]
    params, ret = resolve_proto(dex, mid.proto_idx)
    return MethodDescriptor(
        resolve_type(dex, mid.class_idx), resolve_string(dex, mid.name_idx), params, ret
    )


def field_id_to_text(dex: DexFile, field_idx: int) -> str:
    _check("field_ids", field_idx, len(dex.field_ids))
    fid = dex.field_ids[field_idx]
    return (
        f"{resolve_type(dex, fid.class_idx)}->{resolve_string(dex, fid.name_idx)}:"
        f"{resolve_type(dex, fid.type_idx)}"
    )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _strictly_increasing(keys, what: str) -> None:
    prev = None
    for i, key in enumerate(keys):
        if prev is not None and not prev < key:
            kind = "duplicate" if prev == key else "unsorted"
            raise ValidationError(f"{what} pool is {kind} at index {i}")
        prev = key


def validate(dex: DexFile) -> None:
    """Assert every pool-ordering, index-range and descriptor invariant.

    Raises :class:`ValidationError` (or :class:`IndexRangeError`) on the first
    violation found.
    """
    n_strings = len(dex.strings)
    n_types = len(dex.type_ids)
    n_protos = len(dex.proto_ids)
    n_fields = len(dex.field_ids)
    n_methods = len(dex.method_ids)

    _strictly_increasing((utf16_sort_key(s) for s in dex.strings), "string")

    for i in dex.type_ids:
        _check("string_ids", i, n_strings)
    _strictly_increasing(dex.type_ids, "type")
    if n_types > MAX_POOL_16:
        raise ValidationError(f"type pool has {n_types} entries (max {MAX_POOL_16})")
    names = dex.type_names
    for i, desc in enumerate(names):
        if not is_type_descriptor(desc):
            raise ValidationError(f"type {i} has invalid descriptor {desc!r}")

    for i, proto in enumerate(dex.proto_ids):
        _check("string_ids", proto.shorty_idx, n_strings)
        _check("type_ids", proto.return_type_idx, n_types)
        for t in proto.parameters:
            _check("type_ids", t, n_types)
            if names[t] == "V":
                raise ValidationError(f"proto {i} has a void parameter")
        expected = make_shorty(names[proto.return_type_idx], tuple(names[t] for t in proto.parameters))
        if dex.strings[proto.shorty_idx] != expected:
            raise ValidationError(
                f"proto {i} shorty {dex.strings[proto.shorty_idx]!r} != {expected!r}"
            )
    _strictly_increasing((p.sort_key() for p in dex.proto_ids), "proto")
    if n_protos > MAX_POOL_16:
        raise ValidationError(f"proto pool has {n_protos} entries (max {MAX_POOL_16})")

    for fid in dex.field_ids:
        _check("type_ids", fid.class_idx, n_types)
        _check("type_ids", fid.type_idx, n_types)
        _check("string_ids", fid.name_idx, n_strings)
    _strictly_increasing((f.sort_key() for f in dex.field_ids), "field")

    for mid in dex.method_ids:
        _check("type_ids", mid.class_idx, n_types)
        _check("proto_ids", mid.proto_idx, n_protos)
        _check("string_ids", mid.name_idx, n_strings)
    _strictly_increasing((m.sort_key() for m in dex.method_ids), "method")
    if n_methods > MAX_POOL_16:
        raise ValidationError(f"method pool has {n_methods} entries (max {MAX_POOL_16})")

    seen: set[int] = set()
    for cdef in dex.class_defs:
        _check("type_ids", cdef.class_idx, n_types)
        if cdef.class_idx in seen:
            raise ValidationError(f"class {names[cdef.class_idx]} defined twice")
        seen.add(cdef.class_idx)
        if cdef.superclass_idx is not None:
            _check("type_ids", cdef.superclass_idx, n_types)
        for t in cdef.interfaces:
            _check("type_ids", t, n_types)
        if cdef.source_file_idx is not None:
            _check("string_ids", cdef.source_file_idx, n_strings)
        data = cdef.class_data
        if data is None:
            continue
        for group in (data.static_fields, data.instance_fields):
            for ef in group:
                _check("field_ids", ef.field_idx, n_fields)
            _strictly_increasing((ef.field_idx for ef in group), "class_data field")
        for group in (data.direct_methods, data.virtual_methods):
            for em in group:
                _check("method_ids", em.method_idx, n_methods)
            _strictly_increasing((em.method_idx for em in group), "class_data method")
