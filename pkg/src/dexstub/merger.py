"""Merge a Stub class into an application dex.

Every pool is rebuilt and re-sorted from scratch, so every index held by the
input (in id pools, class definitions, instruction operands, catch handlers
and static values) is rewritten through an :class:`IndexRemap`.  The remap is
strictly increasing on each pool because additions only interleave with the
existing sorted entries; relative order of old items never changes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from .bytecode import CONST_STRING_JUMBO, INDEX_POOL, code_units, iter_instructions, units_to_bytes
from .errors import CapacityError, IndexRangeError, NameCollisionError
from .model import (
    ACC_PUBLIC,
    ACC_STATIC,
    MAX_POOL_16,
    CatchHandler,
    ClassData,
    ClassDef,
    CodeItem,
    DexFile,
    EncodedField,
    EncodedMethod,
    validate,
)
from .pools import build_pools, method_key
from .stubgen import (
    STRING_CONSTRUCTOR,
    STRING_DESCRIPTOR,
    ReturnStrategy,
    StubMethod,
    StubSpec,
    emit_stub_code,
)
from .values import remap_encoded_array

OBJECT_DESCRIPTOR = "Ljava/lang/Object;"

_POOL_ATTR = {"string": "strings", "type": "types", "field": "fields", "method": "methods"}


@dataclass(frozen=True)
class IndexRemap:
    """Old index -> new index, one sequence per pool."""

    strings: Sequence[int]
    types: Sequence[int]
    protos: Sequence[int]
    fields: Sequence[int]
    methods: Sequence[int]

    @classmethod
    def identity(cls, dex: DexFile) -> "IndexRemap":
        return cls(
            range(len(dex.strings)),
            range(len(dex.type_ids)),
            range(len(dex.proto_ids)),
            range(len(dex.field_ids)),
            range(len(dex.method_ids)),
        )


def remap_code_item(code: CodeItem, remap: IndexRemap) -> CodeItem:
    """Rewrite every pool index embedded in ``code``.

    Instruction operands and catch-handler types are remapped; every other
    code unit is left untouched and the code length never changes.  Debug
    info is passed through unchanged (callers that re-sort pools drop it).
    """
    units = code_units(code.insns)
    changed = False
    pools = INDEX_POOL
    for pos, op, _ in iter_instructions(units):
        pool = pools.get(op)
        if pool is None:
            continue
        mapping = getattr(remap, _POOL_ATTR[pool])
        if op == CONST_STRING_JUMBO:
            old = units[pos + 1] | (units[pos + 2] << 16)
            new = _lookup(mapping, old, pool, pos)
            if new != old:
                units[pos + 1] = new & 0xFFFF
                units[pos + 2] = new >> 16
                changed = True
            continue
        old = units[pos + 1]
        new = _lookup(mapping, old, pool, pos)
        if new != old:
            if new > 0xFFFF:
                raise CapacityError(
                    f"{pool} index {new} does not fit the 16-bit operand at code unit {pos}"
                )
            units[pos + 1] = new
            changed = True
    handlers = code.handlers
    if handlers:
        handlers = tuple(
            CatchHandler(tuple((_lookup(remap.types, t, "type", None), a) for t, a in h.pairs),
                         h.catch_all)
            for h in handlers
        )
    if not changed and handlers == code.handlers:
        return code
    return replace(code, insns=units_to_bytes(units) if changed else code.insns,
                   handlers=handlers)


def _lookup(mapping: Sequence[int], old: int, pool: str, pos) -> int:
    try:
        return mapping[old]
    except IndexError:
        where = f" at code unit {pos}" if pos is not None else ""
        raise IndexRangeError(f"{pool}_ids{where}", old, len(mapping)) from None


def merge_stub(dex: DexFile, stubs: StubSpec) -> tuple[DexFile, IndexRemap, dict[StubMethod, int]]:
    """Add the Stub class described by ``stubs`` to ``dex``.

    Returns the merged file, the remap of every original pool index, and the
    new method index of each stub method.
    """
    if not stubs.methods:
        raise ValueError("merge_stub needs at least one stub method")
    if dex.class_def_for(stubs.stub_class_descriptor) is not None:
        raise NameCollisionError(
            f"stub class {stubs.stub_class_descriptor} is already defined in the dex"
        )

    names = dex.type_names
    strings = dex.strings
    old_protos = [
        (tuple(names[t] for t in p.parameters), names[p.return_type_idx]) for p in dex.proto_ids
    ]
    old_fields = [(names[f.class_idx], strings[f.name_idx], names[f.type_idx]) for f in dex.field_ids]
    old_methods = [(names[m.class_idx], strings[m.name_idx], old_protos[m.proto_idx])
                   for m in dex.method_ids]

    stub_keys = [method_key(stubs.descriptor(m)) for m in stubs.methods]
    extra_methods = list(stub_keys)
    needs_string = any(m.strategy is ReturnStrategy.CONSTRUCT_DEFAULT for m in stubs.methods)
    if needs_string:
        extra_methods.append(method_key(STRING_CONSTRUCTOR))

    pools = build_pools(
        strings=strings,
        types=list(names) + [stubs.stub_class_descriptor, OBJECT_DESCRIPTOR],
        protos=old_protos,
        fields=old_fields,
        methods=old_methods + extra_methods,
    )
    for what, pool in (("method", pools.method_ids), ("type", pools.type_ids),
                       ("proto", pools.proto_ids), ("field", pools.field_ids)):
        if len(pool) > MAX_POOL_16:
            raise CapacityError(f"merged {what} pool has {len(pool)} entries (max {MAX_POOL_16})")

    remap = IndexRemap(
        strings=[pools.string_index[s] for s in strings],
        types=[pools.type_index[t] for t in names],
        protos=[pools.proto_index[p] for p in old_protos],
        fields=[pools.field_index[f] for f in old_fields],
        methods=[pools.method_index[m] for m in old_methods],
    )

    class_defs = [_remap_class_def(c, remap) for c in dex.class_defs]

    string_type = pools.type_index.get(STRING_DESCRIPTOR, 0)
    string_ctor = pools.method_index.get(method_key(STRING_CONSTRUCTOR), 0)
    stub_index: dict[StubMethod, int] = {}
    encoded = []
    for m, key in zip(stubs.methods, stub_keys):
        idx = pools.method_index[key]
        stub_index[m] = idx
        code = emit_stub_code(m.strategy, m.prototype, string_type, string_ctor)
        encoded.append(EncodedMethod(idx, ACC_PUBLIC | ACC_STATIC, code))
    encoded.sort(key=lambda e: e.method_idx)
    class_defs.append(
        ClassDef(
            class_idx=pools.type_index[stubs.stub_class_descriptor],
            access_flags=ACC_PUBLIC,
            superclass_idx=pools.type_index[OBJECT_DESCRIPTOR],
            class_data=ClassData(direct_methods=tuple(encoded)),
        )
    )

    merged = DexFile(
        strings=pools.strings,
        type_ids=pools.type_ids,
        proto_ids=pools.proto_ids,
        field_ids=pools.field_ids,
        method_ids=pools.method_ids,
        class_defs=tuple(class_defs),
    )
    validate(merged)
    return merged, remap, stub_index


def _remap_class_def(cdef: ClassDef, remap: IndexRemap) -> ClassDef:
    types = remap.types
    data = cdef.class_data
    if data is not None:
        data = ClassData(
            static_fields=_remap_fields(data.static_fields, remap),
            instance_fields=_remap_fields(data.instance_fields, remap),
            direct_methods=_remap_methods(data.direct_methods, remap),
            virtual_methods=_remap_methods(data.virtual_methods, remap),
        )
    return ClassDef(
        class_idx=types[cdef.class_idx],
        access_flags=cdef.access_flags,
        superclass_idx=None if cdef.superclass_idx is None else types[cdef.superclass_idx],
        interfaces=tuple(types[t] for t in cdef.interfaces),
        source_file_idx=(None if cdef.source_file_idx is None
                         else remap.strings[cdef.source_file_idx]),
        annotations=None,
        class_data=data,
        static_values=(None if cdef.static_values is None
                       else remap_encoded_array(cdef.static_values, remap)),
    )


def _remap_fields(fields: tuple[EncodedField, ...], remap: IndexRemap) -> tuple[EncodedField, ...]:
    # Order is preserved by the monotone remap, which static_values relies on.
    return tuple(EncodedField(remap.fields[f.field_idx], f.access_flags) for f in fields)


def _remap_methods(methods: tuple[EncodedMethod, ...], remap: IndexRemap) -> tuple[EncodedMethod, ...]:
    out = []
    for m in methods:
        code = m.code
        if code is not None:
            code = remap_code_item(code, remap)
            if code.debug_info is not None:
                code = replace(code, debug_info=None)
        out.append(EncodedMethod(remap.methods[m.method_idx], m.access_flags, code))
    return tuple(out)
