"""Signature listing and lookup over the id pools of a :class:`DexFile`."""

from __future__ import annotations

from bisect import bisect_left
from typing import NamedTuple, Optional

from .blacklist import Blacklist
from .encoding import utf16_sort_key
from .model import CodeItem, DexFile, MethodDescriptor, method_id_to_descriptor


class MethodEntry(NamedTuple):
    descriptor: MethodDescriptor
    access_flags: int
    code: Optional[CodeItem]


def list_class_methods(dex: DexFile, class_descriptor: str) -> list[MethodEntry]:
    """Methods defined by ``class_descriptor``: direct first, then virtual.

    An unknown class or one without class data gives an empty list.
    """
    cdef = dex.class_def_for(class_descriptor)
    if cdef is None or cdef.class_data is None:
        return []
    return [
        MethodEntry(method_id_to_descriptor(dex, m.method_idx), m.access_flags, m.code)
        for m in cdef.class_data.methods()
    ]


def list_all_methods(dex: DexFile) -> list[MethodEntry]:
    out = []
    for name in sorted({dex.type_names[c.class_idx] for c in dex.class_defs}):
        out.extend(list_class_methods(dex, name))
    return out


def _search(seq, key, keyfunc=None) -> Optional[int]:
    i = bisect_left(seq, key, key=keyfunc)
    if i < len(seq) and (keyfunc(seq[i]) if keyfunc else seq[i]) == key:
        return i
    return None


def find_string_index(dex: DexFile, text: str) -> Optional[int]:
    return _search(dex.strings, utf16_sort_key(text), utf16_sort_key)


def find_type_index(dex: DexFile, descriptor: str) -> Optional[int]:
    sidx = find_string_index(dex, descriptor)
    if sidx is None:
        return None
    return _search(dex.type_ids, sidx)


def find_proto_index(dex: DexFile, parameters: tuple[str, ...], return_type: str) -> Optional[int]:
    ret = find_type_index(dex, return_type)
    if ret is None:
        return None
    params = []
    for p in parameters:
        t = find_type_index(dex, p)
        if t is None:
            return None
        params.append(t)
    return _search(dex.proto_ids, (ret, tuple(params)), lambda p: p.sort_key())


def find_method_index(dex: DexFile, target: MethodDescriptor) -> Optional[int]:
    """Pool index of ``target`` by binary search over class, name, proto."""
    cls = find_type_index(dex, target.class_descriptor)
    name = find_string_index(dex, target.name)
    if cls is None or name is None:
        return None
    proto = find_proto_index(dex, target.parameters, target.return_type)
    if proto is None:
        return None
    return _search(dex.method_ids, (cls, name, proto), lambda m: m.sort_key())


def find_call_targets(dex: DexFile, blacklist: Blacklist) -> list[tuple[MethodDescriptor, int]]:
    """``(entry, method index)`` for every blacklist entry present in the pool."""
    hits = []
    for entry in blacklist:
        idx = find_method_index(dex, entry)
        if idx is not None:
            hits.append((entry, idx))
    return hits


def inert_entries(dex: DexFile, blacklist: Blacklist) -> list[MethodDescriptor]:
    """Blacklist entries the dex never references."""
    return [e for e in blacklist if find_method_index(dex, e) is None]
