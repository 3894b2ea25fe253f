"""Assembly of sorted id pools from symbolic (descriptor-level) items."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .encoding import utf16_sort_key
from .model import FieldId, MethodDescriptor, MethodId, ProtoId, make_shorty

# Symbolic keys.
Proto = tuple[tuple[str, ...], str]  # (parameters, return type)
Field = tuple[str, str, str]  # (class, name, type)
Method = tuple[str, str, Proto]  # (class, name, proto)


def method_key(desc: MethodDescriptor) -> Method:
    return (desc.class_descriptor, desc.name, (desc.parameters, desc.return_type))


def parse_field(text: str) -> Field:
    """``Lpkg/Cls;->name:Ltype;`` to a symbolic field."""
    owner, _, rest = text.partition("->")
    name, _, typ = rest.partition(":")
    return owner, name, typ


@dataclass
class Pools:
    strings: tuple[str, ...]
    type_ids: tuple[int, ...]
    proto_ids: tuple[ProtoId, ...]
    field_ids: tuple[FieldId, ...]
    method_ids: tuple[MethodId, ...]
    string_index: dict[str, int]
    type_index: dict[str, int]
    proto_index: dict[Proto, int]
    field_index: dict[Field, int]
    method_index: dict[Method, int]


def build_pools(
    strings: Iterable[str] = (),
    types: Iterable[str] = (),
    protos: Iterable[Proto] = (),
    fields: Iterable[Field] = (),
    methods: Iterable[Method] = (),
) -> Pools:
    """Close the given items over their dependencies and sort every pool."""
    method_set = set(methods)
    field_set = set(fields)
    proto_set = set(protos)
    proto_set.update(m[2] for m in method_set)
    type_set = set(types)
    string_set = set(strings)
    for cls, name, proto in method_set:
        type_set.add(cls)
        string_set.add(name)
    for cls, name, typ in field_set:
        type_set.add(cls)
        type_set.add(typ)
        string_set.add(name)
    for params, ret in proto_set:
        type_set.update(params)
        type_set.add(ret)
        string_set.add(make_shorty(ret, params))
    string_set.update(type_set)

    sorted_strings = sorted(string_set, key=utf16_sort_key)
    string_index = {s: i for i, s in enumerate(sorted_strings)}

    sorted_types = sorted(type_set, key=string_index.__getitem__)
    type_index = {t: i for i, t in enumerate(sorted_types)}

    def proto_sort(p: Proto):
        return (type_index[p[1]], tuple(type_index[t] for t in p[0]))

    sorted_protos = sorted(proto_set, key=proto_sort)
    proto_index = {p: i for i, p in enumerate(sorted_protos)}

    sorted_fields = sorted(
        field_set, key=lambda f: (type_index[f[0]], string_index[f[1]], type_index[f[2]])
    )
    sorted_methods = sorted(
        method_set, key=lambda m: (type_index[m[0]], string_index[m[1]], proto_index[m[2]])
    )

    return Pools(
        strings=tuple(sorted_strings),
        type_ids=tuple(string_index[t] for t in sorted_types),
        proto_ids=tuple(
            ProtoId(string_index[make_shorty(ret, params)], type_index[ret],
                    tuple(type_index[t] for t in params))
            for params, ret in sorted_protos
        ),
        field_ids=tuple(
            FieldId(type_index[c], type_index[t], string_index[n]) for c, n, t in sorted_fields
        ),
        method_ids=tuple(
            MethodId(type_index[c], proto_index[p], string_index[n]) for c, n, p in sorted_methods
        ),
        string_index=string_index,
        type_index=type_index,
        proto_index=proto_index,
        field_index={f: i for i, f in enumerate(sorted_fields)},
        method_index={m: i for i, m in enumerate(sorted_methods)},
    )
