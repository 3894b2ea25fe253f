"""Build a :class:`DexFile` from descriptor-level class definitions.

Code bodies are callables taking a :class:`Refs` resolver and returning code
units, so instructions can name methods, types, strings and fields
symbolically; the builder runs each body twice (once to collect symbols, once
with the final sorted indices)::

    b = DexBuilder()
    cls = b.add_class("Lcom/example/Main;")
    cls.add_method("run", "()V", code=lambda r: [
        *fmt_35c(INVOKE_VIRTUAL, r.method("Lx/Y;->f()V"), [0]),
        RETURN_VOID,
    ])
    dex = b.build()
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .bytecode import pack_units
from .model import (
    ACC_CONSTRUCTOR,
    ACC_PRIVATE,
    ACC_PUBLIC,
    ACC_STATIC,
    CatchHandler,
    ClassData,
    ClassDef,
    CodeItem,
    DexFile,
    EncodedField,
    EncodedMethod,
    MethodDescriptor,
    TryBlock,
    parse_parameter_list,
    register_width,
    scan_type_descriptor,
)
from .pools import Pools, build_pools, method_key, parse_field

CodeFn = Callable[["Refs"], list[int]]


class Refs:
    """Symbol resolver handed to code callables."""

    def __init__(self, pools: Optional[Pools] = None):
        self.pools = pools
        self.strings: set[str] = set()
        self.types: set[str] = set()
        self.fields: set = set()
        self.methods: set = set()

    def string(self, s: str) -> int:
        if self.pools is None:
            self.strings.add(s)
            return 0
        return self.pools.string_index[s]

    def type(self, descriptor: str) -> int:
        if self.pools is None:
            self.types.add(descriptor)
            return 0
        return self.pools.type_index[descriptor]

    def field(self, text: str) -> int:
        key = parse_field(text)
        if self.pools is None:
            self.fields.add(key)
            return 0
        return self.pools.field_index[key]

    def method(self, text: str | MethodDescriptor) -> int:
        desc = MethodDescriptor.parse(text) if isinstance(text, str) else text
        key = method_key(desc)
        if self.pools is None:
            self.methods.add(key)
            return 0
        return self.pools.method_index[key]


def parse_proto(proto: str) -> tuple[tuple[str, ...], str]:
    close = proto.index(")")
    params = parse_parameter_list(proto, 1, close)
    ret = proto[close + 1 :]
    if scan_type_descriptor(ret, 0, allow_void=True) != len(ret):
        raise ValueError(f"bad return type in {proto!r}")
    return params, ret


@dataclass
class MethodSpec:
    name: str
    proto: tuple[tuple[str, ...], str]
    access_flags: int
    code: Optional[CodeFn]
    locals: int
    outs: int
    tries: tuple = ()
    handlers: tuple = ()  # ((("Ltype;", addr), ...), catch_all or None)

    @property
    def is_direct(self) -> bool:
        return bool(self.access_flags & (ACC_STATIC | ACC_PRIVATE | ACC_CONSTRUCTOR))

    def ins_size(self) -> int:
        params, _ = self.proto
        receiver = 0 if self.access_flags & ACC_STATIC else 1
        return receiver + sum(register_width(p) for p in params)


@dataclass
class ClassBuilder:
    descriptor: str
    superclass: Optional[str]
    access_flags: int
    interfaces: tuple[str, ...]
    source_file: Optional[str]
    methods: list[MethodSpec] = field(default_factory=list)
    fields: list[tuple[str, str, int]] = field(default_factory=list)  # (name, type, flags)

    def add_method(
        self,
        name: str,
        proto: str,
        code: Optional[CodeFn] = None,
        access_flags: int = ACC_PUBLIC,
        locals: int = 4,
        outs: int = 5,
        tries: tuple = (),
        handlers: tuple = (),
    ) -> "ClassBuilder":
        self.methods.append(
            MethodSpec(name, parse_proto(proto), access_flags, code, locals, outs, tries, handlers)
        )
        return self

    def add_field(self, name: str, type_descriptor: str, access_flags: int = ACC_PUBLIC) -> "ClassBuilder":
        self.fields.append((name, type_descriptor, access_flags))
        return self


class DexBuilder:
    def __init__(self) -> None:
        self.classes: list[ClassBuilder] = []
        self.extra_methods: list = []
        self.extra_strings: list[str] = []

    def add_class(
        self,
        descriptor: str,
        superclass: Optional[str] = "Ljava/lang/Object;",
        access_flags: int = ACC_PUBLIC,
        interfaces: tuple[str, ...] = (),
        source_file: Optional[str] = None,
    ) -> ClassBuilder:
        cb = ClassBuilder(descriptor, superclass, access_flags, tuple(interfaces), source_file)
        self.classes.append(cb)
        return cb

    def reference_method(self, text: str) -> None:
        """Add a method id to the pool without defining or calling it."""
        self.extra_methods.append(method_key(MethodDescriptor.parse(text)))

    def add_string(self, s: str) -> None:
        self.extra_strings.append(s)

    def build(self) -> DexFile:
        collect = Refs()
        strings = set(self.extra_strings)
        types: set[str] = set()
        methods = set(self.extra_methods)
        fields = set()
        for cb in self.classes:
            types.add(cb.descriptor)
            if cb.superclass:
                types.add(cb.superclass)
            types.update(cb.interfaces)
            if cb.source_file is not None:
                strings.add(cb.source_file)
            for name, typ, _ in cb.fields:
                fields.add((cb.descriptor, name, typ))
            for m in cb.methods:
                methods.add((cb.descriptor, m.name, m.proto))
                if m.code is not None:
                    m.code(collect)
                for pairs, _ in m.handlers:
                    types.update(t for t, _ in pairs)
        pools = build_pools(
            strings | collect.strings,
            types | collect.types,
            (),
            fields | collect.fields,
            methods | collect.methods,
        )
        refs = Refs(pools)

        class_defs = []
        for cb in self.classes:
            static_f, inst_f, direct, virtual = [], [], [], []
            for name, typ, flags in cb.fields:
                ef = EncodedField(pools.field_index[(cb.descriptor, name, typ)], flags)
                (static_f if flags & ACC_STATIC else inst_f).append(ef)
            for m in cb.methods:
                code = None
                if m.code is not None:
                    ins = m.ins_size()
                    code = CodeItem(
                        registers_size=ins + m.locals,
                        ins_size=ins,
                        outs_size=m.outs,
                        insns=pack_units(m.code(refs)),
                        tries=tuple(TryBlock(*t) for t in m.tries),
                        handlers=tuple(
                            CatchHandler(tuple((pools.type_index[t], a) for t, a in pairs), ca)
                            for pairs, ca in m.handlers
                        ),
                    )
                em = EncodedMethod(pools.method_index[(cb.descriptor, m.name, m.proto)],
                                   m.access_flags, code)
                (direct if m.is_direct else virtual).append(em)
            data = None
            if static_f or inst_f or direct or virtual:
                key = lambda e: e[0]  # noqa: E731
                data = ClassData(
                    tuple(sorted(static_f, key=key)),
                    tuple(sorted(inst_f, key=key)),
                    tuple(sorted(direct, key=key)),
                    tuple(sorted(virtual, key=key)),
                )
            class_defs.append(
                ClassDef(
                    class_idx=pools.type_index[cb.descriptor],
                    access_flags=cb.access_flags,
                    superclass_idx=pools.type_index[cb.superclass] if cb.superclass else None,
                    interfaces=tuple(pools.type_index[t] for t in cb.interfaces),
                    source_file_idx=(pools.string_index[cb.source_file]
                                     if cb.source_file is not None else None),
                    class_data=data,
                )
            )
        return DexFile(
            strings=pools.strings,
            type_ids=pools.type_ids,
            proto_ids=pools.proto_ids,
            field_ids=pools.field_ids,
            method_ids=pools.method_ids,
            class_defs=tuple(class_defs),
        )
