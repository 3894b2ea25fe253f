"""Synthesis of the Stub class: one static method per redirected target."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from . import bytecode as bc
from .errors import UnsupportedMethodError
from .model import CodeItem, MethodDescriptor, register_width

DEFAULT_STUB_CLASS = "Lru/innopolis/Stub;"
STRING_DESCRIPTOR = "Ljava/lang/String;"
STRING_CONSTRUCTOR = MethodDescriptor(STRING_DESCRIPTOR, "<init>", (), "V")
MAX_PARAMETERS = 255


class ReturnStrategy(enum.Enum):
    VOID = "void"
    ZERO_PRIMITIVE = "zero"
    ZERO_WIDE = "zero-wide"
    NULL_REFERENCE = "null"
    CONSTRUCT_DEFAULT = "construct"


class Prototype(NamedTuple):
    parameters: tuple[str, ...]
    return_type: str

    def __str__(self) -> str:
        return "(" + "".join(self.parameters) + ")" + self.return_type


def is_static_kind(opcode: int) -> bool:
    return opcode in bc.STATIC_INVOKES


def derive_stub_prototype(origin: MethodDescriptor, invoke_kind: int) -> Prototype:
    """Prototype for a static stub standing in for ``origin``.

    Non-static call kinds pass the receiver as the first register, so the
    receiver's class is prepended to keep the call site's register list valid
    after it becomes an invoke-static.
    """
    if invoke_kind not in bc.INVOKE_OPCODES:
        raise ValueError(f"0x{invoke_kind:02x} is not an invoke opcode")
    if is_static_kind(invoke_kind):
        return Prototype(origin.parameters, origin.return_type)
    return Prototype((origin.class_descriptor,) + origin.parameters, origin.return_type)


def choose_return_strategy(return_descriptor: str) -> ReturnStrategy:
    if return_descriptor == "V":
        return ReturnStrategy.VOID
    if return_descriptor in ("J", "D"):
        return ReturnStrategy.ZERO_WIDE
    if len(return_descriptor) == 1:
        return ReturnStrategy.ZERO_PRIMITIVE
    if return_descriptor == STRING_DESCRIPTOR:
        return ReturnStrategy.CONSTRUCT_DEFAULT
    return ReturnStrategy.NULL_REFERENCE


def emit_stub_code(
    strategy: ReturnStrategy,
    prototype: Prototype,
    type_idx: int = 0,
    constructor_idx: int = 0,
) -> CodeItem:
    """Body returning a harmless default.

    ``type_idx`` and ``constructor_idx`` are the pool indices of
    ``Ljava/lang/String;`` and its no-arg constructor; only
    CONSTRUCT_DEFAULT uses them.
    """
    ins = sum(register_width(p) for p in prototype.parameters)
    outs = 0
    if strategy is ReturnStrategy.VOID:
        units = bc.fmt_10x(bc.RETURN_VOID)
        local = 0
    elif strategy is ReturnStrategy.ZERO_PRIMITIVE:
        units = bc.fmt_11n(bc.CONST_4, 0, 0) + bc.fmt_11x(bc.RETURN, 0)
        local = 1
    elif strategy is ReturnStrategy.ZERO_WIDE:
        units = bc.fmt_21s(bc.CONST_WIDE_16, 0, 0) + bc.fmt_11x(bc.RETURN_WIDE, 0)
        local = 2
    elif strategy is ReturnStrategy.NULL_REFERENCE:
        units = bc.fmt_11n(bc.CONST_4, 0, 0) + bc.fmt_11x(bc.RETURN_OBJECT, 0)
        local = 1
    else:
        units = (
            bc.fmt_21c(bc.NEW_INSTANCE, 0, type_idx)
            + bc.fmt_35c(bc.INVOKE_DIRECT, constructor_idx, [0])
            + bc.fmt_11x(bc.RETURN_OBJECT, 0)
        )
        local = 1
        outs = 1
    return CodeItem(
        registers_size=local + ins,
        ins_size=ins,
        outs_size=outs,
        insns=bc.pack_units(units),
    )


@dataclass(frozen=True)
class StubMethod:
    name: str
    prototype: Prototype
    strategy: ReturnStrategy
    origin: MethodDescriptor
    static_origin: bool  # reached through invoke-static(/range)
    invoke_kinds: frozenset[int]


@dataclass(frozen=True)
class StubSpec:
    stub_class_descriptor: str
    methods: tuple[StubMethod, ...]

    def descriptor(self, method: StubMethod) -> MethodDescriptor:
        return MethodDescriptor(self.stub_class_descriptor, method.name,
                                method.prototype.parameters, method.prototype.return_type)

    def lookup(self, origin: MethodDescriptor, opcode: int) -> StubMethod:
        static = is_static_kind(opcode)
        for m in self.methods:
            if m.origin == origin and m.static_origin == static:
                return m
        raise KeyError(f"no stub for {origin} via 0x{opcode:02x}")


_UNSAFE = re.compile(r"[^A-Za-z0-9_]")


def stub_base_name(origin: MethodDescriptor) -> str:
    return _UNSAFE.sub("_", f"stub_{origin.class_descriptor}_{origin.name}")


def build_stub_specs(
    hits: Iterable[tuple[MethodDescriptor, Iterable[int]]],
    stub_class: str = DEFAULT_STUB_CLASS,
) -> StubSpec:
    """One stub per distinct (origin, static-or-not) pair, deterministically named."""
    groups: dict[tuple[MethodDescriptor, bool], set[int]] = {}
    for origin, kinds in hits:
        if origin.name in ("<init>", "<clinit>"):
            raise UnsupportedMethodError(f"cannot stub constructor {origin}")
        for kind in kinds:
            groups.setdefault((origin, is_static_kind(kind)), set()).add(kind)
    if not groups:
        raise ValueError("build_stub_specs needs at least one call site")

    used: set[str] = set()
    methods = []
    for (origin, static) in sorted(groups, key=lambda k: (str(k[0]), k[1])):
        kinds = groups[(origin, static)]
        proto = derive_stub_prototype(origin, min(kinds))
        if len(proto.parameters) > MAX_PARAMETERS:
            raise UnsupportedMethodError(
                f"{origin}: stub would take {len(proto.parameters)} parameters "
                f"(max {MAX_PARAMETERS})"
            )
        base = name = stub_base_name(origin)
        suffix = 1
        while name in used:
            name = f"{base}_{suffix}"
            suffix += 1
        used.add(name)
        methods.append(
            StubMethod(name, proto, choose_return_strategy(origin.return_type), origin, static,
                       frozenset(kinds))
        )
    return StubSpec(stub_class, tuple(methods))
