import pytest

from dexstub import bytecode as bc
from dexstub.errors import UnsupportedMethodError
from dexstub.model import MethodDescriptor
from dexstub.stubgen import (
    DEFAULT_STUB_CLASS,
    Prototype,
    ReturnStrategy,
    build_stub_specs,
    choose_return_strategy,
    derive_stub_prototype,
    emit_stub_code,
)

from helpers import GET_DEVICE_ID, TELEPHONY

IMEI = MethodDescriptor.parse(GET_DEVICE_ID)


def test_prototype_virtual_prepends_receiver():
    p = derive_stub_prototype(IMEI, bc.INVOKE_VIRTUAL)
    assert str(p) == f"({TELEPHONY})Ljava/lang/String;"


@pytest.mark.parametrize("op", sorted(bc.INVOKE_OPCODES))
def test_prototype_by_kind(op):
    origin = MethodDescriptor.parse("Lx/Y;->f(IJ)D")
    p = derive_stub_prototype(origin, op)
    if op in bc.STATIC_INVOKES:
        assert p == Prototype(("I", "J"), "D")
    else:
        assert p == Prototype(("Lx/Y;", "I", "J"), "D")


def test_prototype_rejects_non_invoke():
    with pytest.raises(ValueError):
        derive_stub_prototype(IMEI, 0x0E)


@pytest.mark.parametrize("ret, strategy", [
    ("V", ReturnStrategy.VOID), ("I", ReturnStrategy.ZERO_PRIMITIVE),
    ("Z", ReturnStrategy.ZERO_PRIMITIVE), ("J", ReturnStrategy.ZERO_WIDE),
    ("D", ReturnStrategy.ZERO_WIDE), ("Ljava/lang/String;", ReturnStrategy.CONSTRUCT_DEFAULT),
    ("Ljava/lang/Object;", ReturnStrategy.NULL_REFERENCE), ("[I", ReturnStrategy.NULL_REFERENCE),
])
def test_return_strategy(ret, strategy):
    assert choose_return_strategy(ret) is strategy


def _decode(code):
    return [(i.opcode, i.length) for i in bc.decode_instructions(code.insns)]


def test_construct_default_body():
    proto = Prototype((TELEPHONY,), "Ljava/lang/String;")
    code = emit_stub_code(ReturnStrategy.CONSTRUCT_DEFAULT, proto, type_idx=7, constructor_idx=9)
    assert _decode(code) == [(bc.NEW_INSTANCE, 2), (bc.INVOKE_DIRECT, 3), (bc.RETURN_OBJECT, 1)]
    units = bc.code_units(code.insns)
    assert units[1] == 7 and units[3] == 9
    assert (code.registers_size, code.ins_size, code.outs_size) == (2, 1, 1)


@pytest.mark.parametrize("strategy, ret, ops", [
    (ReturnStrategy.VOID, "V", [bc.RETURN_VOID]),
    (ReturnStrategy.ZERO_PRIMITIVE, "I", [bc.CONST_4, bc.RETURN]),
    (ReturnStrategy.ZERO_WIDE, "J", [bc.CONST_WIDE_16, bc.RETURN_WIDE]),
    (ReturnStrategy.NULL_REFERENCE, "Lx;", [bc.CONST_4, bc.RETURN_OBJECT]),
])
def test_simple_bodies(strategy, ret, ops):
    proto = Prototype(("J", "I"), ret)
    code = emit_stub_code(strategy, proto)
    assert [op for op, _ in _decode(code)] == ops
    assert code.ins_size == 3
    assert code.registers_size >= code.ins_size
    assert code.outs_size == 0


def test_dedup_virtual_kinds():
    spec = build_stub_specs([(IMEI, [bc.INVOKE_VIRTUAL, bc.INVOKE_VIRTUAL_RANGE])])
    assert spec.stub_class_descriptor == DEFAULT_STUB_CLASS
    assert len(spec.methods) == 1
    m = spec.methods[0]
    assert m.invoke_kinds == {bc.INVOKE_VIRTUAL, bc.INVOKE_VIRTUAL_RANGE}
    assert spec.lookup(IMEI, bc.INVOKE_VIRTUAL_RANGE) is m
    assert str(spec.descriptor(m)) == (
        f"{DEFAULT_STUB_CLASS}->{m.name}({TELEPHONY})Ljava/lang/String;"
    )


def test_static_and_virtual_split():
    origin = MethodDescriptor.parse("Lx/Y;->f()I")
    spec = build_stub_specs([(origin, [bc.INVOKE_STATIC, bc.INVOKE_VIRTUAL])])
    assert len(spec.methods) == 2
    names = [m.name for m in spec.methods]
    assert len(set(names)) == 2
    assert spec.lookup(origin, bc.INVOKE_STATIC).prototype.parameters == ()
    assert spec.lookup(origin, bc.INVOKE_VIRTUAL).prototype.parameters == ("Lx/Y;",)


def test_overload_names_get_suffix():
    a = MethodDescriptor.parse("Lx/Y;->f()I")
    b = MethodDescriptor.parse("Lx/Y;->f(I)I")
    spec = build_stub_specs([(b, [bc.INVOKE_VIRTUAL]), (a, [bc.INVOKE_VIRTUAL])])
    assert [m.name for m in spec.methods] == ["stub_Lx_Y__f", "stub_Lx_Y__f_1"]
    assert spec.methods[0].origin == a


def test_deterministic():
    hits = [(IMEI, [bc.INVOKE_VIRTUAL]), (MethodDescriptor.parse("La;->b()V"), [bc.INVOKE_STATIC])]
    assert build_stub_specs(hits) == build_stub_specs(list(reversed(hits)))


def test_rejects_constructor_and_empty():
    with pytest.raises(UnsupportedMethodError):
        build_stub_specs([(MethodDescriptor.parse("La;-><init>()V"), [bc.INVOKE_DIRECT])])
    with pytest.raises(ValueError):
        build_stub_specs([])


def test_rejects_too_many_parameters():
    origin = MethodDescriptor("La;", "f", ("I",) * 255, "V")
    build_stub_specs([(origin, [bc.INVOKE_STATIC_RANGE])])
    with pytest.raises(UnsupportedMethodError):
        build_stub_specs([(origin, [bc.INVOKE_VIRTUAL_RANGE])])
