"""Fixture builders and independent oracles shared by the test modules."""

from __future__ import annotations

import random
import struct

from dexstub import bytecode as bc
from dexstub.builder import DexBuilder
from dexstub.model import ACC_PUBLIC, ACC_STATIC, DexFile, MethodDescriptor, method_id_to_descriptor

GET_DEVICE_ID = "Landroid/telephony/TelephonyManager;->getDeviceId()Ljava/lang/String;"
TELEPHONY = "Landroid/telephony/TelephonyManager;"
MAIN = "Lcom/example/Main;"

# ---------------------------------------------------------------------------
# Independent oracles
# ---------------------------------------------------------------------------


def adler32_reference(data: bytes) -> int:
    """Textbook Adler-32, written without zlib."""
    a, b = 1, 0
    for byte in data:
        a = (a + byte) % 65521
        b = (b + a) % 65521
    return (b << 16) | a


def uleb128_reference(data: bytes) -> tuple[int, int]:
    """Decode by collecting 7-bit groups first, then assembling them."""
    groups = []
    for byte in data:
        groups.append(byte & 0x7F)
        if byte < 0x80:
            break
    value = 0
    for g in reversed(groups):
        value = (value << 7) | g
    return value, len(groups)


def mutf8_reference(text: str) -> bytes:
    """MUTF-8 via the stdlib codecs: UTF-16 surrogates encoded as CESU-8."""
    units = text.encode("utf-16-le", "surrogatepass")
    out = bytearray()
    for (unit,) in struct.iter_unpack("<H", units):
        if unit == 0:
            out += b"\xc0\x80"
        else:
            out += chr(unit).encode("utf-8", "surrogatepass")
    return bytes(out)


def raw_invokes(dex: DexFile):
    """Every (class position, method index, offset, opcode, target index) in ``dex``."""
    out = []
    for ci, cdef in enumerate(dex.class_defs):
        if cdef.class_data is None:
            continue
        for em in cdef.class_data.methods():
            if em.code is None:
                continue
            units = bc.code_units(em.code.insns)
            for ins in bc.iter_instructions(units):
                if bc.INDEX_POOL.get(ins.opcode) == "method":
                    out.append((ci, em.method_idx, ins.offset, ins.opcode, units[ins.offset + 1]))
    return out


def sites_resolving_to(dex: DexFile, descriptors) -> int:
    wanted = {str(d) for d in descriptors}
    return sum(
        1 for *_, idx in raw_invokes(dex) if str(method_id_to_descriptor(dex, idx)) in wanted
    )


def all_method_descriptors(dex: DexFile) -> list[str]:
    return [str(method_id_to_descriptor(dex, i)) for i in range(len(dex.method_ids))]


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------


def imei_dex(calls: int = 1) -> DexFile:
    """One class whose method calls getDeviceId ``calls`` times via invoke-virtual."""
    b = DexBuilder()
    cls = b.add_class(MAIN, source_file="Main.java")

    def body(r):
        units = []
        for _ in range(calls):
            units += bc.fmt_35c(bc.INVOKE_VIRTUAL, r.method(GET_DEVICE_ID), [1])
            units += bc.fmt_11x(0x0C, 0)  # move-result-object v0
        return units + bc.fmt_11x(bc.RETURN_OBJECT, 0)

    cls.add_method("imei", f"({TELEPHONY})Ljava/lang/String;", body,
                   access_flags=ACC_PUBLIC | ACC_STATIC, locals=1, outs=1)
    return b.build()


_FILLER = [
    lambda rng: bc.fmt_12x(0x01, rng.randrange(16), rng.randrange(16)),  # move
    lambda rng: bc.fmt_11n(bc.CONST_4, rng.randrange(16), rng.randrange(16)),
    lambda rng: bc.fmt_21s(0x13, rng.randrange(256), rng.randrange(65536)),  # const/16
    lambda rng: [0x0090 | (rng.randrange(256) << 8), rng.randrange(65536)],  # add-int
    lambda rng: [0x00D8 | (rng.randrange(16) << 8), rng.randrange(65536)],  # add-int/lit8
    lambda rng: [0x0014 | (rng.randrange(256) << 8), rng.randrange(65536), rng.randrange(65536)],
    lambda rng: [0x0000],  # nop
]

ALL_INVOKES = sorted(bc.INVOKE_OPCODES)


def invoke_units(op: int, method_idx: int, rng: random.Random) -> list[int]:
    if op in bc.RANGE_INVOKES:
        return bc.fmt_3rc(op, method_idx, rng.randrange(256), rng.randrange(1, 6))
    n = rng.randrange(1, 6)
    return bc.fmt_35c(op, method_idx, [rng.randrange(16) for _ in range(n)])


def random_text(rng: random.Random) -> str:
    alphabet = "abcXYZ019_$ -" + "é中\u0000\U0001f600\U00010348"
    return "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 12)))


def random_dex(
    seed: int,
    n_classes: int,
    n_strings: int,
    planted: dict[str, list[int]] | None = None,
    payloads: bool = True,
) -> DexFile:
    """Random but valid dex.

    ``planted`` maps a method descriptor to a list of invoke opcodes; one call
    site per opcode is placed in a random class.
    """
    rng = random.Random(seed)
    b = DexBuilder()
    extern = [f"Lext/Lib{i % 7};->m{i}(I)V" for i in range(rng.randrange(1, 6))]
    classes = []
    for i in range(n_classes):
        cls = b.add_class(f"Lgen/C{i};", source_file=f"C{i}.java" if rng.random() < 0.5 else None)
        classes.append(cls)
        if rng.random() < 0.3:
            cls.add_field(f"f{i}", "I")
    plants: list[list[tuple[str, int]]] = [[] for _ in range(n_classes)]
    for desc, ops in (planted or {}).items():
        for op in ops:
            plants[rng.randrange(n_classes)].append((desc, op))

    for i, cls in enumerate(classes):
        n_methods = rng.randrange(1, 4)
        for j in range(n_methods):
            mine = plants[i] if j == 0 else []
            seed_j = rng.randrange(1 << 30)
            with_tries = rng.random() < 0.2

            def body(r, seed_j=seed_j, mine=mine, with_tries=with_tries):
                lr = random.Random(seed_j)
                units: list[int] = []
                for _ in range(lr.randrange(0, 6)):
                    units += lr.choice(_FILLER)(lr)
                units += bc.fmt_21c(bc.CONST_STRING, 0, r.string(f"s{lr.randrange(50)}"))
                units += invoke_units(lr.choice(ALL_INVOKES), r.method(lr.choice(extern)), lr)
                for desc, op in mine:
                    units += lr.choice(_FILLER)(lr)
                    units += invoke_units(op, r.method(desc), lr)
                units += bc.fmt_10x(bc.RETURN_VOID)
                if payloads and lr.random() < 0.3:
                    if len(units) % 2:
                        units.append(0)
                    units += [bc.PACKED_SWITCH_PAYLOAD, 2, 0, 0, 3, 0, 5, 0]
                    # Data that looks like an invoke must be skipped as payload.
                    units += [bc.FILL_ARRAY_DATA_PAYLOAD, 2, 3, 0, 0x106E, 0, 0]
                return units

            tries = ((0, 1, 0),) if with_tries else ()
            handlers = (((("Ljava/lang/Exception;", 1),), None),) if with_tries else ()
            cls.add_method(f"m{j}", "()V", body, tries=tries, handlers=handlers)
    n_now = len(b.build().strings)
    k = 0
    while n_now + k < n_strings:
        b.add_string(f"pad{k}:" + random_text(rng))
        k += 1
    return b.build()


def remap_by_lookup(old: DexFile, new: DexFile):
    """Old->new index map rebuilt by resolving each descriptor text in ``new``."""
    from dexstub.merger import IndexRemap
    from dexstub.model import field_id_to_text, resolve_proto

    def table(items_old, items_new):
        where = {text: i for i, text in enumerate(items_new)}
        return [where[text] for text in items_old]

    def protos(d):
        return [resolve_proto(d, i) for i in range(len(d.proto_ids))]

    def fields(d):
        return [field_id_to_text(d, i) for i in range(len(d.field_ids))]

    return IndexRemap(
        strings=table(old.strings, new.strings),
        types=table(old.type_names, new.type_names),
        protos=table(protos(old), protos(new)),
        fields=table(fields(old), fields(new)),
        methods=table(all_method_descriptors(old), all_method_descriptors(new)),
    )


def code_by_method(dex: DexFile) -> dict[str, object]:
    out = {}
    for cdef in dex.class_defs:
        if cdef.class_data is None:
            continue
        for em in cdef.class_data.methods():
            out[str(method_id_to_descriptor(dex, em.method_idx))] = em.code
    return out


def large_dex(n_classes: int = 5000, methods_per_class: int = 8, n_extern: int = 9999,
              planted_sites: int = 200, body_units: int = 46, seed: int = 0) -> DexFile:
    """A multi-megabyte dex with ``planted_sites`` invoke-virtual calls to getDeviceId."""
    rng = random.Random(seed)
    b = DexBuilder()
    extern = [MethodDescriptor.parse(f"Lext/P{i % 97};->call{i}(I)V") for i in range(n_extern)]
    for desc in extern:
        b.reference_method(str(desc))
    imei = MethodDescriptor.parse(GET_DEVICE_ID)
    total = n_classes * methods_per_class
    planted = set(rng.sample(range(total), planted_sites))
    k = 0
    for c in range(n_classes):
        cls = b.add_class(f"Lbig/pkg{c % 50}/K{c};")
        for m in range(methods_per_class):
            seed_m = rng.randrange(1 << 30)
            plant = k in planted
            k += 1

            def body(r, seed_m=seed_m, plant=plant):
                lr = random.Random(seed_m)
                units: list[int] = []
                if plant:
                    units += bc.fmt_35c(bc.INVOKE_VIRTUAL, r.method(imei), [1])
                while len(units) < body_units - 4:
                    units += lr.choice(_FILLER)(lr)
                    if lr.random() < 0.3:
                        units += bc.fmt_35c(bc.INVOKE_STATIC, r.method(lr.choice(extern)), [0])
                return units + bc.fmt_10x(bc.RETURN_VOID)

            cls.add_method(f"m{m}", "(I)V", body)
    return b.build()
