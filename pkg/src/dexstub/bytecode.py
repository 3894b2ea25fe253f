"""Dalvik opcode table, linear instruction decoding and small encoders.

Only the dex 035 instruction set is known; opcodes that are unused in that
version decode as errors.
"""

from __future__ import annotations

import sys
from array import array
from typing import Iterator, NamedTuple

from .errors import MalformedCodeError

# (first opcode, last opcode, format, mnemonic or list of mnemonics)
_RANGES: list[tuple[int, int, str, object]] = [
    (0x00, 0x00, "10x", "nop"),
    (0x01, 0x01, "12x", "move"),
    (0x02, 0x02, "22x", "move/from16"),
    (0x03, 0x03, "32x", "move/16"),
    (0x04, 0x04, "12x", "move-wide"),
    (0x05, 0x05, "22x", "move-wide/from16"),
    (0x06, 0x06, "32x", "move-wide/16"),
    (0x07, 0x07, "12x", "move-object"),
    (0x08, 0x08, "22x", "move-object/from16"),
    (0x09, 0x09, "32x", "move-object/16"),
    (0x0A, 0x0A, "11x", "move-result"),
    (0x0B, 0x0B, "11x", "move-result-wide"),
    (0x0C, 0x0C, "11x", "move-result-object"),
    (0x0D, 0x0D, "11x", "move-exception"),
    (0x0E, 0x0E, "10x", "return-void"),
    (0x0F, 0x0F, "11x", "return"),
    (0x10, 0x10, "11x", "return-wide"),
    (0x11, 0x11, "11x", "return-object"),
    (0x12, 0x12, "11n", "const/4"),
    (0x13, 0x13, "21s", "const/16"),
    (0x14, 0x14, "31i", "const"),
    (0x15, 0x15, "21h", "const/high16"),
    (0x16, 0x16, "21s", "const-wide/16"),
    (0x17, 0x17, "31i", "const-wide/32"),
    (0x18, 0x18, "51l", "const-wide"),
    (0x19, 0x19, "21h", "const-wide/high16"),
    (0x1A, 0x1A, "21c", "const-string"),
    (0x1B, 0x1B, "31c", "const-string/jumbo"),
    (0x1C, 0x1C, "21c", "const-class"),
    (0x1D, 0x1D, "11x", "monitor-enter"),
    (0x1E, 0x1E, "11x", "monitor-exit"),
    (0x1F, 0x1F, "21c", "check-cast"),
    (0x20, 0x20, "22c", "instance-of"),
    (0x21, 0x21, "12x", "array-length"),
    (0x22, 0x22, "21c", "new-instance"),
    (0x23, 0x23, "22c", "new-array"),
    (0x24, 0x24, "35c", "filled-new-array"),
    (0x25, 0x25, "3rc", "filled-new-array/range"),
    (0x26, 0x26, "31t", "fill-array-data"),
    (0x27, 0x27, "11x", "throw"),
    (0x28, 0x28, "10t", "goto"),
    (0x29, 0x29, "20t", "goto/16"),
    (0x2A, 0x2A, "30t", "goto/32"),
    (0x2B, 0x2B, "31t", "packed-switch"),
    (0x2C, 0x2C, "31t", "sparse-switch"),
    (0x2D, 0x31, "23x", ["cmpl-float", "cmpg-float", "cmpl-double", "cmpg-double", "cmp-long"]),
    (0x32, 0x37, "22t", ["if-eq", "if-ne", "if-lt", "if-ge", "if-gt", "if-le"]),
    (0x38, 0x3D, "21t", ["if-eqz", "if-nez", "if-ltz", "if-gez", "if-gtz", "if-lez"]),
    (0x44, 0x51, "23x", [
        "aget", "aget-wide", "aget-object", "aget-boolean", "aget-byte", "aget-char", "aget-short",
        "aput", "aput-wide", "aput-object", "aput-boolean", "aput-byte", "aput-char", "aput-short",
    ]),
    (0x52, 0x5F, "22c", [
        "iget", "iget-wide", "iget-object", "iget-boolean", "iget-byte", "iget-char", "iget-short",
        "iput", "iput-wide", "iput-object", "iput-boolean", "iput-byte", "iput-char", "iput-short",
    ]),
    (0x60, 0x6D, "21c", [
        "sget", "sget-wide", "sget-object", "sget-boolean", "sget-byte", "sget-char", "sget-short",
        "sput", "sput-wide", "sput-object", "sput-boolean", "sput-byte", "sput-char", "sput-short",
    ]),
    (0x6E, 0x72, "35c", [
        "invoke-virtual", "invoke-super", "invoke-direct", "invoke-static", "invoke-interface",
    ]),
    (0x74, 0x78, "3rc", [
        "invoke-virtual/range", "invoke-super/range", "invoke-direct/range",
        "invoke-static/range", "invoke-interface/range",
    ]),
    (0x7B, 0x8F, "12x", [
        "neg-int", "not-int", "neg-long", "not-long", "neg-float", "neg-double", "int-to-long",
        "int-to-float", "int-to-double", "long-to-int", "long-to-float", "long-to-double",
        "float-to-int", "float-to-long", "float-to-double", "double-to-int", "double-to-long",
        "double-to-float", "int-to-byte", "int-to-char", "int-to-short",
    ]),
]

_BINOPS = [
    "add-int", "sub-int", "mul-int", "div-int", "rem-int", "and-int", "or-int", "xor-int",
    "shl-int", "shr-int", "ushr-int", "add-long", "sub-long", "mul-long", "div-long", "rem-long",
    "and-long", "or-long", "xor-long", "shl-long", "shr-long", "ushr-long", "add-float",
    "sub-float", "mul-float", "div-float", "rem-float", "add-double", "sub-double", "mul-double",
    "div-double", "rem-double",
]
_LIT16 = ["add-int", "rsub-int", "mul-int", "div-int", "rem-int", "and-int", "or-int", "xor-int"]
_LIT8 = _LIT16 + ["shl-int", "shr-int", "ushr-int"]
_RANGES += [
    (0x90, 0xAF, "23x", _BINOPS),
    (0xB0, 0xCF, "12x", [n + "/2addr" for n in _BINOPS]),
    (0xD0, 0xD7, "22s", [n + "/lit16" for n in _LIT16]),
    (0xD8, 0xE2, "22b", [n + "/lit8" for n in _LIT8]),
]

FORMATS: list[str | None] = [None] * 256
NAMES: list[str | None] = [None] * 256
for _lo, _hi, _fmt, _name in _RANGES:
    for _op in range(_lo, _hi + 1):
        FORMATS[_op] = _fmt
        NAMES[_op] = _name[_op - _lo] if isinstance(_name, list) else _name  # type: ignore[index]

# Instruction width in code units, or 0 for opcodes unused in dex 035.
WIDTHS: list[int] = [int(fmt[0]) if fmt else 0 for fmt in FORMATS]

INVOKE_VIRTUAL = 0x6E
INVOKE_SUPER = 0x6F
INVOKE_DIRECT = 0x70
INVOKE_STATIC = 0x71
INVOKE_INTERFACE = 0x72
INVOKE_VIRTUAL_RANGE = 0x74
INVOKE_SUPER_RANGE = 0x75
INVOKE_DIRECT_RANGE = 0x76
INVOKE_STATIC_RANGE = 0x77
INVOKE_INTERFACE_RANGE = 0x78

# Call opcodes the patcher redirects.  All share the 6-byte 35c/3rc layout.
INVOKE_OPCODES = frozenset(
    {0x6E, 0x6F, 0x70, 0x71, 0x72, 0x74, 0x75, 0x76, 0x77, 0x78}
)
RANGE_INVOKES = frozenset({0x74, 0x75, 0x76, 0x77, 0x78})
STATIC_INVOKES = frozenset({INVOKE_STATIC, INVOKE_STATIC_RANGE})

NOP = 0x00
RETURN_VOID = 0x0E
RETURN = 0x0F
RETURN_WIDE = 0x10
RETURN_OBJECT = 0x11
CONST_4 = 0x12
CONST_WIDE_16 = 0x16
CONST_STRING = 0x1A
CONST_STRING_JUMBO = 0x1B
NEW_INSTANCE = 0x22

PACKED_SWITCH_PAYLOAD = 0x0100
SPARSE_SWITCH_PAYLOAD = 0x0200
FILL_ARRAY_DATA_PAYLOAD = 0x0300
PAYLOAD_OPCODE = 0x100  # reported opcode value for payload pseudo-instructions

# Pool an instruction's index operand refers to.
INDEX_POOL: dict[int, str] = {0x1A: "string", 0x1B: "string", 0x1C: "type", 0x1F: "type",
                              0x20: "type", 0x22: "type", 0x23: "type", 0x24: "type",
                              0x25: "type"}
for _op in range(0x52, 0x6E):
    INDEX_POOL[_op] = "field"
for _op in range(0x6E, 0x73):
    INDEX_POOL[_op] = "method"
for _op in range(0x74, 0x79):
    INDEX_POOL[_op] = "method"


class Instruction(NamedTuple):
    offset: int
    opcode: int
    length: int


def code_units(insns: bytes) -> array:
    units = array("H")
    units.frombytes(insns)
    if sys.byteorder == "big":
        units.byteswap()
    return units


def units_to_bytes(units: array) -> bytes:
    if sys.byteorder == "big":
        units = array("H", units)
        units.byteswap()
    return units.tobytes()


def payload_length(units, pos: int) -> int:
    ident = units[pos]
    n = len(units)
    if pos + 1 >= n:
        raise MalformedCodeError(f"truncated payload at code unit {pos}")
    if ident == PACKED_SWITCH_PAYLOAD:
        return units[pos + 1] * 2 + 4
    if ident == SPARSE_SWITCH_PAYLOAD:
        return units[pos + 1] * 4 + 2
    if pos + 3 >= n:
        raise MalformedCodeError(f"truncated payload at code unit {pos}")
    width = units[pos + 1]
    count = units[pos + 2] | (units[pos + 3] << 16)
    return (width * count + 1) // 2 + 4


def iter_instructions(units) -> Iterator[Instruction]:
    """Linear decode of a code-unit sequence.

    Payload pseudo-instructions are yielded with opcode ``PAYLOAD_OPCODE`` and
    their full data length so callers skip them as data.
    """
    widths = WIDTHS
    n = len(units)
    pos = 0
    while pos < n:
        unit = units[pos]
        op = unit & 0xFF
        if op == NOP and unit in (PACKED_SWITCH_PAYLOAD, SPARSE_SWITCH_PAYLOAD,
                                  FILL_ARRAY_DATA_PAYLOAD):
            length = payload_length(units, pos)
            op = PAYLOAD_OPCODE
        else:
            length = widths[op]
            if not length:
                raise MalformedCodeError(f"unknown opcode 0x{op:02x} at code unit {pos}")
        if pos + length > n:
            raise MalformedCodeError(
                f"instruction at code unit {pos} runs past end of code ({n} units)"
            )
        yield Instruction(pos, op, length)
        pos += length


def decode_instructions(insns: bytes) -> list[Instruction]:
    return list(iter_instructions(code_units(insns)))


# ---------------------------------------------------------------------------
# Encoders, used by the stub generator and by tests that build fixtures.
# ---------------------------------------------------------------------------


def fmt_10x(op: int) -> list[int]:
    return [op]


def fmt_11x(op: int, reg: int) -> list[int]:
    return [(reg << 8) | op]


def fmt_11n(op: int, reg: int, literal: int) -> list[int]:
    return [((literal & 0xF) << 12) | (reg << 8) | op]


def fmt_12x(op: int, a: int, b: int) -> list[int]:
    return [(b << 12) | (a << 8) | op]


def fmt_21s(op: int, reg: int, literal: int) -> list[int]:
    return [(reg << 8) | op, literal & 0xFFFF]


def fmt_21c(op: int, reg: int, index: int) -> list[int]:
    return [(reg << 8) | op, index]


def fmt_22c(op: int, a: int, b: int, index: int) -> list[int]:
    return [(b << 12) | (a << 8) | op, index]


def fmt_35c(op: int, index: int, regs: list[int]) -> list[int]:
    if len(regs) > 5:
        raise ValueError("35c format takes at most 5 registers")
    r = list(regs) + [0] * (5 - len(regs))
    return [
        (len(regs) << 12) | (r[4] << 8) | op,
        index,
        (r[3] << 12) | (r[2] << 8) | (r[1] << 4) | r[0],
    ]


def fmt_3rc(op: int, index: int, first: int, count: int) -> list[int]:
    return [(count << 8) | op, index, first]


def fmt_31c(op: int, reg: int, index: int) -> list[int]:
    return [(reg << 8) | op, index & 0xFFFF, index >> 16]


def pack_units(units) -> bytes:
    return units_to_bytes(array("H", units))
