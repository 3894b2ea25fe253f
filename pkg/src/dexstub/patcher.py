"""Find blacklisted call sites and redirect them to generated stubs.

Every invoke-kind instruction is three code units long, so switching a call
to invoke-static on a stub changes only the opcode byte and the method-index
unit; no branch offsets or payloads move.
"""

from __future__ import annotations

import logging
from array import array
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

from . import bytecode as bc
from .blacklist import Blacklist
from .bytecode import Instruction, code_units, decode_instructions, iter_instructions, units_to_bytes
from .errors import MalformedCodeError
from .merger import merge_stub
from .model import CodeItem, DexFile, MethodDescriptor, method_id_to_descriptor, validate
from .resolver import find_call_targets
from .stubgen import DEFAULT_STUB_CLASS, build_stub_specs

log = logging.getLogger(__name__)

__all__ = [
    "InvokeSite",
    "PatchEntry",
    "PatchReport",
    "decode_instructions",
    "patch_dex",
    "rewrite_site",
    "scan_invokes",
]


class InvokeSite(NamedTuple):
    code_offset: int
    opcode: int
    method_idx: int
    is_range: bool
    arg_count: int


def _site(units, ins: Instruction) -> InvokeSite:
    pos = ins.offset
    first = units[pos]
    is_range = ins.opcode in bc.RANGE_INVOKES
    count = first >> 8 if is_range else first >> 12
    return InvokeSite(pos, ins.opcode, units[pos + 1], is_range, count)


def scan_invokes(code: CodeItem) -> list[InvokeSite]:
    units = code_units(code.insns)
    invokes = bc.INVOKE_OPCODES
    return [_site(units, ins) for ins in iter_instructions(units) if ins.opcode in invokes]


def rewrite_site(units: array, site: InvokeSite, stub_method_idx: int) -> None:
    """Turn the call at ``site`` into invoke-static(/range) on the stub, in place."""
    pos = site.code_offset
    new_op = bc.INVOKE_STATIC_RANGE if site.is_range else bc.INVOKE_STATIC
    units[pos] = (units[pos] & 0xFF00) | new_op
    units[pos + 1] = stub_method_idx


@dataclass(frozen=True)
class PatchEntry:
    class_descriptor: str
    method: MethodDescriptor
    code_offset: int
    old_opcode: int
    new_opcode: int
    old_method_idx: int
    new_method_idx: int
    target: MethodDescriptor


TSV_COLUMNS = ("class", "method", "offset", "old_opcode", "new_opcode",
               "old_method_idx", "new_method_idx", "target")


@dataclass
class PatchReport:
    entries: list[PatchEntry] = field(default_factory=list)
    scanned_methods: int = 0
    scanned_instructions: int = 0
    inert: list[MethodDescriptor] = field(default_factory=list)
    stub_class: Optional[str] = None

    @property
    def patched_sites(self) -> int:
        return len(self.entries)

    @property
    def inert_entries(self) -> int:
        return len(self.inert)

    def to_text(self) -> str:
        lines = [
            f"scanned methods: {self.scanned_methods}",
            f"scanned instructions: {self.scanned_instructions}",
            f"patched sites: {self.patched_sites}",
            f"inert blacklist entries: {self.inert_entries}",
        ]
        if self.stub_class and self.entries:
            lines.append(f"stub class: {self.stub_class}")
        for e in self.entries:
            lines.append(
                f"  {e.method} @{e.code_offset:#06x}: {bc.NAMES[e.old_opcode]} -> "
                f"{bc.NAMES[e.new_opcode]}, method {e.old_method_idx} -> {e.new_method_idx} "
                f"[{e.target}]"
            )
        for d in self.inert:
            lines.append(f"  inert: {d}")
        return "\n".join(lines) + "\n"

    def to_tsv(self) -> str:
        rows = ["\t".join(TSV_COLUMNS)]
        for e in self.entries:
            rows.append("\t".join((
                e.class_descriptor, str(e.method), str(e.code_offset),
                f"0x{e.old_opcode:02x}", f"0x{e.new_opcode:02x}",
                str(e.old_method_idx), str(e.new_method_idx), str(e.target),
            )))
        return "\n".join(rows) + "\n"


class _Hit(NamedTuple):
    class_pos: int
    virtual: bool
    method_pos: int
    site: InvokeSite
    target: MethodDescriptor


def patch_dex(
    dex: DexFile, blacklist: Blacklist, stub_class: Optional[str] = None
) -> tuple[DexFile, PatchReport]:
    """Redirect every call to a blacklisted method into a generated stub.

    With no matching call site the input is returned unchanged.
    """
    stub_class = stub_class or DEFAULT_STUB_CLASS
    targets = find_call_targets(dex, blacklist)
    present = {entry for entry, _ in targets}
    report = PatchReport(inert=[e for e in blacklist if e not in present], stub_class=stub_class)
    if not targets:
        return dex, report

    by_index = {idx: entry for entry, idx in targets}
    invokes = bc.INVOKE_OPCODES
    hits: list[_Hit] = []
    for ci, cdef in enumerate(dex.class_defs):
        data = cdef.class_data
        if data is None:
            continue
        for virtual, group in ((False, data.direct_methods), (True, data.virtual_methods)):
            for mi, em in enumerate(group):
                if em.code is None or not em.code.insns:
                    continue
                report.scanned_methods += 1
                units = code_units(em.code.insns)
                try:
                    for ins in iter_instructions(units):
                        report.scanned_instructions += 1
                        if ins.opcode in invokes and units[ins.offset + 1] in by_index:
                            site = _site(units, ins)
                            hits.append(_Hit(ci, virtual, mi, site, by_index[site.method_idx]))
                except MalformedCodeError as exc:
                    where = method_id_to_descriptor(dex, em.method_idx)
                    raise MalformedCodeError(f"{where}: {exc}") from None
    if not hits:
        return dex, report

    kinds: dict[MethodDescriptor, set[int]] = {}
    for h in hits:
        kinds.setdefault(h.target, set()).add(h.site.opcode)
    stubs = build_stub_specs(sorted(kinds.items(), key=lambda kv: str(kv[0])), stub_class)
    merged, remap, stub_index = merge_stub(dex, stubs)

    by_method: dict[tuple[int, bool, int], list[_Hit]] = {}
    for h in hits:
        by_method.setdefault((h.class_pos, h.virtual, h.method_pos), []).append(h)

    class_defs = list(merged.class_defs)
    names = dex.type_names
    for (ci, virtual, mi), method_hits in by_method.items():
        cdef = class_defs[ci]
        data = cdef.class_data
        group = list(data.virtual_methods if virtual else data.direct_methods)
        em = group[mi]
        units = code_units(em.code.insns)
        before = len(units)
        old_method = dex.class_defs[ci].class_data
        old_em = (old_method.virtual_methods if virtual else old_method.direct_methods)[mi]
        for h in method_hits:
            assert units[h.site.code_offset + 1] == remap.methods[h.site.method_idx]
            stub = stubs.lookup(h.target, h.site.opcode)
            new_idx = stub_index[stub]
            rewrite_site(units, h.site, new_idx)
            report.entries.append(PatchEntry(
                class_descriptor=names[dex.class_defs[ci].class_idx],
                method=method_id_to_descriptor(dex, old_em.method_idx),
                code_offset=h.site.code_offset,
                old_opcode=h.site.opcode,
                new_opcode=bc.INVOKE_STATIC_RANGE if h.site.is_range else bc.INVOKE_STATIC,
                old_method_idx=h.site.method_idx,
                new_method_idx=new_idx,
                target=h.target,
            ))
        assert len(units) == before
        group[mi] = em._replace(code=replace(em.code, insns=units_to_bytes(units)))
        if virtual:
            data = replace(data, virtual_methods=tuple(group))
        else:
            data = replace(data, direct_methods=tuple(group))
        class_defs[ci] = replace(cdef, class_data=data)

    patched = replace(merged, class_defs=tuple(class_defs))
    validate(patched)
    log.info("patched %d call sites into %s", report.patched_sites, stub_class)
    return patched, report
