"""Blacklist policy files: one method descriptor per line, ``#`` comments."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from importlib import resources
from typing import Iterator

from .errors import BlacklistSyntaxError, DescriptorError
from .model import MethodDescriptor

log = logging.getLogger(__name__)

DEFAULT_BLACKLIST = "default_blacklist.txt"


@dataclass(frozen=True)
class Blacklist:
    entries: tuple[MethodDescriptor, ...] = ()
    lines: tuple[int, ...] = ()  # source line of each entry

    def __iter__(self) -> Iterator[MethodDescriptor]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, item: object) -> bool:
        return item in self.entries

    @classmethod
    def of(cls, *descriptors: str | MethodDescriptor) -> "Blacklist":
        entries = []
        for d in descriptors:
            desc = MethodDescriptor.parse(d) if isinstance(d, str) else d
            if desc not in entries:
                entries.append(desc)
        return cls(tuple(entries), tuple(range(1, len(entries) + 1)))


def parse_blacklist(text: str) -> Blacklist:
    """Parse policy text into a :class:`Blacklist`.

    Raises :class:`BlacklistSyntaxError` with line and caret column on the
    first malformed line.
    """
    entries: list[MethodDescriptor] = []
    lines: list[int] = []
    seen: dict[MethodDescriptor, int] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        stripped = body.strip()
        if not stripped:
            continue
        indent = len(body) - len(body.lstrip())
        try:
            desc = MethodDescriptor.parse(stripped)
        except DescriptorError as exc:
            column = indent + (exc.column or 0)
            raise BlacklistSyntaxError(str(exc), line_no, raw.rstrip("\r\n"), column) from None
        if desc in seen:
            log.warning("line %d: duplicate entry %s (first on line %d)", line_no, desc, seen[desc])
            continue
        seen[desc] = line_no
        entries.append(desc)
        lines.append(line_no)
    return Blacklist(tuple(entries), tuple(lines))


def default_blacklist_text() -> str:
    return resources.files("dexstub.data").joinpath(DEFAULT_BLACKLIST).read_text("utf-8")


def load_default_blacklist() -> Blacklist:
    return parse_blacklist(default_blacklist_text())
