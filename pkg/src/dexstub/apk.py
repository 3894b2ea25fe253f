"""APK (zip) handling: read entries, swap ``classes.dex``, write an unsigned archive.

Signing is not done here; the output has its old ``META-INF/`` signature
files removed and must be signed externally before installation.
"""

from __future__ import annotations

import io
import re
import struct
import zipfile
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .dexio import checksums_valid, read_header
from .errors import ApkError, ChecksumError, CrcMismatchError, MissingDexError, MultidexError, NotAZipError

CLASSES_DEX = "classes.dex"
META_INF = "META-INF/"
_SECONDARY_DEX = re.compile(r"^classes\d+\.dex$")
_ZIP64_EXTRA = 0x0001
_DEFAULT_DATE = (1980, 1, 1, 0, 0, 0)


@dataclass(frozen=True)
class ApkEntry:
    path: str
    data: bytes
    compress_type: int
    crc: int
    info: Optional[zipfile.ZipInfo] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class ApkArchive:
    entries: tuple[ApkEntry, ...]
    source: Optional[str] = None

    def paths(self) -> list[str]:
        return [e.path for e in self.entries]

    def get(self, path: str) -> Optional[ApkEntry]:
        for e in self.entries:
            if e.path == path:
                return e
        return None

    def classes_dex(self) -> bytes:
        """Bytes of the single ``classes.dex``; multidex archives are refused."""
        extra = [p for p in self.paths() if _SECONDARY_DEX.match(p)]
        if extra:
            raise MultidexError(
                f"multidex APK ({', '.join(extra)}) is not supported; only single classes.dex"
            )
        entry = self.get(CLASSES_DEX)
        if entry is None:
            raise MissingDexError("APK has no classes.dex")
        return entry.data


def _has_zip64_extra(extra: bytes) -> bool:
    pos = 0
    while pos + 4 <= len(extra):
        header_id, size = struct.unpack_from("<HH", extra, pos)
        if header_id == _ZIP64_EXTRA:
            return True
        pos += 4 + size
    return False


def open_apk(data: bytes, source: Optional[str] = None) -> ApkArchive:
    """Read every entry, verifying its CRC-32."""
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile as exc:
        raise NotAZipError(f"not a zip archive: {exc}") from None
    entries = []
    seen = set()
    with zf:
        infos = zf.infolist()
        if len(infos) > 0xFFFF:
            raise ApkError("zip64 archives are not supported")
        for info in infos:
            if _has_zip64_extra(info.extra) or info.header_offset > 0xFFFFFFFF:
                raise ApkError(f"zip64 entry {info.filename!r} is not supported")
            if info.filename in seen:
                raise ApkError(f"duplicate zip entry {info.filename!r}")
            seen.add(info.filename)
            try:
                payload = zf.read(info)
            except zipfile.BadZipFile as exc:
                if "CRC" in str(exc):
                    raise CrcMismatchError(info.filename) from None
                raise ApkError(f"cannot read entry {info.filename!r}: {exc}") from None
            except (NotImplementedError, RuntimeError) as exc:
                raise ApkError(f"cannot read entry {info.filename!r}: {exc}") from None
            entries.append(ApkEntry(info.filename, payload, info.compress_type, info.CRC, info))
    return ApkArchive(tuple(entries), source)


def write_apk(entries: Iterable[ApkEntry]) -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        for entry in entries:
            src = entry.info
            info = zipfile.ZipInfo(entry.path, date_time=src.date_time if src else _DEFAULT_DATE)
            info.compress_type = entry.compress_type
            if src is not None:
                info.external_attr = src.external_attr
                info.create_system = src.create_system
                info.comment = src.comment
            else:
                info.external_attr = 0o644 << 16
                info.create_system = 3
            zf.writestr(info, entry.data)
    return buf.getvalue()


def build_apk(files: Iterable[tuple[str, bytes]], compress_type: int = zipfile.ZIP_DEFLATED) -> bytes:
    """Convenience writer for plain ``(path, bytes)`` pairs."""
    return write_apk(ApkEntry(path, data, compress_type, 0) for path, data in files)


def repack(apk: ApkArchive, new_dex: bytes, strip_meta: bool = True) -> bytes:
    """Replace ``classes.dex`` (stored uncompressed) and optionally drop ``META-INF/``."""
    if apk.get(CLASSES_DEX) is None:
        raise MissingDexError("APK has no classes.dex")
    read_header(new_dex)
    checksum_ok, signature_ok = checksums_valid(new_dex)
    if not (checksum_ok and signature_ok):
        raise ChecksumError("replacement classes.dex has invalid checksums", 8)
    out = []
    for entry in apk.entries:
        if strip_meta and entry.path.startswith(META_INF):
            continue
        if entry.path == CLASSES_DEX:
            entry = ApkEntry(CLASSES_DEX, new_dex, zipfile.ZIP_STORED, 0, entry.info)
        out.append(entry)
    return write_apk(out)
