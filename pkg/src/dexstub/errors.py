"""Exception hierarchy shared by every module in the package."""

from __future__ import annotations


class DexStubError(Exception):
    """Base class for all errors raised by dexstub."""


class DexFormatError(DexStubError):
    """The input bytes are not a well-formed dex file.

    ``offset`` is the byte offset at which decoding failed, or ``None`` when
    the problem is not tied to a location (e.g. model validation).
    """

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at offset 0x{offset:x})"
        super().__init__(message)


class TruncatedError(DexFormatError):
    pass


class MalformedError(DexFormatError):
    pass


class MalformedStringError(MalformedError):
    pass


class BadMagicError(DexFormatError):
    pass


class UnsupportedVersionError(BadMagicError):
    pass


class EndianError(DexFormatError):
    pass


class ChecksumError(DexFormatError):
    pass


class SignatureError(DexFormatError):
    pass


class IndexRangeError(DexFormatError):
    """A pool index points past the end of its pool."""

    def __init__(self, pool: str, index: int, size: int, offset: int | None = None):
        self.pool = pool
        self.index = index
        self.size = size
        super().__init__(f"{pool} index {index} out of range (pool size {size})", offset)


class ValidationError(DexFormatError):
    """A DexFile model violates one of the format invariants."""


class MalformedCodeError(DexFormatError):
    """An instruction stream could not be decoded."""


class DescriptorError(DexStubError, ValueError):
    """A type or method descriptor does not follow the dex grammar."""

    def __init__(self, message: str, text: str = "", column: int | None = None):
        self.text = text
        self.column = column
        super().__init__(message)


class BlacklistSyntaxError(DexStubError):
    def __init__(self, message: str, line_no: int, line: str, column: int):
        self.line_no = line_no
        self.line = line
        self.column = column
        caret = " " * column + "^"
        super().__init__(f"line {line_no}: {message}\n  {line}\n  {caret}")


class PatchError(DexStubError):
    """The patch pipeline cannot complete on this input."""


class CapacityError(PatchError):
    pass


class NameCollisionError(PatchError):
    pass


class UnsupportedMethodError(PatchError):
    pass


class MultidexError(PatchError):
    pass


class MissingDexError(PatchError):
    pass


class ApkError(DexStubError):
    pass


class NotAZipError(ApkError):
    pass


class CrcMismatchError(ApkError):
    def __init__(self, path: str):
        self.path = path
        super().__init__(f"CRC-32 mismatch in entry {path!r}")
