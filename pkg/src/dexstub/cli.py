"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 malformed input, 3 patch pipeline
error, 4 I/O error.  Listings and reports go to stdout (or ``--report``);
diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .apk import open_apk, repack
from .blacklist import Blacklist, load_default_blacklist, parse_blacklist
from .dexio import checksums_valid, parse_dex, read_header, write_dex
from .errors import ApkError, BlacklistSyntaxError, DescriptorError, DexFormatError, PatchError
from .model import is_type_descriptor
from .patcher import PatchReport, patch_dex
from .resolver import list_all_methods, list_class_methods
from .stubgen import DEFAULT_STUB_CLASS

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_PATCH = 3
EXIT_IO = 4

log = logging.getLogger("dexstub")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read(path: str) -> bytes:
    return Path(path).read_bytes()


def _load_blacklist(path: Optional[str]) -> Blacklist:
    if path is None:
        return load_default_blacklist()
    return parse_blacklist(Path(path).read_text(encoding="utf-8"))


def _emit_report(report: PatchReport, args) -> None:
    text = report.to_tsv() if args.report_format == "tsv" else report.to_text()
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_inspect(args) -> int:
    data = _read(args.dex)
    header = read_header(data)
    checksum_ok, signature_ok = checksums_valid(data)
    dex = parse_dex(data, verify=False)
    version = header.magic[4:7].decode("ascii")
    print(f"magic: dex {version}")
    print(f"file_size: {header.file_size}")
    print(f"checksum: 0x{header.checksum:08x} {'valid' if checksum_ok else 'INVALID'}")
    print(f"signature: {header.signature.hex()} {'valid' if signature_ok else 'INVALID'}")
    print(f"string_ids: {len(dex.strings)}")
    print(f"type_ids: {len(dex.type_ids)}")
    print(f"proto_ids: {len(dex.proto_ids)}")
    print(f"field_ids: {len(dex.field_ids)}")
    print(f"method_ids: {len(dex.method_ids)}")
    print(f"class_defs: {len(dex.class_defs)}")
    if not (checksum_ok and signature_ok):
        log.error("%s: header checksum verification failed", args.dex)
        return EXIT_FORMAT
    return EXIT_OK


def cmd_methods(args) -> int:
    dex = parse_dex(_read(args.dex))
    entries = list_class_methods(dex, args.class_descriptor) if args.class_descriptor else list_all_methods(dex)
    for entry in entries:
        print(entry.descriptor)
    return EXIT_OK


def cmd_patch(args) -> int:
    blacklist = _load_blacklist(args.blacklist)
    raw = _read(args.dex_in)
    dex = parse_dex(raw)
    patched, report = patch_dex(dex, blacklist, args.stub_class)
    if not args.dry_run:
        out = write_dex(patched) if report.patched_sites else raw
        Path(args.dex_out).write_bytes(out)
    _emit_report(report, args)
    return EXIT_OK


def cmd_apk_patch(args) -> int:
    blacklist = _load_blacklist(args.blacklist)
    apk = open_apk(_read(args.apk_in), args.apk_in)
    raw = apk.classes_dex()
    dex = parse_dex(raw)
    patched, report = patch_dex(dex, blacklist, args.stub_class)
    if not args.dry_run:
        new_dex = write_dex(patched) if report.patched_sites else raw
        Path(args.apk_out).write_bytes(repack(apk, new_dex, strip_meta=True))
        log.warning("%s is unsigned; sign it before installing", args.apk_out)
    _emit_report(report, args)
    return EXIT_OK


def _stub_class(value: str) -> str:
    if not (value.startswith("L") and is_type_descriptor(value)):
        raise argparse.ArgumentTypeError(f"not a class descriptor: {value!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dexstub", description="Redirect blacklisted calls in dex files to stubs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("inspect", help="print header and pool sizes")
    p.add_argument("dex")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("methods", help="list method signatures of defined classes")
    p.add_argument("dex")
    p.add_argument("--class", dest="class_descriptor", metavar="DESCRIPTOR",
                   help="only this class, e.g. Lcom/example/Main;")
    p.set_defaults(func=cmd_methods)

    def patch_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("blacklist", nargs="?", help="policy file (default: built-in IMEI policy)")
        p.add_argument("--stub-class", type=_stub_class, default=DEFAULT_STUB_CLASS,
                       help=f"descriptor of the generated class (default {DEFAULT_STUB_CLASS})")
        p.add_argument("--report", metavar="PATH", help="write the report here instead of stdout")
        p.add_argument("--report-format", choices=("text", "tsv"), default="text")
        p.add_argument("--dry-run", action="store_true", help="scan and report without writing")

    p = sub.add_parser("patch", help="patch a dex file")
    p.add_argument("dex_in")
    p.add_argument("dex_out")
    patch_flags(p)
    p.set_defaults(func=cmd_patch)

    p = sub.add_parser("apk-patch", help="patch classes.dex inside an APK and repack it unsigned")
    p.add_argument("apk_in")
    p.add_argument("apk_out")
    patch_flags(p)
    p.set_defaults(func=cmd_apk_patch)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("dexstub: %(levelname)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    log.propagate = False
    try:
        return args.func(args)
    except (DexFormatError, BlacklistSyntaxError, DescriptorError, ApkError) as exc:
        log.error("%s", exc)
        return EXIT_FORMAT
    except PatchError as exc:
        log.error("%s", exc)
        return EXIT_PATCH
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
