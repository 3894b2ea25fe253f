"""Static redirection of blacklisted framework calls in dex files."""

from .blacklist import Blacklist, load_default_blacklist, parse_blacklist
from .dexio import fix_checksums, parse_dex, write_dex
from .merger import IndexRemap, merge_stub
from .model import DexFile, MethodDescriptor, method_id_to_descriptor, resolve_type, validate
from .patcher import PatchReport, patch_dex
from .resolver import find_call_targets, find_method_index, list_class_methods

__all__ = [
    "Blacklist",
    "DexFile",
    "IndexRemap",
    "MethodDescriptor",
    "PatchReport",
    "find_call_targets",
    "find_method_index",
    "fix_checksums",
    "list_class_methods",
    "load_default_blacklist",
    "merge_stub",
    "method_id_to_descriptor",
    "parse_blacklist",
    "parse_dex",
    "patch_dex",
    "resolve_type",
    "validate",
    "write_dex",
]

__version__ = "0.1.0"
