"""Evaluate disassemblers against executed-instruction traces."""

from ._tracebin import (
    CorpusCase,
    DisasmView,
    ErrorReport,
    Explanation,
    PatchPlan,
    TraceSet,
    TracebinError,
    apply_patch,
    apply_patch_elf,
    bucketize,
    categorize,
    collect,
    corpus_case,
    corpus_names,
    diff_reports,
    evaluate,
    explain,
    linear_sweep,
    merge,
    plan_patches,
    platform_supported,
    preset_base,
    recursive_descent,
    verify_patch,
)


def error_code(exc):
    """The code name carried by a TracebinError, e.g. "MissingBase"."""
    return str(exc).split(":", 1)[0]


__all__ = [
    "CorpusCase",
    "DisasmView",
    "ErrorReport",
    "Explanation",
    "PatchPlan",
    "TraceSet",
    "TracebinError",
    "apply_patch",
    "apply_patch_elf",
    "bucketize",
    "categorize",
    "collect",
    "corpus_case",
    "corpus_names",
    "diff_reports",
    "error_code",
    "evaluate",
    "explain",
    "linear_sweep",
    "merge",
    "plan_patches",
    "platform_supported",
    "preset_base",
    "recursive_descent",
    "verify_patch",
]
