"""Translation-process classifier: Python bindings and preprocessing adapter."""

from ._tpc import (
    TpcError,
    check_bundle,
    check_bundle_text,
    compute_metrics,
    levenshtein,
    map_label,
    normalize_bundle_text,
    run_cli,
    stratified_chance,
    stratified_kfold,
)

__all__ = [
    "TpcError",
    "check_bundle",
    "check_bundle_text",
    "compute_metrics",
    "levenshtein",
    "map_label",
    "normalize_bundle_text",
    "run_cli",
    "stratified_chance",
    "stratified_kfold",
]
