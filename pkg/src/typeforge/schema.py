"""JSON schemas of the metrics document and the benchmark report.

They are plain dicts so callers can validate with any JSON-schema library;
the test suite uses ``jsonschema``.
"""

from __future__ import annotations

_KIND = {
    "type": "object",
    "properties": {
        "messages": {"type": "integer", "minimum": 0},
        "bytes": {"type": "integer", "minimum": 0},
    },
    "required": ["messages", "bytes"],
    "additionalProperties": False,
}

KIND_NAMES = ("one_sided", "channel", "halo_face", "reduction")

METRICS_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "typeforge run metrics",
    "type": "object",
    "properties": {
        "procs": {"type": "integer", "minimum": 1},
        "iterations": {"type": "integer", "minimum": 0},
        "converged": {"type": "boolean"},
        "residual_history": {
            "type": "array",
            "items": {
                "type": "array",
                "prefixItems": [{"type": "integer"}, {"type": "number"}],
                "minItems": 2,
                "maxItems": 2,
            },
        },
        "messages": {
            "type": "object",
            "properties": {k: _KIND for k in KIND_NAMES},
            "required": list(KIND_NAMES),
            "additionalProperties": False,
        },
        "staleness": {
            "type": "object",
            "patternProperties": {"^[0-9]+$": {"type": "integer", "minimum": 1}},
            "additionalProperties": False,
        },
        "wall_time_s": {"type": "number", "minimum": 0},
        "norm_b_zero_fallback": {"type": "boolean"},
    },
    "required": [
        "procs", "iterations", "converged", "residual_history", "messages",
        "staleness", "wall_time_s", "norm_b_zero_fallback",
    ],
    "additionalProperties": False,
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "typeforge Jacobi benchmark report",
    "type": "object",
    "properties": {
        "config": {
            "type": "object",
            "properties": {
                **{k: {"type": "integer", "minimum": 1} for k in ("nx", "ny", "nz", "px", "py", "pz", "max_iters")},
                "mode": {"enum": ["sync", "async", "racy"]},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "bc": {"type": "object", "additionalProperties": {"type": "number"}},
                "halo": {"type": "boolean"},
            },
            "required": ["nx", "ny", "nz", "px", "py", "pz", "mode", "tol", "max_iters", "bc", "halo"],
            "additionalProperties": False,
        },
        "result": METRICS_SCHEMA,
        "derived": {
            "type": "object",
            "properties": {
                "messages_per_iteration": {
                    "type": "object",
                    "properties": {k: {"type": "number", "minimum": 0} for k in KIND_NAMES},
                    "required": list(KIND_NAMES),
                    "additionalProperties": False,
                },
                "staleness_mean": {"type": "number", "minimum": 0},
                "staleness_max": {"type": "integer", "minimum": 0},
                "final_true_residual": {"type": "number", "minimum": 0},
            },
            "required": ["messages_per_iteration", "staleness_mean", "staleness_max", "final_true_residual"],
            "additionalProperties": False,
        },
    },
    "required": ["config", "result", "derived"],
    "additionalProperties": False,
}
