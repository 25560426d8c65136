"""Skill compilation and replay engine for simulated UI tasks.

Thin dict-level wrapper around the C++ core. Structured arguments are python
dicts; the binding layer speaks JSON.
"""

import json as _json

from skillkit._core import (  # noqa: F401
    FEATURE_WEIGHTS,
    TAU_RELAXED,
    TAU_SEM,
    TAU_STRICT,
    SkillkitError,
    cosine,
    embed,
    strip_placeholders,
)
from skillkit import _core

__all__ = [
    "FEATURE_WEIGHTS",
    "TAU_RELAXED",
    "TAU_SEM",
    "TAU_STRICT",
    "SkillkitError",
    "cosine",
    "embed",
    "export_store",
    "find_element",
    "flatten_tree",
    "make_descriptor",
    "match",
    "node_center",
    "pattern_to_regex",
    "resolve_intent",
    "run_plan",
    "score_element",
    "strip_placeholders",
    "verify_state",
]


def score_element(node, locator, bindings=None):
    return _core.score_element(_json.dumps(node), _json.dumps(locator),
                               _json.dumps(bindings or {}))


def find_element(tree, locator, tau=TAU_STRICT, bindings=None):
    return _core.find_element(_json.dumps(tree), _json.dumps(locator), tau,
                              _json.dumps(bindings or {}))


def flatten_tree(tree):
    return _json.loads(_core.flatten_tree(_json.dumps(tree)))


def node_center(node):
    return _core.node_center(_json.dumps(node))


def make_descriptor(tree):
    return _json.loads(_core.make_descriptor(_json.dumps(tree)))


def verify_state(tree, descriptor, target_app):
    return _json.loads(_core.verify_state(_json.dumps(tree), _json.dumps(descriptor),
                                          target_app))


def pattern_to_regex(intent_pattern):
    return _core.pattern_to_regex(intent_pattern)


def resolve_intent(instruction, keywords):
    return _json.loads(_core.resolve_intent(instruction, _json.dumps(keywords)))


def run_plan(plan_path, scenarios_dir, store_path, policy_path, seed=0):
    return _json.loads(_core.run_plan(str(plan_path), str(scenarios_dir), str(store_path),
                                      str(policy_path), seed))


def match(instruction, store_path, keywords=None):
    return _json.loads(_core.match(instruction, str(store_path),
                                   _json.dumps(keywords or {})))


def export_store(store_path):
    return _json.loads(_core.export_store(str(store_path)))
