import math
import os
import pathlib

import pytest

import skillkit

FIXTURES = pathlib.Path(
    os.environ.get("SKILLKIT_FIXTURE_DIR",
                   pathlib.Path(__file__).resolve().parents[2] / "fixtures"))


def test_score_element_exact_fractions():
    locator = {
        "resource_id": "fab",
        "text": "Save",
        "class_name": "Button",
        "parent_class": "Frame",
        "sibling_index": 1,
    }
    only_id = {"resource_id": "fab", "text": "Other", "class_name": "X",
               "parent_class": "Y", "sibling_index": 9}
    assert skillkit.score_element(only_id, locator) == 40.0 / 85.0

    full = {"resource_id": "fab", "text": "Save it", "class_name": "Button",
            "parent_class": "Frame", "sibling_index": 1}
    assert skillkit.score_element(full, locator) == 1.0


def test_score_with_bindings():
    locator = {"resource_id": "field", "text": "{time}"}
    node = {"resource_id": "field", "text": "9:00 AM", "class_name": "EditText"}
    assert skillkit.score_element(node, locator, {"time": "9:00 AM"}) == 1.0
    assert skillkit.score_element(node, locator, {"time": "7:30 AM"}) == 40.0 / 60.0


def test_flatten_and_center():
    tree = {
        "activity": "s",
        "foreground_app": "a",
        "root": {
            "resource_id": "root",
            "class_name": "Root",
            "bounds": {"left": 0, "top": 0, "right": 100, "bottom": 41},
            "children": [
                {"resource_id": "kid", "class_name": "View",
                 "bounds": {"left": 0, "top": 0, "right": 10, "bottom": 10}},
            ],
        },
    }
    flat = skillkit.flatten_tree(tree)
    assert [n["resource_id"] for n in flat] == ["root", "kid"]
    assert skillkit.node_center(tree["root"]) == (50, 20)
    with pytest.raises(skillkit.SkillkitError):
        skillkit.node_center({"class_name": "X",
                              "bounds": {"left": 0, "top": 0, "right": 0, "bottom": 0}})


def test_pattern_to_regex():
    regex, slots = skillkit.pattern_to_regex("Search for {search_query} in Chrome")
    assert slots == ["search_query"]
    assert regex.startswith("^") and regex.endswith("$")
    assert "(.+)" in regex


def test_embedding_is_unit_norm_and_consistent():
    v = skillkit.embed("Set an alarm for")
    assert math.isclose(sum(x * x for x in v) ** 0.5, 1.0, abs_tol=1e-6)
    assert skillkit.cosine(v, v) == pytest.approx(1.0)
    assert skillkit.TAU_SEM == 0.40
    assert abs(sum(skillkit.FEATURE_WEIGHTS.values()) - 1.0) < 1e-12


def test_resolve_intent():
    keywords = {"keywords": {"chrome": "browser", "alarm": "clock"},
                "browser_app": "browser"}
    out = skillkit.resolve_intent("Search for weather in Chrome", keywords)
    assert out == {"method": "EXPLICIT_CONTEXT", "target_app": "browser"}
    assert skillkit.resolve_intent("Open youtube.com", keywords)["method"] == "DOMAIN_SUFFIX"


def test_run_plan_end_to_end(tmp_path):
    report = skillkit.run_plan(
        FIXTURES / "plans" / "mini25.json",
        FIXTURES / "scenarios",
        tmp_path / "store.db",
        FIXTURES / "policies" / "scripted_default.json",
        seed=7,
    )
    assert report["rounds"] == 25
    assert report["success_rate"] == 1.0
    assert report["zero_llm_rate"] > 0.0
    assert report["layer_distribution"]["L2_PURE"] == 10

    skills = skillkit.export_store(tmp_path / "store.db")["skills"]
    assert len(skills) == 5

    match = skillkit.match("Set an alarm for 5:05 PM", tmp_path / "store.db",
                           {"keywords": {"alarm": "clock"}, "browser_app": ""})
    assert match["kind"] == "FULL"
    assert match["bindings"] == {"time": "5:05 PM"}
