#include "skillkit/compiler.hpp"
#include "skillkit/harness.hpp"
#include "skillkit/matcher.hpp"
#include "skillkit/orchestrator.hpp"
#include "skillkit/policy.hpp"
#include "skillkit/replayer.hpp"
#include "skillkit/sim_device.hpp"
#include "skillkit/store.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace py = pybind11;
using namespace skillkit;

// The binding layer speaks JSON strings for structured data; the python
// package wraps it with a dict-level API.

namespace {

json parse(const std::string& text) { return json::parse(text); }

Bindings parse_bindings(const std::string& text) {
    Bindings bindings;
    json doc = parse(text);
    for (const auto& [name, value] : doc.items()) {
        bindings[name] = value.get<std::string>();
    }
    return bindings;
}

double py_score_element(const std::string& node_json, const std::string& locator_json,
                        const std::string& bindings_json) {
    UINode node = parse(node_json).get<UINode>();
    ElementLocator locator = parse(locator_json).get<ElementLocator>();
    return score_element(node, locator, parse_bindings(bindings_json));
}

std::optional<std::pair<int, double>> py_find_element(const std::string& tree_json,
                                                      const std::string& locator_json,
                                                      double tau,
                                                      const std::string& bindings_json) {
    UITree tree = parse(tree_json).get<UITree>();
    ElementLocator locator = parse(locator_json).get<ElementLocator>();
    return find_element(tree, locator, tau, parse_bindings(bindings_json));
}

std::string py_flatten_tree(const std::string& tree_json) {
    UITree tree = parse(tree_json).get<UITree>();
    return json(flatten_tree(tree)).dump();
}

std::pair<int, int> py_node_center(const std::string& node_json) {
    Point p = node_center(parse(node_json).get<UINode>());
    return {p.x, p.y};
}

std::string py_make_descriptor(const std::string& tree_json) {
    return json(make_descriptor(parse(tree_json).get<UITree>())).dump();
}

std::string py_verify_state(const std::string& tree_json, const std::string& descriptor_json,
                            const std::string& target_app) {
    DeviationReport report = verify_state(parse(tree_json).get<UITree>(),
                                          parse(descriptor_json).get<UIStateDescriptor>(),
                                          target_app);
    return json{{"severity", to_string(report.severity)}, {"detail", report.detail}}.dump();
}

std::pair<std::string, std::vector<std::string>> py_pattern_to_regex(
    const std::string& intent_pattern) {
    CompiledPattern cp = pattern_to_regex(intent_pattern);
    return {cp.regex_text, cp.slot_order};
}

std::string py_resolve_intent(const std::string& instruction, const std::string& keywords_json) {
    IntentResolution r = resolve_intent(instruction, KeywordDict::from_json(parse(keywords_json)));
    json out{{"method", to_string(r.method)}};
    if (r.target_app) {
        out["target_app"] = *r.target_app;
    }
    return out.dump();
}

std::vector<double> py_embed(const std::string& text) {
    TokenHashEmbedding provider;
    return provider.embed(text);
}

std::string py_run_plan(const std::string& plan_path, const std::string& scenarios_dir,
                        const std::string& store_path, const std::string& policy_path,
                        unsigned seed) {
    Plan plan = load_plan(plan_path);
    SimDevice device = SimDevice::from_scenario_dir(scenarios_dir, seed);
    ScriptedPolicy policy = ScriptedPolicy::from_file(policy_path);
    TokenHashEmbedding provider;
    SkillStore store(store_path);
    AgentController controller(device, policy, store, provider, plan.keywords);
    std::vector<json> log;
    std::vector<RoundResult> results = controller.run_rounds(plan.rounds, &log);
    json out = report_to_json(compute_report(results));
    out["round_log"] = log;
    return out.dump();
}

std::string py_match(const std::string& instruction, const std::string& store_path,
                     const std::string& keywords_json) {
    SkillStore store(store_path);
    KeywordDict dict = KeywordDict::from_json(parse(keywords_json));
    TokenHashEmbedding provider;
    struct NullPolicy : Policy {
        PolicyResponse decide(const PolicyRequest&) override {
            PolicyResponse r;
            r.confirm = false;
            return r;
        }
    } null_policy;
    PolicyHandle handle(null_policy);
    MatchResult result = match_instruction(instruction, store.list_skills(), provider, handle,
                                           dict, store.success_order());
    return json(result).dump();
}

std::string py_export_store(const std::string& store_path) {
    SkillStore store(store_path);
    return store.export_all().dump();
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "skill compilation and replay engine (C++ core)";

    py::register_exception<Error>(m, "SkillkitError");

    m.attr("TAU_STRICT") = kTauStrict;
    m.attr("TAU_RELAXED") = kTauRelaxed;
    m.attr("TAU_SEM") = kTauSem;
    py::dict weights;
    weights["resource_id"] = kFeatureWeights[0] / 100.0;
    weights["text"] = kFeatureWeights[1] / 100.0;
    weights["content_desc"] = kFeatureWeights[2] / 100.0;
    weights["class_name"] = kFeatureWeights[3] / 100.0;
    weights["parent_class"] = kFeatureWeights[4] / 100.0;
    weights["sibling_index"] = kFeatureWeights[5] / 100.0;
    m.attr("FEATURE_WEIGHTS") = weights;

    m.def("score_element", &py_score_element, py::arg("node_json"), py::arg("locator_json"),
          py::arg("bindings_json") = "{}",
          "Weighted locator score of one element, in [0, 1].");
    m.def("find_element", &py_find_element, py::arg("tree_json"), py::arg("locator_json"),
          py::arg("tau"), py::arg("bindings_json") = "{}",
          "Best element index and score at or above tau, else None.");
    m.def("flatten_tree", &py_flatten_tree, py::arg("tree_json"),
          "Breadth-first flattening as a JSON list of nodes.");
    m.def("node_center", &py_node_center, py::arg("node_json"),
          "Integer-truncated center of a node's bounds.");
    m.def("make_descriptor", &py_make_descriptor, py::arg("tree_json"),
          "Compact screen fingerprint as JSON.");
    m.def("verify_state", &py_verify_state, py::arg("tree_json"), py::arg("descriptor_json"),
          py::arg("target_app"), "Deviation severity report as JSON.");
    m.def("pattern_to_regex", &py_pattern_to_regex, py::arg("intent_pattern"),
          "Anchored regex text plus the capture-ordered slot names.");
    m.def("strip_placeholders", &strip_placeholders, py::arg("intent_pattern"));
    m.def("resolve_intent", &py_resolve_intent, py::arg("instruction"),
          py::arg("keywords_json"), "Target-app resolution as JSON.");
    m.def("embed", &py_embed, py::arg("text"), "Deterministic 64-dim baseline embedding.");
    m.def("cosine", &cosine, py::arg("a"), py::arg("b"));
    m.def("run_plan", &py_run_plan, py::arg("plan_path"), py::arg("scenarios_dir"),
          py::arg("store_path"), py::arg("policy_path"), py::arg("seed") = 0,
          "Run a round plan end to end; returns the metrics report (with the "
          "round log) as JSON.");
    m.def("match", &py_match, py::arg("instruction"), py::arg("store_path"),
          py::arg("keywords_json") = "{}",
          "Match an instruction against stored skills (no confirmation calls).");
    m.def("export_store", &py_export_store, py::arg("store_path"),
          "Whole-store dump as one JSON document.");
}
