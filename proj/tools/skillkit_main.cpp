#include "skillkit/compiler.hpp"
#include "skillkit/harness.hpp"
#include "skillkit/matcher.hpp"
#include "skillkit/replayer.hpp"
#include "skillkit/store.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

using namespace skillkit;

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("bad-file", path);
    }
    return json::parse(in);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("bad-file", path);
    }
    out << content;
}

int cmd_run(const std::string& plan_path, const std::string& scenarios_dir,
            const std::string& store_path, const std::string& policy_spec, unsigned seed,
            const std::string& report_path, const std::string& log_path) {
    Plan plan = load_plan(plan_path);
    SimDevice device = SimDevice::from_scenario_dir(scenarios_dir, seed);

    std::string policy_file = policy_spec;
    const std::string prefix = "scripted:";
    if (policy_file.rfind(prefix, 0) == 0) {
        policy_file = policy_file.substr(prefix.size());
    }
    ScriptedPolicy policy = ScriptedPolicy::from_file(policy_file);

    TokenHashEmbedding provider;
    SkillStore store(store_path);
    AgentController controller(device, policy, store, provider, plan.keywords);

    std::vector<json> round_log;
    std::vector<RoundResult> results = controller.run_rounds(plan.rounds, &round_log);
    MetricsReport report = compute_report(results);

    std::cout << report_table(report);

    if (!report_path.empty()) {
        json doc = report_to_json(report);
        doc["seed"] = seed;
        write_text_file(report_path, doc.dump(2) + "\n");
    }
    if (!log_path.empty()) {
        std::string lines;
        for (const json& record : round_log) {
            lines += record.dump() + "\n";
        }
        write_text_file(log_path, lines);
    }
    return 0;
}

int cmd_match(const std::string& instruction, const std::string& store_path,
              const std::string& keywords_path) {
    SkillStore store(store_path);
    KeywordDict dict =
        keywords_path.empty() ? KeywordDict{} : KeywordDict::from_file(keywords_path);
    TokenHashEmbedding provider;
    // Matching from the CLI never consults a live policy; semantic hits are
    // reported as unconfirmed candidates instead.
    struct NullPolicy : Policy {
        PolicyResponse decide(const PolicyRequest&) override {
            PolicyResponse r;
            r.confirm = false;
            return r;
        }
    } null_policy;
    PolicyHandle handle(null_policy);

    std::vector<SkillTemplate> skills = store.list_skills();
    MatchResult result =
        match_instruction(instruction, skills, provider, handle, dict, store.success_order());

    json out = result;
    out["candidates"] = json::array();
    for (const auto& [skill_id, similarity] : semantic_candidates(instruction, skills, provider)) {
        out["candidates"].push_back(json{{"skill_id", skill_id}, {"similarity", similarity}});
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_inspect(const std::string& skill_id, const std::string& store_path, int version) {
    SkillStore store(store_path);
    SkillTemplate tpl = store.load_skill(
        skill_id, version > 0 ? std::optional<int>(version) : std::nullopt);
    json out = tpl;
    out["stats"] = json{{"n_succ", tpl.n_succ},
                        {"n_fail", tpl.n_fail},
                        {"needs_recompile", tpl.needs_recompile}};
    out["guards"] = json::array();
    for (const GuardCondition& guard : store.guards_for(skill_id)) {
        out["guards"].push_back(guard);
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_export(const std::string& store_path, const std::string& out_path) {
    SkillStore store(store_path);
    json dump = store.export_all();
    if (out_path.empty()) {
        std::cout << dump.dump(2) << "\n";
    } else {
        write_text_file(out_path, dump.dump(2) + "\n");
    }
    return 0;
}

int cmd_score(const std::string& locator_path, const std::string& tree_path,
              const std::string& bindings_path) {
    ElementLocator locator = read_json_file(locator_path).get<ElementLocator>();
    UITree tree = read_json_file(tree_path).get<UITree>();
    Bindings bindings;
    if (!bindings_path.empty()) {
        json doc = read_json_file(bindings_path);
        for (const auto& [name, value] : doc.items()) {
            bindings[name] = value.get<std::string>();
        }
    }

    std::vector<UINode> flat = flatten_tree(tree);
    json scores = json::array();
    for (std::size_t i = 0; i < flat.size(); ++i) {
        scores.push_back(json{{"index", i},
                              {"resource_id", flat[i].resource_id.value_or("")},
                              {"score", score_element(flat[i], locator, bindings)}});
    }
    json out{{"scores", scores}};
    auto strict = find_element(tree, locator, kTauStrict, bindings);
    auto relaxed = find_element(tree, locator, kTauRelaxed, bindings);
    out["best_strict"] =
        strict ? json{{"index", strict->first}, {"score", strict->second}} : json();
    out["best_relaxed"] =
        relaxed ? json{{"index", relaxed->first}, {"score", relaxed->second}} : json();
    std::cout << out.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"skill compilation and replay engine for simulated UI tasks"};
    app.require_subcommand(1);

    std::string plan_path;
    std::string scenarios_dir;
    std::string store_path;
    std::string policy_spec;
    std::string report_path;
    std::string log_path;
    std::string keywords_path;
    std::string instruction;
    std::string skill_id;
    std::string out_path;
    std::string locator_path;
    std::string tree_path;
    std::string bindings_path;
    unsigned seed = 0;
    int version = 0;

    CLI::App* run = app.add_subcommand("run", "execute a round plan against the simulator");
    run->add_option("--plan", plan_path, "plan JSON file")->required();
    run->add_option("--scenarios", scenarios_dir, "directory of app scenario JSON files")
        ->required();
    run->add_option("--store", store_path, "skill store path")->required();
    run->add_option("--policy", policy_spec, "policy spec, e.g. scripted:<rules.json>")
        ->required();
    run->add_option("--seed", seed, "device seed");
    run->add_option("--report", report_path, "write the metrics report JSON here");
    run->add_option("--log", log_path, "write the per-round NDJSON log here");

    CLI::App* match = app.add_subcommand("match", "match an instruction against stored skills");
    match->add_option("--instruction", instruction, "instruction text")->required();
    match->add_option("--store", store_path, "skill store path")->required();
    match->add_option("--keywords", keywords_path, "keyword dictionary JSON");

    CLI::App* inspect = app.add_subcommand("inspect", "print a stored skill template");
    inspect->add_option("--skill", skill_id, "skill id")->required();
    inspect->add_option("--store", store_path, "skill store path")->required();
    inspect->add_option("--version", version, "template version (default: latest)");

    CLI::App* exp = app.add_subcommand("export", "dump the whole store as one JSON document");
    exp->add_option("--store", store_path, "skill store path")->required();
    exp->add_option("--out", out_path, "output file (default: stdout)");

    CLI::App* score = app.add_subcommand("score", "score a locator against a UI tree");
    score->add_option("--locator", locator_path, "locator JSON file")->required();
    score->add_option("--tree", tree_path, "UI tree JSON file")->required();
    score->add_option("--bindings", bindings_path, "slot bindings JSON file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            return cmd_run(plan_path, scenarios_dir, store_path, policy_spec, seed, report_path,
                           log_path);
        }
        if (match->parsed()) {
            return cmd_match(instruction, store_path, keywords_path);
        }
        if (inspect->parsed()) {
            return cmd_inspect(skill_id, store_path, version);
        }
        if (exp->parsed()) {
            return cmd_export(store_path, out_path);
        }
        if (score->parsed()) {
            return cmd_score(locator_path, tree_path, bindings_path);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
