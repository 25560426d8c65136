#include "skillkit/harness.hpp"

#include "skillkit/compiler.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace skillkit;
using testsupport::TempFile;

namespace {

RoundSpec round_spec(const std::string& phase, const std::string& task, const std::string& app,
                     const std::string& instruction, const std::string& variation,
                     std::map<std::string, std::string> expected) {
    RoundSpec spec;
    spec.phase = phase;
    spec.task_id = task;
    spec.app = app;
    spec.instruction = instruction;
    spec.variation = variation;
    spec.expected = std::move(expected);
    return spec;
}

RoundSpec alarm_round(const std::string& phase, const std::string& instruction,
                      const std::string& variation, const std::string& time) {
    return round_spec(phase, "set_alarm", "clock", instruction, variation, {{"time", time}});
}

struct Rig {
    SimDevice device = testsupport::make_device();
    ScriptedPolicy policy = testsupport::default_policy();
    TokenHashEmbedding provider;
    TempFile store_file{"harness"};
    SkillStore store{store_file.path()};
    AgentController controller{device, policy, store, provider, testsupport::default_keywords()};
};

} // namespace

TEST_CASE("first round executes fresh and stores a skill") {
    Rig rig;
    RoundResult r = rig.controller.run_round(alarm_round("P1", "Set an alarm for 7:30 AM", "C",
                                                         "7:30 AM"));
    CHECK(r.success);
    CHECK(r.path == PathClass::L1Fresh);
    CHECK(r.match_kind == MatchKind::NoMatch);
    CHECK(r.policy_calls == 6); // 5 step decisions + 1 slot extraction
    CHECK(rig.store.has_skill("set_an_alarm_for_time"));
    // embedding cached alongside the skill
    CHECK(rig.store.get_embedding("set_an_alarm_for_time", "token-hash-64", 64).has_value());
}

TEST_CASE("low-variation reuse replays with zero policy calls") {
    Rig rig;
    rig.controller.run_round(alarm_round("P1", "Set an alarm for 7:30 AM", "C", "7:30 AM"));
    RoundResult r =
        rig.controller.run_round(alarm_round("P2", "Set an alarm for 9:00 AM", "L", "9:00 AM"));
    CHECK(r.success);
    CHECK(r.path == PathClass::L2Pure);
    CHECK(r.policy_calls == 0);
    CHECK(r.match_kind == MatchKind::Full);
    // the skill's success counter moved
    CHECK(rig.store.stats("set_an_alarm_for_time", 1).n_succ == 1);
}

TEST_CASE("paraphrase reuse goes through semantic confirmation with one call") {
    Rig rig;
    rig.controller.run_round(alarm_round("P1", "Set an alarm for 7:30 AM", "C", "7:30 AM"));
    RoundResult r =
        rig.controller.run_round(alarm_round("P2", "Create an alarm for 6:15 AM", "M", "6:15 AM"));
    CHECK(r.success);
    CHECK(r.path == PathClass::L2Semantic);
    CHECK(r.policy_calls == 1);
}

TEST_CASE("chooser perturbation is absorbed by auto-dismiss at zero calls") {
    Rig rig;
    RoundSpec compile_round = round_spec("P1", "web_search", "browser",
                                         "Search for weather in Chrome", "C",
                                         {{"search_query", "weather"}});
    rig.controller.run_round(compile_round);

    RoundSpec perturbed = round_spec("P4", "web_search", "browser", "Search for cats in Chrome",
                                     "L", {{"search_query", "cats"}});
    perturbed.perturbation = Perturbation{PerturbationKind::ChooserDialog, "browser"};
    RoundResult r = rig.controller.run_round(perturbed);
    CHECK(r.success);
    CHECK(r.path == PathClass::L2Pure);
    CHECK(r.policy_calls == 0);
}

TEST_CASE("failed replay falls back to fresh execution and compiles a new skill") {
    Rig rig;
    // a stored skill whose locators never resolve
    SkillTemplate broken;
    broken.skill_id = "set_an_alarm_for_time";
    broken.intent_pattern = "Set an alarm for {time}";
    broken.slots = {{"time", "time", "{time}"}};
    broken.target_app = "clock";
    SkillStep launch;
    launch.action_kind = ActionKind::Launch;
    launch.params = "clock";
    launch.descriptor.activity = "home";
    broken.steps.push_back(launch);
    for (int i = 0; i < 3; ++i) {
        SkillStep step;
        step.action_kind = ActionKind::Tap;
        ElementLocator loc;
        loc.resource_id = "missing_" + std::to_string(i);
        step.locator = loc;
        step.descriptor.activity = "alarms";
        step.descriptor.key_element_ids = {"header_alarms", "alarm_list", "fab_add"};
        broken.steps.push_back(step);
    }
    rig.store.store_skill(broken);

    RoundResult r =
        rig.controller.run_round(alarm_round("P2", "Set an alarm for 9:00 AM", "L", "9:00 AM"));
    CHECK(r.success); // layer-1 recovery completed the task
    CHECK(r.path == PathClass::L2ToL1);
    CHECK(r.policy_calls > 0);

    // the original skill records the failure; the recovery is a new skill
    SkillStats stats = rig.store.stats("set_an_alarm_for_time", 1);
    CHECK(stats.n_fail == 1);
    CHECK(rig.store.has_skill("set_an_alarm_for_time_r2"));
    std::vector<FailureRecord> failures = rig.store.failures_for("set_an_alarm_for_time");
    REQUIRE(failures.size() == 1);
    CHECK(failures[0].recovered);
}

TEST_CASE("one broken step is recovered by a single fallback call") {
    Rig rig;
    rig.controller.run_round(alarm_round("P1", "Set an alarm for 7:30 AM", "C", "7:30 AM"));

    // break the compiled INPUT step's primary identifier; the rest of the
    // locator no longer clears either threshold on the time screen
    SkillTemplate skill = rig.store.load_skill("set_an_alarm_for_time");
    bool broke = false;
    for (SkillStep& step : skill.steps) {
        if (step.action_kind == ActionKind::Input) {
            step.locator->resource_id = "time_field_v2";
            step.locator->class_name = "NumberPicker";
            broke = true;
        }
    }
    REQUIRE(broke);
    // replace the stored template wholesale (fresh store keeps it simple)
    testsupport::TempFile other("broken_input");
    SkillStore store2(other.path());
    store2.store_skill(skill);
    AgentController controller(rig.device, rig.policy, store2, rig.provider,
                               testsupport::default_keywords());

    RoundResult r =
        controller.run_round(alarm_round("P2", "Set an alarm for 9:00 AM", "L", "9:00 AM"));
    CHECK(r.success);
    CHECK(r.path == PathClass::L2StepFallback);
    CHECK(r.policy_calls == 1); // the single STEP_FALLBACK call
    CHECK(store2.stats("set_an_alarm_for_time", 1).n_succ == 1);
}

TEST_CASE("flagged skill forces recompilation into the next version") {
    Rig rig;
    rig.controller.run_round(alarm_round("P1", "Set an alarm for 7:30 AM", "C", "7:30 AM"));

    FailureRecord f;
    f.skill_id = "set_an_alarm_for_time";
    f.version = 1;
    f.step_index = 1;
    f.severity = Severity::Minor;
    rig.store.record_outcome(f.skill_id, 1, false, f);
    rig.store.record_outcome(f.skill_id, 1, false, f);
    REQUIRE(rig.store.stats(f.skill_id, 1).needs_recompile);

    RoundResult r =
        rig.controller.run_round(alarm_round("P5", "Set an alarm for 9:00 AM", "L", "9:00 AM"));
    CHECK(r.success);
    CHECK(r.path == PathClass::L1Fresh); // forced fresh execution
    CHECK(r.match_kind == MatchKind::Full);
    CHECK(rig.store.latest_version("set_an_alarm_for_time") == 2);
    SkillTemplate v2 = rig.store.load_skill("set_an_alarm_for_time");
    CHECK(v2.version == 2);
    CHECK_FALSE(v2.needs_recompile);
    CHECK(v2.n_succ == 0);
}

TEST_CASE("guard violation routes straight to fresh execution") {
    Rig rig;
    rig.controller.run_round(round_spec("P1", "web_search", "browser",
                                        "Search for weather in Chrome", "C",
                                        {{"search_query", "weather"}}));

    // two recorded moderate failures at the same step synthesize a dialog guard
    FailureRecord f;
    f.skill_id = "search_for_search_query_in_chrome";
    f.version = 1;
    f.step_index = 1;
    f.severity = Severity::Moderate;
    rig.store.record_outcome(f.skill_id, 1, true); // keep r_fail at 0.5, unflagged
    rig.store.record_outcome(f.skill_id, 1, true);
    rig.store.record_outcome(f.skill_id, 1, false, f);
    rig.store.record_outcome(f.skill_id, 1, false, f);
    REQUIRE_FALSE(rig.store.stats(f.skill_id, 1).needs_recompile);
    REQUIRE(rig.store.synthesize_guards(f.skill_id).size() == 1);

    RoundSpec perturbed = round_spec("P4", "web_search", "browser", "Search for cats in Chrome",
                                     "L", {{"search_query", "cats"}});
    perturbed.perturbation = Perturbation{PerturbationKind::ChooserDialog, "browser"};
    RoundResult r = rig.controller.run_round(perturbed);
    CHECK(r.success);
    CHECK(r.path == PathClass::L1Fresh);
}

TEST_CASE("a failing round never aborts the plan") {
    Rig rig;
    std::vector<RoundSpec> rounds;
    RoundSpec broken = round_spec("P1", "set_alarm", "clock", "Set an alarm for 7:30 AM", "C",
                                  {{"time", "7:30 AM"}});
    broken.setup.push_back(SetupMutation{"ghost_app", "set", "k", "v"}); // throws inside
    rounds.push_back(broken);
    rounds.push_back(alarm_round("P1", "Set an alarm for 7:30 AM", "C", "7:30 AM"));

    std::vector<RoundResult> results = rig.controller.run_rounds(rounds);
    REQUIRE(results.size() == 2);
    CHECK_FALSE(results[0].success);
    CHECK(results[1].success);
}

TEST_CASE("device restart hook fires between configured round batches") {
    Rig rig;
    int restarts = 0;
    rig.controller.device_restart_hook = [&] { ++restarts; };
    rig.controller.restart_every = 2;
    std::vector<RoundSpec> rounds(5, alarm_round("P1", "Set an alarm for 7:30 AM", "C",
                                                 "7:30 AM"));
    rig.controller.run_rounds(rounds);
    CHECK(restarts == 2); // before rounds 2 and 4 (0-indexed)
}

TEST_CASE("path classification is a pure function of the trace") {
    CHECK(classify_path(MatchKind::NoMatch, MatchStrategy::None, false, std::nullopt, 0) ==
          PathClass::L1Fresh);
    CHECK(classify_path(MatchKind::Full, MatchStrategy::Regex, true, std::nullopt, 0) ==
          PathClass::L1Fresh);
    CHECK(classify_path(MatchKind::Full, MatchStrategy::Regex, false, ReplayStatus::Completed,
                        0) == PathClass::L2Pure);
    CHECK(classify_path(MatchKind::Full, MatchStrategy::Embedding, false,
                        ReplayStatus::Completed, 0) == PathClass::L2Semantic);
    CHECK(classify_path(MatchKind::Full, MatchStrategy::Regex, false, ReplayStatus::Completed,
                        2) == PathClass::L2StepFallback);
    CHECK(classify_path(MatchKind::Full, MatchStrategy::Regex, false, ReplayStatus::FellBack,
                        1) == PathClass::L2ToL1);
    // idempotent re-classification
    for (int i = 0; i < 3; ++i) {
        CHECK(classify_path(MatchKind::Full, MatchStrategy::Regex, false,
                            ReplayStatus::Aborted, 0) == PathClass::L2ToL1);
    }
}

TEST_CASE("report computes the defined fractions") {
    std::vector<RoundResult> results;
    auto add = [&](const std::string& phase, bool success, PathClass path, int calls,
                   MatchKind kind) {
        RoundResult r;
        r.phase = phase;
        r.task_id = "t";
        r.variation = "L";
        r.success = success;
        r.path = path;
        r.policy_calls = calls;
        r.match_kind = kind;
        results.push_back(r);
    };
    // 4 rounds, 3 verified -> 0.75
    add("P1", true, PathClass::L1Fresh, 6, MatchKind::NoMatch);
    add("P2", true, PathClass::L2Pure, 0, MatchKind::Full);
    add("P2", true, PathClass::L2Semantic, 1, MatchKind::Full);
    add("P2", false, PathClass::L2ToL1, 9, MatchKind::Full);

    MetricsReport report = compute_report(results);
    CHECK(report.rounds == 4);
    CHECK(report.success_rate == 0.75);
    CHECK(report.zero_llm_rate == 0.25);
    CHECK(report.match_rate == 1.0); // all 3 post-P1 rounds matched FULL
    CHECK(report.fallback_rate == doctest::Approx(1.0 / 3.0));
    CHECK(report.mean_policy_calls == 4.0);

    // layer distribution conservation
    int total = 0;
    for (const auto& [path, count] : report.layer_distribution) {
        total += count;
    }
    CHECK(total == report.rounds);

    // ten rounds with three zero-call rounds -> 0.3
    std::vector<RoundResult> ten;
    for (int i = 0; i < 10; ++i) {
        RoundResult r;
        r.phase = "P2";
        r.policy_calls = i < 3 ? 0 : 2;
        r.success = true;
        r.path = PathClass::L2Pure;
        r.match_kind = MatchKind::Full;
        ten.push_back(r);
    }
    CHECK(compute_report(ten).zero_llm_rate == doctest::Approx(0.3));

    // 8 L2 attempts, 2 fell back -> 0.25
    std::vector<RoundResult> l2;
    for (int i = 0; i < 8; ++i) {
        RoundResult r;
        r.phase = "P2";
        r.path = i < 2 ? PathClass::L2ToL1 : PathClass::L2Pure;
        r.match_kind = MatchKind::Full;
        r.success = true;
        l2.push_back(r);
    }
    CHECK(compute_report(l2).fallback_rate == doctest::Approx(0.25));

    // empty plan: zero counts
    MetricsReport empty = compute_report({});
    CHECK(empty.rounds == 0);
    CHECK(empty.success_rate == 0.0);
}

TEST_CASE("report table renders the execution path taxonomy") {
    std::vector<RoundResult> results;
    RoundResult r;
    r.phase = "P2";
    r.success = true;
    r.path = PathClass::L2Pure;
    r.match_kind = MatchKind::Full;
    results.push_back(r);
    MetricsReport report = compute_report(results);
    std::string table = report_table(report);
    CHECK(table.find("L2: pure replay") != std::string::npos);
    CHECK(table.find("L2 + semantic match") != std::string::npos);
    CHECK(table.find("L2 + step-level fallback") != std::string::npos);
    CHECK(table.find("L2 -> L1 fallback") != std::string::npos);
    CHECK(table.find("L1: fresh execution") != std::string::npos);
    CHECK(table.find("All rounds") != std::string::npos);
}

TEST_CASE("mini plan smoke: phases improve and logs are deterministic") {
    Plan plan = testsupport::mini_plan();
    REQUIRE(plan.rounds.size() == 25);

    auto run_plan = [&](std::vector<json>* log) {
        SimDevice device = testsupport::make_device(7);
        ScriptedPolicy policy = testsupport::default_policy();
        TokenHashEmbedding provider;
        TempFile file("plan_run");
        SkillStore store(file.path());
        AgentController controller(device, policy, store, provider, plan.keywords);
        std::vector<RoundResult> results = controller.run_rounds(plan.rounds, log);
        return compute_report(results);
    };

    std::vector<json> log_a;
    MetricsReport report = run_plan(&log_a);
    CHECK(report.rounds == 25);
    CHECK(report.success_rate == 1.0);

    // phase-over-phase non-increasing mean policy calls
    const std::string phases[] = {"P1", "P2", "P3", "P4", "P5"};
    for (int i = 1; i < 5; ++i) {
        CHECK(report.per_phase.at(phases[i]).mean_policy_calls() <=
              report.per_phase.at(phases[i - 1]).mean_policy_calls());
    }
    for (int i = 1; i < 5; ++i) {
        CHECK(report.per_phase.at(phases[i]).zero_llm_rate() > 0.0);
    }

    // byte-identical logs across identical runs
    std::vector<json> log_b;
    MetricsReport report_b = run_plan(&log_b);
    CHECK(json(log_a).dump() == json(log_b).dump());
    CHECK(report_to_json(report).dump() == report_to_json(report_b).dump());
}
