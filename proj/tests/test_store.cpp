#include "skillkit/store.hpp"

#include "skillkit/compiler.hpp"
#include "support.hpp"

#include <doctest.h>
#include <sqlite3.h>

using namespace skillkit;
using testsupport::TempFile;

namespace {

SkillTemplate sample_skill(const std::string& pattern = "Set an alarm for {time}",
                           const std::string& app = "clock") {
    SkillTemplate tpl;
    tpl.intent_pattern = pattern;
    tpl.skill_id = skill_id_from_pattern(pattern);
    tpl.target_app = app;
    tpl.slots = {{"time", "time", "{time}"}};
    SkillStep launch;
    launch.action_kind = ActionKind::Launch;
    launch.params = app;
    launch.descriptor.activity = "home";
    tpl.steps.push_back(launch);
    for (int i = 0; i < 4; ++i) {
        SkillStep step;
        step.action_kind = ActionKind::Tap;
        ElementLocator loc;
        loc.resource_id = "btn_" + std::to_string(i);
        step.locator = loc;
        step.descriptor.activity = "screen_" + std::to_string(i);
        tpl.steps.push_back(step);
    }
    return tpl;
}

FailureRecord failure_at(const std::string& skill_id, int step, Severity severity,
                         bool recovered = false) {
    FailureRecord f;
    f.skill_id = skill_id;
    f.version = 1;
    f.step_index = step;
    f.severity = severity;
    f.descriptor_at_failure.activity = "screen_" + std::to_string(step);
    f.recovered = recovered;
    return f;
}

} // namespace

TEST_CASE("store and load round-trips the serialized template") {
    TempFile file("store_roundtrip");
    SkillStore store(file.path());
    SkillTemplate tpl = sample_skill();
    store.store_skill(tpl);

    SkillTemplate back = store.load_skill(tpl.skill_id);
    CHECK(json(back).dump() == json(tpl).dump());
    CHECK(store.latest_version(tpl.skill_id) == 1);
}

TEST_CASE("loading an unknown skill fails") {
    TempFile file("store_unknown");
    SkillStore store(file.path());
    CHECK_THROWS_AS(store.load_skill("ghost"), Error);
    CHECK_THROWS_AS(store.record_outcome("ghost", 1, true), Error);
}

TEST_CASE("list returns latest versions including flagged skills") {
    TempFile file("store_list");
    SkillStore store(file.path());
    SkillTemplate a = sample_skill("Set an alarm for {time}", "clock");
    SkillTemplate b = sample_skill("Turn on WiFi", "settings");
    b.slots.clear();
    store.store_skill(a);
    store.store_skill(b);

    // drive b's failure rate over the threshold
    store.record_outcome(b.skill_id, 1, false, failure_at(b.skill_id, 1, Severity::Major));
    store.record_outcome(b.skill_id, 1, false, failure_at(b.skill_id, 1, Severity::Major));

    std::vector<SkillTemplate> all = store.list_skills();
    REQUIRE(all.size() == 2);
    bool saw_flagged = false;
    for (const SkillTemplate& tpl : all) {
        if (tpl.skill_id == b.skill_id) {
            CHECK(tpl.needs_recompile);
            saw_flagged = true;
        }
    }
    CHECK(saw_flagged);

    std::vector<SkillTemplate> clock_only = store.list_skills(std::string("clock"));
    REQUIRE(clock_only.size() == 1);
    CHECK(clock_only[0].skill_id == a.skill_id);
}

TEST_CASE("failure rate boundary: exactly one half does not flag") {
    TempFile file("store_boundary");
    SkillStore store(file.path());
    SkillTemplate tpl = sample_skill();
    store.store_skill(tpl);

    store.record_outcome(tpl.skill_id, 1, true);
    SkillStats s = store.record_outcome(tpl.skill_id, 1, false,
                                        failure_at(tpl.skill_id, 2, Severity::Moderate));
    CHECK(s.n_succ == 1);
    CHECK(s.n_fail == 1);
    CHECK(s.r_fail() == 0.5);
    CHECK_FALSE(s.needs_recompile); // strict inequality

    s = store.record_outcome(tpl.skill_id, 1, false,
                             failure_at(tpl.skill_id, 2, Severity::Moderate));
    CHECK(s.r_fail() == doctest::Approx(2.0 / 3.0));
    CHECK(s.needs_recompile);

    // success afterwards keeps the flag until recompilation
    s = store.record_outcome(tpl.skill_id, 1, true);
    CHECK(s.needs_recompile);
}

TEST_CASE("counter conservation across outcomes") {
    TempFile file("store_conserve");
    SkillStore store(file.path());
    SkillTemplate tpl = sample_skill();
    store.store_skill(tpl);
    int calls = 0;
    for (int i = 0; i < 7; ++i) {
        bool success = i % 3 != 0;
        store.record_outcome(tpl.skill_id, 1, success,
                             success ? std::nullopt
                                     : std::optional<FailureRecord>(
                                           failure_at(tpl.skill_id, i % 5, Severity::Minor)));
        ++calls;
    }
    SkillStats s = store.stats(tpl.skill_id, 1);
    CHECK(s.n_succ + s.n_fail == calls);
}

TEST_CASE("recompile lifecycle with version cap") {
    TempFile file("store_recompile");
    SkillStore store(file.path());
    SkillTemplate tpl = sample_skill();
    store.store_skill(tpl);

    CHECK_THROWS_WITH_AS(store.request_recompile(tpl.skill_id),
                         "not-flagged: set_an_alarm_for_time", Error);

    store.record_outcome(tpl.skill_id, 1, false, failure_at(tpl.skill_id, 1, Severity::Moderate));
    CHECK(store.request_recompile(tpl.skill_id) == RecompileDecision::Recompile);

    SkillTemplate v2 = sample_skill();
    v2.n_succ = 99; // must be zeroed on store
    store.store_recompiled(tpl.skill_id, v2);
    CHECK(store.latest_version(tpl.skill_id) == 2);
    SkillTemplate loaded = store.load_skill(tpl.skill_id);
    CHECK(loaded.version == 2);
    CHECK(loaded.n_succ == 0);
    CHECK_FALSE(loaded.needs_recompile);

    // flag v2, recompile to v3, flag v3: the cap is reached
    store.record_outcome(tpl.skill_id, 2, false, failure_at(tpl.skill_id, 1, Severity::Major));
    CHECK(store.request_recompile(tpl.skill_id) == RecompileDecision::Recompile);
    store.store_recompiled(tpl.skill_id, sample_skill());
    CHECK(store.latest_version(tpl.skill_id) == 3);
    store.record_outcome(tpl.skill_id, 3, false, failure_at(tpl.skill_id, 1, Severity::Major));
    CHECK(store.request_recompile(tpl.skill_id) == RecompileDecision::VersionCapReached);
    CHECK_THROWS_AS(store.store_recompiled(tpl.skill_id, sample_skill()), Error);

    // versions are gapless 1..3
    for (int v = 1; v <= 3; ++v) {
        CHECK(store.load_skill(tpl.skill_id, v).version == v);
    }
}

TEST_CASE("version gaps are rejected") {
    TempFile file("store_gaps");
    SkillStore store(file.path());
    SkillTemplate tpl = sample_skill();
    tpl.version = 2;
    CHECK_THROWS_AS(store.store_skill(tpl), Error);
}

TEST_CASE("guard synthesis needs two recurrences of the same pattern") {
    TempFile file("store_guards");
    SkillStore store(file.path());
    SkillTemplate tpl = sample_skill();
    store.store_skill(tpl);

    store.record_outcome(tpl.skill_id, 1, false, failure_at(tpl.skill_id, 2, Severity::Moderate));
    CHECK(store.synthesize_guards(tpl.skill_id).empty()); // single failure: no guard

    store.record_outcome(tpl.skill_id, 1, false, failure_at(tpl.skill_id, 2, Severity::Moderate));
    std::vector<GuardCondition> guards = store.synthesize_guards(tpl.skill_id);
    REQUIRE(guards.size() == 1);
    CHECK(guards[0].predicate.at("type") == "no_dialog_overlay");
    CHECK(guards[0].predicate.at("step_index") == 2);
    CHECK(guards[0].source_failure_count == 2);

    // mixed severities at different steps group separately
    store.record_outcome(tpl.skill_id, 1, false, failure_at(tpl.skill_id, 0, Severity::Major));
    store.record_outcome(tpl.skill_id, 1, false, failure_at(tpl.skill_id, 0, Severity::Major));
    guards = store.synthesize_guards(tpl.skill_id);
    REQUIRE(guards.size() == 2);

    // guards persist
    CHECK(store.guards_for(tpl.skill_id).size() == 2);
}

TEST_CASE("guard predicates evaluate without policy calls") {
    SimDevice device = testsupport::make_device();
    device.apply(Action{ActionKind::Launch, std::nullopt, "clock"});

    GuardCondition dialog_guard;
    dialog_guard.predicate = json{{"type", "no_dialog_overlay"}, {"step_index", 1}};
    GuardCondition foreground_guard;
    foreground_guard.predicate = json{{"type", "foreground_is_target"}};

    UITree clean = device.capture();
    CHECK(guard_holds(dialog_guard, clean, "clock"));
    CHECK(guard_holds(foreground_guard, clean, "clock"));
    CHECK_FALSE(guard_holds(foreground_guard, clean, "browser"));

    device.inject(Perturbation{PerturbationKind::ChooserDialog, "clock"});
    UITree with_dialog = device.capture();
    CHECK_FALSE(guard_holds(dialog_guard, with_dialog, "clock"));
}

TEST_CASE("embedding cache round trip") {
    TempFile file("store_embed");
    SkillStore store(file.path());
    SkillTemplate tpl = sample_skill();
    store.store_skill(tpl);

    std::vector<double> vec(64, 0.0);
    vec[3] = 0.5;
    vec[10] = -0.25;
    store.put_embedding(tpl.skill_id, "token-hash-64", 64, vec);
    auto back = store.get_embedding(tpl.skill_id, "token-hash-64", 64);
    REQUIRE(back.has_value());
    CHECK(*back == vec);
    CHECK_FALSE(store.get_embedding(tpl.skill_id, "other", 64).has_value());
}

TEST_CASE("success order tracks the most recent success") {
    TempFile file("store_order");
    SkillStore store(file.path());
    SkillTemplate a = sample_skill("Set an alarm for {time}", "clock");
    SkillTemplate b = sample_skill("Turn on WiFi", "settings");
    store.store_skill(a);
    store.store_skill(b);

    store.record_outcome(a.skill_id, 1, true);
    store.record_outcome(b.skill_id, 1, true);
    std::map<std::string, long> order = store.success_order();
    CHECK(order[b.skill_id] > order[a.skill_id]);

    store.record_outcome(a.skill_id, 1, true);
    order = store.success_order();
    CHECK(order[a.skill_id] > order[b.skill_id]);
}

TEST_CASE("export dumps every collection deterministically") {
    TempFile file("store_export");
    SkillStore store(file.path());
    SkillTemplate tpl = sample_skill();
    store.store_skill(tpl);
    store.record_outcome(tpl.skill_id, 1, false, failure_at(tpl.skill_id, 2, Severity::Moderate));
    store.record_outcome(tpl.skill_id, 1, false, failure_at(tpl.skill_id, 2, Severity::Moderate));
    store.synthesize_guards(tpl.skill_id);
    store.put_embedding(tpl.skill_id, "token-hash-64", 64, std::vector<double>(64, 0.1));

    json dump = store.export_all();
    CHECK(dump.at("skills").size() == 1);
    CHECK(dump.at("stats").size() == 1);
    CHECK(dump.at("failures").size() == 2);
    CHECK(dump.at("guards").size() == 1);
    CHECK(dump.at("embeddings").size() == 1);
    CHECK(dump.dump() == store.export_all().dump());
}

TEST_CASE("corrupt records are reported with the offending key") {
    TempFile file("store_corrupt");
    {
        SkillStore store(file.path());
        store.store_skill(sample_skill());
    }
    // smash the stored document behind the store's back
    sqlite3* db = nullptr;
    REQUIRE(sqlite3_open(file.path().c_str(), &db) == SQLITE_OK);
    REQUIRE(sqlite3_exec(db, "UPDATE skills SET json = '{not json' WHERE version = 1", nullptr,
                         nullptr, nullptr) == SQLITE_OK);
    sqlite3_close(db);

    SkillStore store(file.path());
    CHECK_THROWS_WITH_AS(store.load_skill("set_an_alarm_for_time"),
                         "store-corrupt: set_an_alarm_for_time v1", Error);
    CHECK_THROWS_AS(store.export_all(), Error);
}

TEST_CASE("persistence survives reopening the file") {
    TempFile file("store_reopen");
    {
        SkillStore store(file.path());
        store.store_skill(sample_skill());
        store.record_outcome("set_an_alarm_for_time", 1, true);
    }
    SkillStore reopened(file.path());
    SkillTemplate tpl = reopened.load_skill("set_an_alarm_for_time");
    CHECK(tpl.n_succ == 1);
}
